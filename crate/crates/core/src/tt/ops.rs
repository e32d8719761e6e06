//! Exact TT arithmetic. None of these operations round: ranks add under
//! addition and multiply under products. Callers round explicitly.

use nalgebra::DMatrix;

use super::{Core, TtMatrix, TtVector};
use crate::error::{Error, Result};

fn check_modes(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: modes {a:?} and {b:?} differ")));
    }
    Ok(())
}

impl TtVector {
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_modes(&self.modes(), &other.modes(), "add")?;
        let d = self.order();
        if d == 1 {
            let (a, b) = (&self.cores[0], &other.cores[0]);
            let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
            return Self::new(vec![Core::from_data(1, a.mode, 1, data)?]);
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let (a, b) = (&self.cores[k], &other.cores[k]);
            let n = a.mode;
            let core = if k == 0 {
                let (ra, rb) = (a.right, b.right);
                Core::from_fn(1, n, ra + rb, |_, i, c| {
                    if c < ra {
                        a.get(0, i, c)
                    } else {
                        b.get(0, i, c - ra)
                    }
                })
            } else if k == d - 1 {
                let (la, lb) = (a.left, b.left);
                Core::from_fn(la + lb, n, 1, |c, i, _| {
                    if c < la {
                        a.get(c, i, 0)
                    } else {
                        b.get(c - la, i, 0)
                    }
                })
            } else {
                let (la, ra) = (a.left, a.right);
                Core::from_fn(la + b.left, n, ra + b.right, |l, i, r| match (l < la, r < ra) {
                    (true, true) => a.get(l, i, r),
                    (false, false) => b.get(l - la, i, r - ra),
                    _ => 0.0,
                })
            };
            cores.push(core);
        }
        Ok(Self::from_cores_unchecked(cores))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.cores[0].scale_in_place(alpha);
        out
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        check_modes(&self.modes(), &other.modes(), "hadamard")?;
        let cores = self
            .cores
            .iter()
            .zip(&other.cores)
            .map(|(a, b)| {
                Core::from_fn(a.left * b.left, a.mode, a.right * b.right, |l, i, r| {
                    a.get(l % a.left, i, r % a.right) * b.get(l / a.left, i, r / a.right)
                })
            })
            .collect();
        Ok(Self::from_cores_unchecked(cores))
    }

    /// Inner product `sum_i a[i] b[i]`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_modes(&self.modes(), &other.modes(), "dot")?;
        let mut w = DMatrix::from_element(1, 1, 1.0);
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let mut next = DMatrix::zeros(a.right, b.right);
            for i in 0..a.mode {
                next += a.slice(i).transpose() * &w * b.slice(i);
            }
            w = next;
        }
        Ok(w[(0, 0)])
    }

    pub fn sum(&self) -> f64 {
        self.dot(&Self::ones(&self.modes())).expect("modes agree")
    }

    /// Kronecker product `self (x) other`: `self` varies slowest, so its cores
    /// follow those of `other` in the least-significant-first ordering.
    pub fn kron(&self, other: &Self) -> Self {
        let mut cores = other.cores.clone();
        cores.extend(self.cores.iter().cloned());
        Self::from_cores_unchecked(cores)
    }
}

impl TtMatrix {
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(Self {
            tt: self.tt.add(&other.tt)?,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            tt: self.tt.scale(alpha),
            rows: self.rows.clone(),
            cols: self.cols.clone(),
        }
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{what}: shapes {:?}x{:?} and {:?}x{:?} differ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &TtVector) -> Result<TtVector> {
        check_modes(&self.cols, &v.modes(), "matvec")?;
        let cores = self
            .tt
            .cores
            .iter()
            .zip(&v.cores)
            .enumerate()
            .map(|(k, (m, x))| {
                let (n, p) = (self.rows[k], self.cols[k]);
                let (ml, mr) = (m.left, m.right);
                let mut c = Core::zeros(ml * x.left, n, mr * x.right);
                for b in 0..mr {
                    for beta in 0..x.right {
                        for alpha in 0..x.left {
                            for j in 0..p {
                                let xv = x.get(alpha, j, beta);
                                if xv == 0.0 {
                                    continue;
                                }
                                for i in 0..n {
                                    for a in 0..ml {
                                        let mv = m.get(a, i + n * j, b);
                                        if mv != 0.0 {
                                            let idx = c.offset(a + ml * alpha, i, b + mr * beta);
                                            c.data[idx] += mv * xv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                c
            })
            .collect();
        Ok(TtVector::from_cores_unchecked(cores))
    }

    /// Matrix-matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_modes(&self.cols, &other.rows, "matmul")?;
        let cores = self
            .tt
            .cores
            .iter()
            .zip(&other.tt.cores)
            .enumerate()
            .map(|(k, (a, b))| {
                let (n, p, q) = (self.rows[k], self.cols[k], other.cols[k]);
                let (al, ar) = (a.left, a.right);
                let mut c = Core::zeros(al * b.left, n * q, ar * b.right);
                for rb in 0..b.right {
                    for lb in 0..b.left {
                        for l in 0..q {
                            for j in 0..p {
                                let bv = b.get(lb, j + p * l, rb);
                                if bv == 0.0 {
                                    continue;
                                }
                                for ra in 0..ar {
                                    for i in 0..n {
                                        for la in 0..al {
                                            let av = a.get(la, i + n * j, ra);
                                            if av != 0.0 {
                                                let idx = c.offset(la + al * lb, i + n * l, ra + ar * rb);
                                                c.data[idx] += av * bv;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                c
            })
            .collect();
        Ok(Self {
            tt: TtVector::from_cores_unchecked(cores),
            rows: self.rows.clone(),
            cols: other.cols.clone(),
        })
    }

    pub fn transpose(&self) -> Self {
        let cores = self
            .tt
            .cores
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let (n, m) = (self.rows[k], self.cols[k]);
                Core::from_fn(c.left, n * m, c.right, |a, mu, b| {
                    let (j, i) = (mu % m, mu / m);
                    c.get(a, i + n * j, b)
                })
            })
            .collect();
        Self {
            tt: TtVector::from_cores_unchecked(cores),
            rows: self.cols.clone(),
            cols: self.rows.clone(),
        }
    }

    /// Diagonal matrix with `v` on its diagonal.
    pub fn diag(v: &TtVector) -> Self {
        let modes = v.modes();
        let cores = v
            .cores
            .iter()
            .map(|c| {
                let n = c.mode;
                Core::from_fn(c.left, n * n, c.right, |a, mu, b| {
                    let (i, j) = (mu % n, mu / n);
                    if i == j {
                        c.get(a, i, b)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Self {
            tt: TtVector::from_cores_unchecked(cores),
            rows: modes.clone(),
            cols: modes,
        }
    }

    /// Diagonal of a square-moded matrix as a TT vector.
    pub fn diagonal(&self) -> Result<TtVector> {
        if self.rows != self.cols {
            return Err(Error::Shape("diagonal of a non-square matrix".into()));
        }
        let cores = self
            .tt
            .cores
            .iter()
            .zip(&self.rows)
            .map(|(c, &n)| Core::from_fn(c.left, n, c.right, |a, i, b| c.get(a, i + n * i, b)))
            .collect();
        Ok(TtVector::from_cores_unchecked(cores))
    }

    pub fn trace(&self) -> Result<f64> {
        Ok(self.diagonal()?.sum())
    }

    /// Kronecker product `self (x) other` with `self` varying slowest.
    pub fn kron(&self, other: &Self) -> Self {
        let mut rows = other.rows.clone();
        rows.extend(&self.rows);
        let mut cols = other.cols.clone();
        cols.extend(&self.cols);
        Self {
            tt: self.tt.kron(&other.tt),
            rows,
            cols,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_core(l: usize, n: usize, r: usize, rng: &mut ChaCha8Rng) -> Core {
        Core::from_fn(l, n, r, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_tt(modes: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> TtVector {
        let d = modes.len();
        let cores = (0..d)
            .map(|k| {
                let l = if k == 0 { 1 } else { rank };
                let r = if k == d - 1 { 1 } else { rank };
                random_core(l, modes[k], r, rng)
            })
            .collect();
        TtVector::new(cores).unwrap()
    }

    fn random_matrix(rows: &[usize], cols: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> TtMatrix {
        let modes: Vec<usize> = rows.iter().zip(cols).map(|(a, b)| a * b).collect();
        TtMatrix::from_tt(random_tt(&modes, rank, rng), rows.to_vec(), cols.to_vec()).unwrap()
    }

    fn kron_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.kronecker(b)
    }

    #[test]
    fn a_minus_a_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tt(&[2; 5], 3, &mut rng);
        let z = a.add(&a.scale(-1.0)).unwrap();
        assert!(z.to_dense().unwrap().amax() < 1e-14);
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_tt(&[2; 4], 2, &mut rng);
        let h = TtVector::ones(&[2; 4]).hadamard(&v).unwrap();
        assert!((h.to_dense().unwrap() - v.to_dense().unwrap()).amax() < 1e-15);
    }

    #[test]
    fn dot_range_with_ones() {
        let range = TtVector::from_dense(&[0.0, 1.0, 2.0, 3.0], &[2, 2], 0.0).unwrap();
        let ones = TtVector::ones(&[2, 2]);
        assert!((range.dot(&ones).unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_modes_are_rejected() {
        let a = TtVector::ones(&[2, 2]);
        let b = TtVector::ones(&[2, 2, 2]);
        assert!(matches!(a.add(&b), Err(Error::Shape(_))));
        assert!(matches!(a.hadamard(&b), Err(Error::Shape(_))));
        assert!(matches!(a.dot(&b), Err(Error::Shape(_))));
        let m = TtMatrix::identity(&[2, 2, 2]);
        assert!(matches!(m.matvec(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_matvec_and_diag_of_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_tt(&[2; 5], 3, &mut rng);
        let id = TtMatrix::identity(&[2; 5]);
        let w = id.matvec(&v).unwrap();
        assert!((w.to_dense().unwrap() - v.to_dense().unwrap()).amax() < 1e-15);
        let d = TtMatrix::diag(&TtVector::ones(&[2; 5]));
        assert_eq!(d.to_dense().unwrap(), DMatrix::identity(32, 32));
    }

    #[test]
    fn matvec_matches_dense_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_matrix(&[2; 3], &[2; 3], 2, &mut rng);
        let v = random_tt(&[2; 3], 2, &mut rng);
        let got = m.matvec(&v).unwrap().to_dense().unwrap();
        let want = m.to_dense().unwrap() * v.to_dense().unwrap();
        assert!((got - &want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn kron_of_single_cores() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 6.0, 7.0]);
        let ta = TtMatrix::rank_one(std::slice::from_ref(&a)).unwrap();
        let tb = TtMatrix::rank_one(std::slice::from_ref(&b)).unwrap();
        let k = ta.kron(&tb).to_dense().unwrap();
        assert_eq!(k, kron_dense(&a, &b));
    }

    #[test]
    fn kron_of_identities() {
        let i = TtMatrix::identity(&[2; 3]);
        assert_eq!(i.kron(&i).to_dense().unwrap(), DMatrix::identity(64, 64));
    }

    #[test]
    fn kron_of_vectors() {
        let a = TtVector::from_dense(&[1.0, 2.0], &[2], 0.0).unwrap();
        let b = TtVector::from_dense(&[3.0, 5.0, 7.0], &[3], 0.0).unwrap();
        let k = a.kron(&b).to_dense().unwrap();
        assert_eq!(k, DVector::from_vec(vec![3.0, 5.0, 7.0, 6.0, 10.0, 14.0]));
    }

    #[test]
    fn rectangular_modes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_matrix(&[2, 2, 2], &[4, 4, 4], 2, &mut rng);
        let dense = m.to_dense().unwrap();
        assert_eq!(dense.shape(), (8, 64));
        let back = TtMatrix::from_dense(&dense, &[2, 2, 2], &[4, 4, 4], 0.0).unwrap();
        assert!((back.to_dense().unwrap() - &dense).amax() < 1e-12);
        for r in 0..8 {
            for c in 0..64 {
                assert!((m.get(r, c) - dense[(r, c)]).abs() < 1e-12);
            }
        }
    }

    mod homomorphism {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn materialization_commutes_with_arithmetic(seed in any::<u64>(), d in 1usize..=5, ra in 1usize..=3, rb in 1usize..=3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let modes = vec![2; d];
                let a = random_tt(&modes, ra, &mut rng);
                let b = random_tt(&modes, rb, &mut rng);
                let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
                let tol = 1e-12 * (1.0 + da.norm() * db.norm());

                prop_assert!((a.add(&b).unwrap().to_dense().unwrap() - (&da + &db)).amax() < tol);
                prop_assert!((a.scale(-2.5).to_dense().unwrap() - &da * -2.5).amax() < tol);
                prop_assert!((a.hadamard(&b).unwrap().to_dense().unwrap() - da.component_mul(&db)).amax() < tol);
                prop_assert!((a.dot(&b).unwrap() - da.dot(&db)).abs() < tol);

                let ma = random_matrix(&modes, &modes, ra, &mut rng);
                let mb = random_matrix(&modes, &modes, rb, &mut rng);
                let (dma, dmb) = (ma.to_dense().unwrap(), mb.to_dense().unwrap());
                let mtol = 1e-12 * (1.0 + dma.norm() * (dmb.norm() + db.norm()));
                prop_assert!((ma.matvec(&b).unwrap().to_dense().unwrap() - &dma * &db).amax() < mtol);
                prop_assert!((ma.matmul(&mb).unwrap().to_dense().unwrap() - &dma * &dmb).amax() < mtol);
                prop_assert!((ma.transpose().to_dense().unwrap() - dma.transpose()).amax() < mtol);
                prop_assert!((TtMatrix::diag(&a).to_dense().unwrap() - DMatrix::from_diagonal(&da)).amax() < tol);
                prop_assert!((ma.diagonal().unwrap().to_dense().unwrap() - dma.diagonal()).amax() < mtol);
                if d <= 3 {
                    prop_assert!((ma.kron(&mb).to_dense().unwrap() - dma.kronecker(&dmb)).amax() < mtol);
                }
            }
        }
    }
}
