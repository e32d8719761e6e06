//! Canonical and z-order (Morton) node numbering on a `2^d x 2^d` grid, the
//! z-kron product and z-ordered meshgrids.
//!
//! In z-order the bits of `i` occupy the even positions of the node index and
//! the bits of `j` the odd ones, so a QTT core of mode 4 sees the digit pair
//! `z_k = i_k + 2 j_k`.

use crate::error::{Error, Result};
use crate::tt::{Core, TtMatrix, TtVector};

fn check_node(i: usize, j: usize, d: usize) -> Result<()> {
    let n = 1usize << d;
    if i >= n || j >= n {
        return Err(Error::Range(format!("node ({i}, {j}) outside a {n}x{n} grid")));
    }
    Ok(())
}

/// Row-major node number `i + 2^d j`.
pub fn canonical_index(i: usize, j: usize, d: usize) -> Result<usize> {
    check_node(i, j, d)?;
    Ok(i + (j << d))
}

/// Bit-interleaved node number with `i` in the even bit positions.
pub fn z_index(i: usize, j: usize, d: usize) -> Result<usize> {
    check_node(i, j, d)?;
    Ok(interleave(i, j, d))
}

fn interleave(i: usize, j: usize, d: usize) -> usize {
    (0..d).fold(0, |z, k| z | (((i >> k) & 1) << (2 * k)) | (((j >> k) & 1) << (2 * k + 1)))
}

/// Inverse of [`z_index`].
pub fn z_coords(z: usize, d: usize) -> Result<(usize, usize)> {
    if z >= 1usize << (2 * d) {
        return Err(Error::Range(format!("z-index {z} outside 4^{d}")));
    }
    let mut i = 0;
    let mut j = 0;
    for k in 0..d {
        i |= ((z >> (2 * k)) & 1) << k;
        j |= ((z >> (2 * k + 1)) & 1) << k;
    }
    Ok((i, j))
}

/// `perm[z_index(i, j)] = canonical_index(i, j)` for every node.
pub fn z_permutation(d: usize) -> Vec<usize> {
    let n = 1usize << d;
    let mut perm = vec![0; n * n];
    for j in 0..n {
        for i in 0..n {
            perm[interleave(i, j, d)] = i + n * j;
        }
    }
    perm
}

/// Inverse permutation: `inv[perm[k]] = k`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

fn check_binary(modes: &[usize], other: &[usize], what: &str) -> Result<()> {
    if modes.len() != other.len() {
        return Err(Error::Shape(format!(
            "z-kron of {what} with {} and {} cores",
            modes.len(),
            other.len()
        )));
    }
    if modes.iter().chain(other).any(|&n| n != 2) {
        return Err(Error::Shape(format!("z-kron needs binary {what} modes")));
    }
    Ok(())
}

/// z-kron of two QTT vectors of length `2^d`: the result has length `4^d` and
/// satisfies `M[z_index(a, b)] = K[a] L[b]`.
pub fn z_kron_vec(k: &TtVector, l: &TtVector) -> Result<TtVector> {
    check_binary(&k.modes(), &l.modes(), "vector")?;
    let cores = k
        .cores()
        .iter()
        .zip(l.cores())
        .map(|(ck, cl)| {
            let lk = ck.left();
            let rk = ck.right();
            Core::from_fn(lk * cl.left(), 4, rk * cl.right(), |a, z, b| {
                ck.get(a % lk, z & 1, b % rk) * cl.get(a / lk, z >> 1, b / rk)
            })
        })
        .collect();
    TtVector::new(cores)
}

/// z-kron of two QTT matrices of size `2^d x 2^d`. Row bits interleave with
/// row bits and column bits with column bits:
/// `M[z_index(a, c), z_index(b, e)] = K[a, b] L[c, e]`.
pub fn z_kron(k: &TtMatrix, l: &TtMatrix) -> Result<TtMatrix> {
    check_binary(k.row_modes(), l.row_modes(), "matrix row")?;
    check_binary(k.col_modes(), l.col_modes(), "matrix column")?;
    let d = k.order();
    let cores = k
        .cores()
        .iter()
        .zip(l.cores())
        .map(|(ck, cl)| {
            let lk = ck.left();
            let rk = ck.right();
            Core::from_fn(lk * cl.left(), 16, rk * cl.right(), |a, mu, b| {
                let (zr, zc) = (mu % 4, mu / 4);
                let mu_k = (zr & 1) + 2 * (zc & 1);
                let mu_l = (zr >> 1) + 2 * (zc >> 1);
                ck.get(a % lk, mu_k, b % rk) * cl.get(a / lk, mu_l, b / rk)
            })
        })
        .collect();
    TtMatrix::from_tt(TtVector::new(cores)?, vec![4; d], vec![4; d])
}

/// The vector `(0, 1, ..., 2^d - 1)` as an exact rank-2 QTT.
pub fn range_vector(d: usize) -> TtVector {
    let terms: Vec<Vec<f64>> = (0..d).map(|k| vec![0.0, (1u64 << k) as f64]).collect();
    TtVector::additive(&terms, 0.0).expect("d >= 1")
}

/// Fields `i` and `j` over the z-ordered `2^d x 2^d` grid.
pub fn z_meshgrid(d: usize) -> (TtVector, TtVector) {
    let range = range_vector(d);
    let ones = TtVector::ones(&vec![2; d]);
    let i_field = z_kron_vec(&range, &ones).expect("binary modes");
    let j_field = z_kron_vec(&ones, &range).expect("binary modes");
    (i_field, j_field)
}

/// The field `constant + ci * i + cj * j` over the z-ordered grid as an exact
/// rank-2 QTT (rank 1 when it is constant).
pub fn z_linear_field(d: usize, constant: f64, ci: f64, cj: f64) -> TtVector {
    let modes = vec![4; d];
    if ci == 0.0 && cj == 0.0 {
        return TtVector::constant(&modes, constant);
    }
    let terms: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let w = (1u64 << k) as f64;
            (0..4).map(|z| w * (ci * (z & 1) as f64 + cj * (z >> 1) as f64)).collect()
        })
        .collect();
    TtVector::additive(&terms, constant).expect("d >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical_index(0, 0, 4).unwrap(), 0);
        assert_eq!(canonical_index(1, 1, 3).unwrap(), 9);
        assert_eq!(canonical_index(7, 7, 3).unwrap(), 63);
        assert!(matches!(canonical_index(8, 0, 3), Err(Error::Range(_))));
    }

    #[test]
    fn z_index_examples() {
        assert_eq!(z_index(1, 0, 3).unwrap(), 1);
        assert_eq!(z_index(0, 1, 3).unwrap(), 2);
        assert_eq!(z_index(1, 1, 3).unwrap(), 3);
        assert_eq!(z_index(3, 5, 3).unwrap(), 39);
        assert_eq!(z_index(0, 0, 5).unwrap(), 0);
        assert!(matches!(z_index(0, 4, 2), Err(Error::Range(_))));
    }

    #[test]
    fn z_index_is_a_bijection_with_even_bits_for_i() {
        for d in 1..=5 {
            let n = 1usize << d;
            let mut seen = vec![false; n * n];
            for j in 0..n {
                for i in 0..n {
                    let z = z_index(i, j, d).unwrap();
                    assert!(!seen[z]);
                    seen[z] = true;
                    assert_eq!(z_coords(z, d).unwrap(), (i, j));
                }
                assert_eq!(z_index(j, 0, d).unwrap() & 0xAAAA_AAAA, 0);
            }
        }
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(z_permutation(1), vec![0, 1, 2, 3]);
        for d in 1..=4 {
            let perm = z_permutation(d);
            let inv = invert_permutation(&perm);
            for k in 0..perm.len() {
                assert_eq!(inv[perm[k]], k);
                assert_eq!(perm[inv[k]], k);
            }
        }
        let perm = z_permutation(2);
        for j in 0..4 {
            for i in 0..4 {
                // Brute force: z index from the bit formula, canonical from i + 4j.
                let z = (i & 1) + 2 * (j & 1) + 4 * ((i >> 1) & 1) + 8 * ((j >> 1) & 1);
                assert_eq!(perm[z], i + 4 * j);
            }
        }
    }

    #[test]
    fn meshgrid_values() {
        let (i1, j1) = z_meshgrid(1);
        assert_eq!(i1.to_dense().unwrap().as_slice(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(j1.to_dense().unwrap().as_slice(), &[0.0, 0.0, 1.0, 1.0]);
        let (i3, j3) = z_meshgrid(3);
        assert_eq!(i3.get_flat(39), 3.0);
        assert_eq!(j3.get_flat(39), 5.0);
        let (i10, j10) = z_meshgrid(10);
        assert!(i10.max_rank() <= 2 && j10.max_rank() <= 2);
    }

    #[test]
    fn linear_field_matches_meshgrid_combination() {
        let d = 3;
        let f = z_linear_field(d, 0.5, 2.0, -3.0).to_dense().unwrap();
        for z in 0..64 {
            let (i, j) = z_coords(z, d).unwrap();
            assert!((f[z] - (0.5 + 2.0 * i as f64 - 3.0 * j as f64)).abs() < 1e-12);
        }
        assert_eq!(z_linear_field(4, 2.0, 0.0, 0.0).max_rank(), 1);
        assert!(z_linear_field(6, 1.0, 1.0, 1.0).max_rank() <= 2);
    }

    #[test]
    fn meshgrid_combines_to_canonical_index() {
        let d = 4;
        let (i, j) = z_meshgrid(d);
        let canon = i.add(&j.scale((1 << d) as f64)).unwrap().to_dense().unwrap();
        let perm = z_permutation(d);
        for (z, v) in canon.iter().enumerate() {
            assert_eq!(*v, perm[z] as f64);
        }
    }

    fn random_binary_matrix(d: usize, rank: usize, rng: &mut ChaCha8Rng) -> TtMatrix {
        let shapes: Vec<_> = (0..d)
            .map(|k| {
                let l = if k == 0 { 1 } else { rank };
                let r = if k + 1 == d { 1 } else { rank };
                (l, 2, 2, r)
            })
            .collect();
        let cores = shapes
            .iter()
            .map(|&(l, n, m, r)| Core::from_data(l, n * m, r, (0..l * n * m * r).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        TtMatrix::from_tt(TtVector::new(cores).unwrap(), vec![2; d], vec![2; d]).unwrap()
    }

    fn permuted_kron(k: &DMatrix<f64>, l: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
        // K varies with the x index (slow in canonical order is j = L's index).
        let kron = l.kronecker(k);
        let perm = z_permutation(d);
        DMatrix::from_fn(kron.nrows(), kron.ncols(), |r, c| kron[(perm[r], perm[c])])
    }

    #[test]
    fn z_kron_of_identities_is_identity() {
        let i = TtMatrix::identity(&[2, 2, 2]);
        let z = z_kron(&i, &i).unwrap();
        assert_eq!(z.to_dense().unwrap(), DMatrix::identity(64, 64));
    }

    #[test]
    fn z_kron_is_permuted_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            for _ in 0..5 {
                let k = random_binary_matrix(d, 2, &mut rng);
                let l = random_binary_matrix(d, 2, &mut rng);
                let z = z_kron(&k, &l).unwrap().to_dense().unwrap();
                let want = permuted_kron(&k.to_dense().unwrap(), &l.to_dense().unwrap(), d);
                assert!((z - &want).norm() <= 1e-12 * want.norm());
            }
        }
    }

    #[test]
    fn z_kron_distributes_over_addition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 3;
        let a = random_binary_matrix(d, 2, &mut rng);
        let b = random_binary_matrix(d, 2, &mut rng);
        let l = random_binary_matrix(d, 2, &mut rng);
        let lhs = z_kron(&a.add(&b).unwrap(), &l).unwrap().to_dense().unwrap();
        let rhs = z_kron(&a, &l).unwrap().add(&z_kron(&b, &l).unwrap()).unwrap().to_dense().unwrap();
        assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm());
        let lhs = z_kron(&l, &a.add(&b).unwrap()).unwrap().to_dense().unwrap();
        let rhs = z_kron(&l, &a).unwrap().add(&z_kron(&l, &b).unwrap()).unwrap().to_dense().unwrap();
        assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm());
    }

    #[test]
    fn z_kron_rejects_shape_mismatch() {
        let a = TtMatrix::identity(&[2, 2]);
        let b = TtMatrix::identity(&[2, 2, 2]);
        assert!(matches!(z_kron(&a, &b), Err(Error::Shape(_))));
        let c = TtMatrix::identity(&[4, 4]);
        assert!(matches!(z_kron(&a, &c), Err(Error::Shape(_))));
    }
}
