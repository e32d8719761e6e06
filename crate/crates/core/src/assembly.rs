//! Per-subdomain stiffness matrices and load vectors assembled directly in
//! QTT format.
//!
//! Element integrals use the one-point rectangle rule at the element center.
//! For a pair of standard-square corners `(c1, c2)` the per-element values
//! form a QTT vector over the z-ordered element grid, and the shift matrices
//! `V_c` scatter them to node pairs:
//!
//! ```text
//! A = sum_{c1, c2} V_{c1}^T diag(K_{c1 c2}) V_{c2}
//! ```

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{grid_coefficients, jacobian_qtt_fields, JacobianQttFields, Quadrangle};
use crate::tt::{BlockCore, TtMatrix, TtVector, DENSE_GUARD};
use crate::zorder::{z_kron, z_linear_field, z_meshgrid};

/// A corner of the standard square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Corner {
    pub cx: i8,
    pub cy: i8,
}

impl Corner {
    /// All four corners in vertex order; also the accumulation order.
    pub const ALL: [Corner; 4] = [
        Corner { cx: -1, cy: -1 },
        Corner { cx: 1, cy: -1 },
        Corner { cx: 1, cy: 1 },
        Corner { cx: -1, cy: 1 },
    ];

    pub fn new(cx: i8, cy: i8) -> Result<Self> {
        if cx.abs() != 1 || cy.abs() != 1 {
            return Err(Error::Input(format!("corner ({cx}, {cy}) is not a corner of [-1, 1]^2")));
        }
        Ok(Self { cx, cy })
    }

    /// Shape-function gradient of this corner at the element center.
    pub fn center_gradient(&self) -> [f64; 2] {
        [0.25 * self.cx as f64, 0.25 * self.cy as f64]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftKind {
    /// Element `e` to its left node `p = e` (zero row for the padding element).
    W0,
    /// Element `e` to its right node `p = e + 1`.
    W1,
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// Block cores of the one-dimensional shift matrices, most significant
/// digit first.
fn shift_chain(kind: ShiftKind, d: usize) -> Vec<BlockCore> {
    let id = m2(1.0, 0.0, 0.0, 1.0);
    let zero = m2(0.0, 0.0, 0.0, 0.0);
    let e00 = m2(1.0, 0.0, 0.0, 0.0);
    let e11 = m2(0.0, 0.0, 0.0, 1.0);
    let up = m2(0.0, 1.0, 0.0, 0.0);
    let down = m2(0.0, 0.0, 1.0, 0.0);
    let block = |rows: Vec<Vec<DMatrix<f64>>>| BlockCore::new(rows).expect("uniform 2x2 blocks");
    if d == 1 {
        return vec![match kind {
            ShiftKind::W0 => block(vec![vec![e00]]),
            ShiftKind::W1 => block(vec![vec![up]]),
        }];
    }
    let (first, middle, last) = match kind {
        ShiftKind::W0 => (
            block(vec![vec![e11.clone(), e00.clone()]]),
            block(vec![vec![e11, e00.clone()], vec![zero, id.clone()]]),
            block(vec![vec![e00], vec![id]]),
        ),
        ShiftKind::W1 => (
            block(vec![vec![id.clone(), up.clone()]]),
            block(vec![vec![id, up.clone()], vec![zero, down.clone()]]),
            block(vec![vec![up], vec![down]]),
        ),
    };
    let mut chain = vec![first];
    chain.extend(std::iter::repeat_n(middle, d - 2));
    chain.push(last);
    chain
}

/// One-dimensional shift matrix of size `2^d x 2^d` and rank at most 2.
pub fn shift_matrix_1d(kind: ShiftKind, d: usize) -> TtMatrix {
    TtMatrix::from_block_chain(&shift_chain(kind, d)).expect("consistent chain")
}

/// `V_c`: row `e` (element, z-order) has a single 1 in the column of node
/// `c`-corner of `e`; rows of padding elements vanish.
pub fn shift_matrix_2d(c: Corner, d: usize) -> TtMatrix {
    let w = |s: i8| shift_matrix_1d(if s < 0 { ShiftKind::W0 } else { ShiftKind::W1 }, d);
    z_kron(&w(c.cx), &w(c.cy)).expect("binary QTT matrices")
}

/// Per-element one-point quadrature values of `grad Phi_{c1} . grad Phi_{c2}`
/// over each element, as a QTT vector over the element grid.
pub fn local_coupling_vector(c1: Corner, c2: Corner, fields: &JacobianQttFields, tol: f64) -> Result<TtVector> {
    let [gx1, gy1] = c1.center_gradient();
    let [gx2, gy2] = c2.center_gradient();
    let terms = [
        (4.0 * gx1 * gx2, &fields.jt11),
        (4.0 * gy1 * gy2, &fields.jt22),
        (4.0 * (gy1 * gx2 + gx1 * gy2), &fields.jt12),
    ];
    let mut acc: Option<TtVector> = None;
    for (w, f) in terms {
        if w == 0.0 {
            continue;
        }
        let t = f.scale(w);
        acc = Some(match acc {
            None => t,
            Some(a) => a.add(&t)?,
        });
    }
    let modes = fields.jt11.modes();
    Ok(acc.map_or_else(|| TtVector::zeros(&modes), |a| a.round(tol)))
}

/// `V_{c1}^T diag(k) V_{c2}`.
pub fn stiffness_term(c1: Corner, c2: Corner, k: &TtVector, d: usize) -> Result<TtMatrix> {
    if k.modes() != vec![4; d] {
        return Err(Error::Shape(format!(
            "element field with modes {:?} for a grid of depth {d}",
            k.modes()
        )));
    }
    let v1 = shift_matrix_2d(c1, d);
    let v2 = shift_matrix_2d(c2, d);
    v1.transpose().matmul(&TtMatrix::diag(k))?.matmul(&v2)
}

/// Stiffness matrix of one quadrangle in z-order, accumulated over the 16
/// corner pairs in a fixed order with rounding after each addition.
pub fn subdomain_stiffness(q: &Quadrangle, d: usize, tol: f64) -> Result<TtMatrix> {
    let fields = jacobian_qtt_fields(q, d, tol)?;
    stiffness_from_fields(&fields, d, tol)
}

fn stiffness_from_fields(fields: &JacobianQttFields, d: usize, tol: f64) -> Result<TtMatrix> {
    let mut acc: Option<TtMatrix> = None;
    for c1 in Corner::ALL {
        for c2 in Corner::ALL {
            let k = local_coupling_vector(c1, c2, fields, tol)?;
            let term = stiffness_term(c1, c2, &k, d)?;
            acc = Some(match acc {
                None => term.round(tol),
                Some(a) => a.add(&term)?.round(tol),
            });
        }
    }
    Ok(acc.expect("sixteen terms"))
}

/// Load vector `sum_{c1, c2} V_{c1}^T diag(G) V_{c2} fbar` with the
/// one-point mass weights `G = |J| / 4` (all shape functions equal 1/4 at
/// the center, times the reference weight 4).
pub fn mass_term_and_force(q: &Quadrangle, d: usize, fbar: &TtVector, tol: f64) -> Result<TtVector> {
    let fields = jacobian_qtt_fields(q, d, tol)?;
    force_from_fields(&fields, d, fbar, tol)
}

fn force_from_fields(fields: &JacobianQttFields, d: usize, fbar: &TtVector, tol: f64) -> Result<TtVector> {
    if fbar.modes() != vec![4; d] {
        return Err(Error::Shape(format!(
            "nodal samples with modes {:?} for a grid of depth {d}",
            fbar.modes()
        )));
    }
    let g = fields.det.scale(0.25);
    let shifts: Vec<TtMatrix> = Corner::ALL.iter().map(|&c| shift_matrix_2d(c, d)).collect();
    let mut acc: Option<TtVector> = None;
    for v1 in &shifts {
        for v2 in &shifts {
            let term = v1.transpose().matvec(&g.hadamard(&v2.matvec(fbar)?)?)?;
            acc = Some(match acc {
                None => term.round(tol),
                Some(a) => a.add(&term)?.round(tol),
            });
        }
    }
    Ok(acc.expect("sixteen terms"))
}

/// Right-hand side `f(x, y)`.
pub enum Source {
    Constant(f64),
    /// Terms `c x^a y^b` with `a + b <= 4`.
    Polynomial(Vec<(u32, u32, f64)>),
    /// Sampled densely node by node; limited by the dense size guard.
    Callback(Box<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Constant(c) => write!(f, "Constant({c})"),
            Source::Polynomial(t) => write!(f, "Polynomial({t:?})"),
            Source::Callback(_) => write!(f, "Callback"),
        }
    }
}

/// Nodal samples `fbar[z_index(i, j)] = f(x_ij, y_ij)`.
pub fn sample_rhs(q: &Quadrangle, d: usize, source: &Source, tol: f64) -> Result<TtVector> {
    let modes = vec![4; d];
    let g = grid_coefficients(q, d);
    match source {
        Source::Constant(c) => Ok(TtVector::constant(&modes, *c)),
        Source::Polynomial(terms) => {
            if let Some(&(a, b, _)) = terms.iter().find(|&&(a, b, _)| a + b > 4) {
                return Err(Error::Input(format!("monomial x^{a} y^{b} exceeds total degree 4")));
            }
            let (i, j) = z_meshgrid(d);
            let ij = i.hadamard(&j)?;
            let coord = |c: usize| -> Result<TtVector> {
                let lin = z_linear_field(d, g.q0[c], g.qx[c], g.qy[c]);
                Ok(if g.qxy[c] == 0.0 { lin } else { lin.add(&ij.scale(g.qxy[c]))?.round(tol) })
            };
            let (x, y) = (coord(0)?, coord(1)?);
            let power = |base: &TtVector, n: u32| -> Result<TtVector> {
                let mut p = TtVector::ones(&modes);
                for _ in 0..n {
                    p = p.hadamard(base)?.round(tol);
                }
                Ok(p)
            };
            let mut acc = TtVector::zeros(&modes);
            for &(a, b, c) in terms {
                let term = power(&x, a)?.hadamard(&power(&y, b)?)?.scale(c);
                acc = acc.add(&term)?.round(tol);
            }
            Ok(acc)
        }
        Source::Callback(f) => {
            let n = 1usize << d;
            if n * n > DENSE_GUARD {
                return Err(Error::Guard { size: n * n, limit: DENSE_GUARD });
            }
            let mut data = vec![0.0; n * n];
            for (z, v) in data.iter_mut().enumerate() {
                let (i, j) = crate::zorder::z_coords(z, d)?;
                let p = g.node(i as f64, j as f64);
                *v = f(p[0], p[1]);
            }
            TtVector::from_dense(&data, &modes, tol)
        }
    }
}

/// Stiffness matrix and load vector of one subdomain, before coupling and
/// boundary conditions.
#[derive(Clone, Debug)]
pub struct SubdomainSystem {
    pub a: TtMatrix,
    pub f: TtVector,
    pub quad: Quadrangle,
    pub d: usize,
    pub tol: f64,
}

impl SubdomainSystem {
    pub fn build(quad: &Quadrangle, d: usize, source: &Source, tol: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("grid depth d must be at least 1".into()));
        }
        let fields = jacobian_qtt_fields(quad, d, tol)?;
        let a = stiffness_from_fields(&fields, d, tol)?;
        let fbar = sample_rhs(quad, d, source, tol)?;
        let f = force_from_fields(&fields, d, &fbar, tol)?;
        Ok(Self {
            a,
            f,
            quad: quad.clone(),
            d,
            tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zorder::{z_coords, z_index};

    fn unit_square() -> Quadrangle {
        Quadrangle::new([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    fn skewed() -> Quadrangle {
        Quadrangle::new([[0.0, 0.0], [2.0, 0.0], [3.0, 2.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn shift_matrices_match_definitions() {
        for d in 1..=6 {
            let n = 1usize << d;
            let w0 = shift_matrix_1d(ShiftKind::W0, d).to_dense().unwrap();
            let w1 = shift_matrix_1d(ShiftKind::W1, d).to_dense().unwrap();
            for e in 0..n {
                for p in 0..n {
                    assert_eq!(w0[(e, p)], if e == p && e != n - 1 { 1.0 } else { 0.0 });
                    assert_eq!(w1[(e, p)], if p == e + 1 { 1.0 } else { 0.0 });
                }
            }
            assert!(shift_matrix_1d(ShiftKind::W1, d).max_rank() <= 2);
        }
        let w0 = shift_matrix_1d(ShiftKind::W0, 2).to_dense().unwrap();
        assert_eq!(w0, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0])));
    }

    #[test]
    fn shift_2d_selects_element_corners() {
        let d = 2;
        let n = 1usize << d;
        for c in Corner::ALL {
            let v = shift_matrix_2d(c, d).to_dense().unwrap();
            for e in 0..n * n {
                let (ie, je) = z_coords(e, d).unwrap();
                let row_sum: f64 = v.row(e).sum();
                if ie == n - 1 || je == n - 1 {
                    assert_eq!(row_sum, 0.0);
                    continue;
                }
                assert_eq!(row_sum, 1.0);
                let pi = ie + usize::from(c.cx > 0);
                let pj = je + usize::from(c.cy > 0);
                assert_eq!(v[(e, z_index(pi, pj, d).unwrap())], 1.0);
            }
        }
        let v = shift_matrix_2d(Corner::new(-1, -1).unwrap(), 1).to_dense().unwrap();
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(v[(0, 0)], 1.0);
    }

    #[test]
    fn unit_square_coupling_values() {
        let fields = jacobian_qtt_fields(&unit_square(), 3, 1e-12).unwrap();
        let ll = Corner::new(-1, -1).unwrap();
        let rl = Corner::new(1, -1).unwrap();
        let ru = Corner::new(1, 1).unwrap();
        let check = |c2, want: f64| {
            let k = local_coupling_vector(ll, c2, &fields, 1e-12).unwrap();
            assert!(k.to_dense().unwrap().iter().all(|&x| (x - want).abs() < 1e-13));
        };
        check(ll, 0.5);
        check(rl, 0.0);
        check(ru, -0.5);
    }

    #[test]
    fn unit_square_stencil() {
        let d = 3;
        let a = subdomain_stiffness(&unit_square(), d, 1e-12).unwrap().to_dense().unwrap();
        let at = |i: usize, j: usize| z_index(i, j, d).unwrap();
        let c = at(3, 4);
        assert!((a[(c, c)] - 2.0).abs() < 1e-12);
        assert!((a[(c, at(4, 5))] + 0.5).abs() < 1e-12);
        assert!((a[(c, at(2, 3))] + 0.5).abs() < 1e-12);
        assert!(a[(c, at(4, 4))].abs() < 1e-12);
        assert!(a[(c, at(3, 5))].abs() < 1e-12);
        let n = 1 << d;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                assert!(a.row(at(i, j)).sum().abs() < 1e-12);
            }
        }
        assert!((&a - a.transpose()).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn skewed_stiffness_is_symmetric_with_constant_null_space() {
        let d = 3;
        let tol = 1e-10;
        let a = subdomain_stiffness(&skewed(), d, tol).unwrap().to_dense().unwrap();
        assert!((&a - a.transpose()).norm() <= 10.0 * tol * a.norm());
        let ones = nalgebra::DVector::from_element(a.ncols(), 1.0);
        assert!((&a * ones).norm() <= 10.0 * tol * a.norm());
    }

    #[test]
    fn parallelogram_stiffness_rank_is_bounded() {
        let para = Quadrangle::new([[0.0, 0.0], [2.0, 0.5], [3.0, 2.0], [1.0, 1.5]]).unwrap();
        let ranks: Vec<usize> = (3..=7).map(|d| subdomain_stiffness(&para, d, 1e-12).unwrap().max_rank()).collect();
        let last = *ranks.last().unwrap();
        assert!(ranks.iter().all(|&r| r <= last.max(ranks[1])), "{ranks:?}");
        assert!(last <= 32, "{ranks:?}");
    }

    #[test]
    fn unit_square_mass_of_ones() {
        let d = 3;
        let q = unit_square();
        let ones = TtVector::ones(&[4; 3]);
        let f = mass_term_and_force(&q, d, &ones, 1e-12).unwrap().to_dense().unwrap();
        let h = 1.0 / 7.0;
        assert!((f[z_index(3, 3, d).unwrap()] - h * h).abs() < 1e-14);
        assert!((f[z_index(0, 3, d).unwrap()] - h * h / 2.0).abs() < 1e-14);
        assert!((f[z_index(0, 0, d).unwrap()] - h * h / 4.0).abs() < 1e-14);
        assert!((f.sum() - 1.0).abs() < 1e-12);
        let zeros = mass_term_and_force(&q, d, &TtVector::zeros(&[4; 3]), 1e-12).unwrap();
        assert_eq!(zeros.norm(), 0.0);
    }

    #[test]
    fn parallelogram_mass_sums_to_area() {
        let para = Quadrangle::new([[0.0, 0.0], [2.0, 0.5], [3.0, 2.0], [1.0, 1.5]]).unwrap();
        let f = mass_term_and_force(&para, 4, &TtVector::ones(&[4; 4]), 1e-12).unwrap();
        assert!((f.sum() - para.area()).abs() < 1e-10);
    }

    #[test]
    fn sample_rhs_examples() {
        let q = unit_square();
        let one = sample_rhs(&q, 4, &Source::Constant(1.0), 1e-14).unwrap();
        assert_eq!(one.max_rank(), 1);
        let x = sample_rhs(&q, 4, &Source::Polynomial(vec![(1, 0, 1.0)]), 1e-14).unwrap();
        assert!(x.max_rank() <= 2);
        let xd = x.to_dense().unwrap();
        for z in 0..256 {
            let (i, _) = z_coords(z, 4).unwrap();
            assert!((xd[z] - i as f64 / 15.0).abs() < 1e-13);
        }
        let s = skewed();
        let xy = sample_rhs(&s, 3, &Source::Polynomial(vec![(1, 1, 1.0), (0, 2, -0.5)]), 1e-14).unwrap();
        let cb = sample_rhs(&s, 3, &Source::Callback(Box::new(|x, y| x * y - 0.5 * y * y)), 1e-14).unwrap();
        let h = crate::geometry::reference_spacing(3);
        let (a, b) = (xy.to_dense().unwrap(), cb.to_dense().unwrap());
        for z in 0..64 {
            let (i, j) = z_coords(z, 3).unwrap();
            let p = crate::geometry::bilinear_map(&s, h * i as f64 - 1.0, h * j as f64 - 1.0);
            let want = p[0] * p[1] - 0.5 * p[1] * p[1];
            assert!((a[z] - want).abs() < 1e-12 && (b[z] - want).abs() < 1e-12);
        }
        let bad = sample_rhs(&q, 2, &Source::Polynomial(vec![(3, 2, 1.0)]), 1e-14);
        assert!(matches!(bad, Err(Error::Input(_))));
        let big = sample_rhs(&q, 13, &Source::Callback(Box::new(|_, _| 1.0)), 1e-14);
        assert!(matches!(big, Err(Error::Guard { .. })));
    }
}
