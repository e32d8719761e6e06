//! Bilinear quadrangle maps, Lagrange shape functions and the Jacobian fields
//! of the element grid.
//!
//! A quadrangle is the image of the standard square `K = [-1, 1]^2` under the
//! bilinear map through its four vertices. Its `2^d x 2^d` node grid is the
//! image of a uniform grid on `K`; the `(2^d - 1)^2` real elements are padded
//! by one layer of unused elements to a `2^d x 2^d` element grid.
//!
//! Because the map is bilinear, the element Jacobian at each element center
//! is an affine function of the element indices `(i, j)` and so is its
//! determinant. This makes every Jacobian-derived field a low-rank QTT.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::tt::{TtVector, RECIPROCAL_FLOOR};
use crate::zorder::z_linear_field;

pub type Point = [f64; 2];

/// Standard-square corner signs in vertex order: `(-1,-1), (1,-1), (1,1), (-1,1)`.
pub const CORNER_SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Four vertices in counterclockwise order, matching the standard-square
/// corners `(-1,-1), (1,-1), (1,1), (-1,1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrangle {
    vertices: [Point; 4],
}

impl Quadrangle {
    /// Rejects quadrangles whose bilinear map is degenerate or inverted at
    /// any corner.
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateElement("non-finite vertex coordinate".into()));
        }
        let q = Self { vertices };
        for &(xi, eta) in &CORNER_SIGNS {
            let det = q.jacobian(xi, eta).determinant();
            let scale = q.diameter().powi(2);
            if det <= 1e-12 * scale {
                return Err(Error::DegenerateElement(format!(
                    "Jacobian determinant {det:.3e} at reference corner ({xi}, {eta}); \
                     vertices must be counterclockwise and convex"
                )));
            }
        }
        Ok(q)
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        best
    }

    /// Coefficients of `r(xi, eta) = a + b xi + c eta + e xi eta`.
    fn monomials(&self) -> [Point; 4] {
        let v = &self.vertices;
        let comb = |s: [f64; 4]| {
            let mut p = [0.0; 2];
            for k in 0..4 {
                p[0] += 0.25 * s[k] * v[k][0];
                p[1] += 0.25 * s[k] * v[k][1];
            }
            p
        };
        [
            comb([1.0, 1.0, 1.0, 1.0]),
            comb([-1.0, 1.0, 1.0, -1.0]),
            comb([-1.0, -1.0, 1.0, 1.0]),
            comb([1.0, -1.0, 1.0, -1.0]),
        ]
    }

    /// Jacobian `[dr/dxi, dr/deta]` of the bilinear map (columns are the
    /// partial derivatives).
    pub fn jacobian(&self, xi: f64, eta: f64) -> Matrix2<f64> {
        let mut j = Matrix2::zeros();
        for (k, g) in shape_gradients(xi, eta).iter().enumerate() {
            for c in 0..2 {
                j[(c, 0)] += self.vertices[k][c] * g[0];
                j[(c, 1)] += self.vertices[k][c] * g[1];
            }
        }
        j
    }

    /// Area by the shoelace formula.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        0.5 * (0..4).map(|k| cross(v[k], v[(k + 1) % 4])).sum::<f64>()
    }
}

/// Bilinear Lagrange basis on `K` in vertex order `Phi_{-1,-1}, Phi_{1,-1},
/// Phi_{1,1}, Phi_{-1,1}`.
pub fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    CORNER_SIGNS.map(|(cx, cy)| 0.25 * (1.0 + cx * xi) * (1.0 + cy * eta))
}

/// `(d/dxi, d/deta)` of each shape function, in the order of [`shape_values`].
pub fn shape_gradients(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    CORNER_SIGNS.map(|(cx, cy)| [0.25 * cx * (1.0 + cy * eta), 0.25 * cy * (1.0 + cx * xi)])
}

pub fn bilinear_map(q: &Quadrangle, xi: f64, eta: f64) -> Point {
    let phi = shape_values(xi, eta);
    let mut p = [0.0; 2];
    for (k, v) in q.vertices.iter().enumerate() {
        p[0] += phi[k] * v[0];
        p[1] += phi[k] * v[1];
    }
    p
}

/// Node coordinates as a polynomial in the grid indices:
/// `r(i, j) = q0 + qx i + qy j + qxy i j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCoefficients {
    pub q0: Point,
    pub qx: Point,
    pub qy: Point,
    pub qxy: Point,
}

impl GridCoefficients {
    pub fn node(&self, i: f64, j: f64) -> Point {
        let f = |c: usize| self.q0[c] + self.qx[c] * i + self.qy[c] * j + self.qxy[c] * i * j;
        [f(0), f(1)]
    }
}

/// Grid spacing on the standard square, `2 / (2^d - 1)`.
pub fn reference_spacing(d: usize) -> f64 {
    2.0 / (((1u64 << d) - 1) as f64)
}

pub fn grid_coefficients(q: &Quadrangle, d: usize) -> GridCoefficients {
    let h = reference_spacing(d);
    let [a, b, c, e] = q.monomials();
    let f = |g: &dyn Fn(usize) -> f64| [g(0), g(1)];
    GridCoefficients {
        q0: f(&|k| a[k] - b[k] - c[k] + e[k]),
        qx: f(&|k| h * (b[k] - e[k])),
        qy: f(&|k| h * (c[k] - e[k])),
        qxy: f(&|k| h * h * e[k]),
    }
}

/// Element-center Jacobians as affine functions of the element indices:
/// `J(i, j) = base + i di + j dj` and `|J(i, j)| = det_base + i det_di + j det_dj`.
///
/// Each element is parametrized by its own copy of the standard square, so
/// one grid step corresponds to a reference length of 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianField {
    pub base: Matrix2<f64>,
    pub di: Matrix2<f64>,
    pub dj: Matrix2<f64>,
    pub det_base: f64,
    pub det_di: f64,
    pub det_dj: f64,
}

impl JacobianField {
    pub fn jacobian(&self, i: f64, j: f64) -> Matrix2<f64> {
        self.base + self.di * i + self.dj * j
    }

    pub fn determinant(&self, i: f64, j: f64) -> f64 {
        self.det_base + self.det_di * i + self.det_dj * j
    }
}

/// Affine decomposition of the element-center Jacobians of the grid.
///
/// Fails with [`Error::DegenerateElement`] if any real element has a
/// non-positive determinant. The determinant is affine, so checking the four
/// extreme elements suffices.
pub fn jacobian_parts(q: &Quadrangle, d: usize) -> Result<JacobianField> {
    let g = grid_coefficients(q, d);
    // Element (0, 0) has its center at grid position (1/2, 1/2).
    let col_xi = [0.5 * (g.qx[0] + 0.5 * g.qxy[0]), 0.5 * (g.qx[1] + 0.5 * g.qxy[1])];
    let col_eta = [0.5 * (g.qy[0] + 0.5 * g.qxy[0]), 0.5 * (g.qy[1] + 0.5 * g.qxy[1])];
    let half = [0.5 * g.qxy[0], 0.5 * g.qxy[1]];
    let base = Matrix2::new(col_xi[0], col_eta[0], col_xi[1], col_eta[1]);
    let di = Matrix2::new(0.0, half[0], 0.0, half[1]);
    let dj = Matrix2::new(half[0], 0.0, half[1], 0.0);
    let field = JacobianField {
        base,
        di,
        dj,
        det_base: cross(col_xi, col_eta),
        det_di: cross(col_xi, half),
        det_dj: cross(half, col_eta),
    };
    let last = ((1u64 << d) - 2) as f64;
    for (i, j) in [(0.0, 0.0), (last, 0.0), (0.0, last), (last, last)] {
        let det = field.determinant(i, j);
        if det <= 0.0 {
            return Err(Error::DegenerateElement(format!(
                "element ({i}, {j}) has Jacobian determinant {det:.3e}"
            )));
        }
    }
    Ok(field)
}

/// Per-element QTT fields over the z-ordered `2^d x 2^d` element grid,
/// including padding elements.
#[derive(Clone, Debug)]
pub struct JacobianQttFields {
    /// `(J12^2 + J22^2) / |J|`
    pub jt11: TtVector,
    /// `(J11^2 + J21^2) / |J|`
    pub jt22: TtVector,
    /// `-(J11 J12 + J21 J22) / |J|`
    pub jt12: TtVector,
    pub det: TtVector,
}

/// Entries of `adj(J) adj(J)^T / |J|` and `|J|` at every element center.
///
/// The numerators are exact products of affine fields; division uses the
/// elementwise reciprocal of the determinant field with accuracy `tol`.
pub fn jacobian_qtt_fields(q: &Quadrangle, d: usize, tol: f64) -> Result<JacobianQttFields> {
    let jf = jacobian_parts(q, d)?;
    let entry = |r: usize, c: usize| {
        z_linear_field(d, jf.base[(r, c)], jf.di[(r, c)], jf.dj[(r, c)])
    };
    let (j11, j12, j21, j22) = (entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1));
    let det = z_linear_field(d, jf.det_base, jf.det_di, jf.det_dj);
    let num11 = j12.hadamard(&j12)?.add(&j22.hadamard(&j22)?)?.round(tol);
    let num22 = j11.hadamard(&j11)?.add(&j21.hadamard(&j21)?)?.round(tol);
    let num12 = j11.hadamard(&j12)?.add(&j21.hadamard(&j22)?)?.scale(-1.0).round(tol);
    let inv = det.reciprocal(tol, RECIPROCAL_FLOOR)?;
    Ok(JacobianQttFields {
        jt11: num11.hadamard(&inv)?.round(tol),
        jt22: num22.hadamard(&inv)?.round(tol),
        jt12: num12.hadamard(&inv)?.round(tol),
        det,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zorder::z_index;

    fn unit_square() -> Quadrangle {
        Quadrangle::new([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    fn skewed() -> Quadrangle {
        Quadrangle::new([[0.0, 0.0], [2.0, 0.0], [3.0, 2.0], [0.0, 1.0]]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn shape_functions_interpolate_corners() {
        for (k, &(xi, eta)) in CORNER_SIGNS.iter().enumerate() {
            let phi = shape_values(xi, eta);
            for (m, &p) in phi.iter().enumerate() {
                assert_eq!(p, if m == k { 1.0 } else { 0.0 });
            }
        }
        let g = shape_gradients(0.0, 0.0);
        assert_eq!(g[0], [-0.25, -0.25]);
        assert_eq!(g[2], [0.25, 0.25]);
    }

    #[test]
    fn shape_functions_partition_unity() {
        for a in 0..10 {
            for b in 0..5 {
                let (xi, eta) = (-1.0 + 0.21 * a as f64, -1.0 + 0.47 * b as f64);
                let s: f64 = shape_values(xi, eta).iter().sum();
                assert!(close(s, 1.0, 1e-15));
            }
        }
    }

    #[test]
    fn bilinear_map_examples() {
        assert_eq!(bilinear_map(&unit_square(), 0.0, 0.0), [0.5, 0.5]);
        let q = skewed();
        assert_eq!(bilinear_map(&q, -1.0, -1.0), q.vertices()[0]);
        assert_eq!(bilinear_map(&q, 1.0, 1.0), q.vertices()[2]);
        assert_eq!(bilinear_map(&q, 0.0, 0.0), [1.25, 0.75]);
    }

    #[test]
    fn degenerate_quadrangles_are_rejected() {
        let clockwise = Quadrangle::new([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(clockwise, Err(Error::DegenerateElement(_))));
        let collapsed = Quadrangle::new([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(collapsed, Err(Error::DegenerateElement(_))));
        let nonconvex = Quadrangle::new([[0.0, 0.0], [2.0, 0.0], [0.3, 0.3], [0.0, 2.0]]);
        assert!(matches!(nonconvex, Err(Error::DegenerateElement(_))));
    }

    #[test]
    fn grid_coefficients_examples() {
        let g = grid_coefficients(&unit_square(), 2);
        assert!(close(g.qx[0], 1.0 / 3.0, 1e-15) && g.qx[1] == 0.0);
        assert!(close(g.qy[1], 1.0 / 3.0, 1e-15) && g.qy[0] == 0.0);
        assert_eq!(g.q0, [0.0, 0.0]);
        assert_eq!(g.qxy, [0.0, 0.0]);
        let para = Quadrangle::new([[0.0, 0.0], [2.0, 0.5], [3.0, 2.0], [1.0, 1.5]]).unwrap();
        let g = grid_coefficients(&para, 3);
        assert!(g.qxy[0].abs() < 1e-15 && g.qxy[1].abs() < 1e-15);
        let q = skewed();
        let g = grid_coefficients(&q, 3);
        let h = reference_spacing(3);
        for j in 0..8 {
            for i in 0..8 {
                let want = bilinear_map(&q, h * i as f64 - 1.0, h * j as f64 - 1.0);
                let got = g.node(i as f64, j as f64);
                assert!(close(got[0], want[0], 1e-13) && close(got[1], want[1], 1e-13));
            }
        }
    }

    /// Jacobian of the element map at the element center, by central
    /// differences of the global bilinear map (exact for bilinear maps).
    fn element_center_jacobian(q: &Quadrangle, d: usize, i: usize, j: usize) -> Matrix2<f64> {
        let h = reference_spacing(d);
        let (xi, eta) = (h * (i as f64 + 0.5) - 1.0, h * (j as f64 + 0.5) - 1.0);
        let eps = 1e-3;
        let pxp = bilinear_map(q, xi + eps, eta);
        let pxm = bilinear_map(q, xi - eps, eta);
        let pyp = bilinear_map(q, xi, eta + eps);
        let pym = bilinear_map(q, xi, eta - eps);
        // Local reference coordinates are scaled by h/2 relative to global ones.
        let s = 0.5 * h / (2.0 * eps);
        Matrix2::new(
            s * (pxp[0] - pxm[0]),
            s * (pyp[0] - pym[0]),
            s * (pxp[1] - pxm[1]),
            s * (pyp[1] - pym[1]),
        )
    }

    #[test]
    fn jacobian_parts_unit_square() {
        let jf = jacobian_parts(&unit_square(), 2).unwrap();
        assert!((jf.base - Matrix2::new(1.0 / 6.0, 0.0, 0.0, 1.0 / 6.0)).norm() < 1e-15);
        assert_eq!(jf.di, Matrix2::zeros());
        assert_eq!(jf.dj, Matrix2::zeros());
        assert!(close(jf.det_base, 1.0 / 36.0, 1e-15));
        assert_eq!((jf.det_di, jf.det_dj), (0.0, 0.0));
    }

    #[test]
    fn jacobian_parts_match_direct_evaluation() {
        let q = skewed();
        let d = 3;
        let jf = jacobian_parts(&q, d).unwrap();
        for j in 0..7 {
            for i in 0..7 {
                let want = element_center_jacobian(&q, d, i, j);
                let got = jf.jacobian(i as f64, j as f64);
                assert!((got - want).norm() < 1e-12, "element ({i},{j})");
                assert!(close(jf.determinant(i as f64, j as f64), want.determinant(), 1e-12));
            }
        }
    }

    #[test]
    fn parallelogram_has_constant_jacobian() {
        let para = Quadrangle::new([[0.0, 0.0], [2.0, 0.5], [3.0, 2.0], [1.0, 1.5]]).unwrap();
        let jf = jacobian_parts(&para, 4).unwrap();
        assert!(jf.di.norm() < 1e-15 && jf.dj.norm() < 1e-15);
        let f = jacobian_qtt_fields(&para, 4, 1e-12).unwrap();
        for v in [&f.jt11, &f.jt22, &f.jt12, &f.det] {
            assert_eq!(v.max_rank(), 1);
        }
    }

    #[test]
    fn unit_square_fields_are_identity() {
        let f = jacobian_qtt_fields(&unit_square(), 3, 1e-12).unwrap();
        let jt11 = f.jt11.to_dense().unwrap();
        let jt12 = f.jt12.to_dense().unwrap();
        assert!(jt11.iter().all(|&x| close(x, 1.0, 1e-13)));
        assert!(jt12.iter().all(|&x| x.abs() < 1e-13));
        let det = f.det.to_dense().unwrap();
        assert!(det.iter().all(|&x| close(x, 1.0 / (4.0 * 49.0), 1e-15)));
    }

    #[test]
    fn skewed_fields_match_dense_loop() {
        let q = skewed();
        let d = 4;
        let tol = 1e-10;
        let f = jacobian_qtt_fields(&q, d, tol).unwrap();
        assert!(f.det.max_rank() <= 3);
        let (jt11, jt22, jt12) = (
            f.jt11.to_dense().unwrap(),
            f.jt22.to_dense().unwrap(),
            f.jt12.to_dense().unwrap(),
        );
        let n = (1 << d) - 1;
        for j in 0..n {
            for i in 0..n {
                let jac = element_center_jacobian(&q, d, i, j);
                let det = jac.determinant();
                let z = z_index(i, j, d).unwrap();
                let w11 = (jac[(0, 1)].powi(2) + jac[(1, 1)].powi(2)) / det;
                let w22 = (jac[(0, 0)].powi(2) + jac[(1, 0)].powi(2)) / det;
                let w12 = -(jac[(0, 0)] * jac[(0, 1)] + jac[(1, 0)] * jac[(1, 1)]) / det;
                assert!(close(jt11[z], w11, 1e-8 * w11.abs().max(1.0)));
                assert!(close(jt22[z], w22, 1e-8 * w22.abs().max(1.0)));
                assert!(close(jt12[z], w12, 1e-8));
            }
        }
    }

    #[test]
    fn element_areas_sum_to_quadrangle_area() {
        let para = Quadrangle::new([[0.0, 0.0], [2.0, 0.5], [3.0, 2.0], [1.0, 1.5]]).unwrap();
        let q = skewed();
        let mut errors = Vec::new();
        for d in 2..=6 {
            for (quad, exact) in [(&para, true), (&q, false)] {
                let jf = jacobian_parts(quad, d).unwrap();
                let n = (1usize << d) - 1;
                let mut sum = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        sum += 4.0 * jf.determinant(i as f64, j as f64);
                    }
                }
                let err = (sum - quad.area()).abs();
                if exact {
                    assert!(err < 1e-10, "d={d}: {err:e}");
                } else {
                    errors.push(err);
                }
            }
        }
        // Midpoint rule on an affine determinant is exact even for the skewed quad.
        assert!(errors.iter().all(|&e| e < 1e-10), "{errors:?}");
    }
}
