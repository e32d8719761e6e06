//! Dense reference implementations written directly from the element-level
//! definitions: node positions by bilinear interpolation, one-point element
//! integrals and an element-by-element assembly loop.

use nalgebra::{DMatrix, DVector, Matrix2};

pub type Point = [f64; 2];

/// Morton index with the bits of `i` in the even positions.
pub fn interleave(i: usize, j: usize, d: usize) -> usize {
    let mut z = 0;
    for k in 0..d {
        z |= ((i >> k) & 1) << (2 * k);
        z |= ((j >> k) & 1) << (2 * k + 1);
    }
    z
}

/// Node `(i, j)` of a `2^d x 2^d` grid spanning the quadrangle `[LB, RB, RT, LT]`.
pub fn grid_node(v: &[Point; 4], d: usize, i: usize, j: usize) -> Point {
    let last = ((1usize << d) - 1) as f64;
    let (s, t) = (i as f64 / last, j as f64 / last);
    let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
    let mut p = [0.0; 2];
    for (wk, vk) in w.iter().zip(v) {
        p[0] += wk * vk[0];
        p[1] += wk * vk[1];
    }
    p
}

/// Standard-square corner signs in the order `LB, RB, RT, LT`.
const SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Jacobian of the element map at the element center.
pub fn element_jacobian(corners: &[Point; 4]) -> Matrix2<f64> {
    let mut j = Matrix2::zeros();
    for (p, &(cx, cy)) in corners.iter().zip(&SIGNS) {
        let g = [cx / 4.0, cy / 4.0];
        for r in 0..2 {
            for c in 0..2 {
                j[(r, c)] += p[r] * g[c];
            }
        }
    }
    j
}

/// One-point stiffness and mass matrices of one element, corners `LB, RB, RT, LT`.
pub fn element_matrices(corners: &[Point; 4]) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = element_jacobian(corners);
    let det = j.determinant();
    let jit = j.try_inverse().expect("non-degenerate element").transpose();
    let grads: Vec<_> = SIGNS
        .iter()
        .map(|&(cx, cy)| jit * nalgebra::Vector2::new(cx / 4.0, cy / 4.0))
        .collect();
    let k = DMatrix::from_fn(4, 4, |a, b| 4.0 * det * grads[a].dot(&grads[b]));
    let m = DMatrix::from_element(4, 4, det / 4.0);
    (k, m)
}

/// Stiffness matrix and load vector of a structured `nx x ny` grid of nodes
/// with `f = 1`. Node `(i, j)` has index `i + nx j`.
pub fn assemble_grid(nodes: &[Point], nx: usize, ny: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = nx * ny;
    let mut k = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let ids = [i + nx * j, i + 1 + nx * j, i + 1 + nx * (j + 1), i + nx * (j + 1)];
            let corners = ids.map(|id| nodes[id]);
            let (ke, me) = element_matrices(&corners);
            for a in 0..4 {
                for b in 0..4 {
                    k[(ids[a], ids[b])] += ke[(a, b)];
                    f[ids[a]] += me[(a, b)];
                }
            }
        }
    }
    (k, f)
}

/// Stiffness matrix of one quadrangle's `2^d x 2^d` grid in z-order.
pub fn quad_stiffness_z(v: &[Point; 4], d: usize) -> DMatrix<f64> {
    let n = 1usize << d;
    let nodes: Vec<Point> = (0..n * n).map(|id| grid_node(v, d, id % n, id / n)).collect();
    let (k, _) = assemble_grid(&nodes, n, n);
    let z: Vec<usize> = (0..n * n).map(|id| interleave(id % n, id / n, d)).collect();
    let mut out = DMatrix::zeros(n * n, n * n);
    for a in 0..n * n {
        for b in 0..n * n {
            out[(z[a], z[b])] = k[(a, b)];
        }
    }
    out
}

/// Solves the Poisson problem with `f = 1` and homogeneous Dirichlet data
/// on the whole boundary of a structured grid.
pub fn solve_dirichlet_grid(nodes: &[Point], nx: usize, ny: usize) -> DVector<f64> {
    let (mut k, mut f) = assemble_grid(nodes, nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                let id = i + nx * j;
                k.row_mut(id).fill(0.0);
                k[(id, id)] = 1.0;
                f[id] = 0.0;
            }
        }
    }
    k.lu().solve(&f).expect("non-singular reference system")
}
