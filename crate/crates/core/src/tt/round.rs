//! TT-SVD construction, orthogonalization and rounding.

use nalgebra::{DMatrix, DVector};

use super::{Core, TtMatrix, TtVector};
use crate::error::{Error, Result};

/// Thin SVD with singular values sorted in descending order.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (DMatrix::zeros(rows, 0), DVector::zeros(0), DMatrix::zeros(0, cols));
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = match fm.thin_svd() {
        Ok(svd) => svd,
        Err(_) => {
            // Non-finite input: report it as a zero matrix of the right shape.
            return (DMatrix::identity(rows, k), DVector::zeros(k), DMatrix::identity(k, cols));
        }
    };
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let u_sorted = DMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]);
    let vt_sorted = DMatrix::from_fn(k, cols, |i, j| v[(j, order[i])]);
    let s_sorted = DVector::from_iterator(k, order.iter().map(|&j| s[j]));
    (u_sorted, s_sorted, vt_sorted)
}

/// Smallest rank whose discarded tail has Euclidean norm at most `delta`.
/// Singular values at the level of roundoff relative to the largest one are
/// always discarded; the result is at least 1.
pub(crate) fn truncation_rank(s: &DVector<f64>, delta: f64, dims: (usize, usize)) -> usize {
    if s.is_empty() {
        return 1;
    }
    let floor = s[0] * f64::EPSILON * dims.0.max(dims.1) as f64;
    let mut numerical = s.iter().take_while(|&&x| x > floor).count();
    numerical = numerical.max(1);
    let mut tail = 0.0;
    let mut r = numerical;
    while r > 1 {
        let next = tail + s[r - 1] * s[r - 1];
        if next.sqrt() > delta {
            break;
        }
        tail = next;
        r -= 1;
    }
    r
}

fn per_bond_delta(tol: f64, norm: f64, order: usize) -> f64 {
    if order <= 1 {
        tol * norm
    } else {
        tol * norm / ((order - 1) as f64).sqrt()
    }
}

impl TtVector {
    /// TT-SVD of a dense tensor given in flat (least-significant-mode first)
    /// order. The relative Frobenius error is at most `tol`.
    pub fn from_dense(data: &[f64], modes: &[usize], tol: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Shape("at least one mode is required".into()));
        }
        let size: usize = modes.iter().product();
        if size != data.len() {
            return Err(Error::Shape(format!(
                "data has {} entries but modes {:?} give {}",
                data.len(),
                modes,
                size
            )));
        }
        if tol < 0.0 || tol.is_nan() {
            return Err(Error::Input(format!("tolerance must be non-negative, got {tol}")));
        }
        let norm = data.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(Self::zeros(modes));
        }
        let d = modes.len();
        let delta = per_bond_delta(tol, norm, d);
        let mut cores = Vec::with_capacity(d);
        let mut rest = data.to_vec();
        let mut left = 1;
        let mut remaining = size;
        for &n in &modes[..d - 1] {
            remaining /= n;
            let m = DMatrix::from_column_slice(left * n, remaining, &rest);
            let (u, s, vt) = sorted_svd(&m);
            let r = truncation_rank(&s, delta, (m.nrows(), m.ncols()));
            let uk = u.columns(0, r).into_owned();
            cores.push(Core::from_left_unfolding(&uk, left, n));
            let mut svt = vt.rows(0, r).into_owned();
            for (i, mut row) in svt.row_iter_mut().enumerate() {
                row *= s[i];
            }
            rest = svt.as_slice().to_vec();
            left = r;
        }
        cores.push(Core::from_data(left, modes[d - 1], 1, rest)?);
        Ok(Self::from_cores_unchecked(cores))
    }

    /// Makes cores `k+1..d` right-orthonormal by LQ sweeps from the right;
    /// returns the result (core `k` absorbs the factors).
    pub(crate) fn right_orthogonalize_to(&mut self, k: usize) {
        let d = self.order();
        for j in (k + 1..d).rev() {
            let core = &self.cores[j];
            let (n, r) = (core.mode, core.right);
            let mt = core.right_unfolding().transpose();
            let qr = mt.qr();
            let q = qr.q(); // (n r) x l'
            let rr = qr.r(); // l' x l
            let lp = q.ncols();
            self.cores[j] = Core::from_right_unfolding(&q.transpose(), n, r);
            let prev = &self.cores[j - 1];
            let pl = prev.left;
            let pn = prev.mode;
            let updated = prev.left_unfolding() * rr.transpose();
            debug_assert_eq!(updated.ncols(), lp);
            self.cores[j - 1] = Core::from_left_unfolding(&updated, pl, pn);
        }
    }

    /// Frobenius norm, computed through orthogonalization so that the result
    /// is accurate even when the representation involves cancellation.
    pub fn norm(&self) -> f64 {
        let mut t = self.clone();
        t.right_orthogonalize_to(0);
        t.cores[0].frobenius_norm()
    }

    /// TT rounding: returns a tensor within relative Frobenius distance `tol`
    /// with non-increasing ranks.
    pub fn round(&self, tol: f64) -> Self {
        let d = self.order();
        let mut t = self.clone();
        t.right_orthogonalize_to(0);
        let norm = t.cores[0].frobenius_norm();
        if norm == 0.0 || !norm.is_finite() {
            if norm == 0.0 {
                return Self::zeros(&self.modes());
            }
            return t;
        }
        let delta = per_bond_delta(tol.max(0.0), norm, d);
        for k in 0..d.saturating_sub(1) {
            let core = &t.cores[k];
            let (l, n) = (core.left, core.mode);
            let m = core.left_unfolding();
            let (u, s, vt) = sorted_svd(&m);
            let r = truncation_rank(&s, delta, (m.nrows(), m.ncols()));
            t.cores[k] = Core::from_left_unfolding(&u.columns(0, r).into_owned(), l, n);
            let mut svt = vt.rows(0, r).into_owned();
            for (i, mut row) in svt.row_iter_mut().enumerate() {
                row *= s[i];
            }
            let next = &t.cores[k + 1];
            let (nn, nr) = (next.mode, next.right);
            let updated = svt * next.right_unfolding();
            t.cores[k + 1] = Core::from_right_unfolding(&updated, nn, nr);
        }
        t
    }
}

impl TtMatrix {
    pub fn round(&self, tol: f64) -> Self {
        Self {
            tt: self.tt.round(tol),
            rows: self.rows.clone(),
            cols: self.cols.clone(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.tt.norm()
    }
}
