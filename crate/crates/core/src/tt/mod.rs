//! Tensor-train (TT) and quantized tensor-train (QTT) algebra.
//!
//! A [`TtVector`] stores a tensor with mode sizes `n_1, ..., n_d` as a chain of
//! cores `G_k` of shape `r_{k-1} x n_k x r_k` with `r_0 = r_d = 1`. Entries are
//! products of the core slices:
//!
//! ```text
//! T[i_1, ..., i_d] = G_1(i_1) G_2(i_2) ... G_d(i_d)
//! ```
//!
//! Flat indices are least-significant-mode first: `i = i_1 + n_1 (i_2 + n_2 (...))`,
//! so core 1 holds the fastest-varying digit. For QTT vectors of length `2^d`
//! this is the binary expansion `i = sum 2^{k-1} i_k`.
//!
//! A [`TtMatrix`] reuses the same storage with a combined mode index
//! `mu_k = i_k + rows_k * j_k` per core.

mod bowtie;
mod cross;
mod ops;
mod round;

pub use bowtie::BlockCore;
pub use cross::{cross_approximate, maxvol, CrossOptions};
pub(crate) use round::{sorted_svd, truncation_rank};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default limit on the number of entries materialized by `to_dense`.
pub const DENSE_GUARD: usize = 1 << 24;

/// One TT core: a 3-way array `left x mode x right` stored column-major,
/// i.e. entry `(a, i, b)` lives at `a + left * (i + mode * b)`.
///
/// With this layout the left unfolding `(left * mode) x right` and the right
/// unfolding `left x (mode * right)` are both plain reinterpretations of the
/// buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Core {
    left: usize,
    mode: usize,
    right: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, mode: usize, right: usize) -> Self {
        Self {
            left,
            mode,
            right,
            data: vec![0.0; left * mode * right],
        }
    }

    pub fn from_fn(
        left: usize,
        mode: usize,
        right: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(left * mode * right);
        for b in 0..right {
            for i in 0..mode {
                for a in 0..left {
                    data.push(f(a, i, b));
                }
            }
        }
        Self {
            left,
            mode,
            right,
            data,
        }
    }

    pub fn from_data(left: usize, mode: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != left * mode * right {
            return Err(Error::Shape(format!(
                "core buffer of length {} does not match {}x{}x{}",
                data.len(),
                left,
                mode,
                right
            )));
        }
        Ok(Self {
            left,
            mode,
            right,
            data,
        })
    }

    /// Core with the left unfolding equal to `m` (`(left * mode) x right`).
    pub fn from_left_unfolding(m: &DMatrix<f64>, left: usize, mode: usize) -> Self {
        debug_assert_eq!(m.nrows(), left * mode);
        Self {
            left,
            mode,
            right: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    /// Core with the right unfolding equal to `m` (`left x (mode * right)`).
    pub fn from_right_unfolding(m: &DMatrix<f64>, mode: usize, right: usize) -> Self {
        debug_assert_eq!(m.ncols(), mode * right);
        Self {
            left: m.nrows(),
            mode,
            right,
            data: m.as_slice().to_vec(),
        }
    }

    #[inline]
    pub fn left(&self) -> usize {
        self.left
    }

    #[inline]
    pub fn mode(&self) -> usize {
        self.mode
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.right
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, a: usize, i: usize, b: usize) -> usize {
        a + self.left * (i + self.mode * b)
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[self.offset(a, i, b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, value: f64) {
        let o = self.offset(a, i, b);
        self.data[o] = value;
    }

    pub fn left_unfolding(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.left * self.mode, self.right, &self.data)
    }

    pub fn right_unfolding(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.left, self.mode * self.right, &self.data)
    }

    /// The `left x right` matrix `G(i)`.
    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.left, self.right, |a, b| self.get(a, i, b))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }
}

/// A tensor in TT format.
#[derive(Clone, Debug, PartialEq)]
pub struct TtVector {
    cores: Vec<Core>,
}

impl TtVector {
    /// Builds a TT vector, checking that neighbouring ranks agree and the
    /// boundary ranks are 1.
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::Shape("a tensor train needs at least one core".into()));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::Shape("boundary ranks must be 1".into()));
        }
        for (k, pair) in cores.windows(2).enumerate() {
            if pair[0].right != pair[1].left {
                return Err(Error::Shape(format!(
                    "rank mismatch between cores {} and {}: {} vs {}",
                    k,
                    k + 1,
                    pair[0].right,
                    pair[1].left
                )));
            }
        }
        if cores.iter().any(|c| c.mode == 0) {
            return Err(Error::Shape("mode sizes must be positive".into()));
        }
        Ok(Self { cores })
    }

    pub(crate) fn from_cores_unchecked(cores: Vec<Core>) -> Self {
        debug_assert!(Self::new(cores.clone()).is_ok());
        Self { cores }
    }

    /// Rank-1 tensor with the given per-mode factors.
    pub fn rank_one(factors: &[Vec<f64>]) -> Result<Self> {
        let cores = factors
            .iter()
            .map(|f| Core::from_fn(1, f.len(), 1, |_, i, _| f[i]))
            .collect();
        Self::new(cores)
    }

    pub fn ones(modes: &[usize]) -> Self {
        Self::constant(modes, 1.0)
    }

    /// The zero tensor; every core is zero and every rank is 1.
    pub fn zeros(modes: &[usize]) -> Self {
        Self::from_cores_unchecked(modes.iter().map(|&n| Core::zeros(1, n, 1)).collect())
    }

    pub fn constant(modes: &[usize], value: f64) -> Self {
        let mut cores: Vec<Core> = modes.iter().map(|&n| Core::from_fn(1, n, 1, |_, _, _| 1.0)).collect();
        cores[0].scale_in_place(value);
        Self::from_cores_unchecked(cores)
    }

    /// Sum of per-mode functions plus a constant,
    /// `T[i_1..i_d] = constant + sum_k terms[k][i_k]`, as an exact rank-2 TT.
    pub fn additive(terms: &[Vec<f64>], constant: f64) -> Result<Self> {
        let d = terms.len();
        if d == 0 {
            return Err(Error::Shape("additive tensor needs at least one mode".into()));
        }
        if d == 1 {
            let t = &terms[0];
            return Self::new(vec![Core::from_fn(1, t.len(), 1, |_, i, _| t[i] + constant)]);
        }
        let mut cores = Vec::with_capacity(d);
        // First core: [w_1(i) + c, 1]
        let t0 = &terms[0];
        cores.push(Core::from_fn(1, t0.len(), 2, |_, i, b| {
            if b == 0 {
                t0[i] + constant
            } else {
                1.0
            }
        }));
        for t in &terms[1..d - 1] {
            // [[1, 0], [w_k(i), 1]]
            cores.push(Core::from_fn(2, t.len(), 2, |a, i, b| match (a, b) {
                (0, 0) | (1, 1) => 1.0,
                (1, 0) => t[i],
                _ => 0.0,
            }));
        }
        let tl = &terms[d - 1];
        cores.push(Core::from_fn(2, tl.len(), 1, |a, i, _| if a == 0 { 1.0 } else { tl[i] }));
        Self::new(cores)
    }

    /// Unit vector at the given multi-index.
    pub fn unit(modes: &[usize], index: &[usize]) -> Result<Self> {
        if modes.len() != index.len() || index.iter().zip(modes).any(|(&i, &n)| i >= n) {
            return Err(Error::Range(format!("index {index:?} outside modes {modes:?}")));
        }
        let cores = modes
            .iter()
            .zip(index)
            .map(|(&n, &at)| Core::from_fn(1, n, 1, |_, i, _| if i == at { 1.0 } else { 0.0 }))
            .collect();
        Self::new(cores)
    }

    #[inline]
    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    /// Number of cores.
    #[inline]
    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn modes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode).collect()
    }

    /// `r_0, ..., r_d` with `r_0 = r_d = 1`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.cores.len() + 1);
        r.push(1);
        r.extend(self.cores.iter().map(|c| c.right));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Total number of entries `prod n_k`.
    pub fn len(&self) -> usize {
        self.cores.iter().map(|c| c.mode).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of stored parameters, `sum r_{k-1} n_k r_k`.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// Single entry at a multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        let mut row: Vec<f64> = vec![1.0];
        for (core, &i) in self.cores.iter().zip(index) {
            let mut next = vec![0.0; core.right];
            for (b, nb) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for (a, ra) in row.iter().enumerate() {
                    s += ra * core.get(a, i, b);
                }
                *nb = s;
            }
            row = next;
        }
        row[0]
    }

    /// Single entry at a flat (least-significant-mode first) index.
    pub fn get_flat(&self, flat: usize) -> f64 {
        self.get(&self.unflatten(flat))
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        self.cores
            .iter()
            .map(|c| {
                let i = flat % c.mode;
                flat /= c.mode;
                i
            })
            .collect()
    }

    /// Materializes the full tensor as a flat vector.
    pub fn to_dense(&self) -> Result<DVector<f64>> {
        self.to_dense_with_guard(DENSE_GUARD)
    }

    pub fn to_dense_with_guard(&self, guard: usize) -> Result<DVector<f64>> {
        let size = self
            .cores
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(c.mode))
            .unwrap_or(usize::MAX);
        if size > guard {
            return Err(Error::Guard { size, limit: guard });
        }
        // Running product as an (entries so far) x (rank) matrix.
        let mut acc = DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let prod = &acc * core.right_unfolding();
            let rows = acc.nrows() * core.mode;
            acc = DMatrix::from_column_slice(rows, core.right, prod.as_slice());
        }
        Ok(DVector::from_column_slice(acc.as_slice()))
    }

    /// Elementwise reciprocal.
    ///
    /// Entries must satisfy `|v| >= floor`. Tensors with at most
    /// [`RECIPROCAL_DENSE_LIMIT`] entries go through a dense round trip; larger
    /// ones are approximated by TT cross interpolation.
    pub fn reciprocal(&self, tol: f64, floor: f64) -> Result<Self> {
        self.reciprocal_with_limit(tol, floor, RECIPROCAL_DENSE_LIMIT)
    }

    pub fn reciprocal_with_limit(&self, tol: f64, floor: f64, dense_limit: usize) -> Result<Self> {
        if self.len() <= dense_limit {
            let dense = self.to_dense_with_guard(dense_limit)?;
            let mut inv = Vec::with_capacity(dense.len());
            for (k, &v) in dense.iter().enumerate() {
                if v.abs() < floor {
                    return Err(Error::Singular(format!(
                        "entry {k} has magnitude {:.3e} below the floor {floor:.1e}",
                        v.abs()
                    )));
                }
                inv.push(1.0 / v);
            }
            return Self::from_dense(&inv, &self.modes(), tol);
        }
        let singular = std::cell::Cell::new(None);
        let f = |idx: &[usize]| {
            let v = self.get(idx);
            if v.abs() < floor {
                singular.set(Some(v));
                1.0
            } else {
                1.0 / v
            }
        };
        let opts = CrossOptions {
            tol,
            ..CrossOptions::default()
        };
        let approx = cross_approximate(&self.modes(), f, &opts)?;
        if let Some(v) = singular.get() {
            return Err(Error::Singular(format!(
                "sampled entry {v:.3e} below the floor {floor:.1e}"
            )));
        }
        Ok(approx)
    }
}

/// Largest tensor for which [`TtVector::reciprocal`] uses the dense path.
pub const RECIPROCAL_DENSE_LIMIT: usize = 1 << 16;

/// Default floor for [`TtVector::reciprocal`].
pub const RECIPROCAL_FLOOR: f64 = 1e-12;

/// A matrix in TT format. Core `k` has combined mode `rows[k] * cols[k]`
/// with index `i + rows[k] * j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TtMatrix {
    tt: TtVector,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl TtMatrix {
    pub fn from_tt(tt: TtVector, rows: Vec<usize>, cols: Vec<usize>) -> Result<Self> {
        if rows.len() != tt.order() || cols.len() != tt.order() {
            return Err(Error::Shape("row/column mode lists must match the core count".into()));
        }
        for (k, core) in tt.cores().iter().enumerate() {
            if core.mode != rows[k] * cols[k] {
                return Err(Error::Shape(format!(
                    "core {k} has mode {} but rows*cols = {}",
                    core.mode,
                    rows[k] * cols[k]
                )));
            }
        }
        Ok(Self { tt, rows, cols })
    }

    /// Builds a TT matrix from 4-way cores given as closures
    /// `f(a, i, j, b)` with explicit shapes.
    pub fn from_core_fns(shapes: &[(usize, usize, usize, usize)], f: impl Fn(usize, usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut cores = Vec::with_capacity(shapes.len());
        let mut rows = Vec::with_capacity(shapes.len());
        let mut cols = Vec::with_capacity(shapes.len());
        for (k, &(l, n, m, r)) in shapes.iter().enumerate() {
            cores.push(Core::from_fn(l, n * m, r, |a, mu, b| f(k, a, mu % n, mu / n, b)));
            rows.push(n);
            cols.push(m);
        }
        Self::from_tt(TtVector::new(cores)?, rows, cols)
    }

    /// Rank-1 matrix `M_1 (x) ... (x) M_d` with `M_1` acting on the fastest digit.
    pub fn rank_one(factors: &[DMatrix<f64>]) -> Result<Self> {
        let shapes: Vec<_> = factors.iter().map(|m| (1, m.nrows(), m.ncols(), 1)).collect();
        Self::from_core_fns(&shapes, |k, _, i, j, _| factors[k][(i, j)])
    }

    pub fn identity(modes: &[usize]) -> Self {
        let factors: Vec<_> = modes.iter().map(|&n| DMatrix::identity(n, n)).collect();
        Self::rank_one(&factors).expect("identity cores are well formed")
    }

    pub fn zeros(rows: &[usize], cols: &[usize]) -> Self {
        let factors: Vec<_> = rows
            .iter()
            .zip(cols)
            .map(|(&n, &m)| DMatrix::zeros(n, m))
            .collect();
        Self::rank_one(&factors).expect("zero cores are well formed")
    }

    #[inline]
    pub fn tt(&self) -> &TtVector {
        &self.tt
    }

    pub fn into_tt(self) -> TtVector {
        self.tt
    }

    pub fn row_modes(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_modes(&self) -> &[usize] {
        &self.cols
    }

    pub fn nrows(&self) -> usize {
        self.rows.iter().product()
    }

    pub fn ncols(&self) -> usize {
        self.cols.iter().product()
    }

    pub fn order(&self) -> usize {
        self.tt.order()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.tt.ranks()
    }

    pub fn max_rank(&self) -> usize {
        self.tt.max_rank()
    }

    pub fn cores(&self) -> &[Core] {
        self.tt.cores()
    }

    /// Entry `(a, i, j, b)` of core `k`.
    #[inline]
    pub fn core_entry(&self, k: usize, a: usize, i: usize, j: usize, b: usize) -> f64 {
        self.tt.cores[k].get(a, i + self.rows[k] * j, b)
    }

    /// Single entry by flat row/column indices.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let mut r = row;
        let mut c = col;
        let idx: Vec<usize> = self
            .rows
            .iter()
            .zip(&self.cols)
            .map(|(&n, &m)| {
                let i = r % n;
                let j = c % m;
                r /= n;
                c /= m;
                i + n * j
            })
            .collect();
        self.tt.get(&idx)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.to_dense_with_guard(DENSE_GUARD)
    }

    pub fn to_dense_with_guard(&self, guard: usize) -> Result<DMatrix<f64>> {
        let flat = self.tt.to_dense_with_guard(guard)?;
        let (nr, nc) = (self.nrows(), self.ncols());
        let d = self.order();
        let mut out = DMatrix::zeros(nr, nc);
        // Walk the combined multi-index in flat order, tracking row/col digits.
        let mut digits = vec![0usize; d];
        for &value in flat.iter() {
            if value != 0.0 {
                let mut row = 0;
                let mut col = 0;
                let mut rs = 1;
                let mut cs = 1;
                for k in 0..d {
                    let n = self.rows[k];
                    row += (digits[k] % n) * rs;
                    col += (digits[k] / n) * cs;
                    rs *= n;
                    cs *= self.cols[k];
                }
                out[(row, col)] = value;
            }
            for k in 0..d {
                digits[k] += 1;
                if digits[k] < self.rows[k] * self.cols[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        Ok(out)
    }

    /// TT-SVD of a dense matrix with the given row/column mode factorization.
    pub fn from_dense(m: &DMatrix<f64>, rows: &[usize], cols: &[usize], tol: f64) -> Result<Self> {
        if rows.len() != cols.len() {
            return Err(Error::Shape("row and column mode lists differ in length".into()));
        }
        let nr: usize = rows.iter().product();
        let nc: usize = cols.iter().product();
        if m.nrows() != nr || m.ncols() != nc {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but modes give {}x{}",
                m.nrows(),
                m.ncols(),
                nr,
                nc
            )));
        }
        let modes: Vec<usize> = rows.iter().zip(cols).map(|(n, m)| n * m).collect();
        let total: usize = modes.iter().product();
        let mut flat = vec![0.0; total];
        for col in 0..nc {
            for row in 0..nr {
                let mut r = row;
                let mut c = col;
                let mut idx = 0;
                let mut stride = 1;
                for k in 0..rows.len() {
                    let i = r % rows[k];
                    let j = c % cols[k];
                    r /= rows[k];
                    c /= cols[k];
                    idx += (i + rows[k] * j) * stride;
                    stride *= modes[k];
                }
                flat[idx] = m[(row, col)];
            }
        }
        let tt = TtVector::from_dense(&flat, &modes, tol)?;
        Self::from_tt(tt, rows.to_vec(), cols.to_vec())
    }
}

/// Effective rank: the `r_e` for which a TT with all interior ranks equal to
/// `r_e` (and the same mode sizes) would use the same storage,
/// `S = r_e (n_1 + n_d) + r_e^2 (n_2 + ... + n_{d-1})`.
///
/// For two cores the quadratic term vanishes and the linear formula is used;
/// for a single core the result is 1.
pub fn erank(tt: &TtVector) -> f64 {
    let modes = tt.modes();
    let d = modes.len();
    let s = tt.storage() as f64;
    if d == 1 {
        return s / modes[0] as f64;
    }
    let lin = (modes[0] + modes[d - 1]) as f64;
    let quad: f64 = modes[1..d - 1].iter().map(|&n| n as f64).sum();
    if quad == 0.0 {
        return s / lin;
    }
    (-lin + (lin * lin + 4.0 * quad * s).sqrt()) / (2.0 * quad)
}

pub fn erank_matrix(m: &TtMatrix) -> f64 {
    erank(m.tt())
}
