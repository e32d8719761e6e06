//! TT cross interpolation with maxvol pivoting.
//!
//! Builds a TT approximation of a tensor available only through entry
//! evaluations. Each step samples the two-site "supercore" on the current
//! left/right index sets, truncates it by SVD and picks new interpolation
//! indices with maxvol. Sweeps alternate direction until two consecutive
//! approximations agree to the requested tolerance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::round::{sorted_svd, truncation_rank};
use super::{Core, TtVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct CrossOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_rank: usize,
    /// Number of random multi-indices used to seed the right index sets.
    pub init_rank: usize,
    pub seed: u64,
}

impl Default for CrossOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 20,
            max_rank: 64,
            init_rank: 2,
            seed: 0x5eed,
        }
    }
}

/// Rows of a tall `n x r` matrix spanning a submatrix of (locally) maximal
/// volume. Returns `min(n, r)` distinct row indices.
pub fn maxvol(a: &DMatrix<f64>) -> Vec<usize> {
    let (n, r) = a.shape();
    if n <= r {
        return (0..n).collect();
    }
    // Greedy start: Gaussian elimination with row pivoting.
    let mut work = a.clone();
    let mut piv = Vec::with_capacity(r);
    let mut used = vec![false; n];
    for c in 0..r {
        let (best, val) = (0..n)
            .filter(|&i| !used[i])
            .map(|i| (i, work[(i, c)].abs()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        used[best] = true;
        piv.push(best);
        if val == 0.0 {
            continue;
        }
        let p = work[(best, c)];
        let pivot_row = work.row(best).into_owned();
        for i in 0..n {
            if !used[i] {
                let f = work[(i, c)] / p;
                if f != 0.0 {
                    let mut row = work.row_mut(i);
                    row -= &pivot_row * f;
                }
            }
        }
    }
    // Swap rows while some coefficient exceeds 1.
    for _ in 0..100 {
        let sub = DMatrix::from_fn(r, r, |i, j| a[(piv[i], j)]);
        let Some(inv) = sub.try_inverse() else { break };
        let b = a * inv;
        let mut best = (0, 0, 0.0);
        for i in 0..n {
            for j in 0..r {
                let v = b[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= 1.0 + 1e-2 || piv.contains(&best.0) {
            break;
        }
        piv[best.1] = best.0;
    }
    piv
}

/// Cross approximation of the tensor with the given mode sizes whose entries
/// are `f(multi_index)`.
pub fn cross_approximate(
    modes: &[usize],
    f: impl Fn(&[usize]) -> f64,
    opts: &CrossOptions,
) -> Result<TtVector> {
    let d = modes.len();
    if d == 0 {
        return Err(Error::Shape("cross approximation needs at least one mode".into()));
    }
    if d == 1 {
        let core = Core::from_fn(1, modes[0], 1, |_, i, _| f(&[i]));
        return TtVector::new(vec![core]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // left[k]: multi-indices over modes 0..k; right[k]: over modes k..d.
    let mut left: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d + 1];
    let mut right: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d + 1];
    left[0] = vec![Vec::new()];
    right[d] = vec![Vec::new()];
    let starts: Vec<Vec<usize>> = (0..opts.init_rank.max(1))
        .map(|_| modes.iter().map(|&n| rng.random_range(0..n)).collect())
        .collect();
    for k in 1..d {
        let mut set: Vec<Vec<usize>> = Vec::new();
        for s in &starts {
            let suffix = s[k..].to_vec();
            if !set.contains(&suffix) {
                set.push(suffix);
            }
        }
        right[k] = set;
    }

    let delta_scale = 1.0 / ((d - 1) as f64).sqrt();
    let supercore = |k: usize, lset: &[Vec<usize>], rset: &[Vec<usize>]| {
        let (n1, n2) = (modes[k], modes[k + 1]);
        let (rl, rr) = (lset.len(), rset.len());
        let mut idx = vec![0usize; d];
        DMatrix::from_fn(rl * n1, n2 * rr, |row, col| {
            let (alpha, i) = (row % rl, row / rl);
            let (j, beta) = (col % n2, col / n2);
            idx[..k].copy_from_slice(&lset[alpha]);
            idx[k] = i;
            idx[k + 1] = j;
            idx[k + 2..].copy_from_slice(&rset[beta]);
            f(&idx)
        })
    };

    let mut current: Option<TtVector> = None;
    for _sweep in 0..opts.max_sweeps {
        // Left-to-right: refresh the left index sets.
        for k in 0..d - 1 {
            let s = supercore(k, &left[k], &right[k + 2]);
            let (u, sv, _) = sorted_svd(&s);
            let delta = opts.tol * s.norm() * delta_scale;
            let r = truncation_rank(&sv, delta, s.shape()).min(opts.max_rank);
            let u = u.columns(0, r).into_owned();
            let piv = maxvol(&u);
            let rl = left[k].len();
            left[k + 1] = piv
                .iter()
                .map(|&row| {
                    let mut m = left[k][row % rl].clone();
                    m.push(row / rl);
                    m
                })
                .collect();
        }
        // Right-to-left: refresh the right index sets and assemble cores.
        let mut cores: Vec<Option<Core>> = vec![None; d];
        for k in (0..d - 1).rev() {
            let s = supercore(k, &left[k], &right[k + 2]);
            let (u, sv, vt) = sorted_svd(&s);
            let delta = opts.tol * s.norm() * delta_scale;
            let r = truncation_rank(&sv, delta, s.shape()).min(opts.max_rank);
            let w = vt.rows(0, r).transpose(); // (n2 * rr) x r
            let piv = maxvol(&w);
            let r = piv.len();
            let wp = DMatrix::from_fn(r, r, |i, j| w[(piv[i], j)]);
            let wp_inv = wp
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular("maxvol submatrix is singular".into()))?;
            let interp = (w.columns(0, r) * wp_inv).transpose(); // r x (n2 * rr)
            cores[k + 1] = Some(Core::from_right_unfolding(&interp, modes[k + 1], right[k + 2].len()));
            let n2 = modes[k + 1];
            right[k + 1] = piv
                .iter()
                .map(|&col| {
                    let (j, beta) = (col % n2, col / n2);
                    let mut m = vec![j];
                    m.extend_from_slice(&right[k + 2][beta]);
                    m
                })
                .collect();
            if k == 0 {
                // First core: the supercore restricted to the chosen columns.
                let mut us = u.columns(0, sv.len().min(u.ncols())).into_owned();
                for (c, mut col) in us.column_iter_mut().enumerate() {
                    col *= sv[c];
                }
                let approx = us * vt.rows(0, sv.len().min(vt.nrows()));
                let first = DMatrix::from_fn(s.nrows(), r, |i, j| approx[(i, piv[j])]);
                cores[0] = Some(Core::from_left_unfolding(&first, 1, modes[0]));
            }
        }
        let tt = TtVector::new(cores.into_iter().map(|c| c.expect("all cores set")).collect())?;
        let converged = match &current {
            Some(prev) => tt.sub(prev)?.norm() <= opts.tol * tt.norm(),
            None => false,
        };
        current = Some(tt);
        if converged {
            break;
        }
    }
    Ok(current.expect("at least one sweep").round(opts.tol * 1e-2))
}
