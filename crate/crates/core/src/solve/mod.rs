//! Linear solvers for the global system, the dense reference solver, the
//! discrete energy and Richardson extrapolation.
//!
//! [`tt_solve`] is an alternating one-core scheme with residual enrichment
//! (AMEn). Each step solves the Galerkin projection of `B u = g` onto the
//! current interface bases for one core, truncates the new core with an SVD
//! and enlarges the basis with a projection of the residual. A companion
//! tensor `z` of small rank tracks the residual; its cores are refreshed
//! during the same sweep. The starting `z` is random with a fixed seed, so
//! runs are reproducible.

mod tensor;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tt::{erank, erank_matrix, sorted_svd, truncation_rank, Core, TtMatrix, TtVector};
use tensor::Tensor;

/// Largest system accepted by [`dense_solve`], in rows.
pub const DENSE_SOLVE_GUARD: usize = 3 * 4usize.pow(6);

/// Largest local system of the alternating solver, in unknowns. Local
/// systems are solved densely, so this bounds the solver's memory.
pub const LOCAL_SOLVE_GUARD: usize = 8192;

/// Effective ranks of the system matrix, right-hand side and solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Eranks {
    pub b: f64,
    pub g: f64,
    pub u: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Solution in z-order, with per-subdomain blocks along the last core.
    pub u: TtVector,
    /// Relative residual `|B u - g| / |g|`.
    pub residual: f64,
    /// Completed sweeps.
    pub iterations: usize,
    pub eranks: Eranks,
    /// Discrete energy, filled in by callers that know the subdomain
    /// stiffness matrices.
    pub energy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Target relative residual.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Seed for the initial residual approximation.
    pub seed: u64,
    /// Rank of the residual approximation and of each enrichment.
    pub enrichment_rank: usize,
    /// Cap on the solution ranks.
    pub max_rank: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 30,
            seed: 0,
            enrichment_rank: 4,
            max_rank: 160,
        }
    }
}

/// Direct LU solution of a dense system.
pub fn dense_solve(b: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let n = b.nrows();
    if n > DENSE_SOLVE_GUARD {
        return Err(Error::Guard {
            size: n,
            limit: DENSE_SOLVE_GUARD,
        });
    }
    if b.ncols() != n || g.len() != n {
        return Err(Error::Shape(format!(
            "system {}x{} with right-hand side of length {}",
            b.nrows(),
            b.ncols(),
            g.len()
        )));
    }
    lu_solve(b, g).ok_or_else(|| Error::Singular("dense system matrix is singular".into()))
}

/// LU solution with partial pivoting. Returns `None` when the result is not
/// finite or does not satisfy the system to a relative residual of
/// `sqrt(eps)`, both of which signal a singular matrix.
fn lu_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    use faer::prelude::Solve;
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let fb = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let fx = fm.partial_piv_lu().solve(&fb);
    let x = DVector::from_fn(n, |i, _| fx[(i, 0)]);
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = m.norm() * x.norm() + rhs.norm();
    ((m * &x - rhs).norm() <= f64::EPSILON.sqrt() * scale).then_some(x)
}

/// Relative residual `|B u - g| / |g|` (absolute when `g = 0`).
pub fn relative_residual(b: &TtMatrix, g: &TtVector, u: &TtVector) -> Result<f64> {
    let r = b.matvec(u)?.sub(g)?.norm();
    let gn = g.norm();
    Ok(if gn > 0.0 { r / gn } else { r })
}

/// Discrete Dirichlet energy `sum_m <u^(m), A^(m) u^(m)>`.
pub fn energy(u: &[TtVector], a: &[TtMatrix]) -> Result<f64> {
    if u.len() != a.len() {
        return Err(Error::Shape(format!("{} solution blocks for {} matrices", u.len(), a.len())));
    }
    u.iter().zip(a).map(|(u, a)| a.matvec(u)?.dot(u)).sum()
}

/// Richardson estimate of the limit energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Richardson {
    /// `(4 E_{d+1} - E_d) / 3` from the two finest levels.
    pub e_star: f64,
    /// Observed order from the three finest levels, when defined.
    pub order: Option<f64>,
}

/// Extrapolates energies of consecutive levels, coarsest first.
pub fn richardson(energies: &[f64]) -> Result<Richardson> {
    let n = energies.len();
    if n < 2 {
        return Err(Error::Input(format!("Richardson extrapolation needs at least 2 levels, got {n}")));
    }
    let (coarse, fine) = (energies[n - 2], energies[n - 1]);
    let e_star = (4.0 * fine - coarse) / 3.0;
    let order = if n >= 3 {
        let ratio = (energies[n - 3] - coarse) / (coarse - fine);
        let p = ratio.log2();
        (ratio > 0.0 && p.is_finite()).then_some(p)
    } else {
        None
    };
    Ok(Richardson { e_star, order })
}

/// Solves `B u = g` in TT format, starting from a rounding of `g`.
pub fn tt_solve(b: &TtMatrix, g: &TtVector, opts: &SolveOptions) -> Result<SolveReport> {
    tt_solve_from(b, g, None, opts)
}

/// Solves `B u = g` in TT format from an optional initial guess.
pub fn tt_solve_from(b: &TtMatrix, g: &TtVector, x0: Option<&TtVector>, opts: &SolveOptions) -> Result<SolveReport> {
    if b.row_modes() != b.col_modes() {
        return Err(Error::Shape("system matrix is not square".into()));
    }
    if b.row_modes() != g.modes().as_slice() {
        return Err(Error::Shape(format!(
            "matrix modes {:?} do not match right-hand side modes {:?}",
            b.row_modes(),
            g.modes()
        )));
    }
    if let Some(x0) = x0 {
        if x0.modes() != g.modes() {
            return Err(Error::Shape("initial guess has the wrong modes".into()));
        }
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 || opts.enrichment_rank == 0 || opts.max_rank == 0 {
        return Err(Error::Input("solver tolerance and ranks must be positive".into()));
    }
    let eranks = |u: &TtVector| Eranks {
        b: erank_matrix(b),
        g: erank(g),
        u: erank(u),
    };
    let gnorm = g.norm();
    if gnorm == 0.0 {
        let u = TtVector::zeros(&g.modes());
        return Ok(SolveReport {
            eranks: eranks(&u),
            u,
            residual: 0.0,
            iterations: 0,
            energy: None,
        });
    }
    let x = match x0 {
        Some(x) => x.clone(),
        None => g.round(opts.tol),
    };
    let mut solver = Amen::new(b, g, x, opts);
    let mut best: Option<(TtVector, f64, usize)> = None;
    for sweep in 1..=opts.max_sweeps {
        solver.sweep(gnorm)?;
        let u = solver.solution();
        let residual = relative_residual(b, g, &u)?;
        if best.as_ref().is_none_or(|(_, r, _)| residual < *r) {
            best = Some((u, residual, sweep));
        }
        if residual <= opts.tol {
            break;
        }
    }
    let (u, residual, _) = best.expect("at least one sweep");
    let report = SolveReport {
        eranks: eranks(&u),
        u,
        residual,
        iterations: solver.sweeps,
        energy: None,
    };
    if residual <= opts.tol {
        Ok(report)
    } else {
        Err(Error::Convergence {
            sweeps: solver.sweeps,
            residual,
            best: Box::new(report),
        })
    }
}

/// `[e, beta, b']` from `[c, alpha, a']` with cores for the test and trial
/// bases.
fn left_update(phi: &Tensor, test: &Tensor, b: &Tensor, trial: &Tensor) -> Tensor {
    let t1 = phi.contract(&[2], trial, &[0]); // c alpha j b'
    let t2 = t1.contract(&[1, 2], b, &[0, 2]); // c b' i beta
    test.contract(&[0, 1], &t2, &[0, 2]).permute(&[0, 2, 1]) // e beta b'
}

/// `[c, alpha, a']` from `[e, beta, b']`.
fn right_update(phi: &Tensor, test: &Tensor, b: &Tensor, trial: &Tensor) -> Tensor {
    let t1 = trial.contract(&[2], phi, &[2]); // a' j e beta
    let t2 = b.contract(&[2, 3], &t1, &[1, 3]); // alpha i a' e
    test.contract(&[1, 2], &t2, &[1, 3]) // c alpha a'
}

fn left_update_vec(psi: &Tensor, test: &Tensor, g: &Tensor) -> Tensor {
    let t1 = psi.contract(&[1], g, &[0]); // c i tau
    test.contract(&[0, 1], &t1, &[0, 1]) // e tau
}

fn right_update_vec(psi: &Tensor, test: &Tensor, g: &Tensor) -> Tensor {
    let t1 = g.contract(&[2], psi, &[1]); // sigma i e
    test.contract(&[1, 2], &t1, &[1, 2]) // c sigma
}

/// Projected matrix-vector product for one core, `[c, i, e]`.
fn local_apply(left: &Tensor, b: &Tensor, right: &Tensor, x: &Tensor) -> Tensor {
    let t1 = left.contract(&[2], x, &[0]); // c alpha j b'
    let t2 = t1.contract(&[1, 2], b, &[0, 2]); // c b' i beta
    t2.contract(&[1, 3], right, &[2, 1]) // c i e
}

/// Projected right-hand side for one core, `[c, i, e]`.
fn local_rhs(left: &Tensor, g: &Tensor, right: &Tensor) -> Tensor {
    left.contract(&[1], g, &[0]).contract(&[2], right, &[1])
}

/// Dense Galerkin matrix for one core, rows and columns ordered like the
/// core storage.
fn local_matrix(left: &Tensor, b: &Tensor, right: &Tensor) -> DMatrix<f64> {
    let t1 = left.contract(&[1], b, &[0]); // a a' i j beta
    let t2 = t1.contract(&[4], right, &[1]); // a a' i j b b'
    t2.permute(&[0, 2, 4, 1, 3, 5]).into_matrix(3)
}

fn sub(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor::new(a.dims.clone(), a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect())
}

fn solve_local(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(x) = lu_solve(m, rhs) {
        return Ok(x);
    }
    let (u, s, vt) = sorted_svd(m);
    let cutoff = s.get(0).copied().unwrap_or(0.0) * f64::EPSILON * m.nrows() as f64;
    let mut y = u.transpose() * rhs;
    for (k, v) in y.iter_mut().enumerate() {
        *v = if s[k] > cutoff { *v / s[k] } else { 0.0 };
    }
    let x = vt.transpose() * y;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular("local system of the alternating solver".into()))
    }
}

fn thin_q_r(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

fn reverse_cores(cores: &[Core]) -> Vec<Core> {
    cores
        .iter()
        .rev()
        .map(|c| Core::from_fn(c.right(), c.mode(), c.left(), |b, i, a| c.get(a, i, b)))
        .collect()
}

fn right_orthogonal(cores: Vec<Core>) -> Vec<Core> {
    let mut t = TtVector::new(cores).expect("consistent solver cores");
    t.right_orthogonalize_to(0);
    t.into_cores()
}

/// System cores in sweep order.
struct Chain {
    b: Vec<Tensor>,
    g: Vec<Tensor>,
}

impl Chain {
    fn reversed(&self) -> Self {
        Self {
            b: self.b.iter().rev().map(|t| t.permute(&[3, 1, 2, 0])).collect(),
            g: self.g.iter().rev().map(|t| t.permute(&[2, 1, 0])).collect(),
        }
    }
}

struct Amen<'a> {
    forward: Chain,
    backward: Chain,
    x: Vec<Core>,
    z: Vec<Core>,
    opts: &'a SolveOptions,
    sweeps: usize,
}

impl<'a> Amen<'a> {
    fn new(b: &TtMatrix, g: &TtVector, x: TtVector, opts: &'a SolveOptions) -> Self {
        let rows = b.row_modes();
        let cols = b.col_modes();
        let forward = Chain {
            b: b.cores()
                .iter()
                .enumerate()
                .map(|(k, c)| Tensor::from_matrix_core(c, rows[k], cols[k]))
                .collect(),
            g: g.cores().iter().map(Tensor::from_core).collect(),
        };
        let backward = forward.reversed();
        let modes = g.modes();
        let d = modes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut ranks = vec![1usize; d + 1];
        for k in 1..d {
            ranks[k] = opts
                .enrichment_rank
                .min(modes[..k].iter().fold(1usize, |acc, &n| acc.saturating_mul(n)))
                .min(modes[k..].iter().fold(1usize, |acc, &n| acc.saturating_mul(n)));
        }
        let z = (0..d)
            .map(|k| Core::from_fn(ranks[k], modes[k], ranks[k + 1], |_, _, _| rng.random_range(-1.0..1.0)))
            .collect();
        Self {
            forward,
            backward,
            x: x.into_cores(),
            z,
            opts,
            sweeps: 0,
        }
    }

    fn solution(&self) -> TtVector {
        TtVector::new(self.x.clone()).expect("consistent solver cores")
    }

    /// One forward pass followed by one backward pass.
    fn sweep(&mut self, gnorm: f64) -> Result<()> {
        let x = std::mem::take(&mut self.x);
        let z = std::mem::take(&mut self.z);
        let (x, z) = half_sweep(&self.forward, x, z, self.opts, gnorm)?;
        let (x, z) = half_sweep(&self.backward, reverse_cores(&x), reverse_cores(&z), self.opts, gnorm)?;
        self.x = reverse_cores(&x);
        self.z = reverse_cores(&z);
        self.sweeps += 1;
        Ok(())
    }
}

/// Solves core by core from the first to the last, enriching each new core
/// with a projection of the residual before moving on.
fn half_sweep(
    chain: &Chain,
    x: Vec<Core>,
    z: Vec<Core>,
    opts: &SolveOptions,
    gnorm: f64,
) -> Result<(Vec<Core>, Vec<Core>)> {
    let d = x.len();
    let mut x = right_orthogonal(x);
    let mut z = right_orthogonal(z);
    let xt: Vec<Tensor> = x.iter().map(Tensor::from_core).collect();
    let zt: Vec<Tensor> = z.iter().map(Tensor::from_core).collect();
    let (b, g) = (&chain.b, &chain.g);

    let unit3 = Tensor::ones(vec![1, 1, 1]);
    let unit2 = Tensor::ones(vec![1, 1]);
    let mut phi_r = vec![unit3.clone(); d];
    let mut psi_r = vec![unit2.clone(); d];
    let mut zphi_r = vec![unit3.clone(); d];
    let mut zpsi_r = vec![unit2.clone(); d];
    for k in (1..d).rev() {
        phi_r[k - 1] = right_update(&phi_r[k], &xt[k], &b[k], &xt[k]);
        psi_r[k - 1] = right_update_vec(&psi_r[k], &xt[k], &g[k]);
        zphi_r[k - 1] = right_update(&zphi_r[k], &zt[k], &b[k], &xt[k]);
        zpsi_r[k - 1] = right_update_vec(&zpsi_r[k], &zt[k], &g[k]);
    }
    let mut phi_l = unit3.clone();
    let mut psi_l = unit2.clone();
    let mut zphi_l = unit3;
    let mut zpsi_l = unit2;

    let local_target = 0.5 * opts.tol * gnorm / (d as f64).sqrt();
    for k in 0..d {
        let (r0, n, r1) = (x[k].left(), x[k].mode(), x[k].right());
        if r0 * n * r1 > LOCAL_SOLVE_GUARD {
            return Err(Error::Guard {
                size: r0 * n * r1,
                limit: LOCAL_SOLVE_GUARD,
            });
        }
        let m = local_matrix(&phi_l, &b[k], &phi_r[k]);
        let rhs = DVector::from_vec(local_rhs(&psi_l, &g[k], &psi_r[k]).data);
        let sol = solve_local(&m, &rhs)?;
        if k == d - 1 {
            x[k] = Core::from_data(r0, n, r1, sol.as_slice().to_vec())?;
            break;
        }

        // Truncate the new core to the smallest rank that keeps the
        // projected residual small.
        let full_res = (&m * &sol - &rhs).norm();
        let target = local_target.max(2.0 * full_res);
        let unfolding = DMatrix::from_column_slice(r0 * n, r1, sol.as_slice());
        let (u, s, vt) = sorted_svd(&unfolding);
        let cap = s.len().min(opts.max_rank);
        let delta = opts.tol * s.norm() / (d as f64).sqrt();
        let mut rank = truncation_rank(&s, delta, unfolding.shape()).min(cap);
        let weights = |rank: usize| {
            let mut w = vt.rows(0, rank).into_owned();
            for (i, mut row) in w.row_iter_mut().enumerate() {
                row *= s[i];
            }
            w
        };
        let mut w = weights(rank);
        while rank < cap {
            let y = u.columns(0, rank) * &w;
            let res = (&m * DVector::from_column_slice(y.as_slice()) - &rhs).norm();
            if res <= target {
                break;
            }
            rank += 1;
            w = weights(rank);
        }
        let u_r = u.columns(0, rank).into_owned();
        let truncated = Tensor::new(vec![r0, n, r1], (&u_r * &w).as_slice().to_vec());

        // Residual approximation in the z bases.
        let zres = sub(
            &local_rhs(&zpsi_l, &g[k], &zpsi_r[k]),
            &local_apply(&zphi_l, &b[k], &zphi_r[k], &truncated),
        );
        let (zl, zn) = (zres.dims[0], zres.dims[1]);
        let (zq, zrr) = thin_q_r(&zres.into_matrix(2));
        z[k] = Core::from_left_unfolding(&zq, zl, zn);
        let znext = &z[k + 1];
        let (znn, znr) = (znext.mode(), znext.right());
        z[k + 1] = Core::from_right_unfolding(&(zrr * znext.right_unfolding()), znn, znr);

        // Enrich the solution basis with the residual seen from the left
        // solution basis and the right residual basis.
        let right_size = g[k + 1..].iter().fold(1usize, |acc, t| acc.saturating_mul(t.dims[1]));
        let extra = zphi_r[k].dims[0].min(right_size.saturating_sub(rank));
        let mut aug = DMatrix::zeros(r0 * n, rank + extra);
        aug.columns_mut(0, rank).copy_from(&u_r);
        if extra > 0 {
            let xres = sub(
                &local_rhs(&psi_l, &g[k], &zpsi_r[k]),
                &local_apply(&phi_l, &b[k], &zphi_r[k], &truncated),
            )
            .into_matrix(2);
            aug.columns_mut(rank, extra).copy_from(&xres.columns(0, extra));
        }
        let (q, rr) = thin_q_r(&aug);
        x[k] = Core::from_left_unfolding(&q, r0, n);
        let next = &x[k + 1];
        let (nn, nr) = (next.mode(), next.right());
        let carried = rr.columns(0, rank) * w * next.right_unfolding();
        x[k + 1] = Core::from_right_unfolding(&carried, nn, nr);

        let xk = Tensor::from_core(&x[k]);
        let zk = Tensor::from_core(&z[k]);
        phi_l = left_update(&phi_l, &xk, &b[k], &xk);
        psi_l = left_update_vec(&psi_l, &xk, &g[k]);
        zphi_l = left_update(&zphi_l, &zk, &b[k], &xk);
        zpsi_l = left_update_vec(&zpsi_l, &zk, &g[k]);
    }
    Ok((x, z))
}
