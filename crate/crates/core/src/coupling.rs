//! Interface coupling between subdomains, Dirichlet masks and assembly of the
//! global block system.
//!
//! Each subdomain keeps its own copy of interface nodes. A connectivity matrix
//! `Pi_mp` pairs nodes of subdomain `m` with the nodes of `p` they coincide
//! with. It is built from rank-1 selection matrices `Psi` that pick the
//! `2^d` nodes of one side of the standard square in z-order.
//!
//! The coupled system `B u = g` consists of the blocks
//!
//! ```text
//! B_mm = A^(m) + sum_p gamma_mp Pi_mp Pi_pm
//! B_mp = Pi_mp A^(p) - gamma_mp Pi_mp
//! g^(m) = f^(m) + sum_p Pi_mp f^(p)
//! ```
//!
//! For a node joined across an interface, the difference of its two rows
//! enforces equal values and their sum reproduces the assembled FEM row.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{Source, SubdomainSystem};
use crate::error::{Error, Result};
use crate::geometry::{Point, Quadrangle};
use crate::tt::{Core, TtMatrix, TtVector};
use crate::zorder::z_kron_vec;

/// A side of the standard square. Sides are traversed counterclockwise:
/// bottom from LB to RB, right from RB to RT, top from RT to LT and left from
/// LT to LB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    /// Start and end corners in traversal order.
    pub fn endpoints(self) -> (CornerName, CornerName) {
        match self {
            Side::Bottom => (CornerName::LB, CornerName::RB),
            Side::Right => (CornerName::RB, CornerName::RT),
            Side::Top => (CornerName::RT, CornerName::LT),
            Side::Left => (CornerName::LT, CornerName::LB),
        }
    }

    /// Row `s` of the core selects the z-digit of the `s`-th node bit.
    fn core(self) -> DMatrix<f64> {
        let rows: [[f64; 4]; 2] = match self {
            Side::Bottom => [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]],
            Side::Right => [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
            Side::Top => [[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]],
            Side::Left => [[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
        };
        DMatrix::from_fn(2, 4, |s, z| rows[s][z])
    }
}

/// A corner of a subdomain: left/right and bottom/top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CornerName {
    LB,
    RB,
    LT,
    RT,
}

impl CornerName {
    pub const ALL: [CornerName; 4] = [CornerName::LB, CornerName::RB, CornerName::LT, CornerName::RT];

    /// Position in the counterclockwise vertex list of a quadrangle.
    pub fn vertex(self) -> usize {
        match self {
            CornerName::LB => 0,
            CornerName::RB => 1,
            CornerName::RT => 2,
            CornerName::LT => 3,
        }
    }

    /// The z-digit repeated in every core for this corner's node.
    fn digit(self) -> usize {
        match self {
            CornerName::LB => 0,
            CornerName::RB => 1,
            CornerName::LT => 2,
            CornerName::RT => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterfaceKind {
    /// The whole side `side_m` of `m` coincides with `side_p` of `p`.
    /// `reversed` is true when the two sides are traversed in opposite
    /// directions, which is the case for two counterclockwise quadrangles.
    Side { side_m: Side, side_p: Side, reversed: bool },
    /// A single shared vertex.
    Vertex { corner_m: CornerName, corner_p: CornerName },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub m: usize,
    pub p: usize,
    #[serde(flatten)]
    pub kind: InterfaceKind,
}

impl InterfaceSpec {
    /// The same interface seen from `p`.
    pub fn mirrored(&self) -> Self {
        let kind = match self.kind {
            InterfaceKind::Side { side_m, side_p, reversed } => InterfaceKind::Side {
                side_m: side_p,
                side_p: side_m,
                reversed,
            },
            InterfaceKind::Vertex { corner_m, corner_p } => InterfaceKind::Vertex {
                corner_m: corner_p,
                corner_p: corner_m,
            },
        };
        Self {
            m: self.p,
            p: self.m,
            kind,
        }
    }

    /// Oriented so that `m == node_owner`, if the interface touches it.
    fn seen_from(&self, owner: usize) -> Option<Self> {
        if self.m == owner {
            Some(*self)
        } else if self.p == owner {
            Some(self.mirrored())
        } else {
            None
        }
    }
}

/// Quadrangles, their interfaces and the sides lying on the Dirichlet
/// boundary.
#[derive(Clone, Debug)]
pub struct DomainConfig {
    pub quads: Vec<Quadrangle>,
    pub interfaces: Vec<InterfaceSpec>,
    pub dirichlet: Vec<BTreeSet<Side>>,
}

fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl DomainConfig {
    /// Validates indices, interface geometry and boundary coverage.
    pub fn new(quads: Vec<Quadrangle>, interfaces: Vec<InterfaceSpec>, dirichlet: Vec<BTreeSet<Side>>) -> Result<Self> {
        let cfg = Self {
            quads,
            interfaces,
            dirichlet,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn count(&self) -> usize {
        self.quads.len()
    }

    fn corner_point(&self, m: usize, c: CornerName) -> Point {
        self.quads[m].vertices()[c.vertex()]
    }

    fn validate(&self) -> Result<()> {
        let q = self.quads.len();
        if q == 0 {
            return Err(Error::Config("at least one quadrangle is required".into()));
        }
        if self.dirichlet.len() != q {
            return Err(Error::Config(format!(
                "{} Dirichlet side sets for {q} quadrangles",
                self.dirichlet.len()
            )));
        }
        let scale = self
            .quads
            .iter()
            .flat_map(|quad| quad.vertices().iter())
            .map(|v| v[0].abs().max(v[1].abs()))
            .fold(1.0, f64::max);
        let tol = 1e-9 * scale;
        let mut side_use = vec![[0usize; 4]; q];
        for (n, spec) in self.interfaces.iter().enumerate() {
            if spec.m >= q || spec.p >= q {
                return Err(Error::Config(format!("interface {n} refers to a missing quadrangle")));
            }
            if spec.m == spec.p {
                return Err(Error::Config(format!("interface {n} joins quadrangle {} to itself", spec.m)));
            }
            match spec.kind {
                InterfaceKind::Side { side_m, side_p, reversed } => {
                    let (a0, a1) = side_m.endpoints();
                    let (b0, b1) = side_p.endpoints();
                    let (b0, b1) = if reversed { (b1, b0) } else { (b0, b1) };
                    let d0 = distance(self.corner_point(spec.m, a0), self.corner_point(spec.p, b0));
                    let d1 = distance(self.corner_point(spec.m, a1), self.corner_point(spec.p, b1));
                    if d0 > tol || d1 > tol {
                        return Err(Error::Config(format!(
                            "interface {n}: side {side_m:?} of quadrangle {} does not match side {side_p:?} \
                             of quadrangle {} with reversed = {reversed}",
                            spec.m, spec.p
                        )));
                    }
                    side_use[spec.m][side_m as usize] += 1;
                    side_use[spec.p][side_p as usize] += 1;
                }
                InterfaceKind::Vertex { corner_m, corner_p } => {
                    if distance(self.corner_point(spec.m, corner_m), self.corner_point(spec.p, corner_p)) > tol {
                        return Err(Error::Config(format!(
                            "interface {n}: corner {corner_m:?} of quadrangle {} and corner {corner_p:?} \
                             of quadrangle {} do not coincide",
                            spec.m, spec.p
                        )));
                    }
                }
            }
        }
        for m in 0..q {
            for side in Side::ALL {
                let uses = side_use[m][side as usize] + usize::from(self.dirichlet[m].contains(&side));
                if uses != 1 {
                    return Err(Error::Config(format!(
                        "side {side:?} of quadrangle {m} must be in exactly one interface or on the \
                         Dirichlet boundary, found {uses}"
                    )));
                }
            }
        }
        // Every pair of coinciding corners must be joined by some interface.
        for m in 0..q {
            for p in m + 1..q {
                for cm in CornerName::ALL {
                    for cp in CornerName::ALL {
                        if distance(self.corner_point(m, cm), self.corner_point(p, cp)) > tol {
                            continue;
                        }
                        let covered = self.interfaces.iter().filter_map(|s| s.seen_from(m)).any(|s| {
                            s.p == p
                                && match s.kind {
                                    InterfaceKind::Side { side_m, side_p, .. } => {
                                        let (a0, a1) = side_m.endpoints();
                                        let (b0, b1) = side_p.endpoints();
                                        (cm == a0 || cm == a1) && (cp == b0 || cp == b1)
                                    }
                                    InterfaceKind::Vertex { corner_m, corner_p } => corner_m == cm && corner_p == cp,
                                }
                        });
                        if !covered {
                            return Err(Error::Config(format!(
                                "corner {cm:?} of quadrangle {m} coincides with corner {cp:?} of quadrangle {p} \
                                 but no interface joins them"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// `Psi`: the `2^d x 4^d` selection of a side's nodes in traversal order.
pub fn psi_side(side: Side, d: usize) -> TtMatrix {
    TtMatrix::rank_one(&vec![side.core(); d]).expect("2x4 cores")
}

/// `S Psi`: reverses the order of the selected nodes.
pub fn swap_rows(psi: &TtMatrix) -> TtMatrix {
    let (rows, cols) = (psi.row_modes().to_vec(), psi.col_modes().to_vec());
    let cores: Vec<Core> = psi
        .cores()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let n = rows[k];
            Core::from_fn(c.left(), c.mode(), c.right(), |a, mu, b| {
                let (i, j) = (mu % n, mu / n);
                c.get(a, (n - 1 - i) + n * j, b)
            })
        })
        .collect();
    TtMatrix::from_tt(TtVector::new(cores).expect("same ranks"), rows, cols).expect("same modes")
}

/// `1 x 4^d` selection of a single corner node.
pub fn psi_vertex(corner: CornerName, d: usize) -> TtMatrix {
    let core = DMatrix::from_fn(1, 4, |_, z| if z == corner.digit() { 1.0 } else { 0.0 });
    TtMatrix::rank_one(&vec![core; d]).expect("1x4 cores")
}

/// `Pi_mp` for one interface: `Psi_m^T (S) Psi_p` or `psi_m^T psi_p`.
pub fn pi_offdiag(spec: &InterfaceSpec, d: usize) -> TtMatrix {
    match spec.kind {
        InterfaceKind::Side { side_m, side_p, reversed } => {
            let pm = psi_side(side_m, d);
            let pp = psi_side(side_p, d);
            let pp = if reversed { swap_rows(&pp) } else { pp };
            pm.transpose().matmul(&pp).expect("matching side lengths")
        }
        InterfaceKind::Vertex { corner_m, corner_p } => psi_vertex(corner_m, d)
            .transpose()
            .matmul(&psi_vertex(corner_p, d))
            .expect("matching unit rows"),
    }
}

/// `Pi_mm = -sum_p Pi_mp Pi_pm` over all interfaces touching `m`.
pub fn pi_diag(m: usize, interfaces: &[InterfaceSpec], d: usize) -> TtMatrix {
    let mut acc = TtMatrix::zeros(&vec![4; d], &vec![4; d]);
    for spec in interfaces.iter().filter_map(|s| s.seen_from(m)) {
        let pi = pi_offdiag(&spec, d);
        let term = pi.matmul(&pi.transpose()).expect("square");
        acc = acc.sub(&term).expect("same shape").round(0.0);
    }
    acc
}

/// Mean of the diagonal of `A`.
pub fn gamma_estimate(a: &TtMatrix) -> Result<f64> {
    Ok(a.trace()? / a.nrows() as f64)
}

/// Coupled blocks `B_mp` (`None` for unconnected pairs) and right-hand sides.
#[derive(Clone, Debug)]
pub struct CoupledBlocks {
    pub blocks: Vec<Vec<Option<TtMatrix>>>,
    pub rhs: Vec<TtVector>,
    pub gammas: Vec<f64>,
}

/// Sum of `Pi_mp` over every interface between `m` and `p`.
fn pi_between(config: &DomainConfig, m: usize, p: usize, d: usize) -> Option<TtMatrix> {
    let mut acc: Option<TtMatrix> = None;
    for spec in config.interfaces.iter().filter_map(|s| s.seen_from(m)).filter(|s| s.p == p) {
        let pi = pi_offdiag(&spec, d);
        acc = Some(match acc {
            None => pi,
            Some(a) => a.add(&pi).expect("same shape").round(0.0),
        });
    }
    acc
}

/// Interface-blended blocks. Each interface uses the mean of the two
/// subdomains' `gamma_estimate` values, in both the diagonal and the
/// off-diagonal block, so that the difference of paired rows is a pure
/// continuity condition.
pub fn build_blocks(config: &DomainConfig, systems: &[SubdomainSystem], d: usize, tol: f64) -> Result<CoupledBlocks> {
    let q = config.count();
    if systems.len() != q {
        return Err(Error::Shape(format!("{} subdomain systems for {q} quadrangles", systems.len())));
    }
    if let Some(s) = systems.iter().find(|s| s.d != d) {
        return Err(Error::Shape(format!("subdomain system of depth {} in a depth-{d} assembly", s.d)));
    }
    let gammas = systems.iter().map(|s| gamma_estimate(&s.a)).collect::<Result<Vec<_>>>()?;
    let mut blocks: Vec<Vec<Option<TtMatrix>>> = vec![vec![None; q]; q];
    let mut rhs = Vec::with_capacity(q);
    for m in 0..q {
        let mut diag = systems[m].a.clone();
        let mut g = systems[m].f.clone();
        for p in (0..q).filter(|&p| p != m) {
            let Some(pi) = pi_between(config, m, p, d) else { continue };
            let gamma = 0.5 * (gammas[m] + gammas[p]);
            let proj = pi.matmul(&pi.transpose())?;
            diag = diag.add(&proj.scale(gamma))?.round(tol);
            let off = pi.matmul(&systems[p].a)?.sub(&pi.scale(gamma))?.round(tol);
            blocks[m][p] = Some(off);
            g = g.add(&pi.matvec(&systems[p].f)?)?.round(tol);
        }
        blocks[m][m] = Some(diag);
        rhs.push(g);
    }
    Ok(CoupledBlocks { blocks, rhs, gammas })
}

fn axis_mask(d: usize, first: bool, last: bool) -> TtVector {
    let modes = vec![2; d];
    let n = 1usize << d;
    let mut x = TtVector::ones(&modes);
    let unit = |at: usize| TtVector::unit(&modes, &(0..d).map(|k| (at >> k) & 1).collect::<Vec<_>>()).expect("in range");
    if first {
        x = x.sub(&unit(0)).expect("same modes");
    }
    if last {
        x = x.sub(&unit(n - 1)).expect("same modes");
    }
    x.round(0.0)
}

/// Node mask with zeros exactly on the listed sides.
pub fn boundary_mask(sides: &BTreeSet<Side>, d: usize) -> TtVector {
    let x = axis_mask(d, sides.contains(&Side::Left), sides.contains(&Side::Right));
    let y = axis_mask(d, sides.contains(&Side::Bottom), sides.contains(&Side::Top));
    z_kron_vec(&x, &y).expect("binary modes")
}

/// `diag(mask) A + I - diag(mask)` and `mask o f`.
pub fn apply_dirichlet(a: &TtMatrix, f: &TtVector, mask: &TtVector, tol: f64) -> Result<(TtMatrix, TtVector)> {
    if a.row_modes() != a.col_modes() || a.row_modes() != mask.modes().as_slice() || f.modes() != mask.modes() {
        return Err(Error::Shape("mask, matrix and vector modes differ".into()));
    }
    let dm = TtMatrix::diag(mask);
    let id = TtMatrix::identity(&mask.modes());
    let a2 = dm.matmul(a)?.add(&id)?.sub(&dm)?.round(tol);
    let f2 = mask.hadamard(f)?.round(tol);
    Ok((a2, f2))
}

/// `diag(mask) B` for an off-diagonal block.
pub fn mask_rows(b: &TtMatrix, mask: &TtVector, tol: f64) -> Result<TtMatrix> {
    Ok(TtMatrix::diag(mask).matmul(b)?.round(tol))
}

/// Applies the Dirichlet masks of every subdomain to the coupled blocks.
pub fn apply_masks(config: &DomainConfig, coupled: &mut CoupledBlocks, d: usize, tol: f64) -> Result<()> {
    let q = config.count();
    for m in 0..q {
        let mask = boundary_mask(&config.dirichlet[m], d);
        for p in 0..q {
            let Some(b) = coupled.blocks[m][p].take() else { continue };
            coupled.blocks[m][p] = Some(if p == m {
                let (a2, f2) = apply_dirichlet(&b, &coupled.rhs[m], &mask, tol)?;
                coupled.rhs[m] = f2;
                a2
            } else {
                mask_rows(&b, &mask, tol)?
            });
        }
    }
    Ok(())
}

/// `B = sum E_mp (x) B_mp` and `g = sum e_m (x) g^(m)`, with the subdomain
/// index as the most significant (last) core. For a single subdomain the
/// block itself is returned.
pub fn global_assemble(blocks: &[Vec<Option<TtMatrix>>], rhs: &[TtVector], tol: f64) -> Result<(TtMatrix, TtVector)> {
    let q = rhs.len();
    if q == 0 || blocks.len() != q || blocks.iter().any(|row| row.len() != q) {
        return Err(Error::Shape(format!("block layout does not match {q} right-hand sides")));
    }
    if q == 1 {
        let b = blocks[0][0].clone().ok_or_else(|| Error::Shape("missing diagonal block".into()))?;
        return Ok((b, rhs[0].clone()));
    }
    let mut b_acc: Option<TtMatrix> = None;
    for (m, row) in blocks.iter().enumerate() {
        for (p, block) in row.iter().enumerate() {
            let Some(block) = block else { continue };
            let e = TtMatrix::rank_one(&[DMatrix::from_fn(q, q, |i, j| if (i, j) == (m, p) { 1.0 } else { 0.0 })])?;
            let term = e.kron(block);
            b_acc = Some(match b_acc {
                None => term,
                Some(a) => a.add(&term)?.round(tol),
            });
        }
    }
    let mut g_acc: Option<TtVector> = None;
    for (m, g) in rhs.iter().enumerate() {
        let e = TtVector::unit(&[q], &[m])?;
        let term = e.kron(g);
        g_acc = Some(match g_acc {
            None => term,
            Some(a) => a.add(&term)?.round(tol),
        });
    }
    Ok((
        b_acc.ok_or_else(|| Error::Shape("no blocks".into()))?,
        g_acc.expect("q >= 1"),
    ))
}

/// Splits a global vector into per-subdomain vectors (inverse of the
/// right-hand side assembly).
pub fn split_blocks(u: &TtVector, q: usize) -> Result<Vec<TtVector>> {
    if q == 1 {
        return Ok(vec![u.clone()]);
    }
    let d = u.order();
    if d < 2 || u.modes()[d - 1] != q {
        return Err(Error::Shape(format!("vector modes {:?} have no trailing subdomain mode {q}", u.modes())));
    }
    let cores = u.cores();
    let last = &cores[d - 1];
    let prev = &cores[d - 2];
    (0..q)
        .map(|m| {
            let merged = Core::from_fn(prev.left(), prev.mode(), 1, |a, i, _| {
                (0..prev.right()).map(|b| prev.get(a, i, b) * last.get(b, m, 0)).sum()
            });
            let mut new_cores = cores[..d - 2].to_vec();
            new_cores.push(merged);
            TtVector::new(new_cores)
        })
        .collect()
}

/// Everything produced by assembling one domain at one grid depth.
#[derive(Clone, Debug)]
pub struct GlobalSystem {
    pub b: TtMatrix,
    pub g: TtVector,
    pub systems: Vec<SubdomainSystem>,
    pub gammas: Vec<f64>,
    pub d: usize,
}

/// Builds subdomain systems, couples them, applies the Dirichlet masks and
/// assembles the global matrix and right-hand side.
pub fn build_global_system(config: &DomainConfig, d: usize, source: &Source, tol: f64) -> Result<GlobalSystem> {
    let systems = config
        .quads
        .iter()
        .map(|q| SubdomainSystem::build(q, d, source, tol))
        .collect::<Result<Vec<_>>>()?;
    let mut coupled = build_blocks(config, &systems, d, tol)?;
    apply_masks(config, &mut coupled, d, tol)?;
    let (b, g) = global_assemble(&coupled.blocks, &coupled.rhs, tol)?;
    Ok(GlobalSystem {
        b,
        g,
        systems,
        gammas: coupled.gammas,
        d,
    })
}
