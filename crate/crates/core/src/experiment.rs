//! Domain configuration files, experiment plans and the `(d, eps)` sweep.
//!
//! Both file types are TOML. A domain configuration lists the quadrangles,
//! their interfaces and the Dirichlet sides of each quadrangle:
//!
//! ```toml
//! quads = [
//!     [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
//!     [[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]],
//! ]
//!
//! [[interfaces]]
//! m = 0
//! p = 1
//! kind = "side"
//! side_m = "right"
//! side_p = "left"
//! reversed = true
//!
//! [dirichlet]
//! 0 = ["bottom", "top", "left"]
//! 1 = ["bottom", "right", "top"]
//! ```
//!
//! Vertex interfaces use `kind = "vertex"` with `corner_m` and `corner_p`
//! taken from `LB`, `RB`, `LT` and `RT`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::Source;
use crate::coupling::{build_global_system, split_blocks, DomainConfig, InterfaceSpec, Side};
use crate::error::{Error, Result};
use crate::geometry::{Point, Quadrangle};
use crate::solve::{dense_solve, energy, richardson, tt_solve, SolveOptions, SolveReport, DENSE_SOLVE_GUARD};

/// Largest global system checked against the dense solver in
/// [`OracleMode::Auto`], in rows.
pub const ORACLE_AUTO_LIMIT: usize = 4096;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    quads: Vec<[Point; 4]>,
    #[serde(default)]
    interfaces: Vec<InterfaceSpec>,
    #[serde(default)]
    dirichlet: BTreeMap<String, Vec<Side>>,
}

/// Parses and validates a domain configuration.
pub fn parse_domain(text: &str) -> Result<DomainConfig> {
    let file: DomainFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let q = file.quads.len();
    let quads = file
        .quads
        .into_iter()
        .enumerate()
        .map(|(m, v)| Quadrangle::new(v).map_err(|e| Error::Config(format!("quadrangle {m}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut dirichlet = vec![BTreeSet::new(); q];
    for (key, sides) in file.dirichlet {
        let m: usize = key
            .parse()
            .map_err(|_| Error::Config(format!("Dirichlet key {key:?} is not a quadrangle index")))?;
        let slot = dirichlet
            .get_mut(m)
            .ok_or_else(|| Error::Config(format!("Dirichlet sides given for missing quadrangle {m}")))?;
        slot.extend(sides);
    }
    DomainConfig::new(quads, file.interfaces, dirichlet)
}

pub fn load_domain(path: &Path) -> Result<DomainConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_domain(&text)
}

/// Right-hand side of a plan.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RhsSpec {
    Constant { value: f64 },
    /// Terms `[a, b, c]` meaning `c x^a y^b`.
    Polynomial { terms: Vec<(u32, u32, f64)> },
}

impl Default for RhsSpec {
    fn default() -> Self {
        RhsSpec::Constant { value: 1.0 }
    }
}

impl RhsSpec {
    pub fn source(&self) -> Source {
        match self {
            RhsSpec::Constant { value } => Source::Constant(*value),
            RhsSpec::Polynomial { terms } => Source::Polynomial(terms.clone()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Target relative residual; each cell uses its `eps` when absent.
    pub tol: Option<f64>,
    pub max_sweeps: Option<usize>,
}

/// A sweep over grid depths and rounding tolerances on one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub config_path: PathBuf,
    pub d_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub rhs: RhsSpec,
    pub solver: SolverSpec,
    pub output: PathBuf,
    /// Directory for plot data files, if any.
    pub plot_dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    config: PathBuf,
    #[serde(default)]
    d_values: Vec<usize>,
    #[serde(default)]
    eps_values: Vec<f64>,
    #[serde(default)]
    rhs: RhsSpec,
    #[serde(default)]
    solver: SolverSpec,
    #[serde(default = "default_output")]
    output: PathBuf,
    plot_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("results.csv")
}

impl ExperimentPlan {
    /// Parses a plan; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let file: PlanFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let plan = Self {
            config_path: resolve(file.config),
            d_values: file.d_values,
            eps_values: file.eps_values,
            rhs: file.rhs,
            solver: file.solver,
            output: resolve(file.output),
            plot_dir: file.plot_dir.map(resolve),
            seed: file.seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("d_values must be strictly increasing".into()));
        }
        if self.d_values.first() == Some(&0) {
            return Err(Error::Config("d_values must be at least 1".into()));
        }
        if self.eps_values.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Config("eps_values must be positive".into()));
        }
        if let Some(tol) = self.solver.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config("solver tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// When to compare the TT solution with a dense direct solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OracleMode {
    /// Only for systems with at most [`ORACLE_AUTO_LIMIT`] rows.
    #[default]
    Auto,
    /// For every system under the dense solver guard.
    Force,
    Off,
}

impl std::str::FromStr for OracleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "force" => Ok(Self::Force),
            "off" => Ok(Self::Off),
            other => Err(Error::Input(format!("unknown oracle mode {other:?}"))),
        }
    }
}

/// One `(d, eps)` cell of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub d: usize,
    pub eps: f64,
    pub energy: Option<f64>,
    pub energy_err: Option<f64>,
    pub erank_b: Option<f64>,
    pub erank_g: Option<f64>,
    pub erank_u: Option<f64>,
    pub residual: Option<f64>,
    pub sweeps: Option<usize>,
    pub oracle_dev: Option<f64>,
    pub wall_ms: u128,
    /// Total number of grid nodes, counting interface copies.
    pub vertices: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Result of solving one domain at one grid depth.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub report: SolveReport,
    pub energy: f64,
    pub oracle_dev: Option<f64>,
}

/// Assembles, solves and evaluates one cell.
pub fn run_cell(
    domain: &DomainConfig,
    d: usize,
    eps: f64,
    source: &Source,
    opts: &SolveOptions,
    oracle: OracleMode,
) -> Result<CellOutcome> {
    let system = build_global_system(domain, d, source, eps)?;
    let mut report = tt_solve(&system.b, &system.g, opts)?;
    let q = domain.count();
    let blocks = split_blocks(&report.u, q)?;
    let raw: Vec<_> = system.systems.iter().map(|s| s.a.clone()).collect();
    let e = energy(&blocks, &raw)?;
    report.energy = Some(e);
    let rows = system.b.nrows();
    let limit = match oracle {
        OracleMode::Auto => ORACLE_AUTO_LIMIT,
        OracleMode::Force => DENSE_SOLVE_GUARD,
        OracleMode::Off => 0,
    };
    let oracle_dev = if rows <= limit {
        let ud = dense_solve(&system.b.to_dense()?, &system.g.to_dense()?)?;
        let ut: DVector<f64> = report.u.to_dense()?;
        Some((ut - &ud).norm() / ud.norm().max(f64::MIN_POSITIVE))
    } else {
        None
    };
    Ok(CellOutcome {
        report,
        energy: e,
        oracle_dev,
    })
}

/// Runs every `(d, eps)` cell of the plan in order. Cell failures become
/// rows with an error message. After the sweep the energies of each `eps`
/// are extrapolated and the per-row energy errors filled in.
pub fn run_plan(plan: &ExperimentPlan, domain: &DomainConfig, oracle: OracleMode) -> ExperimentReport {
    let source = plan.rhs.source();
    let q = domain.count();
    let mut rows = Vec::new();
    for &eps in &plan.eps_values {
        for &d in &plan.d_values {
            let opts = SolveOptions {
                tol: plan.solver.tol.unwrap_or(eps),
                max_sweeps: plan.solver.max_sweeps.unwrap_or(SolveOptions::default().max_sweeps),
                seed: plan.seed,
                ..SolveOptions::default()
            };
            let start = Instant::now();
            let outcome = run_cell(domain, d, eps, &source, &opts, oracle);
            let wall_ms = start.elapsed().as_millis();
            let vertices = q << (2 * d);
            let row = match outcome {
                Ok(c) => ReportRow {
                    d,
                    eps,
                    energy: Some(c.energy),
                    energy_err: None,
                    erank_b: Some(c.report.eranks.b),
                    erank_g: Some(c.report.eranks.g),
                    erank_u: Some(c.report.eranks.u),
                    residual: Some(c.report.residual),
                    sweeps: Some(c.report.iterations),
                    oracle_dev: c.oracle_dev,
                    wall_ms,
                    vertices,
                    error: None,
                },
                Err(e) => ReportRow {
                    d,
                    eps,
                    energy: None,
                    energy_err: None,
                    erank_b: None,
                    erank_g: None,
                    erank_u: None,
                    residual: None,
                    sweeps: None,
                    oracle_dev: None,
                    wall_ms,
                    vertices,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    fill_energy_errors(&mut rows);
    ExperimentReport { rows }
}

/// Extrapolates each `eps` group from its finest run of consecutive levels.
fn fill_energy_errors(rows: &mut [ReportRow]) {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, row) in rows.iter().enumerate() {
        if row.energy.is_some() {
            groups.entry(row.eps.to_bits()).or_default().push(k);
        }
    }
    for idx in groups.values() {
        let mut run = vec![*idx.last().expect("non-empty group")];
        for &k in idx.iter().rev().skip(1) {
            if rows[k].d + 1 == rows[*run.last().expect("non-empty run")].d {
                run.push(k);
            } else {
                break;
            }
        }
        run.reverse();
        let energies: Vec<f64> = run.iter().map(|&k| rows[k].energy.expect("filtered")).collect();
        let Ok(r) = richardson(&energies) else { continue };
        for &k in idx {
            rows[k].energy_err = rows[k].energy.map(|e| (e - r.e_star).abs());
        }
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "d",
    "eps",
    "energy",
    "energy_err",
    "erank_B",
    "erank_g",
    "erank_u",
    "residual",
    "sweeps",
    "oracle_dev",
    "wall_ms",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Writes the report as CSV. Failed cells keep their `d` and `eps` and leave
/// the measured columns empty.
pub fn write_csv<W: std::io::Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.d.to_string(),
            format!("{:e}", r.eps),
            sci(r.energy),
            sci(r.energy_err),
            sci(r.erank_b),
            sci(r.erank_g),
            sci(r.erank_u),
            sci(r.residual),
            opt(r.sweeps),
            sci(r.oracle_dev),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:.17e}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the three plot data sets: energy error against vertex count,
/// effective ranks against vertex count (one file per `eps`) and effective
/// ranks against `eps` (one file per `d`).
pub fn write_plot_data(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let ok: Vec<&ReportRow> = report.rows.iter().filter(|r| r.error.is_none()).collect();
    let mut written = Vec::new();
    let eps_values: BTreeSet<u64> = ok.iter().map(|r| r.eps.to_bits()).collect();
    for bits in eps_values {
        let eps = f64::from_bits(bits);
        let group: Vec<&&ReportRow> = ok.iter().filter(|r| r.eps.to_bits() == bits).collect();
        let err_rows: Vec<Vec<f64>> = group
            .iter()
            .filter_map(|r| r.energy_err.map(|e| vec![r.vertices as f64, e]))
            .collect();
        let path = dir.join(format!("energy_error_vs_vertices_eps{eps:e}.csv"));
        write_table(&path, &["x", "y"], &err_rows)?;
        written.push(path);
        let rank_rows: Vec<Vec<f64>> = group
            .iter()
            .map(|r| {
                vec![
                    r.vertices as f64,
                    r.erank_b.unwrap_or(f64::NAN),
                    r.erank_g.unwrap_or(f64::NAN),
                    r.erank_u.unwrap_or(f64::NAN),
                ]
            })
            .collect();
        let path = dir.join(format!("erank_vs_vertices_eps{eps:e}.csv"));
        write_table(&path, &["x", "erank_B", "erank_g", "erank_u"], &rank_rows)?;
        written.push(path);
    }
    let d_values: BTreeSet<usize> = ok.iter().map(|r| r.d).collect();
    for d in d_values {
        let rank_rows: Vec<Vec<f64>> = ok
            .iter()
            .filter(|r| r.d == d)
            .map(|r| {
                vec![
                    r.eps,
                    r.erank_b.unwrap_or(f64::NAN),
                    r.erank_g.unwrap_or(f64::NAN),
                    r.erank_u.unwrap_or(f64::NAN),
                ]
            })
            .collect();
        let path = dir.join(format!("erank_vs_eps_d{d}.csv"));
        write_table(&path, &["x", "erank_B", "erank_g", "erank_u"], &rank_rows)?;
        written.push(path);
    }
    Ok(written)
}
