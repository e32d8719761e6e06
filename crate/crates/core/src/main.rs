use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qtt_poisson::experiment::{load_domain, run_plan, write_csv, write_plot_data, ExperimentPlan, OracleMode};
use qtt_poisson::Error;

#[derive(Parser)]
#[command(version, about = "QTT finite element solver for the Poisson equation on quadrangle decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (d, eps) sweep of an experiment plan and write a CSV report.
    Run {
        /// Plan file (TOML).
        plan: PathBuf,
        /// Override the grid depths, e.g. `--d 3,4,5`.
        #[arg(long = "d", value_delimiter = ',')]
        d_values: Option<Vec<usize>>,
        /// Override the rounding tolerances, e.g. `--eps 1e-6,1e-8`.
        #[arg(long = "eps", value_delimiter = ',')]
        eps_values: Option<Vec<f64>>,
        /// Dense solver comparison: auto, force or off.
        #[arg(long, default_value = "auto")]
        oracle: OracleMode,
        /// Output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the solver's random initialization.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(
    plan_path: PathBuf,
    d_values: Option<Vec<usize>>,
    eps_values: Option<Vec<f64>>,
    oracle: OracleMode,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<usize, Error> {
    let mut plan = ExperimentPlan::load(&plan_path)?;
    if let Some(d) = d_values {
        plan.d_values = d;
    }
    if let Some(e) = eps_values {
        plan.eps_values = e;
    }
    if let Some(o) = out {
        plan.output = o;
    }
    if let Some(s) = seed {
        plan.seed = s;
    }
    plan.validate()?;
    let domain = load_domain(&plan.config_path)?;
    let report = run_plan(&plan, &domain, oracle);
    if let Some(parent) = plan.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_csv(&report, std::fs::File::create(&plan.output)?)?;
    if let Some(dir) = &plan.plot_dir {
        write_plot_data(&report, dir)?;
    }
    for row in &report.rows {
        match &row.error {
            Some(e) => eprintln!("d={} eps={:e}: failed: {e}", row.d, row.eps),
            None => eprintln!(
                "d={} eps={:e}: energy={:.12} residual={:.2e} sweeps={} ({} ms)",
                row.d,
                row.eps,
                row.energy.unwrap_or(f64::NAN),
                row.residual.unwrap_or(f64::NAN),
                row.sweeps.unwrap_or(0),
                row.wall_ms
            ),
        }
    }
    println!("{}", plan.output.display());
    Ok(report.failures())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            plan,
            d_values,
            eps_values,
            oracle,
            out,
            seed,
        } => match run(plan, d_values, eps_values, oracle, out, seed) {
            Ok(0) => ExitCode::SUCCESS,
            Ok(_) => ExitCode::from(2),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
