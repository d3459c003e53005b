use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpo_qst_cli::commands::{self, output_dir};
use mpo_qst_cli::{load_plan, CliError, CliResult};

#[derive(Parser)]
#[command(name = "mpo-qst", version, about = "MPO state tomography experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PlanArgs {
    /// Plan file (TOML).
    #[arg(long)]
    plan: PathBuf,
    /// Override a plan entry, e.g. `--set solver.alpha=2e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides the plan's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the target state (TTC1), its coefficient tensor (TTR1) and metadata.
    GenerateState(PlanArgs),
    /// Run every repetition of a plan end to end.
    Reconstruct(PlanArgs),
    /// Relative distance and fidelity between a state and a reconstruction.
    Evaluate { state: PathBuf, reconstruction: PathBuf },
    /// Compute and store initial iterates only.
    Init(PlanArgs),
    /// Iterations to a fixed error over a range of sizes, with a power-law fit.
    BenchmarkScaling {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 6)]
        n_min: usize,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-3)]
        target_error: f64,
    },
    /// Rerun a recorded reconstruction and compare its artifacts.
    Replay {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Feed the recorded measurement logs instead of resimulating.
        #[arg(long)]
        from_log: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenerateState(a) => {
            let plan = load_plan(&a.plan, &a.overrides)?;
            let dir = output_dir(&plan, a.out.as_deref())?;
            let p = commands::generate_state(&plan, &dir)?;
            println!("wrote {} (coefficient ranks {:?})", dir.display(), p.target.ranks());
            if let Some(e) = p.state.energy {
                println!("energy {e:.12}");
            }
        }
        Command::Reconstruct(a) => {
            let plan = load_plan(&a.plan, &a.overrides)?;
            let dir = output_dir(&plan, a.out.as_deref())?;
            for o in commands::reconstruct(&plan, &dir, None)? {
                let last = o.trace.last().expect("nonempty trace");
                println!(
                    "rep {}: {} iterations, init error {:.3e}, final error {:.3e}, fidelity {:.6}",
                    o.rep,
                    o.trace.iters,
                    o.init_error,
                    last.rel_error.unwrap_or(f64::NAN),
                    last.fidelity.unwrap_or(f64::NAN)
                );
            }
        }
        Command::Evaluate { state, reconstruction } => {
            let m = commands::evaluate(&state, &reconstruction)?;
            println!("D = {:e}", m.distance);
            match m.fidelity {
                Some(f) => println!("f = {f:.12}"),
                None => println!("f = n/a (reference is not a pure state)"),
            }
        }
        Command::Init(a) => {
            let plan = load_plan(&a.plan, &a.overrides)?;
            let dir = output_dir(&plan, a.out.as_deref())?;
            for (rep, (_, err)) in commands::init_only(&plan, &dir)?.iter().enumerate() {
                println!("rep {rep}: init error {err:.4e}");
            }
        }
        Command::BenchmarkScaling { plan: a, n_min, n_max, target_error } => {
            if n_min < 2 || n_max <= n_min {
                return Err(CliError::Config(format!("bad size range {n_min}..={n_max}")));
            }
            let plan = load_plan(&a.plan, &a.overrides)?;
            let dir = output_dir(&plan, a.out.as_deref())?;
            let sizes: Vec<usize> = (n_min..=n_max).collect();
            let fit = commands::benchmark_scaling(&plan, &sizes, target_error, Some(&dir))?;
            println!("n  mean_iters");
            for r in &fit.rows {
                println!("{:<2} {}", r.n, r.mean().map_or("not reached".into(), |m| format!("{m:.1}")));
            }
            match (fit.c, fit.p) {
                (Some(c), Some(p)) => println!("fit: iterations = {c:.4} * n^{p:.3}"),
                _ => return Err(CliError::Numerical("target error not reached for every size".into())),
            }
        }
        Command::Replay { run_dir, out, from_log } => {
            let out = out.unwrap_or_else(|| run_dir.join("replay"));
            std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let report = commands::replay(&run_dir, &out, from_log)?;
            if !report.mismatched.is_empty() {
                return Err(CliError::Data(format!("replay differs for repetitions {:?}", report.mismatched)));
            }
            println!("replay identical for {} repetitions", report.repetitions);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
