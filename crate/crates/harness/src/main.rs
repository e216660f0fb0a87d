use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use precert_harness::error::{HarnessError, Result};
use precert_harness::runs::{
    run_calibrate, run_fig4, run_fig5, run_heralding, run_proctomo, Engine,
};
use precert_harness::spec::{load_spec, ExperimentSpec};
use precert_harness::table::{ResultTable, RunContext};

#[derive(Parser)]
#[command(
    name = "precert",
    version,
    about = "Photonic qubit precertification simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count rate and fidelity against total loss.
    Fig4(RunArgs),
    /// Heralding efficiency against channel loss per detector variant.
    Fig5(RunArgs),
    /// Simulated process tomography of every herald mode.
    Proctomo(RunArgs),
    /// Heralding-efficiency terms and threshold crossing.
    Heralding(RunArgs),
    /// Fit noise parameters to the spec's fidelity targets.
    Calibrate(RunArgs),
    /// Parse and validate a spec file.
    ValidateSpec {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytic,
    Montecarlo,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Spec file (TOML); built-in defaults when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Master seed (overrides the spec).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "analytic")]
    engine: EngineArg,
    /// Output file; defaults to the spec's `output`, then
    /// `$PRECERT_OUT_DIR/<command>.csv`, then standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo integration time per sweep point, seconds (overrides the
    /// spec).
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, env = "PRECERT_OUT_DIR", hide_env_values = true)]
    out_dir: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None => ExperimentSpec::default(),
    };
    if args.seed.is_some() {
        spec.seed = args.seed;
    }
    if let Some(d) = args.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(HarnessError::validation("duration", "must be > 0"));
        }
        spec.duration = d;
    }
    Ok(spec)
}

fn engine(args: &RunArgs, spec: &ExperimentSpec) -> Result<Engine> {
    Ok(match args.engine {
        EngineArg::Analytic => Engine::Analytic,
        EngineArg::Montecarlo => Engine::MonteCarlo {
            duration: spec.duration,
            seed: spec.require_seed()?,
        },
    })
}

fn emit(table: &ResultTable, args: &RunArgs, spec: &ExperimentSpec, name: &str) -> Result<()> {
    let path = args
        .out
        .clone()
        .or_else(|| spec.output.clone())
        .or_else(|| args.out_dir.as_ref().map(|d| d.join(format!("{name}.csv"))));
    match path {
        Some(p) => {
            table.write_to(&p)?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        None => {
            print!("{}", table.render());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (args, name) = match &cli.command {
        Command::ValidateSpec { spec } => {
            let s = load_spec(spec)?;
            println!("{}: valid (sha256 {})", spec.display(), s.hash);
            return Ok(());
        }
        Command::Fig4(a) => (a, "fig4"),
        Command::Fig5(a) => (a, "fig5"),
        Command::Proctomo(a) => (a, "proctomo"),
        Command::Heralding(a) => (a, "heralding"),
        Command::Calibrate(a) => (a, "calibrate"),
    };
    let spec = load(args)?;
    let eng = engine(args, &spec)?;
    let ctx = RunContext::now(&spec.hash, spec.seed);
    let table = match &cli.command {
        Command::Fig4(_) => run_fig4(&spec, &eng, &ctx)?,
        Command::Fig5(_) => run_fig5(&spec, &eng, &ctx)?,
        Command::Heralding(_) => run_heralding(&spec, &eng, &ctx)?,
        Command::Proctomo(_) => run_proctomo(&spec, &ctx)?,
        Command::Calibrate(_) => run_calibrate(&spec, &ctx)?,
        Command::ValidateSpec { .. } => unreachable!("handled above"),
    };
    emit(&table, args, &spec, name)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
