use campanato_cli::config::{ExperimentConfig, ExperimentKind};
use campanato_cli::harness;
use campanato_cli::report::Report;
use campanato_core::{exec, Error, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Semigroup-adapted Morrey/Campanato experiments on uniform grids.
///
/// Exit codes: 0 all criteria pass, 1 runtime error, 2 a numerical criterion
/// failed, 3 invalid configuration.
#[derive(Parser)]
#[command(name = "campanato", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run every map on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or load from CAMPANATO_CACHE_DIR) the operator and write its spectrum.
    EngineBuild(Common),
    /// Morrey and Campanato norms of the corpus or `input.grid`.
    Norm(Common),
    /// Write S_t f for each input and each time in `times.values`.
    Semigroup(Common),
    /// Long-time limits and L^∞ decay fits.
    Limits(Common),
    /// Certify the potential in a reverse Hölder class.
    RhCheck(Common),
    /// Poisson extensions and Carleson functionals.
    Dirichlet {
        #[command(flatten)]
        common: Common,
        /// Also store the extension of the first input as a solution field.
        #[arg(long)]
        write_field: Option<PathBuf>,
    },
    /// Recover boundary traces from stored or generated fields.
    Trace(Common),
    /// Run the experiment named in the config.
    Experiment(Common),
}

fn run(common: &Common, job: impl FnOnce(&ExperimentConfig) -> Result<Report>) -> ExitCode {
    exec::set_parallel(!common.sequential);
    let mut cfg = match ExperimentConfig::from_path(&common.config).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    let report = match job(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Some(label) = &report.label {
        println!("{}: {label}", report.experiment);
    }
    print!("{}", report.summary());
    match report.write(&cfg.output.dir, &cfg.output.stem) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => return fail(&e.in_stage("write report")),
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(harness::exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::EngineBuild(c) => run(c, harness::engine_report),
        Command::Norm(c) => run(c, harness::norm_report),
        Command::Semigroup(c) => run(c, harness::semigroup_report),
        Command::Limits(c) => run(c, harness::limits_report),
        Command::RhCheck(c) => run(c, |cfg| harness::run_kind(cfg, ExperimentKind::RhCertify)),
        Command::Dirichlet { common, write_field } => run(common, |cfg| {
            if let Some(dir) = write_field {
                harness::write_extension(cfg, dir)?;
            }
            harness::run_kind(cfg, ExperimentKind::DirichletForward42)
        }),
        Command::Trace(c) => run(c, |cfg| harness::run_kind(cfg, ExperimentKind::TraceInverse42)),
        Command::Experiment(c) => run(c, harness::run_experiment),
    }
}
