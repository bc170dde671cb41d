use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memwave_cli::commands;
use memwave_cli::{CliError, DataPath, ExperimentConfig, Result};

/// Recover the potential of a wave equation with memory from boundary data.
#[derive(Debug, Parser)]
#[command(name = "memwave", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic response data from the configured potential.
    Synth(Common),
    /// Reconstruct the potential from response data.
    Reconstruct(Common),
    /// Run the property checks at N/2, N and 2N.
    Verify(Common),
    /// Reconstruct over a ladder of resolutions.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Resolutions in ascending order.
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configured data path.
    #[arg(long, value_enum)]
    path: Option<DataPath>,
    /// Overrides the configured noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Response file to read instead of `<out>/response.csv`.
    #[arg(long)]
    response: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(path) = self.path {
            cfg.path = path;
        }
        if let Some(seed) = self.seed {
            cfg.noise_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = c.load()?;
            let syn = commands::cmd_synth(&cfg)?;
            println!(
                "synth: N = {}, wrote {}",
                syn.grid.n(),
                cfg.output_dir.join("response.csv").display()
            );
        }
        Command::Reconstruct(c) => {
            let cfg = c.load()?;
            let report = commands::cmd_reconstruct(&cfg, c.response.as_deref())?;
            let res = report
                .residuals
                .as_ref()
                .expect("reconstruct reports residuals");
            let err = report.errors.expect("reconstruct reports errors");
            println!(
                "reconstruct: N = {}, rel L2 error {:.3e}, Linf {:.3e}, diagonal {:.3e}, \
                 operator identity {:.3e}, max condition {:.3e}",
                cfg.cells,
                err.l2_relative,
                err.linf,
                res.diagonal,
                res.operator_identity,
                report.max_condition.unwrap_or(f64::NAN)
            );
        }
        Command::Verify(c) => {
            let cfg = c.load()?;
            let outcome = commands::cmd_verify(&cfg, c.response.as_deref());
            if let Ok(report) = &outcome {
                for check in &report.checks {
                    println!("PASS {}", check.name);
                }
            }
            if let Err(CliError::Verify(names)) = &outcome {
                for name in names {
                    println!("FAIL {name}");
                }
            }
            outcome?;
        }
        Command::Convergence { common, ns } => {
            let cfg = common.load()?;
            for row in commands::cmd_convergence(&cfg, &ns)? {
                let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
                println!(
                    "N = {:5}  error {:.4e}  ratio {}  order {}",
                    row.cells,
                    row.error,
                    fmt(row.ratio),
                    fmt(row.order)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Synth(c) | Command::Reconstruct(c) | Command::Verify(c) => c.threads,
        Command::Convergence { common, .. } => common.threads,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(CliError::Config(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
