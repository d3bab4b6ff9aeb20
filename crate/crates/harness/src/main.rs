use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smoothgnn_harness::diagnostics::{gradcheck_suite, inspect_energy, selftest, CheckOutcome};
use smoothgnn_harness::tu::write_tu_dataset;
use smoothgnn_harness::{gen_synthetic, plot, sweep, train, HarnessError, Result, RunConfig, SweepAxis};

/// Graph classification under label noise, with Dirichlet-energy diagnostics.
#[derive(Parser)]
#[command(name = "smoothgnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Configuration file (`key = value` lines); defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set noise.rate=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path, &self.overrides),
            None => RunConfig::parse_with_overrides("", &self.overrides),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its run directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output run directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train one run per value of a single configuration axis.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// noise_rate, dataset_size, hidden or epochs.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `0,0.2,0.4`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the synthetic dataset in the graph-benchmark text format.
    GenSynthetic {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory; files are named `<name>_A.txt` etc.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value = "SYNTHETIC")]
        name: String,
    },
    /// Print the per-layer Dirichlet energy of a trained checkpoint.
    InspectEnergy {
        /// Run directory holding `model.ckpt` and `config.resolved`.
        run_dir: PathBuf,
        /// Checkpoint to use instead of `<run_dir>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override keys of the run's resolved configuration (e.g. `dataset=...`).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare analytic and finite-difference gradients of every layer and loss.
    Gradcheck {
        /// Random instances per configuration.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render SVG charts for one or more run directories.
    Plot {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Output directory (defaults to the first run directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the numerical property checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn report(checks: &[CheckOutcome]) -> Result<()> {
    for c in checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(HarnessError::Numerical {
            epoch: 0,
            step: 0,
            source: smoothgnn_core::CoreError::NonFinite(format!("{failed} check(s) failed")),
        });
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = config.load()?;
            let result = train(&cfg, &out)?;
            match result.last() {
                Some(r) => println!(
                    "{} epochs: train_acc {:.4} test_acc {} energy {:.6}",
                    r.epoch,
                    r.train_acc,
                    r.test_acc.map_or("-".into(), |a| format!("{a:.4}")),
                    r.dirichlet_energy
                ),
                None => println!("0 epochs: untrained checkpoint written"),
            }
            println!("outputs in {}", out.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let summary = sweep(&config.load()?, axis, &values, &out)?;
            let failed = summary.entries.iter().filter(|e| e.outcome.is_err()).count();
            println!(
                "{} runs ({failed} failed); summary in {}",
                summary.entries.len(),
                summary.summary_path.display()
            );
        }
        Command::GenSynthetic { config, out, name } => {
            let cfg = config.load()?;
            let dataset = gen_synthetic(&cfg.synthetic)?;
            write_tu_dataset(&dataset, &out, &name)?;
            println!("{} graphs written to {}", dataset.len(), out.display());
        }
        Command::InspectEnergy {
            run_dir,
            checkpoint,
            overrides,
        } => {
            let cfg = RunConfig::load(&run_dir.join("config.resolved"), &overrides)?;
            let ckpt = checkpoint.unwrap_or_else(|| run_dir.join("model.ckpt"));
            let inspection = inspect_energy(&ckpt, &cfg)?;
            println!("graphs {}", inspection.graphs);
            println!("input  {:.6}", inspection.input_energy);
            for (l, e) in inspection.layer_energies.iter().enumerate() {
                println!("layer {} {e:.6}", l + 1);
            }
        }
        Command::Gradcheck { instances, seed } => report(&gradcheck_suite(instances, seed)?)?,
        Command::Plot { run_dirs, out } => {
            let out = out.unwrap_or_else(|| run_dirs[0].clone());
            for path in plot::plot(&run_dirs, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Selftest { seed } => report(&selftest(seed)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
