use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spf_core::experiment::{
    run_scenario, run_suite, sweep, write_outputs, write_sweep_csv, ScenarioConfig, Suite, SweepAxis,
};
use spf_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "spf", version, about = "Stein particle filter experiments")]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the worker pool size.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one scenario and writes steps.csv, timing.csv, plot.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reruns a scenario over axis values and writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// dimension | particle-count
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a property suite: gradients | stein | resampling | oracle.
    Check {
        #[arg(long)]
        suite: String,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::MapParse { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config, cli.seed)?;
            let (record, summary) = run_scenario(&cfg)?;
            write_outputs(&out, &record, &summary)?;
            for f in &summary.filters {
                println!(
                    "{:<12} rmse {:.4} +/- {:.4}  failed {}{}  {:.2} ms/step",
                    f.name,
                    f.rmse_mean,
                    f.rmse_std,
                    f.failed,
                    f.successes.map(|s| format!("  success {s}/{}", summary.repeats)).unwrap_or_default(),
                    f.median_ms_step
                );
            }
            Ok(())
        }
        Command::Sweep { config, axis, values, out } => {
            let cfg = load(&config, cli.seed)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&cfg, axis, &values)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let file = std::fs::File::create(out.join("sweep.csv")).map_err(Error::from)?;
            write_sweep_csv(&rows, file)?;
            for r in &rows {
                println!("{:>6} {:<12} rmse {:.4} +/- {:.4}", r.axis_value, r.filter, r.rmse_mean, r.rmse_std);
            }
            Ok(())
        }
        Command::Check { suite } => {
            let suite: Suite = suite.parse()?;
            let results = run_suite(suite)?;
            for r in &results {
                println!("{r}");
            }
            match results.iter().filter(|r| !r.pass).count() {
                0 => Ok(()),
                n => Err(Failure::Check(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Check(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
