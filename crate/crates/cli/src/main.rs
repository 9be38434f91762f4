use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsvb_cli::data::{generate, Dataset};
use nsvb_cli::pipeline::{
    closed_loop, ensure_dir, fit_models, read_models, validate, write_fit_report, write_loop, write_models,
    write_predictions, write_validation_metrics, DATA_FILE, VALIDATION_FILE,
};
use nsvb_cli::sweep::sweep;
use nsvb_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nsvb", version, about = "Sparse variational NARX identification and MPC of a PEMFC cooling loop")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Multiplier on the measurement noise level.
    #[arg(long = "noise-mult", global = true)]
    noise_mult: Option<f64>,
    /// Extra `key=value` setting; repeatable, applied after the file.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Excite the simulated plant and write the dataset CSV.
    GenData,
    /// Fit one model per output on the training split.
    Fit {
        /// Dataset CSV; defaults to `<out>/data.csv`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// One-step-ahead predictions over the validation split.
    Validate {
        /// Directory holding the model files; defaults to `<out>`.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Closed-loop run of the plant under NSVB-MPC.
    RunClosedloop {
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Full pipeline over consecutive seeds.
    Sweep,
}

fn load_config(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for s in &c.set {
        cfg.set_assignment(s)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out.clone_from(out);
    }
    if let Some(m) = c.noise_mult {
        cfg.noise.mult = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.out.clone();
    ensure_dir(&out)?;
    match cli.command {
        Command::GenData => {
            let data = generate(&cfg)?;
            data.write_csv(&out.join(DATA_FILE))?;
            log::info!("wrote {} samples to {}", data.len(), out.join(DATA_FILE).display());
        }
        Command::Fit { data } => {
            let data = Dataset::read_csv(&data.unwrap_or_else(|| out.join(DATA_FILE)))?;
            let (models, reports) = fit_models(&cfg, &data)?;
            write_models(&out, &models)?;
            write_fit_report(&out, &reports)?;
            for r in &reports {
                println!("{}: {} active terms: {}", r.output, r.active_terms.len(), r.active_terms.join(", "));
            }
        }
        Command::Validate { models, data } => {
            let models = read_models(&models.unwrap_or_else(|| out.clone()))?;
            let data = Dataset::read_csv(&data.unwrap_or_else(|| out.join(DATA_FILE)))?;
            let (rows, metrics) = validate(&cfg, &models, &data)?;
            write_predictions(&out.join(VALIDATION_FILE), &rows)?;
            write_validation_metrics(&out, &metrics)?;
            for m in &metrics.outputs {
                println!(
                    "{}: rmse {:.4} (train {:.4}), max |e| {:.4}, 90% coverage {:.3}",
                    m.output, m.rmse_validation, m.rmse_train, m.max_abs_validation, m.coverage90_validation
                );
            }
        }
        Command::RunClosedloop { models } => {
            let models = read_models(&models.unwrap_or_else(|| out.clone()))?;
            let run = closed_loop(&cfg, models)?;
            write_loop(&out, &run)?;
            let m = &run.metrics;
            println!(
                "{} steps: final mean |e| ({:.3}, {:.3}) K, max |e| ({:.3}, {:.3}) K, {} violations, {} fallbacks",
                m.steps,
                m.final_mean_abs_error[0],
                m.final_mean_abs_error[1],
                m.final_max_abs_error[0],
                m.final_max_abs_error[1],
                m.input_violations,
                m.fallbacks
            );
            if let Some(reason) = &m.aborted {
                return Err(CliError::Aborted(reason.clone()));
            }
        }
        Command::Sweep => {
            let rows = sweep(&cfg, &out)?;
            for r in &rows {
                println!(
                    "seed {}: {} final mean |e| ({:.3}, {:.3}) K",
                    r.seed,
                    if r.ok { "ok" } else { "failed" },
                    r.final_mean_abs_tank,
                    r.final_mean_abs_out
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
