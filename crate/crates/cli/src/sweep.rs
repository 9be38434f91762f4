//! Independent pipelines over consecutive seeds, run in parallel.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::pipeline::{ensure_dir, run_pipeline, PipelineSummary};

pub const SUMMARY_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub ok: bool,
    pub rmse_validation_tank: f64,
    pub rmse_validation_out: f64,
    pub coverage90_tank: f64,
    pub coverage90_out: f64,
    pub final_mean_abs_tank: f64,
    pub final_mean_abs_out: f64,
    pub final_max_abs_tank: f64,
    pub final_max_abs_out: f64,
    pub input_violations: usize,
    pub fallbacks: usize,
}

impl SweepRow {
    fn from_summary(seed: u64, s: &PipelineSummary) -> Self {
        let v = &s.validation.outputs;
        let c = &s.closed_loop;
        Self {
            seed,
            ok: true,
            rmse_validation_tank: v[0].rmse_validation,
            rmse_validation_out: v[1].rmse_validation,
            coverage90_tank: v[0].coverage90_validation,
            coverage90_out: v[1].coverage90_validation,
            final_mean_abs_tank: c.final_mean_abs_error[0],
            final_mean_abs_out: c.final_mean_abs_error[1],
            final_max_abs_tank: c.final_max_abs_error[0],
            final_max_abs_out: c.final_max_abs_error[1],
            input_violations: c.input_violations,
            fallbacks: c.fallbacks,
        }
    }

    fn failed(seed: u64) -> Self {
        Self {
            seed,
            ok: false,
            rmse_validation_tank: f64::NAN,
            rmse_validation_out: f64::NAN,
            coverage90_tank: f64::NAN,
            coverage90_out: f64::NAN,
            final_mean_abs_tank: f64::NAN,
            final_mean_abs_out: f64::NAN,
            final_max_abs_tank: f64::NAN,
            final_max_abs_out: f64::NAN,
            input_violations: 0,
            fallbacks: 0,
        }
    }
}

/// Runs the full pipeline for seeds `cfg.seed .. cfg.seed + cfg.sweep_seeds`
/// under `dir/seed_<n>` and writes a summary table. Failed seeds are kept in
/// the table with `ok = false`.
pub fn sweep(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    ensure_dir(dir)?;
    let rows: Vec<SweepRow> = (0..cfg.sweep_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let local = ExperimentConfig { seed, ..cfg.clone() };
            match run_pipeline(&local, &dir.join(format!("seed_{seed}"))) {
                Ok(s) => SweepRow::from_summary(seed, &s),
                Err(e) => {
                    log::warn!("seed {seed} failed: {e}");
                    SweepRow::failed(seed)
                }
            }
        })
        .collect();
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(rows)
}
