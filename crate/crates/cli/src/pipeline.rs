//! The experiment stages: fit, validate and closed-loop runs, plus the
//! artifacts each stage writes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nsvb_core::dictionary::{build_regressors, RegressorSet};
use nsvb_core::mpc::{stage_cost, Controller, ControllerConfig, SolverOptions, StageCostParams};
use nsvb_core::nsvb::{FitOptions, FitReport};
use nsvb_core::plant::{noise_std, steady_inputs, PlantState, Simulator};
use nsvb_core::predict::{ModelDocument, ModelFitOptions, NarxModel};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{generate, streams, Dataset, OUTPUTS};
use crate::error::CliError;

pub const DATA_FILE: &str = "data.csv";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const VALIDATION_METRICS_FILE: &str = "validation_metrics.json";
pub const CLOSED_LOOP_FILE: &str = "closedloop.csv";
pub const CLOSED_LOOP_METRICS_FILE: &str = "closedloop_metrics.json";
pub const CONFIG_FILE: &str = "config.txt";
/// Wall-clock measurements; kept apart because they differ between runs.
pub const TIMING_FILE: &str = "timing.json";

pub fn model_file(output: &str) -> String {
    format!("model_{output}.json")
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Regressor pairs for output `channel`; `k + 1 < split` pairs are training
/// pairs, the rest validation pairs.
fn regressor_split(cfg: &ExperimentConfig, data: &Dataset, channel: usize) -> Result<(RegressorSet, RegressorSet), CliError> {
    let narx = cfg.model.narx();
    let ys = data.outputs();
    let (ys, target) = if cfg.model.cross_outputs { (ys, channel) } else { (vec![ys[channel].clone()], 0) };
    let all = build_regressors(&ys, &data.inputs(), &narx, target)
        .map_err(|e| CliError::Usage(format!("dataset cannot feed the {} model: {e}", OUTPUTS[channel])))?;
    let mut train = RegressorSet { targets: vec![], regressors: vec![], times: vec![] };
    let mut val = train.clone();
    for ((y, z), k) in all.targets.into_iter().zip(all.regressors).zip(all.times) {
        let part = if k + 1 < cfg.train { &mut train } else { &mut val };
        part.targets.push(y);
        part.regressors.push(z);
        part.times.push(k);
    }
    Ok((train, val))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFitReport {
    pub output: String,
    pub active_terms: Vec<String>,
    /// Coefficients over raw (unscaled) regressors.
    pub raw_coefficients: Vec<(String, f64)>,
    pub report: FitReport,
}

/// One model per controlled output, fitted on the training split.
pub fn fit_models(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Vec<NarxModel>, Vec<OutputFitReport>), CliError> {
    let opts = ModelFitOptions {
        fit: FitOptions {
            max_iter: cfg.model.max_iter,
            elbo_rel_tol: cfg.model.elbo_rel_tol,
            prune_threshold: cfg.model.prune_threshold,
            ..FitOptions::default()
        },
        scaling: cfg.model.scaling,
        max_terms: cfg.model.max_terms,
    };
    let mut models = Vec::with_capacity(2);
    let mut reports = Vec::with_capacity(2);
    for (channel, name) in OUTPUTS.iter().enumerate() {
        let (train, _) = regressor_split(cfg, data, channel)?;
        if train.targets.is_empty() {
            return Err(CliError::Usage(format!(
                "training split is empty ({} samples, data.train = {})",
                data.len(),
                cfg.train
            )));
        }
        let (model, report) = NarxModel::fit(&train, cfg.model.narx(), &cfg.model.prior, &opts)
            .map_err(|e| CliError::numeric(format!("fitting the {name} model"), e))?;
        reports.push(OutputFitReport {
            output: (*name).to_string(),
            active_terms: model.terms.iter().map(|t| t.name.clone()).collect(),
            raw_coefficients: model.raw_polynomial().into_iter().map(|(t, c)| (t.name, c)).collect(),
            report,
        });
        models.push(model);
    }
    Ok((models, reports))
}

pub fn write_models(dir: &Path, models: &[NarxModel]) -> Result<(), CliError> {
    for (m, name) in models.iter().zip(OUTPUTS) {
        write_json(&dir.join(model_file(name)), &m.to_document(name))?;
    }
    Ok(())
}

pub fn read_models(dir: &Path) -> Result<Vec<NarxModel>, CliError> {
    OUTPUTS
        .iter()
        .map(|name| {
            let doc: ModelDocument = read_json(&dir.join(model_file(name)))?;
            NarxModel::from_document(&doc).map_err(|e| CliError::Usage(format!("model {name}: {e}")))
        })
        .collect()
}

/// One-step-ahead prediction for one output at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub k: usize,
    pub output: usize,
    pub measured: f64,
    pub clean: f64,
    pub mean: f64,
    pub lower90: f64,
    pub upper90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub output: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub rmse_train: f64,
    pub rmse_validation: f64,
    pub max_abs_validation: f64,
    /// Share of validation measurements inside the 90% predictive interval.
    pub coverage90_validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub outputs: Vec<OutputMetrics>,
}

fn predict_rows(
    model: &NarxModel,
    set: &RegressorSet,
    channel: usize,
    data: &Dataset,
) -> Result<Vec<PredictionRow>, CliError> {
    let clean = data.clean_outputs();
    set.regressors
        .iter()
        .zip(&set.targets)
        .zip(&set.times)
        .map(|((z, y), &k)| {
            let pd = model.predictive(z).map_err(|e| CliError::numeric(format!("prediction at step {k}"), e))?;
            let (lower90, upper90) = pd.interval(0.9).map_err(|e| CliError::numeric("predictive interval", e))?;
            Ok(PredictionRow { k: k + 1, output: channel, measured: *y, clean: clean[channel][k + 1], mean: pd.mean, lower90, upper90 })
        })
        .collect()
}

fn rmse(rows: &[PredictionRow]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    (rows.iter().map(|r| (r.measured - r.mean).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
}

/// One-step-ahead predictions over the validation split.
pub fn validate(
    cfg: &ExperimentConfig,
    models: &[NarxModel],
    data: &Dataset,
) -> Result<(Vec<PredictionRow>, ValidationMetrics), CliError> {
    if models.len() != OUTPUTS.len() {
        return Err(CliError::Usage(format!("expected {} models, got {}", OUTPUTS.len(), models.len())));
    }
    let mut all_rows = Vec::new();
    let mut metrics = Vec::new();
    for (channel, model) in models.iter().enumerate() {
        let mut local = cfg.clone();
        local.model.n_a = model.config.n_a;
        local.model.n_b = model.config.n_b;
        local.model.cross_outputs = model.config.n_y > 1;
        if model.config.n_u != 2 {
            return Err(CliError::Usage(format!("model {} expects {} inputs, dataset has 2", OUTPUTS[channel], model.config.n_u)));
        }
        let (train, val) = regressor_split(&local, data, channel)?;
        let train_rows = predict_rows(model, &train, channel, data)?;
        let val_rows = predict_rows(model, &val, channel, data)?;
        let covered = val_rows.iter().filter(|r| r.lower90 <= r.measured && r.measured <= r.upper90).count();
        metrics.push(OutputMetrics {
            output: OUTPUTS[channel].to_string(),
            n_train: train_rows.len(),
            n_validation: val_rows.len(),
            rmse_train: rmse(&train_rows),
            rmse_validation: rmse(&val_rows),
            max_abs_validation: val_rows.iter().map(|r| (r.measured - r.mean).abs()).fold(0.0, f64::max),
            coverage90_validation: if val_rows.is_empty() { f64::NAN } else { covered as f64 / val_rows.len() as f64 },
        });
        all_rows.extend(val_rows);
    }
    Ok((all_rows, ValidationMetrics { outputs: metrics }))
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["k", "output", "measured", "clean", "mean", "lower90", "upper90"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// One closed-loop sampling instant: true state and measurement at `k`
/// and the input applied from `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopRow {
    pub k: usize,
    pub t_s: f64,
    pub t_tank: f64,
    pub t_in: f64,
    pub t_out: f64,
    pub t_tank_meas: f64,
    pub t_out_meas: f64,
    pub w_w: f64,
    pub w_a: f64,
    pub objective: f64,
    pub iterations: usize,
    pub fallback: bool,
    pub offset_tank: f64,
    pub offset_out: f64,
    /// Running sum of the stage cost of the realized trajectory.
    pub cumulative_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopMetrics {
    pub steps: usize,
    pub y_ref: [f64; 2],
    pub u_ref: Vec<f64>,
    /// Sum of squared tracking errors times the sample time.
    pub ise: [f64; 2],
    pub iae: [f64; 2],
    pub final_window: usize,
    pub final_max_abs_error: [f64; 2],
    pub final_mean_abs_error: [f64; 2],
    /// Applied inputs outside the plant box.
    pub input_violations: usize,
    pub fallbacks: usize,
    pub total_cost: f64,
    pub mean_solver_iterations: f64,
    /// Set when the plant blew up and the run stopped early.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub solves: usize,
    pub solve_seconds_mean: f64,
    pub solve_seconds_max: f64,
    pub solve_seconds_total: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub rows: Vec<LoopRow>,
    pub metrics: ClosedLoopMetrics,
    pub timing: Timing,
}

pub fn controller_config(cfg: &ExperimentConfig) -> ControllerConfig {
    let m = &cfg.mpc;
    let (lo, hi) = cfg.controller_box();
    let mut c = ControllerConfig::new(m.y_ref.to_vec(), lo.to_vec(), hi.to_vec(), cfg.nominal_input.to_vec());
    c.n_p = m.n_p;
    c.n_c = m.n_c;
    c.stage = StageCostParams {
        q: m.q.to_vec(),
        r: m.r.to_vec(),
        eta: m.eta,
        rho: m.rho,
        y_set: vec![(m.y_low[0], m.y_high[0]), (m.y_low[1], m.y_high[1])],
    };
    c.lambda = m.lambda;
    c.lin_delta = m.lin_delta;
    c.lag_weight = m.lag_weight;
    c.solver = SolverOptions { max_iter: m.max_iter, ..SolverOptions::default() };
    c.offset = m.offset;
    c.offset_gain = m.offset_gain;
    c.measurement_gain = m.measurement_gain;
    c.redesign_tol = m.redesign_tol;
    c.u_r_fallback = Some(cfg.nominal_input.to_vec());
    c
}

/// Runs the plant under NSVB-MPC from a cold start for `cfg.steps` steps.
pub fn closed_loop(cfg: &ExperimentConfig, models: Vec<NarxModel>) -> Result<ClosedLoop, CliError> {
    let started = Instant::now();
    let p = cfg.plant;
    let y_ref = cfg.mpc.y_ref;
    let (_, eq) = steady_inputs(&p, y_ref[0], y_ref[1], p.q_gen)
        .map_err(|e| CliError::numeric("plant equilibrium at the references", e))?;
    let cold = PlantState { x1: eq.x1 - cfg.cold_offset, x2: eq.x2 - cfg.cold_offset, x3: eq.x3 - cfg.cold_offset };
    let sd = noise_std(cfg.noise.level, cfg.noise.level_is_variance, cfg.noise.mult);
    let mut sim = Simulator::new(p, cold, sd, cfg.seed, streams::LOOP_NOISE).map_err(|e| CliError::numeric("plant simulator", e))?;
    let ccfg = controller_config(cfg);
    let stage = ccfg.stage.clone();
    let mut ctl = Controller::new(models, ccfg).map_err(|e| CliError::numeric("controller design", e))?;

    let mut rows = Vec::with_capacity(cfg.steps);
    let mut solve_times = Vec::with_capacity(cfg.steps);
    let mut cumulative = 0.0;
    let mut aborted = None;
    let mut y = sim.measure();
    for k in 0..cfg.steps {
        let x = sim.state();
        let rec = ctl.control_step(&y).map_err(|e| CliError::numeric(format!("control step {k}"), e))?;
        solve_times.push(rec.solve_seconds);
        let u = [rec.u_applied[0], rec.u_applied[1]];
        let outputs = x.outputs();
        cumulative += stage_cost(&outputs, &u, &y_ref, &ctl.terminal().u_r, &outputs, &stage);
        rows.push(LoopRow {
            k,
            t_s: sim.time(),
            t_tank: x.x1,
            t_in: x.x2,
            t_out: x.x3,
            t_tank_meas: y[0],
            t_out_meas: y[1],
            w_w: u[0],
            w_a: u[1],
            objective: rec.objective,
            iterations: rec.iterations,
            fallback: rec.fallback,
            offset_tank: rec.offset[0],
            offset_out: rec.offset[1],
            cumulative_cost: cumulative,
        });
        match sim.step(u) {
            Ok(s) => y = s.measured,
            Err(e) => {
                aborted = Some(format!("plant blew up after step {k}: {e}"));
                break;
            }
        }
    }

    let window = cfg.metric_window.min(rows.len());
    let tail = &rows[rows.len() - window..];
    let err = |r: &LoopRow| [(r.t_tank - y_ref[0]).abs(), (r.t_out - y_ref[1]).abs()];
    let mut m = ClosedLoopMetrics {
        steps: rows.len(),
        y_ref,
        u_ref: ctl.terminal().u_r.clone(),
        ise: [0.0; 2],
        iae: [0.0; 2],
        final_window: window,
        final_max_abs_error: [0.0; 2],
        final_mean_abs_error: [0.0; 2],
        input_violations: rows
            .iter()
            .filter(|r| {
                [r.w_w, r.w_a].iter().enumerate().any(|(i, v)| !(*v >= p.u_min[i] && *v <= p.u_max[i]))
            })
            .count(),
        fallbacks: rows.iter().filter(|r| r.fallback).count(),
        total_cost: cumulative,
        mean_solver_iterations: if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows.len() as f64
        },
        aborted,
    };
    let dt = sim.dt;
    for r in &rows {
        let e = err(r);
        for (i, e) in e.iter().enumerate() {
            m.ise[i] += e * e * dt;
            m.iae[i] += e * dt;
        }
    }
    for r in tail {
        let e = err(r);
        for (i, e) in e.iter().enumerate() {
            m.final_max_abs_error[i] = m.final_max_abs_error[i].max(*e);
            m.final_mean_abs_error[i] += e / window as f64;
        }
    }
    let total: f64 = solve_times.iter().sum();
    let timing = Timing {
        solves: solve_times.len(),
        solve_seconds_mean: if solve_times.is_empty() { 0.0 } else { total / solve_times.len() as f64 },
        solve_seconds_max: solve_times.iter().copied().fold(0.0, f64::max),
        solve_seconds_total: total,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(ClosedLoop { rows, metrics: m, timing })
}

pub fn write_loop(dir: &Path, run: &ClosedLoop) -> Result<(), CliError> {
    let path = dir.join(CLOSED_LOOP_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    if run.rows.is_empty() {
        w.write_record([
            "k", "t_s", "t_tank", "t_in", "t_out", "t_tank_meas", "t_out_meas", "w_w", "w_a", "objective", "iterations",
            "fallback", "offset_tank", "offset_out", "cumulative_cost",
        ])?;
    }
    for r in &run.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    write_json(&dir.join(CLOSED_LOOP_METRICS_FILE), &run.metrics)?;
    write_json(&dir.join(TIMING_FILE), &run.timing)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

/// Everything `gen-data`, `fit` and `validate` produce, plus the closed loop.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub dir: PathBuf,
    pub validation: ValidationMetrics,
    pub closed_loop: ClosedLoopMetrics,
    pub timing: Timing,
}

pub fn run_pipeline(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineSummary, CliError> {
    cfg.validate()?;
    ensure_dir(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_text()).map_err(|e| CliError::io("writing config", e))?;
    let data = generate(cfg)?;
    data.write_csv(&dir.join(DATA_FILE))?;
    let (models, reports) = fit_models(cfg, &data)?;
    write_models(dir, &models)?;
    write_json(&dir.join(FIT_REPORT_FILE), &reports)?;
    let (rows, validation) = validate(cfg, &models, &data)?;
    write_predictions(&dir.join(VALIDATION_FILE), &rows)?;
    write_json(&dir.join(VALIDATION_METRICS_FILE), &validation)?;
    let run = closed_loop(cfg, models)?;
    write_loop(dir, &run)?;
    if let Some(reason) = &run.metrics.aborted {
        return Err(CliError::Aborted(reason.clone()));
    }
    Ok(PipelineSummary { dir: dir.to_path_buf(), validation, closed_loop: run.metrics, timing: run.timing })
}

pub fn write_fit_report(dir: &Path, reports: &[OutputFitReport]) -> Result<(), CliError> {
    write_json(&dir.join(FIT_REPORT_FILE), reports)
}

pub fn write_validation_metrics(dir: &Path, m: &ValidationMetrics) -> Result<(), CliError> {
    write_json(&dir.join(VALIDATION_METRICS_FILE), m)
}
