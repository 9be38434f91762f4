use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ocp::{solve_ocp, OcpSolution, OcpSpec, SolverOptions};
use super::{lift_output_weights, linearize, steady_input, terminal_design, StageCostParams, TerminalDesign};
use crate::error::{Error, Result};
use crate::predict::{predict_means, NarxModel, NarxState};

/// How the controller corrects the learned model with measured one-step
/// prediction errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// Plain model predictions.
    None,
    /// Exponentially filtered one-step error added to every prediction step.
    #[default]
    Filtered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub n_p: usize,
    pub n_c: usize,
    pub stage: StageCostParams,
    pub lambda: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub y_ref: Vec<f64>,
    /// Perturbation for the terminal linearization.
    pub lin_delta: f64,
    /// Terminal weight on lagged state slots.
    pub lag_weight: f64,
    pub solver: SolverOptions,
    pub offset: OffsetMode,
    /// Filter gain in `(0, 1]` for the offset estimate.
    pub offset_gain: f64,
    /// Weight in `(0, 1]` on the measurement when forming the output
    /// estimate that enters the state; 1 uses the raw measurement.
    pub measurement_gain: f64,
    /// Re-derive the steady input and terminal design once the offset has
    /// moved this far from the one they were built for.
    pub redesign_tol: f64,
    /// Input assumed applied before the first step.
    pub u_init: Vec<f64>,
    /// Steady input used when the learned models give none.
    pub u_r_fallback: Option<Vec<f64>>,
}

impl ControllerConfig {
    pub fn new(y_ref: Vec<f64>, u_min: Vec<f64>, u_max: Vec<f64>, u_init: Vec<f64>) -> Self {
        Self {
            n_p: 10,
            n_c: 10,
            stage: StageCostParams::default(),
            lambda: 1.0,
            u_min,
            u_max,
            y_ref,
            lin_delta: 0.015,
            lag_weight: 1e-6,
            solver: SolverOptions::default(),
            offset: OffsetMode::default(),
            offset_gain: 0.05,
            measurement_gain: 1.0,
            redesign_tol: 0.05,
            u_init,
            u_r_fallback: None,
        }
    }
}

/// What happened at one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub y_measured: Vec<f64>,
    /// Output estimate written into the model state.
    pub y_estimate: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Measured minus predicted output for this step; absent on the first.
    pub prediction_error: Option<Vec<f64>>,
    pub offset: Vec<f64>,
    /// The solver failed and the previous input was held.
    pub fallback: bool,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    models: Vec<NarxModel>,
    cfg: ControllerConfig,
    terminal: TerminalDesign,
    state: Option<NarxState>,
    last: Option<OcpSolution>,
    last_prediction: Option<Vec<f64>>,
    u_prev: Vec<f64>,
    offset: Vec<f64>,
    design_offset: Vec<f64>,
    k: usize,
}

impl Controller {
    pub fn new(models: Vec<NarxModel>, cfg: ControllerConfig) -> Result<Self> {
        let n_y = models.len();
        let n_u = cfg.u_min.len();
        if n_y == 0 || cfg.y_ref.len() != n_y || cfg.u_init.len() != n_u {
            return Err(Error::Config("controller references or initial input do not match the models".into()));
        }
        if !(cfg.offset_gain > 0.0 && cfg.offset_gain <= 1.0) {
            return Err(Error::Config(format!("offset gain must lie in (0, 1], got {}", cfg.offset_gain)));
        }
        if !(cfg.measurement_gain > 0.0 && cfg.measurement_gain <= 1.0) {
            return Err(Error::Config(format!("measurement gain must lie in (0, 1], got {}", cfg.measurement_gain)));
        }
        let offset = vec![0.0; n_y];
        let terminal = design(&models, &cfg, &offset, None)?;
        let probe = OcpSpec {
            n_p: cfg.n_p,
            n_c: cfg.n_c,
            u_min: cfg.u_min.clone(),
            u_max: cfg.u_max.clone(),
            stage: cfg.stage.clone(),
            terminal: terminal.clone(),
            y_r: cfg.y_ref.clone(),
            offset: offset.clone(),
            solver: cfg.solver,
        };
        probe.validate(n_y)?;
        Ok(Self {
            u_prev: cfg.u_init.clone(),
            models,
            cfg,
            terminal,
            state: None,
            last: None,
            last_prediction: None,
            design_offset: offset.clone(),
            offset,
            k: 0,
        })
    }

    pub fn terminal(&self) -> &TerminalDesign {
        &self.terminal
    }

    pub fn models(&self) -> &[NarxModel] {
        &self.models
    }

    pub fn state(&self) -> Option<&NarxState> {
        self.state.as_ref()
    }

    /// Previous plan shifted left one slot with the terminal law filling the
    /// last slot; this is the next warm start.
    pub fn shifted_plan(&self) -> Option<Vec<Vec<f64>>> {
        let last = self.last.as_ref()?;
        let mut plan: Vec<Vec<f64>> = last.u_plan.iter().skip(1).cloned().collect();
        let tail = last.inputs.get(self.cfg.n_c).cloned().unwrap_or_else(|| {
            self.terminal.feedback(&last.terminal_state, &self.cfg.u_min, &self.cfg.u_max)
        });
        plan.push(tail);
        for u in &mut plan {
            for (j, v) in u.iter_mut().enumerate() {
                *v = v.clamp(self.cfg.u_min[j], self.cfg.u_max[j]);
            }
        }
        Some(plan)
    }

    fn spec(&self) -> OcpSpec {
        OcpSpec {
            n_p: self.cfg.n_p,
            n_c: self.cfg.n_c,
            u_min: self.cfg.u_min.clone(),
            u_max: self.cfg.u_max.clone(),
            stage: self.cfg.stage.clone(),
            terminal: self.terminal.clone(),
            y_r: self.cfg.y_ref.clone(),
            offset: self.offset.clone(),
            solver: self.cfg.solver,
        }
    }

    /// Takes the measurement `y_k` produced by the previously applied input
    /// and returns the input to apply now.
    pub fn control_step(&mut self, y_measured: &[f64]) -> Result<StepRecord> {
        if y_measured.len() != self.models.len() || y_measured.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("measurement {y_measured:?} is not a finite output vector")));
        }
        let n_a = self.models[0].config.n_a;
        let n_b = self.models[0].config.n_b;
        let prediction_error = self
            .last_prediction
            .as_ref()
            .map(|p| y_measured.iter().zip(p).map(|(y, p)| y - p).collect::<Vec<f64>>());
        let y_estimate: Vec<f64> = match (&self.last_prediction, &prediction_error) {
            (Some(p), Some(e)) => p.iter().zip(e).map(|(p, e)| p + self.cfg.measurement_gain * e).collect(),
            _ => y_measured.to_vec(),
        };
        let state = match self.state.take() {
            None => NarxState::constant(n_a, n_b, &y_estimate, &self.u_prev),
            Some(s) => s.shift(&y_estimate, &self.u_prev),
        };
        if let (OffsetMode::Filtered, Some(err)) = (self.cfg.offset, &prediction_error) {
            for (o, e) in self.offset.iter_mut().zip(err) {
                *o += self.cfg.offset_gain * e;
            }
            let moved = self.offset.iter().zip(&self.design_offset).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved > self.cfg.redesign_tol {
                match design(&self.models, &self.cfg, &self.offset, Some(&self.terminal.u_r)) {
                    Ok(t) => {
                        self.terminal = t;
                        self.design_offset = self.offset.clone();
                    }
                    Err(e) => log::debug!("keeping terminal design at step {}: {e}", self.k),
                }
            }
        }

        let warm = self.shifted_plan();
        let spec = self.spec();
        let started = Instant::now();
        let solved = solve_ocp(&self.models, &state, &spec, warm.as_deref());
        let solve_seconds = started.elapsed().as_secs_f64();
        let (u, objective, iterations, converged, fallback) = match solved {
            Ok(sol) => {
                let out = (sol.u_plan[0].clone(), sol.objective, sol.iterations, sol.converged, false);
                self.last = Some(sol);
                out
            }
            Err(e) => {
                log::warn!("solver failed at step {}: {e}; holding the previous input", self.k);
                self.last = None;
                (self.u_prev.clone(), f64::NAN, 0, false, true)
            }
        };
        self.last_prediction = predict_means(&self.models, &state, &u)
            .ok()
            .map(|ys| ys.iter().zip(&self.offset).map(|(y, d)| y + d).collect());
        let record = StepRecord {
            k: self.k,
            y_measured: y_measured.to_vec(),
            y_estimate,
            u_applied: u.clone(),
            objective,
            iterations,
            converged,
            prediction_error,
            offset: self.offset.clone(),
            fallback,
            solve_seconds,
        };
        self.state = Some(state);
        self.u_prev = u;
        self.k += 1;
        Ok(record)
    }
}

/// Steady input and LQR terminal design for the current offset.
fn design(models: &[NarxModel], cfg: &ControllerConfig, offset: &[f64], guess: Option<&[f64]>) -> Result<TerminalDesign> {
    let n_a = models[0].config.n_a;
    let n_b = models[0].config.n_b;
    if models.iter().any(|m| m.config.n_a != n_a || m.config.n_b != n_b) {
        return Err(Error::Config("all output models must share lag orders".into()));
    }
    let start: Vec<f64> = guess
        .map(<[f64]>::to_vec)
        .or_else(|| cfg.u_r_fallback.clone())
        .unwrap_or_else(|| cfg.u_min.iter().zip(&cfg.u_max).map(|(a, b)| 0.5 * (a + b)).collect());
    // Redesigns repeat the first design's diagnosis; only the first one warns.
    let level = if guess.is_some() { log::Level::Debug } else { log::Level::Warn };
    let learned = steady_input(models, &cfg.y_ref, offset, n_a, n_b, &start);
    let u_r = match (learned, &cfg.u_r_fallback) {
        (Ok(u), _) if u.iter().zip(&cfg.u_min).zip(&cfg.u_max).all(|((v, lo), hi)| v >= lo && v <= hi) => u,
        (Ok(u), _) => {
            log::log!(level, "steady input {u:?} of the learned models lies outside the bounds; clamping");
            u.iter().zip(&cfg.u_min).zip(&cfg.u_max).map(|((v, lo), hi)| v.clamp(*lo, *hi)).collect()
        }
        (Err(e), Some(fallback)) => {
            log::log!(level, "no steady input from the learned models ({e}); using the configured fallback");
            fallback.clone()
        }
        (Err(e), None) => return Err(e),
    };
    let x_r = NarxState::constant(n_a, n_b, &cfg.y_ref, &u_r);
    let lin = linearize(models, &x_r, &u_r, cfg.lin_delta)?;
    let q = lift_output_weights(&x_r, &cfg.stage.q, cfg.lag_weight);
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&cfg.stage.r));
    terminal_design(&lin, &q, &r, cfg.lambda, &x_r.as_vector(), &u_r)
}
