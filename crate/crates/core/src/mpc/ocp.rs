use serde::{Deserialize, Serialize};

use super::{stage_cost, StageCostParams, TerminalDesign};
use crate::error::{Error, Result};
use crate::predict::{step_means, NarxModel, NarxState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Central-difference step in scaled input units.
    pub fd_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Stop when the projected-gradient norm drops below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change drops below this.
    pub rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            fd_step: 1e-4,
            armijo: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            grad_tol: 1e-6,
            rel_tol: 1e-9,
        }
    }
}

/// Finite-horizon problem over the learned mean dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub n_p: usize,
    pub n_c: usize,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub stage: StageCostParams,
    pub terminal: TerminalDesign,
    /// Output references.
    pub y_r: Vec<f64>,
    /// Constant correction added to every one-step prediction of each channel.
    pub offset: Vec<f64>,
    pub solver: SolverOptions,
}

impl OcpSpec {
    pub fn validate(&self, n_y: usize) -> Result<()> {
        let n_u = self.u_min.len();
        if self.n_p == 0 || self.n_c == 0 || self.n_c > self.n_p {
            return Err(Error::Config(format!("horizons need 1 <= N_c <= N_p, got N_c = {}, N_p = {}", self.n_c, self.n_p)));
        }
        if self.u_max.len() != n_u || self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("input bounds must satisfy u_min < u_max per channel".into()));
        }
        if self.y_r.len() != n_y || self.offset.len() != n_y || self.terminal.u_r.len() != n_u {
            return Err(Error::Dimension("reference, offset or terminal input sizes do not match the system".into()));
        }
        self.stage.validate(n_y, n_u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    /// `N_c` inputs, each within the bounds.
    pub u_plan: Vec<Vec<f64>>,
    /// Inputs applied over the whole prediction horizon, terminal-law tail included.
    pub inputs: Vec<Vec<f64>>,
    /// Predicted outputs for steps `1..=N_p`.
    pub predicted: Vec<Vec<f64>>,
    /// Companion state after `N_p` steps.
    pub terminal_state: Vec<f64>,
    pub objective: f64,
    /// Objective of the (projected) warm start.
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    models: &'a [NarxModel],
    state0: &'a NarxState,
    spec: &'a OcpSpec,
    n_u: usize,
}

#[derive(Default)]
struct Trace {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    terminal: Vec<f64>,
}

impl Problem<'_> {
    fn to_inputs(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, s)| {
                let j = i % self.n_u;
                self.spec.u_min[j] + s * (self.spec.u_max[j] - self.spec.u_min[j])
            })
            .collect()
    }

    fn to_scaled(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, x)| {
                let j = i % self.n_u;
                ((x - self.spec.u_min[j]) / (self.spec.u_max[j] - self.spec.u_min[j])).clamp(0.0, 1.0)
            })
            .collect()
    }

    /// Objective of a flattened plan in input units; `+inf` if the rollout
    /// blows up.
    fn cost(&self, plan: &[f64], mut trace: Option<&mut Trace>) -> f64 {
        let spec = self.spec;
        let n_y = self.models.len();
        let mut state = self.state0.clone();
        let mut z = Vec::new();
        let mut ys = vec![0.0; n_y];
        let mut u = vec![0.0; self.n_u];
        let mut total = 0.0;
        for i in 0..spec.n_p {
            if i < spec.n_c {
                u.copy_from_slice(&plan[i * self.n_u..(i + 1) * self.n_u]);
            } else {
                spec.terminal.feedback_into(&state.as_vector(), &spec.u_min, &spec.u_max, &mut u);
            }
            let y_now = state.current_outputs();
            total += stage_cost(&y_now, &u, &spec.y_r, &spec.terminal.u_r, &y_now, &spec.stage);
            if !step_means(self.models, &state, &u, &mut z, &mut ys) {
                return f64::INFINITY;
            }
            for (y, d) in ys.iter_mut().zip(&spec.offset) {
                *y += d;
            }
            state.shift_in_place(&ys, &u);
            if let Some(t) = trace.as_deref_mut() {
                t.inputs.push(u.clone());
                t.outputs.push(ys.clone());
            }
        }
        let terminal = state.as_vector();
        total += spec.terminal.cost(&terminal);
        if let Some(t) = trace {
            t.terminal = terminal;
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    fn scaled_cost(&self, v: &[f64]) -> f64 {
        self.cost(&self.to_inputs(v), None)
    }

    fn gradient(&self, v: &[f64], h: f64) -> Vec<f64> {
        let mut probe = v.to_vec();
        (0..v.len())
            .map(|i| {
                probe[i] = v[i] + h;
                let plus = self.scaled_cost(&probe);
                probe[i] = v[i] - h;
                let minus = self.scaled_cost(&probe);
                probe[i] = v[i];
                let g = (plus - minus) / (2.0 * h);
                if g.is_finite() {
                    g
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn project(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Objective of an explicit plan of `N_c` inputs.
pub fn objective(models: &[NarxModel], state0: &NarxState, spec: &OcpSpec, u_plan: &[Vec<f64>]) -> Result<f64> {
    spec.validate(models.len())?;
    let n_u = spec.u_min.len();
    if u_plan.len() != spec.n_c || u_plan.iter().any(|u| u.len() != n_u) {
        return Err(Error::Dimension(format!("plan must hold {} inputs of length {n_u}", spec.n_c)));
    }
    let flat: Vec<f64> = u_plan.iter().flatten().copied().collect();
    let p = Problem { models, state0, spec, n_u };
    Ok(p.cost(&flat, None))
}

/// Projected-gradient single shooting in inputs scaled to `[0, 1]`.
///
/// The returned plan never has a larger objective than the projected warm
/// start (the steady input repeated when none is given).
pub fn solve_ocp(
    models: &[NarxModel],
    state0: &NarxState,
    spec: &OcpSpec,
    warm_start: Option<&[Vec<f64>]>,
) -> Result<OcpSolution> {
    spec.validate(models.len())?;
    let n_u = spec.u_min.len();
    if state0.outputs.len() != models.len() || state0.inputs.len() != n_u {
        return Err(Error::Dimension("initial state does not match the models".into()));
    }
    let p = Problem { models, state0, spec, n_u };
    let start: Vec<f64> = match warm_start {
        Some(plan) => {
            if plan.len() != spec.n_c || plan.iter().any(|u| u.len() != n_u) {
                return Err(Error::Dimension(format!("warm start must hold {} inputs of length {n_u}", spec.n_c)));
            }
            plan.iter().flatten().copied().collect()
        }
        None => spec.terminal.u_r.iter().copied().cycle().take(spec.n_c * n_u).collect(),
    };
    let opts = &spec.solver;
    let mut v = p.to_scaled(&start);
    let mut j = p.scaled_cost(&v);
    if !j.is_finite() {
        let mut trace = Trace::default();
        p.cost(&p.to_inputs(&v), Some(&mut trace));
        return Err(Error::Rollout { step: trace.outputs.len() });
    }
    let initial_objective = j;
    let mut g = p.gradient(&v, opts.fd_step);
    let mut step = 1.0 / norm(&g).max(1e-12);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        let mut pg: Vec<f64> = v.iter().zip(&g).map(|(x, gi)| x - gi).collect();
        project(&mut pg);
        let pg_norm = norm(&v.iter().zip(&pg).map(|(a, b)| a - b).collect::<Vec<_>>());
        if pg_norm < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let mut t = step;
        for _ in 0..=opts.max_backtracks {
            let mut trial: Vec<f64> = v.iter().zip(&g).map(|(x, gi)| x - t * gi).collect();
            project(&mut trial);
            let decrease: f64 = g.iter().zip(trial.iter().zip(&v)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let jt = p.scaled_cost(&trial);
            if jt <= j + opts.armijo * decrease && jt.is_finite() {
                accepted = Some((trial, jt));
                break;
            }
            t *= opts.backtrack_factor;
        }
        let Some((next, j_next)) = accepted else {
            // no descent along the projected gradient at any tried step
            break;
        };
        let g_next = p.gradient(&next, opts.fd_step);
        let s: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (t * 2.0).min(1e10) };
        let rel = (j - j_next).abs() / j.abs().max(f64::MIN_POSITIVE);
        v = next;
        j = j_next;
        g = g_next;
        if rel < opts.rel_tol {
            converged = true;
            break;
        }
    }

    let plan_flat = p.to_inputs(&v);
    let mut trace = Trace::default();
    let objective = p.cost(&plan_flat, Some(&mut trace));
    let u_plan = plan_flat.chunks(n_u).map(|c| c.to_vec()).collect();
    Ok(OcpSolution {
        u_plan,
        inputs: trace.inputs,
        predicted: trace.outputs,
        terminal_state: trace.terminal,
        objective,
        initial_objective,
        iterations,
        converged,
    })
}
