//! Receding-horizon control on the learned mean model: barrier-augmented
//! quadratic stage cost, LQR terminal cost and box-constrained inputs.

mod controller;
mod ocp;

pub use controller::{Controller, ControllerConfig, OffsetMode, StepRecord};
pub use ocp::{objective, solve_ocp, OcpSolution, OcpSpec, SolverOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{newton_root, solve_dare, NewtonOptions};
use crate::predict::{channel_of, NarxModel, NarxState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCostParams {
    /// Weight per output.
    pub q: Vec<f64>,
    /// Weight per input.
    pub r: Vec<f64>,
    /// Barrier height.
    pub eta: f64,
    /// Barrier sharpness.
    pub rho: f64,
    /// Admissible output interval per output.
    pub y_set: Vec<(f64, f64)>,
}

impl Default for StageCostParams {
    fn default() -> Self {
        Self { q: vec![50.0; 2], r: vec![1.0; 2], eta: 100.0, rho: 1.0, y_set: vec![(325.0, 355.0); 2] }
    }
}

impl StageCostParams {
    pub fn validate(&self, n_y: usize, n_u: usize) -> Result<()> {
        if self.q.len() != n_y || self.y_set.len() != n_y || self.r.len() != n_u {
            return Err(Error::Config(format!(
                "stage cost sized for {} outputs / {} inputs, system has {n_y} / {n_u}",
                self.q.len(),
                self.r.len()
            )));
        }
        if self.q.iter().chain(&self.r).any(|w| !(*w > 0.0)) {
            return Err(Error::Config("stage weights Q and R must be positive".into()));
        }
        if !(self.eta >= 0.0) || !(self.rho > 0.0) {
            return Err(Error::Config("barrier needs eta >= 0 and rho > 0".into()));
        }
        if self.y_set.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config("output set bounds must satisfy lo <= hi".into()));
        }
        Ok(())
    }

    /// Euclidean distance from `y` to the output box.
    pub fn distance(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(&self.y_set)
            .map(|(v, (lo, hi))| if v < lo { lo - v } else if v > hi { v - hi } else { 0.0 })
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    /// `η (1 − exp(−dist(y, Y)/ρ))`, zero inside the set.
    pub fn barrier(&self, y: &[f64]) -> f64 {
        if self.eta == 0.0 {
            return 0.0;
        }
        let d = self.distance(y);
        if d == 0.0 {
            0.0
        } else {
            self.eta * (1.0 - (-d / self.rho).exp())
        }
    }
}

/// `‖y − y_r‖²_Q + ‖u − u_r‖²_R + barrier(y_barrier)`. The barrier is
/// evaluated at `y_barrier`, which differs from `y` when the prediction
/// carries an output correction.
pub fn stage_cost(
    y: &[f64],
    u: &[f64],
    y_r: &[f64],
    u_r: &[f64],
    y_barrier: &[f64],
    p: &StageCostParams,
) -> f64 {
    let track: f64 = y.iter().zip(y_r).zip(&p.q).map(|((v, r), q)| q * (v - r).powi(2)).sum();
    let effort: f64 = u.iter().zip(u_r).zip(&p.r).map(|((v, r), w)| w * (v - r).powi(2)).sum();
    track + effort + p.barrier(y_barrier)
}

/// Companion-form linearization of the one-step mean map around a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Central differences of every channel's mean with respect to the state
/// vector and the current input; lag rows are the exact shift structure.
pub fn linearize(models: &[NarxModel], x_r: &NarxState, u_r: &[f64], delta: f64) -> Result<Linearization> {
    if !(delta > 0.0) {
        return Err(Error::Domain { function: "linearize(delta)", x: delta });
    }
    let n_ch = x_r.outputs.len();
    if models.len() != n_ch {
        return Err(Error::Dimension(format!("{} models for {n_ch} channels", models.len())));
    }
    let n_a1 = x_r.n_a() + 1;
    let n_b = x_r.n_b();
    let n_u = u_r.len();
    let base = x_r.as_vector();
    let n_s = base.len();
    let mut a = DMatrix::zeros(n_s, n_s);
    let mut b = DMatrix::zeros(n_s, n_u);
    let mut z = Vec::new();
    let mean = |i: usize, s: &NarxState, u: &[f64], z: &mut Vec<f64>| {
        s.regressor_into(channel_of(&models[i], i), u, z);
        models[i].mean_unchecked(z)
    };
    let check = |v: f64, what: &str| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { context: format!("linearization: {what}") })
        }
    };
    let mut probe = base.clone();
    for j in 0..n_s {
        probe[j] = base[j] + delta;
        let plus = x_r.with_vector(&probe);
        probe[j] = base[j] - delta;
        let minus = x_r.with_vector(&probe);
        probe[j] = base[j];
        for c in 0..n_ch {
            let d = (mean(c, &plus, u_r, &mut z) - mean(c, &minus, u_r, &mut z)) / (2.0 * delta);
            a[(c * n_a1, j)] = check(d, "state derivative")?;
        }
    }
    let mut up = u_r.to_vec();
    for j in 0..n_u {
        up[j] = u_r[j] + delta;
        let plus: Vec<f64> = (0..n_ch).map(|c| mean(c, x_r, &up, &mut z)).collect();
        up[j] = u_r[j] - delta;
        let minus: Vec<f64> = (0..n_ch).map(|c| mean(c, x_r, &up, &mut z)).collect();
        up[j] = u_r[j];
        for c in 0..n_ch {
            b[(c * n_a1, j)] = check((plus[c] - minus[c]) / (2.0 * delta), "input derivative")?;
        }
    }
    // output lag shifts
    for c in 0..n_ch {
        for l in 1..n_a1 {
            a[(c * n_a1 + l, c * n_a1 + l - 1)] = 1.0;
        }
    }
    // input lag shifts: the newest lag is the applied input
    let off = n_ch * n_a1;
    for j in 0..n_u {
        for l in 0..n_b {
            let row = off + j * n_b + l;
            if l == 0 {
                b[(row, j)] = 1.0;
            } else {
                a[(row, row - 1)] = 1.0;
            }
        }
    }
    Ok(Linearization { a, b })
}

/// Terminal ingredients: `V_f(x) = λ (x − x_r)ᵀ P (x − x_r)` and
/// `κ_f(x) = u_r + K (x_r − x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDesign {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub lambda: f64,
    pub x_r: DVector<f64>,
    pub u_r: Vec<f64>,
    pub spectral_radius: f64,
}

impl TerminalDesign {
    pub fn cost(&self, x: &[f64]) -> f64 {
        let e = DVector::from_column_slice(x) - &self.x_r;
        self.lambda * (e.transpose() * &self.p * &e)[(0, 0)]
    }

    /// Terminal feedback, clamped to `[u_min, u_max]`.
    pub fn feedback(&self, x: &[f64], u_min: &[f64], u_max: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.u_r.len()];
        self.feedback_into(x, u_min, u_max, &mut out);
        out
    }

    pub(crate) fn feedback_into(&self, x: &[f64], u_min: &[f64], u_max: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut v = self.u_r[j];
            for (i, xi) in x.iter().enumerate() {
                v += self.k[(j, i)] * (self.x_r[i] - xi);
            }
            *o = v.clamp(u_min[j], u_max[j]);
        }
    }

    /// Design without a terminal penalty, for horizons that rely on the
    /// stage cost alone.
    pub fn none(x_r: &[f64], u_r: &[f64]) -> Self {
        let n = x_r.len();
        Self {
            p: DMatrix::zeros(n, n),
            k: DMatrix::zeros(u_r.len(), n),
            lambda: 1.0,
            x_r: DVector::from_column_slice(x_r),
            u_r: u_r.to_vec(),
            spectral_radius: f64::NAN,
        }
    }
}

/// LQR terminal design on a linearization.
pub fn terminal_design(
    lin: &Linearization,
    q_lqr: &DMatrix<f64>,
    r_lqr: &DMatrix<f64>,
    lambda: f64,
    x_r: &[f64],
    u_r: &[f64],
) -> Result<TerminalDesign> {
    if !(lambda >= 1.0) {
        return Err(Error::Config(format!("terminal scaling must be >= 1, got {lambda}")));
    }
    let sol = solve_dare(&lin.a, &lin.b, q_lqr, r_lqr)?;
    Ok(TerminalDesign {
        p: sol.p,
        k: sol.k,
        lambda,
        x_r: DVector::from_column_slice(x_r),
        u_r: u_r.to_vec(),
        spectral_radius: sol.spectral_radius,
    })
}

/// Stage output weights lifted to the companion state: `q[c]` on the
/// current-output slot of channel `c`, `lag_weight` on every other slot.
pub fn lift_output_weights(state: &NarxState, q: &[f64], lag_weight: f64) -> DMatrix<f64> {
    let n_a1 = state.n_a() + 1;
    let n_s = state.as_vector().len();
    let mut m = DMatrix::from_diagonal_element(n_s, n_s, lag_weight);
    for (c, w) in q.iter().enumerate() {
        m[(c * n_a1, c * n_a1)] = *w;
    }
    m
}

/// Inputs that make `y_r` a fixed point of the learned models plus the
/// per-step correction `offset`, found by Newton from `u_guess`.
pub fn steady_input(
    models: &[NarxModel],
    y_r: &[f64],
    offset: &[f64],
    n_a: usize,
    n_b: usize,
    u_guess: &[f64],
) -> Result<Vec<f64>> {
    if y_r.len() != u_guess.len() {
        return Err(Error::Dimension(format!(
            "{} outputs but {} inputs: the steady-input system is not square",
            y_r.len(),
            u_guess.len()
        )));
    }
    let g = |u: &[f64]| -> Vec<f64> {
        let s = NarxState::constant(n_a, n_b, y_r, u);
        let mut z = Vec::new();
        (0..models.len())
            .map(|i| {
                s.regressor_into(channel_of(&models[i], i), u, &mut z);
                models[i].mean_unchecked(&z) + offset.get(i).copied().unwrap_or(0.0) - y_r[i]
            })
            .collect()
    };
    newton_root(g, u_guess, NewtonOptions { tol: 1e-9, fd_delta: 1e-5, ..NewtonOptions::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{enumerate_terms, NarxConfig};

    #[test]
    fn stage_cost_zero_at_reference() {
        let p = StageCostParams::default();
        let y = [336.15, 343.15];
        let u = [0.5, 1.0];
        assert_eq!(stage_cost(&y, &u, &y, &u, &y, &p), 0.0);
    }

    #[test]
    fn barrier_values() {
        let p = StageCostParams::default();
        assert_eq!(p.barrier(&[330.0, 340.0]), 0.0);
        let at_rho = p.barrier(&[324.0, 340.0]);
        assert!((at_rho - 63.212_055_882_855_77).abs() < 1e-9);
        assert!((at_rho - 100.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((p.distance(&[322.0, 359.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_terminal_design() {
        let lin = Linearization { a: DMatrix::from_element(1, 1, 0.5), b: DMatrix::from_element(1, 1, 1.0) };
        let one = DMatrix::from_element(1, 1, 1.0);
        let t1 = terminal_design(&lin, &one, &one, 1.0, &[0.0], &[0.0]).unwrap();
        assert!((t1.p[(0, 0)] - 1.13278).abs() < 1e-5);
        assert!((t1.k[(0, 0)] - 0.26556).abs() < 1e-5);
        let t2 = terminal_design(&lin, &one, &one, 2.0, &[0.0], &[0.0]).unwrap();
        assert_eq!(t1.k, t2.k);
        assert!((t2.cost(&[1.5]) - 2.0 * t1.cost(&[1.5])).abs() < 1e-12);
        assert!(terminal_design(&lin, &one, &one, 0.5, &[0.0], &[0.0]).is_err());
    }

    fn ar_model(weights: &[f64], n_a: usize, n_b: usize) -> NarxModel {
        let cfg = NarxConfig { n_a, n_b, n_u: 1, n_y: 1, degree: 1, include_bias: false };
        NarxModel::from_weights(cfg, enumerate_terms(&cfg).unwrap(), weights, 1.0).unwrap()
    }

    #[test]
    fn linear_model_linearizes_exactly() {
        let m = ar_model(&[0.9, 0.0, 0.0, 0.0], 2, 0);
        let x = NarxState::constant(2, 0, &[3.0], &[0.0]);
        let lin = linearize(&[m], &x, &[0.0], 0.015).unwrap();
        assert!((lin.a[(0, 0)] - 0.9).abs() < 1e-12);
        assert!(lin.a[(0, 1)].abs() < 1e-12 && lin.a[(0, 2)].abs() < 1e-12);
        assert_eq!(lin.a[(1, 0)], 1.0);
        assert_eq!(lin.a[(2, 1)], 1.0);
        assert_eq!(lin.b[(1, 0)], 0.0);
        assert_eq!(lin.b[(2, 0)], 0.0);
    }

    #[test]
    fn input_lags_enter_the_companion_state() {
        // y' = 0.5 y + u + 2 u[k-1]
        let m = ar_model(&[0.5, 1.0, 2.0], 0, 1);
        let x = NarxState::constant(0, 1, &[0.0], &[0.0]);
        let lin = linearize(&[m], &x, &[0.0], 0.015).unwrap();
        let expect_a = DMatrix::from_row_slice(2, 2, &[0.5, 2.0, 0.0, 0.0]);
        let expect_b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!((lin.a - expect_a).abs().max() < 1e-12);
        assert!((lin.b - expect_b).abs().max() < 1e-12);
    }

    #[test]
    fn steady_input_of_first_order_model() {
        // y' = 0.8 y + 0.5 u  →  u* = 0.4 y* ; with offset d, u* = (0.2 y* − d)/0.5
        let m = ar_model(&[0.8, 0.5], 0, 0);
        let u = steady_input(std::slice::from_ref(&m), &[10.0], &[0.0], 0, 0, &[0.0]).unwrap();
        assert!((u[0] - 4.0).abs() < 1e-8);
        let u = steady_input(&[m], &[10.0], &[0.5], 0, 0, &[0.0]).unwrap();
        assert!((u[0] - 3.0).abs() < 1e-8);
    }
}
