//! Fitted NARX models: one-step Student-t predictions and certainty-equivalent
//! multi-step rollouts.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dictionary::{
    enumerate_terms_capped, BasisTerm, DesignMatrix, NarxConfig, RegressorSet, Scaling, Standardizer,
};
use crate::error::{Error, Result};
use crate::nsvb::{fit, AlphaMode, FitOptions, FitReport, Hyperpriors, Posterior};
use crate::numerics::log_gamma;

/// Student-t predictive distribution of the next output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDist {
    pub mean: f64,
    /// `(1 + ΦᵀΣΦ)⁻¹ c/d`
    pub precision: f64,
    /// `2c`
    pub dof: f64,
}

impl PredictiveDist {
    /// Finite only for more than two degrees of freedom.
    pub fn variance(&self) -> Result<f64> {
        if self.dof > 2.0 {
            Ok(self.dof / (self.dof - 2.0) / self.precision)
        } else {
            Err(Error::UndefinedVariance { c: self.dof / 2.0 })
        }
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        let nu = self.dof;
        let lg = |x: f64| log_gamma(x).unwrap_or(f64::NAN);
        lg(0.5 * (nu + 1.0)) - lg(0.5 * nu) + 0.5 * (self.precision / (PI * nu)).ln()
            - 0.5 * (nu + 1.0) * (1.0 + self.precision * (y - self.mean).powi(2) / nu).ln()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    /// Central interval holding `level` of the probability mass.
    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        let dist = StudentsT::new(self.mean, 1.0 / self.precision.sqrt(), self.dof)
            .map_err(|e| Error::InvalidData(format!("student-t parameters: {e}")))?;
        let tail = 0.5 * (1.0 - level);
        Ok((dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFitOptions {
    pub fit: FitOptions,
    pub scaling: Scaling,
    pub max_terms: usize,
}

impl Default for ModelFitOptions {
    fn default() -> Self {
        Self { fit: FitOptions::default(), scaling: Scaling::Affine, max_terms: crate::dictionary::DEFAULT_MAX_TERMS }
    }
}

/// Single-output NARX model with a fitted variational posterior over the
/// weights of its surviving basis terms.
#[derive(Debug, Clone)]
pub struct NarxModel {
    pub config: NarxConfig,
    pub terms: Vec<BasisTerm>,
    pub scaler: Standardizer,
    pub hyper: Hyperpriors,
    pub posterior: Posterior,
    pub elbo_trace: Vec<f64>,
    compiled: Vec<Vec<(usize, i32)>>,
}

fn compile(terms: &[BasisTerm]) -> Vec<Vec<(usize, i32)>> {
    terms
        .iter()
        .map(|t| t.exponents.iter().enumerate().filter(|(_, e)| **e > 0).map(|(j, e)| (j, *e as i32)).collect())
        .collect()
}

impl NarxModel {
    pub fn new(
        config: NarxConfig,
        terms: Vec<BasisTerm>,
        scaler: Standardizer,
        hyper: Hyperpriors,
        posterior: Posterior,
        elbo_trace: Vec<f64>,
    ) -> Result<Self> {
        if terms.len() != posterior.len() {
            return Err(Error::Dimension(format!(
                "{} terms but {} posterior weights",
                terms.len(),
                posterior.len()
            )));
        }
        if scaler.mean.len() != config.n_z() || terms.iter().any(|t| t.exponents.len() != config.n_z()) {
            return Err(Error::Dimension("terms or standardization do not match the regressor length".into()));
        }
        let compiled = compile(&terms);
        Ok(Self { config, terms, scaler, hyper, posterior, elbo_trace, compiled })
    }

    /// Deterministic model with known weights over raw (unstandardized)
    /// regressors; the posterior is a point mass and the noise precision is
    /// `noise_precision` with effectively infinite degrees of freedom.
    pub fn from_weights(config: NarxConfig, terms: Vec<BasisTerm>, weights: &[f64], noise_precision: f64) -> Result<Self> {
        let m = weights.len();
        let c = 1e9;
        let posterior = Posterior {
            mu_omega: DVector::from_column_slice(weights),
            sigma_omega: DMatrix::zeros(m, m),
            a: DVector::from_element(m, 1.0),
            b: DVector::from_element(m, 1.0),
            c,
            d: c / noise_precision,
            alpha_mode: AlphaMode::Fixed,
        };
        Self::new(config, terms, Standardizer::identity(config.n_z()), Hyperpriors::default(), posterior, Vec::new())
    }

    /// Builds the dictionary for `config`, fits it on `data` and keeps the
    /// surviving terms.
    pub fn fit(
        data: &RegressorSet,
        config: NarxConfig,
        hyper: &Hyperpriors,
        opts: &ModelFitOptions,
    ) -> Result<(Self, FitReport)> {
        if data.targets.is_empty() {
            return Err(Error::InvalidData("no training pairs".into()));
        }
        let all_terms = enumerate_terms_capped(&config, opts.max_terms)?;
        let scaler = Standardizer::fit_with(&data.regressors, opts.scaling)?;
        let scaled: Vec<Vec<f64>> = data.regressors.iter().map(|z| scaler.apply(z)).collect();
        let design = DesignMatrix::build(&scaled, &all_terms)?;
        let y = DVector::from_column_slice(&data.targets);
        let (posterior, report) = fit(&design.values, &y, hyper, &opts.fit)?;
        let terms = report.active_terms.iter().map(|&i| all_terms[i].clone()).collect();
        let model = Self::new(config, terms, scaler, *hyper, posterior, report.elbo_trace.clone())?;
        Ok((model, report))
    }

    /// Basis row `Φ(z)` after standardization.
    pub fn features(&self, z: &[f64]) -> Vec<f64> {
        let mut scaled = vec![0.0; z.len()];
        self.scaler.apply_into(z, &mut scaled);
        self.compiled
            .iter()
            .map(|factors| factors.iter().map(|&(j, e)| scaled[j].powi(e)).product())
            .collect()
    }

    /// `μ_ωᵀ Φ(z)`; no validation, for inner loops.
    pub fn mean_unchecked(&self, z: &[f64]) -> f64 {
        let mut buf = [0.0; 32];
        let mut heap;
        let scaled: &mut [f64] = if z.len() <= buf.len() {
            &mut buf[..z.len()]
        } else {
            heap = vec![0.0; z.len()];
            &mut heap
        };
        self.scaler.apply_into(z, scaled);
        let mut acc = 0.0;
        for (factors, w) in self.compiled.iter().zip(self.posterior.mu_omega.iter()) {
            let mut v = *w;
            for &(j, e) in factors {
                v *= if e == 1 { scaled[j] } else { scaled[j].powi(e) };
            }
            acc += v;
        }
        acc
    }

    pub fn mean(&self, z: &[f64]) -> Result<f64> {
        self.check_regressor(z)?;
        let m = self.mean_unchecked(z);
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::NonFinite { context: "predictive mean".into() })
        }
    }

    /// `ΦᵀΣ_ωΦ`, the weight-uncertainty factor of the predictive spread.
    pub fn weight_spread(&self, z: &[f64]) -> Result<f64> {
        self.check_regressor(z)?;
        let phi = DVector::from_vec(self.features(z));
        Ok((phi.transpose() * &self.posterior.sigma_omega * &phi)[(0, 0)])
    }

    pub fn predictive(&self, z: &[f64]) -> Result<PredictiveDist> {
        let mean = self.mean(z)?;
        let spread = self.weight_spread(z)?;
        Ok(PredictiveDist {
            mean,
            precision: self.posterior.e_beta() / (1.0 + spread),
            dof: 2.0 * self.posterior.c,
        })
    }

    fn check_regressor(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.config.n_z() {
            return Err(Error::Dimension(format!("regressor has {} entries, expected {}", z.len(), self.config.n_z())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "regressor".into() });
        }
        Ok(())
    }

    /// Posterior-mean polynomial re-expressed over raw regressor entries,
    /// one entry per monomial with a non-zero coefficient.
    pub fn raw_polynomial(&self) -> Vec<(BasisTerm, f64)> {
        let names = self.config.regressor_names();
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (term, w) in self.terms.iter().zip(self.posterior.mu_omega.iter()) {
            // expand Π_j ((z_j - m_j) / s_j)^e_j one factor at a time
            let mut partial: BTreeMap<Vec<u32>, f64> = BTreeMap::from([(vec![0; names.len()], *w)]);
            for (j, &e) in term.exponents.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (m, sc) = (self.scaler.mean[j], self.scaler.scale[j]);
                let mut next = BTreeMap::new();
                for (exps, c) in &partial {
                    for k in 0..=e {
                        let coef = c * binomial(e, k) * (-m).powi((e - k) as i32) / sc.powi(e as i32);
                        if coef != 0.0 {
                            let mut ex = exps.clone();
                            ex[j] += k;
                            *next.entry(ex).or_insert(0.0) += coef;
                        }
                    }
                }
                partial = next;
            }
            for (exps, c) in partial {
                *acc.entry(exps).or_insert(0.0) += c;
            }
        }
        let mut out: Vec<(BasisTerm, f64)> = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exps, c)| (BasisTerm::new(exps, &names), c))
            .collect();
        out.sort_by(|(a, _), (b, _)| a.degree().cmp(&b.degree()).then_with(|| b.exponents.cmp(&a.exponents)));
        out
    }

    pub fn to_document(&self, output: &str) -> ModelDocument {
        let s = &self.posterior.sigma_omega;
        ModelDocument {
            output: output.to_string(),
            config: self.config,
            hyperpriors: self.hyper,
            terms: self.terms.clone(),
            standardization: self.scaler.clone(),
            mu_omega: self.posterior.mu_omega.iter().copied().collect(),
            sigma_omega: (0..s.nrows()).map(|r| s.row(r).iter().copied().collect()).collect(),
            a: self.posterior.a.iter().copied().collect(),
            b: self.posterior.b.iter().copied().collect(),
            c: self.posterior.c,
            d: self.posterior.d,
            alpha_mode: self.posterior.alpha_mode,
            elbo_trace: self.elbo_trace.clone(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let m = doc.mu_omega.len();
        if doc.sigma_omega.len() != m || doc.sigma_omega.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("sigma_omega must be a square matrix matching mu_omega".into()));
        }
        let posterior = Posterior {
            mu_omega: DVector::from_column_slice(&doc.mu_omega),
            sigma_omega: DMatrix::from_fn(m, m, |r, c| doc.sigma_omega[r][c]),
            a: DVector::from_column_slice(&doc.a),
            b: DVector::from_column_slice(&doc.b),
            c: doc.c,
            d: doc.d,
            alpha_mode: doc.alpha_mode,
        };
        Self::new(doc.config, doc.terms.clone(), doc.standardization.clone(), doc.hyperpriors, posterior, doc.elbo_trace.clone())
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Serialized form of a fitted model; `sigma_omega` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub output: String,
    pub config: NarxConfig,
    pub hyperpriors: Hyperpriors,
    pub terms: Vec<BasisTerm>,
    pub standardization: Standardizer,
    pub mu_omega: Vec<f64>,
    pub sigma_omega: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub d: f64,
    pub alpha_mode: AlphaMode,
    pub elbo_trace: Vec<f64>,
}

/// Lag buffers of a system with one or more output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxState {
    /// Per output channel: `y_k, y_{k-1}, .., y_{k-n_a}`.
    pub outputs: Vec<Vec<f64>>,
    /// Per input channel: `u_{k-1}, .., u_{k-n_b}`.
    pub inputs: Vec<Vec<f64>>,
}

impl NarxState {
    /// State that has seen `y` and `u` for its whole history.
    pub fn constant(n_a: usize, n_b: usize, y: &[f64], u: &[f64]) -> Self {
        Self {
            outputs: y.iter().map(|v| vec![*v; n_a + 1]).collect(),
            inputs: u.iter().map(|v| vec![*v; n_b]).collect(),
        }
    }

    /// Builds the buffers from the most recent samples, oldest first:
    /// `y_hist[c]` ends with `y_k`, `u_hist[c]` ends with `u_{k-1}`.
    pub fn from_history(n_a: usize, n_b: usize, y_hist: &[Vec<f64>], u_hist: &[Vec<f64>]) -> Result<Self> {
        let take = |series: &Vec<f64>, n: usize| -> Result<Vec<f64>> {
            if series.len() < n {
                return Err(Error::SeriesTooShort { len: series.len(), required: n });
            }
            Ok(series.iter().rev().take(n).copied().collect())
        };
        Ok(Self {
            outputs: y_hist.iter().map(|s| take(s, n_a + 1)).collect::<Result<_>>()?,
            inputs: u_hist.iter().map(|s| take(s, n_b)).collect::<Result<_>>()?,
        })
    }

    pub fn n_a(&self) -> usize {
        self.outputs.first().map_or(0, |o| o.len().saturating_sub(1))
    }

    pub fn n_b(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn current_outputs(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o[0]).collect()
    }

    /// Regressor for the candidate current input `u_now`, using only output
    /// channel `channel` or, with `None`, every channel.
    pub fn regressor(&self, channel: Option<usize>, u_now: &[f64]) -> Vec<f64> {
        let mut z = Vec::new();
        self.regressor_into(channel, u_now, &mut z);
        z
    }

    pub fn regressor_into(&self, channel: Option<usize>, u_now: &[f64], z: &mut Vec<f64>) {
        z.clear();
        match channel {
            Some(c) => z.extend_from_slice(&self.outputs[c]),
            None => self.outputs.iter().for_each(|o| z.extend_from_slice(o)),
        }
        for (c, lags) in self.inputs.iter().enumerate() {
            z.push(u_now[c]);
            z.extend_from_slice(lags);
        }
    }

    /// Pushes the new outputs and the input that produced them, dropping the
    /// oldest entries.
    pub fn shift(&self, y_new: &[f64], u_applied: &[f64]) -> Self {
        let mut next = self.clone();
        next.shift_in_place(y_new, u_applied);
        next
    }

    pub fn shift_in_place(&mut self, y_new: &[f64], u_applied: &[f64]) {
        for (lags, y) in self.outputs.iter_mut().zip(y_new) {
            lags.rotate_right(1);
            lags[0] = *y;
        }
        for (lags, u) in self.inputs.iter_mut().zip(u_applied) {
            if !lags.is_empty() {
                lags.rotate_right(1);
                lags[0] = *u;
            }
        }
    }

    /// Companion-form state vector: output lags per channel, then input lags.
    pub fn as_vector(&self) -> Vec<f64> {
        self.outputs.iter().chain(&self.inputs).flatten().copied().collect()
    }

    /// Inverse of [`as_vector`](Self::as_vector) for a state of the same shape.
    pub fn with_vector(&self, v: &[f64]) -> Self {
        let mut next = self.clone();
        let mut it = v.iter();
        for lags in next.outputs.iter_mut().chain(next.inputs.iter_mut()) {
            for x in lags.iter_mut() {
                *x = *it.next().expect("vector length matches the state");
            }
        }
        next
    }
}

/// Output channels predicted jointly: model `i` predicts channel `i` from
/// either its own lags (`n_y = 1`) or the lags of every channel.
fn check_models(models: &[NarxModel], state: &NarxState, n_u: usize) -> Result<()> {
    if models.len() != state.outputs.len() {
        return Err(Error::Dimension(format!(
            "{} models for {} output channels",
            models.len(),
            state.outputs.len()
        )));
    }
    for m in models {
        let cfg = &m.config;
        if cfg.n_a != state.n_a() || cfg.n_b != state.n_b() || cfg.n_u != n_u || cfg.n_u != state.inputs.len() {
            return Err(Error::Dimension("model lag orders or input count differ from the state".into()));
        }
        if cfg.n_y != 1 && cfg.n_y != models.len() {
            return Err(Error::Dimension(format!("model regresses on {} outputs, system has {}", cfg.n_y, models.len())));
        }
    }
    Ok(())
}

pub(crate) fn channel_of(model: &NarxModel, i: usize) -> Option<usize> {
    (model.config.n_y == 1).then_some(i)
}

/// Mean trajectory of a model set under one input plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `outputs[j][i]`: prediction of channel `i` for step `j + 1`.
    pub outputs: Vec<Vec<f64>>,
    /// `states[j]`: lag buffers after `j` steps; `states[0]` is the start.
    pub states: Vec<NarxState>,
}

/// One-step means of every channel for the current input `u`.
pub fn predict_means(models: &[NarxModel], state: &NarxState, u: &[f64]) -> Result<Vec<f64>> {
    check_models(models, state, u.len())?;
    let mut z = Vec::new();
    let mut ys = vec![0.0; models.len()];
    if !step_means(models, state, u, &mut z, &mut ys) {
        return Err(Error::Rollout { step: 0 });
    }
    Ok(ys)
}

/// Propagates the predictive means `horizon` steps ahead with the noise
/// term set to zero.
pub fn rollout_mean(models: &[NarxModel], state: &NarxState, u_plan: &[Vec<f64>], horizon: usize) -> Result<Rollout> {
    if u_plan.len() < horizon {
        return Err(Error::Dimension(format!("input plan has {} steps, horizon is {horizon}", u_plan.len())));
    }
    check_models(models, state, u_plan.first().map_or(state.inputs.len(), Vec::len))?;
    let mut current = state.clone();
    let mut out = Rollout { outputs: Vec::with_capacity(horizon), states: vec![current.clone()] };
    let mut z = Vec::new();
    for (step, u) in u_plan.iter().take(horizon).enumerate() {
        let mut ys = vec![0.0; models.len()];
        if !step_means(models, &current, u, &mut z, &mut ys) {
            return Err(Error::Rollout { step });
        }
        current.shift_in_place(&ys, u);
        out.outputs.push(ys);
        out.states.push(current.clone());
    }
    Ok(out)
}

/// Fills `ys` with the one-step means; false if any is not finite. Shapes
/// are assumed checked.
pub(crate) fn step_means(models: &[NarxModel], state: &NarxState, u: &[f64], z: &mut Vec<f64>, ys: &mut [f64]) -> bool {
    for (i, (model, y)) in models.iter().zip(ys.iter_mut()).enumerate() {
        state.regressor_into(channel_of(model, i), u, z);
        *y = model.mean_unchecked(z);
        if !y.is_finite() {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::enumerate_terms;

    fn linear_cfg(n_a: usize) -> NarxConfig {
        NarxConfig { n_a, n_b: 0, n_u: 1, n_y: 1, degree: 1, include_bias: false }
    }

    fn linear_model(n_a: usize, weights: &[f64]) -> NarxModel {
        let cfg = linear_cfg(n_a);
        NarxModel::from_weights(cfg, enumerate_terms(&cfg).unwrap(), weights, 1.0).unwrap()
    }

    #[test]
    fn point_mass_weights_variance() {
        let mut m = linear_model(0, &[1.0, 0.0]);
        m.posterior.c = 3.0;
        m.posterior.d = 0.75;
        let p = m.predictive(&[1.0, 0.0]).unwrap();
        assert!((p.precision - 4.0).abs() < 1e-12);
        assert!((p.variance().unwrap() - 0.375).abs() < 1e-12);
        m.posterior.c = 1.0;
        assert!(matches!(m.predictive(&[1.0, 0.0]).unwrap().variance(), Err(Error::UndefinedVariance { .. })));
    }

    #[test]
    fn large_dof_density_is_gaussian() {
        let p = PredictiveDist { mean: 1.5, precision: 2.0, dof: 2e9 };
        let gauss = (2.0 / (2.0 * PI)).sqrt();
        assert!((p.pdf(1.5) / gauss - 1.0).abs() < 1e-6);
    }

    #[test]
    fn interval_is_symmetric_and_widens_with_level() {
        let p = PredictiveDist { mean: 3.0, precision: 4.0, dof: 10.0 };
        let (lo, hi) = p.interval(0.9).unwrap();
        assert!((3.0 - lo - (hi - 3.0)).abs() < 1e-9);
        let (lo2, hi2) = p.interval(0.99).unwrap();
        assert!(lo2 < lo && hi2 > hi);
    }

    #[test]
    fn raw_polynomial_undoes_standardization() {
        let cfg = NarxConfig { n_a: 0, n_b: 0, n_u: 1, n_y: 1, degree: 2, include_bias: true };
        let terms = enumerate_terms(&cfg).unwrap();
        let mut m = NarxModel::from_weights(cfg, terms, &[0.3, -1.0, 2.0, 0.5, 0.25, -0.75], 1.0).unwrap();
        m.scaler = Standardizer { mean: vec![2.0, -1.0], scale: vec![0.5, 3.0] };
        let raw = m.raw_polynomial();
        for z in [[0.0, 0.0], [1.5, -2.0], [3.0, 4.0]] {
            let direct = m.mean(&z).unwrap();
            let via_raw: f64 = raw.iter().map(|(t, c)| c * t.eval(&z)).sum();
            assert!((direct - via_raw).abs() < 1e-10 * direct.abs().max(1.0), "{direct} vs {via_raw}");
        }
    }

    #[test]
    fn shift_is_fifo() {
        let s = NarxState { outputs: vec![vec![3.0, 2.0, 1.0]], inputs: vec![vec![]] };
        assert_eq!(s.shift(&[4.0], &[0.0]).outputs, vec![vec![4.0, 3.0, 2.0]]);
        let s = NarxState { outputs: vec![vec![1.0, 0.0]], inputs: vec![vec![5.0, 6.0]] };
        let t = s.shift(&[2.0], &[7.0]);
        assert_eq!(t.inputs, vec![vec![7.0, 5.0]]);
    }

    #[test]
    fn constant_shifting_saturates() {
        let cfg = NarxConfig { n_a: 2, n_b: 1, n_u: 1, n_y: 1, degree: 1, include_bias: true };
        let mut s = NarxState { outputs: vec![vec![1.0, 2.0, 3.0]], inputs: vec![vec![9.0]] };
        for _ in 0..cfg.max_lag() + 1 {
            s = s.shift(&[5.0], &[0.5]);
        }
        assert_eq!(s, NarxState::constant(2, 1, &[5.0], &[0.5]));
    }

    #[test]
    fn history_and_vector_round_trip() {
        let s = NarxState::from_history(1, 2, &[vec![0.0, 1.0, 2.0], vec![5.0, 6.0]], &[vec![7.0, 8.0, 9.0]]).unwrap();
        assert_eq!(s.outputs, vec![vec![2.0, 1.0], vec![6.0, 5.0]]);
        assert_eq!(s.inputs, vec![vec![9.0, 8.0]]);
        let v = s.as_vector();
        assert_eq!(v, vec![2.0, 1.0, 6.0, 5.0, 9.0, 8.0]);
        assert_eq!(s.with_vector(&v), s);
        assert_eq!(s.regressor(None, &[3.0]), vec![2.0, 1.0, 6.0, 5.0, 3.0, 9.0, 8.0]);
        assert_eq!(s.regressor(Some(1), &[3.0]), vec![6.0, 5.0, 3.0, 9.0, 8.0]);
        assert!(NarxState::from_history(3, 0, &[vec![1.0]], &[vec![]]).is_err());
    }

    #[test]
    fn regressor_layout_matches_training_pairs() {
        let cfg = NarxConfig { n_a: 1, n_b: 1, n_u: 1, n_y: 2, degree: 1, include_bias: false };
        let y = vec![vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]];
        let u = vec![vec![0.1, 0.2, 0.3, 0.4]];
        let set = crate::dictionary::build_regressors(&y, &u, &cfg, 0).unwrap();
        let k = *set.times.last().unwrap();
        let hist_y: Vec<Vec<f64>> = y.iter().map(|c| c[..=k].to_vec()).collect();
        let hist_u: Vec<Vec<f64>> = u.iter().map(|c| c[..k].to_vec()).collect();
        let s = NarxState::from_history(1, 1, &hist_y, &hist_u).unwrap();
        assert_eq!(&s.regressor(None, &[u[0][k]]), set.regressors.last().unwrap());
    }

    #[test]
    fn identity_model_holds_any_constant() {
        let m = linear_model(0, &[1.0, 0.0]);
        let state = NarxState::constant(0, 0, &[7.25], &[0.0]);
        let r = rollout_mean(&[m], &state, &vec![vec![3.0]; 10], 10).unwrap();
        assert!(r.outputs.iter().all(|y| y[0] == 7.25));
    }

    #[test]
    fn geometric_decay() {
        let m = linear_model(0, &[0.5, 0.0]);
        let state = NarxState::constant(0, 0, &[8.0], &[0.0]);
        let r = rollout_mean(&[m], &state, &vec![vec![0.0]; 3], 3).unwrap();
        let ys: Vec<f64> = r.outputs.iter().map(|y| y[0]).collect();
        assert_eq!(ys, vec![4.0, 2.0, 1.0]);
        assert_eq!(r.states.len(), 4);
    }

    #[test]
    fn coupled_channels() {
        // y1' = y2, y2' = u : a two-step delay chain
        let cfg = NarxConfig { n_a: 0, n_b: 0, n_u: 1, n_y: 2, degree: 1, include_bias: false };
        let terms = enumerate_terms(&cfg).unwrap();
        let m1 = NarxModel::from_weights(cfg, terms.clone(), &[0.0, 1.0, 0.0], 1.0).unwrap();
        let m2 = NarxModel::from_weights(cfg, terms, &[0.0, 0.0, 1.0], 1.0).unwrap();
        let state = NarxState::constant(0, 0, &[0.0, 0.0], &[0.0]);
        let r = rollout_mean(&[m1, m2], &state, &[vec![1.0], vec![2.0], vec![3.0]], 3).unwrap();
        assert_eq!(r.outputs, vec![vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn rollout_blow_up_reports_step() {
        let m = linear_model(0, &[1e200, 0.0]);
        let state = NarxState::constant(0, 0, &[1e200], &[0.0]);
        let err = rollout_mean(&[m], &state, &vec![vec![0.0]; 3], 3).unwrap_err();
        assert_eq!(err, Error::Rollout { step: 0 });
    }

    #[test]
    fn short_plan_is_rejected() {
        let m = linear_model(0, &[0.5, 0.0]);
        let state = NarxState::constant(0, 0, &[1.0], &[0.0]);
        assert!(rollout_mean(&[m], &state, &[vec![0.0]], 2).is_err());
    }
}
