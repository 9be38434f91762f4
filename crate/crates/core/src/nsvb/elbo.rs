use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{moments, AlphaMode, Hyperpriors, Moments, Posterior};
use crate::error::{Error, Result};
use crate::numerics::{digamma, log_gamma, SpdFactor};

/// The seven expectations making up the evidence lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    /// `E[ln p(y | ω, β)]`
    pub likelihood: f64,
    /// `E[ln p(ω | α)]`
    pub weight_prior: f64,
    /// `E[ln p(α)]`
    pub alpha_prior: f64,
    /// `E[ln p(β)]`
    pub beta_prior: f64,
    /// `-E[ln Q(ω)]`
    pub weight_entropy: f64,
    /// `-E[ln Q(α)]`
    pub alpha_entropy: f64,
    /// `-E[ln Q(β)]`
    pub beta_entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.weight_prior
            + self.alpha_prior
            + self.beta_prior
            + self.weight_entropy
            + self.alpha_entropy
            + self.beta_entropy
    }

    fn check(self) -> Result<Self> {
        let named = [
            ("E[ln p(y|w,beta)]", self.likelihood),
            ("E[ln p(w|alpha)]", self.weight_prior),
            ("E[ln p(alpha)]", self.alpha_prior),
            ("E[ln p(beta)]", self.beta_prior),
            ("-E[ln Q(w)]", self.weight_entropy),
            ("-E[ln Q(alpha)]", self.alpha_entropy),
            ("-E[ln Q(beta)]", self.beta_entropy),
        ];
        match named.iter().find(|(_, v)| !v.is_finite()) {
            Some((term, v)) => Err(Error::Inference {
                term: (*term).to_string(),
                detail: format!("ELBO term evaluated to {v}"),
            }),
            None => Ok(self),
        }
    }
}

/// Evidence lower bound `L(Q) = E[ln p(y, ω, α, β)] − E[ln Q(ω, α, β)]`.
pub fn elbo(phi: &DMatrix<f64>, y: &DVector<f64>, posterior: &Posterior, hyper: &Hyperpriors) -> Result<f64> {
    Ok(elbo_terms(phi, y, posterior, hyper)?.total())
}

pub fn elbo_terms(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    posterior: &Posterior,
    hyper: &Hyperpriors,
) -> Result<ElboTerms> {
    if phi.nrows() != y.len() || phi.ncols() != posterior.len() {
        return Err(Error::Dimension("ELBO: design, targets and posterior disagree".into()));
    }
    let residual = y - phi * &posterior.mu_omega;
    let trace = (phi * &posterior.sigma_omega).component_mul(phi).sum();
    let log_det_sigma = if posterior.is_empty() {
        0.0
    } else {
        SpdFactor::new(&posterior.sigma_omega)
            .map_err(|e| Error::Inference { term: "-E[ln Q(w)]".into(), detail: e.to_string() })?
            .log_det()
    };
    let m = moments(posterior)?;
    elbo_from_parts(
        phi.nrows() as f64,
        residual.norm_squared() + trace,
        log_det_sigma,
        posterior,
        &m,
        hyper,
    )
}

/// Assembles the bound from the expected squared error
/// `E|y − Φω|² = |y − Φμ|² + tr(ΦᵀΦΣ)` and `ln|Σ|`.
pub(crate) fn elbo_from_parts(
    n: f64,
    expected_sq_error: f64,
    log_det_sigma: f64,
    post: &Posterior,
    mo: &Moments,
    hyper: &Hyperpriors,
) -> Result<ElboTerms> {
    let ln_2pi = (2.0 * PI).ln();
    let m = post.len() as f64;

    let likelihood = 0.5 * n * (mo.e_ln_beta - ln_2pi) - 0.5 * mo.e_beta * expected_sq_error;

    let mut weight_prior = -0.5 * m * ln_2pi;
    for i in 0..post.len() {
        let e_sq = mo.e_omega_outer[(i, i)];
        weight_prior += 0.5 * mo.e_ln_alpha[i] - 0.5 * mo.e_alpha[i] * e_sq;
    }

    let gamma_prior = |shape0: f64, rate0: f64, e_x: f64, e_ln_x: f64| -> Result<f64> {
        Ok(shape0 * rate0.ln() - log_gamma(shape0)? + (shape0 - 1.0) * e_ln_x - rate0 * e_x)
    };
    let gamma_entropy = |shape: f64, rate: f64| -> Result<f64> {
        Ok(log_gamma(shape)? - (shape - 1.0) * digamma(shape)? - rate.ln() + shape)
    };

    let (alpha_prior, alpha_entropy) = match post.alpha_mode {
        AlphaMode::PerCoefficient => {
            let mut prior = 0.0;
            let mut entropy = 0.0;
            for i in 0..post.len() {
                prior += gamma_prior(hyper.a0, hyper.b0, mo.e_alpha[i], mo.e_ln_alpha[i])?;
                entropy += gamma_entropy(post.a[i], post.b[i])?;
            }
            (prior, entropy)
        }
        AlphaMode::Shared if !post.is_empty() => (
            gamma_prior(hyper.a0, hyper.b0, mo.e_alpha[0], mo.e_ln_alpha[0])?,
            gamma_entropy(post.a[0], post.b[0])?,
        ),
        AlphaMode::Shared | AlphaMode::Fixed => (0.0, 0.0),
    };

    let beta_prior = gamma_prior(hyper.c0, hyper.d0, mo.e_beta, mo.e_ln_beta)?;
    let beta_entropy = gamma_entropy(post.c, post.d)?;
    let weight_entropy = 0.5 * log_det_sigma + 0.5 * m * (1.0 + ln_2pi);

    ElboTerms {
        likelihood,
        weight_prior,
        alpha_prior,
        beta_prior,
        weight_entropy,
        alpha_entropy,
        beta_entropy,
    }
    .check()
}
