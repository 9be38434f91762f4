use nalgebra::{DMatrix, DVector};

use super::Hyperpriors;
use crate::error::{Error, Result};
use crate::numerics::SpdFactor;

/// Gaussian factor over the weights together with the log-determinant of
/// its covariance.
#[derive(Debug, Clone)]
pub(crate) struct OmegaFactor {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub log_det_sigma: f64,
}

/// `Σ = (diag(E[α]) + E[β] ΦᵀΦ)⁻¹`, `μ = E[β] Σ Φᵀy` from precomputed
/// `ΦᵀΦ` and `Φᵀy`.
pub(crate) fn omega_factor(
    gram: &DMatrix<f64>,
    phi_t_y: &DVector<f64>,
    e_alpha: &[f64],
    e_beta: f64,
) -> Result<OmegaFactor> {
    let m = gram.nrows();
    if e_alpha.len() != m || phi_t_y.len() != m {
        return Err(Error::Dimension(format!(
            "weight update: {} columns, {} precisions, {} projections",
            m,
            e_alpha.len(),
            phi_t_y.len()
        )));
    }
    if let Some(bad) = e_alpha.iter().position(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::Inference {
            term: "update_omega".into(),
            detail: format!("E[alpha_{bad}] = {} is not a positive finite precision", e_alpha[bad]),
        });
    }
    if !(e_beta > 0.0) || !e_beta.is_finite() {
        return Err(Error::Inference {
            term: "update_omega".into(),
            detail: format!("E[beta] = {e_beta} is not a positive finite precision"),
        });
    }
    let mut precision = gram * e_beta;
    for (i, a) in e_alpha.iter().enumerate() {
        precision[(i, i)] += a;
    }
    let factor = SpdFactor::new(&precision).map_err(|e| Error::Inference {
        term: "update_omega".into(),
        detail: format!("weight precision: {e}"),
    })?;
    let mut sigma = factor.inverse();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let mu = &sigma * phi_t_y * e_beta;
    Ok(OmegaFactor { mu, sigma, log_det_sigma: -factor.log_det() })
}

/// Weight factor update: returns `(μ_ω, Σ_ω)`.
pub fn update_omega(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    e_alpha: &[f64],
    e_beta: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_rows(phi, y)?;
    let gram = phi.transpose() * phi;
    let proj = phi.transpose() * y;
    let f = omega_factor(&gram, &proj, e_alpha, e_beta)?;
    Ok((f.mu, f.sigma))
}

/// Per-coefficient precision update: `a_m = a0 + 1/2`, `b_m = b0 + E[ω_m²]/2`.
pub fn update_alpha(hyper: &Hyperpriors, e_omega_sq: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = vec![hyper.a0 + 0.5; e_omega_sq.len()];
    let b = e_omega_sq.iter().map(|s| hyper.b0 + 0.5 * s).collect();
    (a, b)
}

/// Single precision shared by all weights: `a = a0 + M/2`,
/// `b = b0 + Σ_m E[ω_m²]/2`, broadcast to every coefficient.
pub fn update_alpha_shared(hyper: &Hyperpriors, e_omega_sq: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = e_omega_sq.len();
    let a = hyper.a0 + 0.5 * m as f64;
    let b = hyper.b0 + 0.5 * e_omega_sq.iter().sum::<f64>();
    (vec![a; m], vec![b; m])
}

/// Noise precision update:
/// `c = c0 + N/2`,
/// `d = d0 + ½Σy² − E[ω]ᵀΦᵀy + ½ tr(ΦᵀΦ E[ωωᵀ])`.
///
/// The quadratic is evaluated as `½|y − Φμ|² + ½ tr(ΦᵀΦ (E[ωωᵀ] − μμᵀ))`,
/// which is the same quantity without the cancellation of the raw sums.
pub fn update_beta(
    hyper: &Hyperpriors,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    e_omega: &DVector<f64>,
    e_omega_outer: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    check_rows(phi, y)?;
    if e_omega.len() != phi.ncols() || e_omega_outer.shape() != (phi.ncols(), phi.ncols()) {
        return Err(Error::Dimension("noise update: moment shapes do not match the design".into()));
    }
    let n = phi.nrows() as f64;
    let residual = y - phi * e_omega;
    let spread = e_omega_outer - e_omega * e_omega.transpose();
    let phi_spread = phi * &spread;
    let trace: f64 = phi_spread.component_mul(phi).sum();
    noise_factor(hyper, n, residual.norm_squared(), trace)
}

/// `(c, d)` from the squared residual and `tr(ΦᵀΦ Σ)`.
pub(crate) fn noise_factor(hyper: &Hyperpriors, n: f64, resid_sq: f64, trace: f64) -> Result<(f64, f64)> {
    let c = hyper.c0 + 0.5 * n;
    let d = hyper.d0 + 0.5 * resid_sq + 0.5 * trace;
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Inference {
            term: "update_beta".into(),
            detail: format!(
                "rate d = {d:e} is not positive (residual {resid_sq:e}, weight spread {trace:e})"
            ),
        });
    }
    Ok((c, d))
}

fn check_rows(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if phi.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows but there are {} targets",
            phi.nrows(),
            y.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_hand_inverse() {
        let phi = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let (mu, sigma) = update_omega(&phi, &y, &[1.0, 1.0], 1.0).unwrap();
        assert!((sigma - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-15);
        assert!((mu[0] - 0.5).abs() < 1e-15 && (mu[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vanishing_noise_precision_leaves_the_prior() {
        let phi = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let (mu, _) = update_omega(&phi, &y, &[1.0, 1.0], 1e-12).unwrap();
        assert!(mu.abs().max() < 1e-11);
    }

    #[test]
    fn flat_prior_gives_the_sample_mean() {
        let phi = DMatrix::from_element(3, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let eps = 1e-9;
        let (mu, _) = update_omega(&phi, &y, &[eps], 1.0).unwrap();
        assert!((mu[0] - 3.0 * 2.0 / (eps + 3.0)).abs() < 1e-14);
        assert!((mu[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn alpha_update_substitution() {
        let h = Hyperpriors::default();
        let (a, b) = update_alpha(&h, &[0.0, 2.0]);
        assert!((a[0] - 0.50001).abs() < 1e-15 && (a[1] - 0.50001).abs() < 1e-15);
        assert!((b[0] - 1e-5).abs() < 1e-20);
        assert!((b[1] - 1.00001).abs() < 1e-15);
        assert!((a[0] / b[0] - 5.0001e4).abs() < 1e-6);
    }

    #[test]
    fn shared_alpha_counts_every_coefficient() {
        let h = Hyperpriors::default();
        let (a, b) = update_alpha_shared(&h, &[1.0, 3.0]);
        assert_eq!(a, vec![h.a0 + 1.0; 2]);
        assert_eq!(b, vec![h.b0 + 2.0; 2]);
    }

    #[test]
    fn beta_update_cases() {
        let h = Hyperpriors::default();
        // no data
        let (c, d) = update_beta(
            &h,
            &DMatrix::zeros(0, 1),
            &DVector::zeros(0),
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_eq!((c, d), (h.c0, h.d0));

        // perfect fit: ½·2 − 2 + ½·2 = 0
        let mu = DVector::from_vec(vec![1.0, 1.0]);
        let outer = &mu * mu.transpose();
        let (c, d) =
            update_beta(&h, &DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 1.0]), &mu, &outer).unwrap();
        assert!((c - (h.c0 + 1.0)).abs() < 1e-15);
        assert!((d - h.d0).abs() < 1e-15);

        // pure residual
        let (_, d) = update_beta(
            &h,
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_vec(vec![1.0]),
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!((d - (h.d0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn non_positive_rate_is_reported() {
        let h = Hyperpriors { d0: -1.0, ..Hyperpriors::default() };
        let err = noise_factor(&h, 1.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Inference { ref term, .. } if term == "update_beta"));
    }
}
