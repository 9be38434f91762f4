use nalgebra::DMatrix;

use super::linalg::{spectral_radius, SpdFactor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions {
    /// Stop when `max|P_{k+1} - P_k| <= tol * max(1, max|P_{k+1}|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct DareSolution {
    /// Stabilizing solution of the Riccati equation.
    pub p: DMatrix<f64>,
    /// Feedback gain, `u = -K x`.
    pub k: DMatrix<f64>,
    pub iterations: usize,
    pub spectral_radius: f64,
}

/// Discrete algebraic Riccati equation by fixed-point iteration of the
/// Riccati recursion, starting from `P = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    solve_dare_with(a, b, q, r, DareOptions::default())
}

pub fn solve_dare_with(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<DareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "DARE shapes: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let bt = b.transpose();

    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let (next, _) = riccati_map(a, b, &bt, q, r, &p)?;
        residual = (&next - &p).abs().max();
        let scale = next.abs().max().max(1.0);
        if !residual.is_finite() {
            break;
        }
        p = next;
        if residual <= opts.tol * scale {
            // symmetrize against round-off drift
            p = (&p + p.transpose()) * 0.5;
            let (_, k) = riccati_map(a, b, &bt, q, r, &p)?;
            let rho = spectral_radius(&(a - b * &k));
            if !(rho < 1.0) {
                return Err(Error::UnstableClosedLoop { spectral_radius: rho });
            }
            return Ok(DareSolution { p, k, iterations: iter, spectral_radius: rho });
        }
    }
    Err(Error::Unstabilizable { iterations: opts.max_iter, residual })
}

/// One Riccati step; returns `(Q + K'RK + (A-BK)'P(A-BK), K)` with
/// `K = (R + B'PB)^-1 B'PA`. Equal to `Q + A'PA - A'PB K` in exact
/// arithmetic, but a sum of PSD terms, so `P` stays symmetric PSD.
fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    bt: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pa = p * a;
    let gram = r + bt * p * b;
    let k = SpdFactor::new(&gram)?.solve_matrix(&(bt * &pa));
    let closed = a - b * &k;
    let next = q + k.transpose() * r * &k + closed.transpose() * p * &closed;
    Ok(((&next + next.transpose()) * 0.5, k))
}
