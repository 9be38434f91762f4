use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal on the first retry.
const JITTER_SCALE: f64 = 1e-10;
/// Jitter retries after the plain factorization fails.
const JITTER_RETRIES: usize = 3;

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// When the plain factorization hits a non-positive pivot the diagonal is
/// inflated by `1e-10 * trace / n`, growing a hundredfold per retry, for at
/// most three retries.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "spd factorization needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "spd factorization input".into() });
        }
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let n = m.nrows().max(1) as f64;
        let base = JITTER_SCALE * (m.trace().abs() / n).max(f64::MIN_POSITIVE);
        let mut jitter = base;
        for _ in 0..JITTER_RETRIES {
            let mut shifted = m.clone();
            for i in 0..m.nrows() {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self { chol, jitter });
            }
            jitter *= 100.0;
        }
        Err(Error::NotPositiveDefinite { attempts: JITTER_RETRIES + 1 })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `ln det M`, from the diagonal of the triangular factor.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// Diagonal shift that was needed to factorize (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: DVector<f64>,
    pub log_det: f64,
}

/// Solves `M x = b` for symmetric positive-definite `M`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<SpdSolution> {
    if m.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{} but right-hand side has {} entries",
            m.nrows(),
            m.ncols(),
            b.len()
        )));
    }
    let factor = SpdFactor::new(m)?;
    Ok(SpdSolution { x: factor.solve(b), log_det: factor.log_det() })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_scaling() {
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let x = spd_solve(&DMatrix::identity(2, 2), &b).unwrap().x;
        assert_eq!(x.as_slice(), &[3.0, 4.0]);

        let m = DMatrix::identity(2, 2) * 2.0;
        let sol = spd_solve(&m, &DVector::from_vec(vec![2.0, 2.0])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15 && (sol.x[1] - 1.0).abs() < 1e-15);
        assert!((sol.log_det - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_hand_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let sol = spd_solve(&m, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((sol.x[0] - 1.0 / 11.0).abs() < 1e-15);
        assert!((sol.x[1] - 7.0 / 11.0).abs() < 1e-15);
        assert!((sol.log_det - 11f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_fails_after_retries() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = SpdFactor::new(&m).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite { attempts: 4 });
    }

    #[test]
    fn semidefinite_matrix_recovers_with_jitter() {
        // rank one: v v^T
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let factor = SpdFactor::new(&m).unwrap();
        assert!(factor.jitter() > 0.0);
    }

    #[test]
    fn spectral_radius_of_rotation_and_diagonal() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&rot) - 0.5).abs() < 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, 2.0]);
        assert!((spectral_radius(&d) - 3.0).abs() < 1e-12);
    }
}
