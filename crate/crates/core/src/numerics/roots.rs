use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_FD_DELTA: f64 = 0.015;

/// Central-difference Jacobian: entry `(i, j)` is
/// `(g_i(x + δ e_j) - g_i(x - δ e_j)) / 2δ`.
pub fn fd_jacobian<G>(g: G, x: &[f64], delta: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain { function: "fd_jacobian(delta)", x: delta });
    }
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    let mut rows = None;
    for j in 0..x.len() {
        probe[j] = x[j] + delta;
        let plus = g(&probe);
        probe[j] = x[j] - delta;
        let minus = g(&probe);
        probe[j] = x[j];
        if plus.len() != minus.len() || rows.is_some_and(|r| r != plus.len()) {
            return Err(Error::Dimension("function output length changed between evaluations".into()));
        }
        rows = Some(plus.len());
        let col: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * delta)).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("finite-difference column {j}") });
        }
        columns.push(col);
    }
    let rows = rows.unwrap_or_else(|| g(x).len());
    Ok(DMatrix::from_fn(rows, x.len(), |i, j| columns[j][i]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Converged when `|g(x)|_2 <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub fd_delta: f64,
    /// Halvings of the Newton step allowed when `|g|` does not decrease.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, fd_delta: 1e-6, max_halvings: 30 }
    }
}

/// Damped Newton iteration with a finite-difference Jacobian.
pub fn newton_root<G>(g: G, x0: &[f64], opts: NewtonOptions) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let norm = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>().sqrt();
    let mut x = x0.to_vec();
    let mut gx = g(&x);
    let mut res = norm(&gx);
    if !res.is_finite() {
        return Err(Error::NonFinite { context: "newton_root initial residual".into() });
    }
    for iteration in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(x);
        }
        let jac = fd_jacobian(&g, &x, opts.fd_delta)?;
        if jac.nrows() != jac.ncols() {
            return Err(Error::Dimension("newton_root needs as many equations as unknowns".into()));
        }
        let rhs = -DVector::from_column_slice(&gx);
        let step = jac
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularJacobian { iteration })?;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + scale * si).collect();
            let g_trial = g(&trial);
            let r_trial = norm(&g_trial);
            if r_trial.is_finite() && r_trial < res {
                x = trial;
                gx = g_trial;
                res = r_trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= opts.tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: opts.max_iter, residual: res })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_jacobian_is_exact() {
        for x in [-3.0, 0.0, 0.7, 120.0] {
            let j = fd_jacobian(|v| vec![3.0 * v[0]], &[x], DEFAULT_FD_DELTA).unwrap();
            assert!((j[(0, 0)] - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_central_difference_is_exact() {
        let j = fd_jacobian(|v| vec![v[0] * v[0]], &[1.0], DEFAULT_FD_DELTA).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sine_matches_series() {
        let d = DEFAULT_FD_DELTA;
        let j = fd_jacobian(|v| vec![v[0].sin()], &[0.0], d).unwrap();
        // sin(d)/d = 1 - d^2/6 + d^4/120
        let series = 1.0 - d * d / 6.0 + d.powi(4) / 120.0;
        assert!((j[(0, 0)] - series).abs() < 1e-12);
        assert!((j[(0, 0)] - 0.999_962_5).abs() < 1e-6);
    }

    #[test]
    fn jacobian_layout_is_rows_by_inputs() {
        let j = fd_jacobian(|v| vec![v[0] + 2.0 * v[1], 3.0 * v[0], v[1]], &[0.1, 0.2], 1e-3).unwrap();
        assert_eq!(j.shape(), (3, 2));
        assert!((j[(0, 1)] - 2.0).abs() < 1e-9);
        assert!((j[(1, 0)] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn newton_examples() {
        let opts = NewtonOptions::default();
        let x = newton_root(|v| vec![v[0] - 1.0], &[0.0], opts).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10);
        let x = newton_root(|v| vec![v[0] * v[0] - 4.0], &[3.0], opts).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10);
        let x = newton_root(|v| vec![v[0] + v[1] - 3.0, v[0] - v[1] - 1.0], &[0.0, 0.0], opts).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let err = newton_root(|v| vec![v[0] * v[0] + 1.0], &[0.0], NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { .. }));
    }

    #[test]
    fn newton_reports_non_convergence() {
        // no real root; the damped iteration stalls
        let err = newton_root(|v| vec![v[0] * v[0] + 1.0], &[1.0], NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. } | Error::SingularJacobian { .. }));
    }
}
