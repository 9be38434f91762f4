use crate::error::{Error, Result};

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(x, u)` with the
/// input held constant over the step.
pub fn rk4_step<F>(f: F, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain { function: "rk4_step(dt)", x: dt });
    }
    let eval = |state: &[f64]| -> Result<Vec<f64>> {
        let d = f(state, u);
        if d.len() != x.len() {
            return Err(Error::Dimension(format!(
                "vector field returned {} components for a {}-state system",
                d.len(),
                x.len()
            )));
        }
        match d.iter().position(|v| !v.is_finite()) {
            Some(component) => Err(Error::Integration { component }),
            None => Ok(d),
        }
    };
    let offset = |k: &[f64], h: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + h * ki).collect()
    };

    let k1 = eval(x)?;
    let k2 = eval(&offset(&k1, 0.5 * dt))?;
    let k3 = eval(&offset(&k2, 0.5 * dt))?;
    let k4 = eval(&offset(&k3, dt))?;

    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}
