//! Fixed-step classical Runge-Kutta.

use alloc::vec::Vec;

use crate::error::Result;

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One RK4 step of `dy/dt = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(y, h, &k3))?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, yi)| yi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates from `t0` to `t1` in `steps` equal steps.
pub fn rk4<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], steps: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    for k in 0..steps {
        y = rk4_step(&mut f, t0 + k as f64 * h, &y, h)?;
    }
    Ok(y)
}
