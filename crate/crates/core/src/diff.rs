//! Central differences with one Richardson level.

use alloc::vec::Vec;

use crate::error::Result;

/// Default stencil half-width for a coordinate of size `x`.
pub fn default_step(x: f64) -> f64 {
    1e-4 * libm::fmax(1.0, libm::fabs(x))
}

/// Plain central difference `(f(p + h) - f(p - h)) / 2h` along `index`.
pub fn central_difference<F>(mut f: F, p: &[f64], index: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut q = p.to_vec();
    q[index] = p[index] + h;
    let plus = f(&q)?;
    q[index] = p[index] - h;
    let minus = f(&q)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Richardson-extrapolated central difference, `(4 D(h/2) - D(h)) / 3`.
pub fn richardson<F>(mut f: F, p: &[f64], index: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let coarse = central_difference(&mut f, p, index, h)?;
    let fine = central_difference(&mut f, p, index, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Richardson derivative of a vector-valued function along `index`.
pub fn richardson_vec<F>(f: F, p: &[f64], index: usize, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut dir = alloc::vec![0.0; p.len()];
    dir[index] = 1.0;
    directional(f, p, &dir, h)
}

/// Richardson derivative of `f` at `p` along the direction `dir`.
pub fn directional<F>(mut f: F, p: &[f64], dir: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut eval = |t: f64| -> Result<Vec<f64>> {
        let q: Vec<f64> = p.iter().zip(dir).map(|(x, d)| x + t * d).collect();
        f(&q)
    };
    let central = |plus: Vec<f64>, minus: Vec<f64>, h: f64| -> Vec<f64> {
        plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let coarse = central(eval(h)?, eval(-h)?, h);
    let fine = central(eval(0.5 * h)?, eval(-0.5 * h)?, 0.5 * h);
    Ok(fine.iter().zip(&coarse).map(|(f2, f1)| (4.0 * f2 - f1) / 3.0).collect())
}

/// Default step for a stencil centred on `p`: the largest coordinate sets
/// the scale.
pub fn default_step_for(p: &[f64]) -> f64 {
    default_step(p.iter().fold(0.0f64, |m, x| libm::fmax(m, libm::fabs(*x))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_is_fourth_order() {
        let f = |q: &[f64]| Ok(libm::exp(q[0]));
        let exact = 1.0f64;
        let e1 = (richardson(f, &[0.0], 0, 0.2).unwrap() - exact).abs();
        let e2 = (richardson(f, &[0.0], 0, 0.1).unwrap() - exact).abs();
        assert!(e1 / e2 > 14.0, "{e1} {e2}");
    }

    #[test]
    fn directional_matches_gradient() {
        let f = |q: &[f64]| Ok(alloc::vec![q[0] * q[1] * q[1]]);
        let d = directional(f, &[1.0, 2.0], &[0.5, -1.0], 1e-3).unwrap();
        // grad = (y^2, 2xy) = (4, 4)
        assert!((d[0] - (0.5 * 4.0 - 4.0)).abs() < 1e-10);
    }
}
