//! Factorized bilocal operators `W(x', x) = E(x') Theta(x)`.
//!
//! The same operator serves as the averaging operator and the
//! coordination bivector. Two-point matrices are indexed
//! `[(alpha', beta)]`: row index at the first point, column at the second.

use alloc::vec::Vec;

use crate::chart::{TensorFieldSpec, TensorValue, Valence};
use crate::diff;
use crate::error::{Error, Result};
use crate::fieldexpr::Point;
use crate::frames::FrameField;
use crate::linalg::{checked_inverse, identity_residual, max_abs_diff, Matrix, Rank3};

#[derive(Debug, Clone, PartialEq)]
pub struct BilocalOperator {
    frame: FrameField,
}

impl BilocalOperator {
    pub fn new(frame: FrameField) -> Self {
        BilocalOperator { frame }
    }

    pub fn frame(&self) -> &FrameField {
        &self.frame
    }

    pub fn dimension(&self) -> usize {
        self.frame.dimension()
    }

    /// `E(x')`, the factor carrying the upper, first-point index.
    pub fn left_factor(&self, x_prime: &[f64]) -> Result<Matrix> {
        self.frame.frame_matrix(x_prime)
    }

    /// `Theta(x)`, the factor carrying the lower, second-point index.
    pub fn right_factor(&self, x: &[f64]) -> Result<Matrix> {
        self.frame.coframe(x)
    }

    /// `W^alpha'_beta(x', x)`.
    pub fn evaluate(&self, x_prime: &[f64], x: &[f64]) -> Result<Matrix> {
        // the degeneracy check on x' comes through the coframe gate as well
        self.frame.coframe(x_prime)?;
        Ok(self.left_factor(x_prime)? * self.right_factor(x)?)
    }

    /// Every index of `value` (given at `x_prime`) transported to `x`.
    pub fn extend(&self, value: &TensorValue, x: &[f64], x_prime: &[f64]) -> Result<TensorValue> {
        if value.dim != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: value.dim,
            });
        }
        let n = value.dim;
        let components = match value.valence {
            Valence::Scalar => value.components.clone(),
            Valence::Vector => {
                let a = self.evaluate(x, x_prime)?;
                let v = Matrix::from_column_slice(n, 1, &value.components);
                (a * v).iter().copied().collect()
            }
            Valence::Covector => {
                let a = self.evaluate(x_prime, x)?;
                let w = Matrix::from_row_slice(1, n, &value.components);
                (w * a).iter().copied().collect()
            }
            Valence::Mixed => {
                let left = self.evaluate(x, x_prime)?;
                let right = self.evaluate(x_prime, x)?;
                let p = Matrix::from_row_slice(n, n, &value.components);
                let m = left * p * right;
                (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
            }
        };
        Ok(TensorValue {
            valence: value.valence,
            dim: n,
            components,
        })
    }

    /// `d W(x', x) / d x'^sigma`.
    pub fn derivative_first(&self, x_prime: &[f64], x: &[f64], sigma: usize, step: f64) -> Result<Matrix> {
        let n = self.dimension();
        let right = self.right_factor(x)?;
        let d = diff::richardson_vec(
            |q| Ok(self.left_factor(q)?.iter().copied().collect()),
            x_prime,
            sigma,
            step,
        )?;
        Ok(Matrix::from_column_slice(n, n, &d) * right)
    }

    /// `d W(x', x) / d x^gamma`.
    pub fn derivative_second(&self, x_prime: &[f64], x: &[f64], gamma: usize, step: f64) -> Result<Matrix> {
        let n = self.dimension();
        let left = self.left_factor(x_prime)?;
        let d = diff::richardson_vec(|q| Ok(self.right_factor(q)?.iter().copied().collect()), x, gamma, step)?;
        Ok(left * Matrix::from_column_slice(n, n, &d))
    }
}

/// Free-function form of [`BilocalOperator::evaluate`].
pub fn evaluate_bilocal(w: &BilocalOperator, x_prime: &[f64], x: &[f64]) -> Result<Matrix> {
    w.evaluate(x_prime, x)
}

/// The bilocal extension `p(x, x')` of a tensor field evaluated at `x_prime`.
pub fn bilocal_extension(w: &BilocalOperator, t: &TensorFieldSpec, x: &[f64], x_prime: &[f64]) -> Result<TensorValue> {
    w.extend(&t.evaluate(x_prime)?, x, x_prime)
}

/// Worst residuals of the operator identities over the supplied points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlgebraResiduals {
    pub coincidence: f64,
    pub idempotency: f64,
    pub inverse_pairing: f64,
}

/// Coincidence on every point, inverse pairing on consecutive pairs and
/// idempotency on consecutive triples (cyclically).
pub fn algebra_residuals(w: &BilocalOperator, points: &[Point]) -> Result<AlgebraResiduals> {
    let mut r = AlgebraResiduals::default();
    let m = points.len();
    for k in 0..m {
        let x = &points[k];
        let y = &points[(k + 1) % m];
        let z = &points[(k + 2) % m];
        r.coincidence = libm::fmax(r.coincidence, identity_residual(&w.evaluate(x, x)?));
        let wxy = w.evaluate(x, y)?;
        let wyx = w.evaluate(y, x)?;
        r.inverse_pairing = libm::fmax(r.inverse_pairing, identity_residual(&(&wxy * wyx)));
        let composed = wxy * w.evaluate(y, z)?;
        r.idempotency = libm::fmax(r.idempotency, max_abs_diff(&composed, &w.evaluate(x, z)?));
    }
    Ok(r)
}

/// `B^eps_{mu sigma}(x') = (d W(x', x)/d x'^sigma)^eps_beta W(x, x')^beta_mu`,
/// indexed `[eps][mu][sigma]`.
pub fn b_functions_at(w: &BilocalOperator, x_prime: &[f64], x: &[f64]) -> Result<Rank3> {
    let n = w.dimension();
    let back = w.evaluate(x, x_prime)?;
    let mut b = Rank3::zeros(n);
    for sigma in 0..n {
        let d = w.derivative_first(x_prime, x, sigma, diff::default_step(x_prime[sigma]))?;
        let prod = d * &back;
        for eps in 0..n {
            for mu in 0..n {
                b.set(eps, mu, sigma, prod[(eps, mu)]);
            }
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BFunctions {
    pub x_prime: Point,
    /// `B` computed with each probe as the second point.
    pub per_probe: Vec<(Point, Rank3)>,
    /// Largest pairwise difference between probes.
    pub independence_residual: f64,
}

impl BFunctions {
    pub fn value(&self) -> &Rank3 {
        &self.per_probe[0].1
    }
}

pub fn compute_b_functions(w: &BilocalOperator, probe_points_x: &[Point], x_prime: &Point) -> Result<BFunctions> {
    if probe_points_x.len() < 2 {
        return Err(Error::InvalidArgument("b-functions need at least two probe points"));
    }
    let per_probe = probe_points_x
        .iter()
        .map(|x| Ok((x.clone(), b_functions_at(w, x_prime, x)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut residual = 0.0f64;
    for (i, (_, a)) in per_probe.iter().enumerate() {
        for (_, b) in &per_probe[i + 1..] {
            residual = libm::fmax(residual, a.max_abs_diff(b));
        }
    }
    Ok(BFunctions {
        x_prime: x_prime.clone(),
        per_probe,
        independence_residual: residual,
    })
}

/// Largest component of the integrability identity
/// `B^e_{mu[s,d]} + B^e_{r[s} B^r_{mu d]}` at `x_prime`, with `x` as the
/// probe second point and `step` the outer difference step.
pub fn b_identity_residual(w: &BilocalOperator, x_prime: &[f64], x: &[f64], step: f64) -> Result<f64> {
    let n = w.dimension();
    let b = b_functions_at(w, x_prime, x)?;
    // db[delta] = d B / d x'^delta
    let db = (0..n)
        .map(|delta| diff::richardson_vec(|q| Ok(b_functions_at(w, q, x)?.as_slice().to_vec()), x_prime, delta, step))
        .collect::<Result<Vec<_>>>()?;
    let at = |e: usize, mu: usize, s: usize| (e * n + mu) * n + s;
    let mut worst = 0.0f64;
    for e in 0..n {
        for mu in 0..n {
            for s in 0..n {
                for d in 0..n {
                    let curl = 0.5 * (db[d][at(e, mu, s)] - db[s][at(e, mu, d)]);
                    let mut quad = 0.0;
                    for r in 0..n {
                        quad += b.get(e, r, s) * b.get(r, mu, d) - b.get(e, r, d) * b.get(r, mu, s);
                    }
                    worst = libm::fmax(worst, libm::fabs(curl + 0.5 * quad));
                }
            }
        }
    }
    Ok(worst)
}

/// Coincidence tolerance demanded of sampled operators before factorizing.
pub const ORACLE_COINCIDENCE_TOL: f64 = 1e-10;

/// Factor reconstructed from samples, `F(x) = samples(x, base)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub base_point: Point,
    /// `F` tabulated on the probes.
    pub factor: Vec<(Point, Matrix)>,
    /// `max |samples(x', x) - F(x') F(x)^-1|` over probe pairs.
    pub residual: f64,
}

impl Factorization {
    pub fn certifies(&self, tolerance: f64) -> bool {
        self.residual < tolerance
    }
}

/// Attempts to reconstruct a two-point matrix function as `F(x') F(x)^-1`.
pub fn factorize_oracle<S>(samples: S, base_point: &Point, probes: &[Point]) -> Result<Factorization>
where
    S: Fn(&[f64], &[f64]) -> Result<Matrix>,
{
    let at_base = samples(base_point, base_point)?;
    let coincidence = identity_residual(&at_base);
    if coincidence > ORACLE_COINCIDENCE_TOL {
        return Err(Error::CoincidenceViolation { residual: coincidence });
    }
    let mut factor = Vec::with_capacity(probes.len());
    let mut inverses = Vec::with_capacity(probes.len());
    for p in probes {
        let f = samples(p, base_point)?;
        let (inv, _) = checked_inverse(&f).ok_or(Error::SingularFactor)?;
        factor.push((p.clone(), f));
        inverses.push(inv);
    }
    let mut residual = 0.0f64;
    for (a, (xa, fa)) in factor.iter().enumerate() {
        for (b, (xb, _)) in factor.iter().enumerate() {
            if a == b {
                continue;
            }
            let reconstructed = fa * &inverses[b];
            residual = libm::fmax(residual, max_abs_diff(&samples(xa, xb)?, &reconstructed));
        }
    }
    Ok(Factorization {
        base_point: base_point.clone(),
        factor,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_frame;
    use crate::chart::ChartSpec;
    use alloc::sync::Arc;
    use alloc::vec;

    fn polar_half() -> BilocalOperator {
        let chart = Arc::new(crate::catalog::builtin_chart("polar2").unwrap());
        BilocalOperator::new(FrameField::parse(chart, &[vec!["1", "0"], vec!["0", "1/x0"]], "half").unwrap())
    }

    #[test]
    fn evaluate_examples() {
        let w = polar_half();
        let v = w.evaluate(&[2.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(v, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]));
        assert_eq!(w.evaluate(&[1.3, 0.2], &[1.3, 0.2]).unwrap(), Matrix::identity(2, 2));
        let id = BilocalOperator::new(builtin_frame("minkowski2-coordinate").unwrap());
        assert_eq!(id.evaluate(&[5.0, -1.0], &[0.1, 2.0]).unwrap(), Matrix::identity(2, 2));
    }

    #[test]
    fn degenerate_frame_at_either_point() {
        let chart = Arc::new(crate::catalog::builtin_chart("minkowski2").unwrap());
        let w = BilocalOperator::new(FrameField::parse(chart, &[vec!["1", "0"], vec!["0", "x0"]], "lin").unwrap());
        assert!(matches!(w.evaluate(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateFrame { .. })));
        assert!(matches!(w.evaluate(&[1.0, 0.0], &[0.0, 0.0]), Err(Error::DegenerateFrame { .. })));
    }

    #[test]
    fn extension_examples() {
        let w = polar_half();
        let chart = w.frame().chart().clone();
        let v = TensorFieldSpec::parse(&chart, Valence::Vector, &["0", "1"]).unwrap();
        let ext = bilocal_extension(&w, &v, &[1.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_eq!(ext.components, vec![0.0, 2.0]);
        let s = TensorFieldSpec::scalar(&chart, "x0*x1").unwrap();
        let ext = bilocal_extension(&w, &s, &[1.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_eq!(ext.components, vec![6.0]);
        let id = BilocalOperator::new(FrameField::coordinate(chart.clone()));
        let m = TensorFieldSpec::parse(&chart, Valence::Mixed, &["x0", "1", "x1", "2"]).unwrap();
        let ext = bilocal_extension(&id, &m, &[1.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_eq!(ext.components, vec![2.0, 1.0, 3.0, 2.0]);
    }

    #[test]
    fn covector_extension_pairs_with_vector() {
        // w(v) is a scalar, so extending both must preserve the contraction
        let w = BilocalOperator::new(builtin_frame("polar2-exp").unwrap());
        let (x, xp) = ([1.2, 0.3], [1.9, -0.4]);
        let v = TensorValue::new(Valence::Vector, 2, vec![0.7, -1.1]).unwrap();
        let f = TensorValue::new(Valence::Covector, 2, vec![2.0, 0.5]).unwrap();
        let ve = w.extend(&v, &x, &xp).unwrap();
        let fe = w.extend(&f, &x, &xp).unwrap();
        let before: f64 = v.components.iter().zip(&f.components).map(|(a, b)| a * b).sum();
        let after: f64 = ve.components.iter().zip(&fe.components).map(|(a, b)| a * b).sum();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn b_functions_examples() {
        let probes = [Point::from([0.2, 0.1]), Point::from([-0.5, 0.9]), Point::from([1.0, -1.0])];
        let xp = Point::from([0.4, 0.3]);
        let id = BilocalOperator::new(builtin_frame("minkowski2-coordinate").unwrap());
        let b = compute_b_functions(&id, &probes, &xp).unwrap();
        assert_eq!(b.value().max_abs(), 0.0);
        assert_eq!(b.independence_residual, 0.0);

        let ex = BilocalOperator::new(builtin_frame("minkowski2-exp").unwrap());
        let b = compute_b_functions(&ex, &probes, &xp).unwrap();
        for (_, v) in &b.per_probe {
            assert!((v.get(1, 1, 0) - 1.0).abs() < 1e-8);
        }
        assert!(b.independence_residual < 1e-8);
        assert!(compute_b_functions(&ex, &probes[..1], &xp).is_err());
    }

    #[test]
    fn oracle_rejects_coincidence_violation() {
        let base = Point::from([0.0, 0.0]);
        let r = factorize_oracle(|_, _| Ok(Matrix::identity(2, 2) * 2.0), &base, core::slice::from_ref(&base));
        assert!(matches!(r, Err(Error::CoincidenceViolation { .. })));
    }

    #[test]
    fn oracle_identity_samples() {
        let base = Point::from([0.0, 0.0]);
        let probes = [Point::from([1.0, 0.0]), Point::from([0.0, 2.0])];
        let f = factorize_oracle(|_, _| Ok(Matrix::identity(2, 2)), &base, &probes).unwrap();
        assert_eq!(f.residual, 0.0);
        assert!(f.factor.iter().all(|(_, m)| *m == Matrix::identity(2, 2)));
    }

    #[test]
    fn dimension_mismatch_in_extension() {
        let c = Arc::new(ChartSpec::diagonal("f", &["x0"], &["1"], crate::chart::Signature::Riemannian).unwrap());
        let w = BilocalOperator::new(FrameField::coordinate(c));
        let v = TensorValue::new(Valence::Vector, 2, vec![1.0, 2.0]).unwrap();
        assert!(w.extend(&v, &[0.0], &[1.0]).is_err());
    }
}
