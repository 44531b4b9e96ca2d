//! Frame fields, their coframes, anholonomicity and divergence.
//!
//! A frame is `n` vector fields `f_i`. In matrix form this module uses
//! `E(x)` with `E[(alpha, i)] = f_i^alpha(x)` (column `i` is vector `i`)
//! and the coframe `Theta(x) = E(x)^-1`, whose row `i` is the dual 1-form
//! `f^-1^i_alpha`.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::chart::ChartSpec;
use crate::error::{Error, Result};
use crate::fieldexpr::{FieldExpr, Point};
use crate::linalg::{checked_inverse, Matrix, Rank3};

/// Samples-based constancy tolerance for the anholonomicity coefficients.
pub const CONSTANCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    chart: Arc<ChartSpec>,
    /// Row-major `[i][alpha]`: component `alpha` of vector `i`.
    rows: Vec<FieldExpr>,
    label: String,
}

impl FrameField {
    pub fn new(chart: Arc<ChartSpec>, rows: Vec<Vec<FieldExpr>>, label: &str) -> Result<FrameField> {
        let n = chart.dimension();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rows.len(),
            });
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for e in row {
                if e.coordinate_names() != chart.coordinate_names() {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: e.dimension(),
                    });
                }
                flat.push(e);
            }
        }
        Ok(FrameField {
            chart,
            rows: flat,
            label: label.to_string(),
        })
    }

    /// Parses frame vectors given as rows of component sources.
    pub fn parse<S: AsRef<str>>(chart: Arc<ChartSpec>, rows: &[Vec<S>], label: &str) -> Result<FrameField> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| chart.parse_expr(s.as_ref())).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        FrameField::new(chart, parsed, label)
    }

    /// The coordinate basis `f_i = d/dx^i`.
    pub fn coordinate(chart: Arc<ChartSpec>) -> FrameField {
        let n = chart.dimension();
        let names = chart.coordinate_names().to_vec();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|a| FieldExpr::constant(if i == a { 1.0 } else { 0.0 }, &names))
                    .collect()
            })
            .collect();
        FrameField::new(chart, rows, "coordinate").expect("coordinate frame is well formed")
    }

    pub fn chart(&self) -> &Arc<ChartSpec> {
        &self.chart
    }

    pub fn dimension(&self) -> usize {
        self.chart.dimension()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Expression for `f_i^alpha`.
    pub fn component(&self, i: usize, alpha: usize) -> &FieldExpr {
        &self.rows[i * self.dimension() + alpha]
    }

    pub fn vector_exprs(&self, i: usize) -> &[FieldExpr] {
        let n = self.dimension();
        &self.rows[i * n..(i + 1) * n]
    }

    pub fn row_sources(&self) -> Vec<Vec<String>> {
        let n = self.dimension();
        (0..n)
            .map(|i| (0..n).map(|a| self.component(i, a).source().to_string()).collect())
            .collect()
    }

    /// `E(p)`, columns are the frame vectors.
    pub fn frame_matrix(&self, p: &[f64]) -> Result<Matrix> {
        self.chart.check_point(p)?;
        let n = self.dimension();
        let mut e = Matrix::zeros(n, n);
        for i in 0..n {
            for a in 0..n {
                e[(a, i)] = self.component(i, a).evaluate(p)?;
            }
        }
        Ok(e)
    }

    /// `Theta(p) = E(p)^-1`, rows are the dual 1-forms.
    pub fn coframe(&self, p: &[f64]) -> Result<Matrix> {
        let e = self.frame_matrix(p)?;
        match checked_inverse(&e) {
            Some((inv, _)) => Ok(inv),
            None => Err(Error::DegenerateFrame {
                det: e.lu().determinant(),
            }),
        }
    }

    pub fn vector(&self, i: usize, p: &[f64]) -> Result<Vec<f64>> {
        self.vector_exprs(i).iter().map(|e| e.evaluate(p)).collect()
    }

    /// `d E / d x^sigma` at `p`, entrywise Richardson differences.
    pub fn frame_derivative(&self, p: &[f64], sigma: usize) -> Result<Matrix> {
        self.chart.check_point(p)?;
        let n = self.dimension();
        let mut d = Matrix::zeros(n, n);
        for i in 0..n {
            for a in 0..n {
                let c = self.component(i, a);
                if !c.is_constant() {
                    d[(a, i)] = c.derivative_at(sigma, p)?;
                }
            }
        }
        Ok(d)
    }

    /// `d Theta / d x^sigma = -Theta (dE) Theta`.
    pub fn coframe_derivative(&self, p: &[f64], sigma: usize) -> Result<Matrix> {
        let theta = self.coframe(p)?;
        let de = self.frame_derivative(p, sigma)?;
        Ok(-(&theta * de * &theta))
    }

    /// `C^k_ij(p) = f_i^rho f_j^sigma (d_sigma Theta^k_rho - d_rho Theta^k_sigma)`,
    /// so that `[f_i, f_j] = C^k_ij f_k`. Indexed `[k][i][j]`.
    pub fn anholonomicity_at(&self, p: &[f64]) -> Result<Rank3> {
        let n = self.dimension();
        let e = self.frame_matrix(p)?;
        let dtheta = (0..n).map(|s| self.coframe_derivative(p, s)).collect::<Result<Vec<_>>>()?;
        let mut c = Rank3::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for rho in 0..n {
                        for sigma in 0..n {
                            let curl = dtheta[sigma][(k, rho)] - dtheta[rho][(k, sigma)];
                            acc += e[(rho, i)] * e[(sigma, j)] * curl;
                        }
                    }
                    c.set(k, i, j, acc);
                }
            }
        }
        Ok(c)
    }

    /// Metric divergence of frame vector `i`:
    /// `d_alpha f_i^alpha + (ln sqrt|g|)_alpha f_i^alpha`.
    pub fn divergence(&self, i: usize, p: &[f64]) -> Result<f64> {
        let n = self.dimension();
        let grad = self.chart.ln_density_gradient(p)?;
        let mut div = 0.0;
        for a in 0..n {
            let c = self.component(i, a);
            if !c.is_constant() {
                div += c.derivative_at(a, p)?;
            }
            div += c.evaluate(p)? * grad[a];
        }
        Ok(div)
    }
}

/// Free-function form of [`FrameField::coframe`].
pub fn coframe(f: &FrameField, p: &[f64]) -> Result<Matrix> {
    f.coframe(p)
}

/// Free-function form of [`FrameField::divergence`].
pub fn frame_divergence(f: &FrameField, i: usize, p: &[f64]) -> Result<f64> {
    f.divergence(i, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnholonomicityResult {
    /// Coefficients at each sample point, `[k][i][j]`.
    pub samples: Vec<(Point, Rank3)>,
    pub is_constant: bool,
    /// Largest `|C(p) - C(q)|` over sample pairs.
    pub constancy_residual: f64,
    /// Largest `|C^k_ij + C^k_ji|`.
    pub antisymmetry_residual: f64,
}

impl AnholonomicityResult {
    /// Largest coefficient magnitude across samples.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, (_, c)| libm::fmax(m, c.max_abs()))
    }

    /// Coefficients at the first sample.
    pub fn representative(&self) -> &Rank3 {
        &self.samples[0].1
    }
}

pub fn anholonomicity(f: &FrameField, sample_points: &[Point]) -> Result<AnholonomicityResult> {
    anholonomicity_with_tolerance(f, sample_points, CONSTANCY_TOL)
}

pub fn anholonomicity_with_tolerance(
    f: &FrameField,
    sample_points: &[Point],
    tolerance: f64,
) -> Result<AnholonomicityResult> {
    if sample_points.len() < 2 {
        return Err(Error::InvalidArgument("anholonomicity needs at least two sample points"));
    }
    let n = f.dimension();
    let samples = sample_points
        .iter()
        .map(|p| Ok((p.clone(), f.anholonomicity_at(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut constancy = 0.0f64;
    for (a, (_, ca)) in samples.iter().enumerate() {
        for (_, cb) in &samples[a + 1..] {
            constancy = libm::fmax(constancy, ca.max_abs_diff(cb));
        }
    }
    let mut antisym = 0.0f64;
    for (_, c) in &samples {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    antisym = libm::fmax(antisym, libm::fabs(c.get(k, i, j) + c.get(k, j, i)));
                }
            }
        }
    }
    Ok(AnholonomicityResult {
        samples,
        is_constant: constancy < tolerance,
        constancy_residual: constancy,
        antisymmetry_residual: antisym,
    })
}

/// Largest `|sum_cyclic(i,j,k) C^l_ij C^m_lk|` over all free indices.
pub fn jacobi_residual(c: &Rank3) -> f64 {
    let n = c.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for m in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += c.get(l, i, j) * c.get(m, l, k)
                            + c.get(l, j, k) * c.get(m, l, i)
                            + c.get(l, k, i) * c.get(m, l, j);
                    }
                    worst = libm::fmax(worst, libm::fabs(s));
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Signature;
    use alloc::vec;

    fn flat2() -> Arc<ChartSpec> {
        Arc::new(ChartSpec::diagonal("flat", &["x0", "x1"], &["1", "1"], Signature::Riemannian).unwrap())
    }

    fn polar() -> Arc<ChartSpec> {
        Arc::new(ChartSpec::diagonal("polar2", &["x0", "x1"], &["1", "x0^2"], Signature::Riemannian).unwrap())
    }

    #[test]
    fn coframe_examples() {
        let id = FrameField::coordinate(flat2());
        assert_eq!(id.coframe(&[0.3, 0.2]).unwrap(), Matrix::identity(2, 2));
        let f = FrameField::parse(flat2(), &[vec!["1", "0"], vec!["0", "x0"]], "d").unwrap();
        let th = f.coframe(&[2.0, 0.0]).unwrap();
        assert_eq!(th, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]));
        let bad = FrameField::parse(flat2(), &[vec!["1", "0"], vec!["1", "0"]], "bad").unwrap();
        assert!(matches!(bad.coframe(&[0.0, 0.0]), Err(Error::DegenerateFrame { .. })));
    }

    #[test]
    fn anholonomicity_examples() {
        let pts = [Point::from([1.0, 0.0]), Point::from([2.0, 0.5])];
        let id = anholonomicity(&FrameField::coordinate(flat2()), &pts).unwrap();
        assert!(id.is_constant);
        assert_eq!(id.max_abs(), 0.0);

        let ex = FrameField::parse(flat2(), &[vec!["1", "0"], vec!["0", "exp(x0)"]], "exp").unwrap();
        let r = anholonomicity(&ex, &pts).unwrap();
        assert!(r.is_constant);
        for (_, c) in &r.samples {
            assert!((c.get(1, 0, 1) - 1.0).abs() < 1e-8);
            assert!((c.get(1, 1, 0) + 1.0).abs() < 1e-8);
        }

        let lin = FrameField::parse(flat2(), &[vec!["1", "0"], vec!["0", "x0"]], "lin").unwrap();
        let r = anholonomicity(&lin, &pts).unwrap();
        assert!(!r.is_constant);
        assert!((r.samples[0].1.get(1, 0, 1) - 1.0).abs() < 1e-8);
        assert!((r.samples[1].1.get(1, 0, 1) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples() {
        let id = FrameField::coordinate(flat2());
        assert!(anholonomicity(&id, &[Point::from([0.0, 0.0])]).is_err());
    }

    #[test]
    fn divergence_examples() {
        let id = FrameField::coordinate(polar());
        assert!(id.divergence(1, &[2.0, 0.3]).unwrap().abs() < 1e-12);
        assert!((id.divergence(0, &[2.0, 0.3]).unwrap() - 0.5).abs() < 1e-9);
        let f = FrameField::parse(polar(), &[vec!["1/x0", "0"], vec!["0", "1"]], "divfree").unwrap();
        for r in [0.5, 1.0, 2.0, 3.7] {
            assert!(f.divergence(0, &[r, 1.0]).unwrap().abs() < 1e-9);
        }
    }
}
