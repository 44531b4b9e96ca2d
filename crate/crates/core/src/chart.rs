//! Coordinate charts with an analytic metric, and tensor fields on them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::diff;
use crate::error::{Error, Result};
use crate::fieldexpr::{validate_coordinate_names, FieldExpr};
use crate::linalg::{Matrix, SINGULAR_DET};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signature {
    /// `det g < 0`; the density is `sqrt(-g)`.
    Lorentzian,
    /// `det g > 0`; the density is `sqrt(g)`.
    Riemannian,
}

impl Signature {
    pub fn as_str(self) -> &'static str {
        match self {
            Signature::Lorentzian => "lorentzian",
            Signature::Riemannian => "riemannian",
        }
    }

    pub fn from_name(s: &str) -> Option<Signature> {
        match s {
            "lorentzian" => Some(Signature::Lorentzian),
            "riemannian" => Some(Signature::Riemannian),
            _ => None,
        }
    }
}

/// A single local chart of an `n`-dimensional metric manifold.
///
/// The metric is stored as its upper triangle, so entry `(i, j)` and
/// `(j, i)` are the same expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    name: String,
    coordinate_names: Vec<String>,
    metric: Vec<FieldExpr>,
    signature: Signature,
}

fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl ChartSpec {
    /// Builds a chart from a full `n x n` matrix of metric sources. The
    /// matrix must be symmetric expression by expression.
    pub fn new<S: AsRef<str>, M: AsRef<str>>(
        name: &str,
        coordinate_names: &[S],
        metric: &[Vec<M>],
        signature: Signature,
    ) -> Result<ChartSpec> {
        let n = coordinate_names.len();
        if n == 0 {
            return Err(Error::InvalidDimension(0));
        }
        validate_coordinate_names(coordinate_names)?;
        if metric.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: metric.len(),
            });
        }
        let mut full: Vec<Vec<FieldExpr>> = Vec::with_capacity(n);
        for row in metric {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            full.push(
                row.iter()
                    .map(|s| FieldExpr::parse(s.as_ref(), coordinate_names))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                if full[i][j].ast() != full[j][i].ast() {
                    return Err(Error::AsymmetricMetric { row: i, col: j });
                }
                packed.push(full[i][j].clone());
            }
        }
        Ok(ChartSpec {
            name: name.to_string(),
            coordinate_names: coordinate_names.iter().map(|s| s.as_ref().to_string()).collect(),
            metric: packed,
            signature,
        })
    }

    /// Diagonal metric shorthand.
    pub fn diagonal<S: AsRef<str>, M: AsRef<str>>(
        name: &str,
        coordinate_names: &[S],
        diagonal: &[M],
        signature: Signature,
    ) -> Result<ChartSpec> {
        let n = diagonal.len();
        let rows: Vec<Vec<&str>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diagonal[i].as_ref() } else { "0" }).collect())
            .collect();
        ChartSpec::new(name, coordinate_names, &rows, signature)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.coordinate_names.len()
    }

    pub fn coordinate_names(&self) -> &[String] {
        &self.coordinate_names
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn metric_entry(&self, i: usize, j: usize) -> &FieldExpr {
        &self.metric[packed_index(self.dimension(), i, j)]
    }

    /// Parses `source` in this chart's coordinates.
    pub fn parse_expr(&self, source: &str) -> Result<FieldExpr> {
        FieldExpr::parse(source, &self.coordinate_names)
    }

    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: p.len(),
            });
        }
        Ok(())
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<Matrix> {
        self.check_point(p)?;
        let n = self.dimension();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.metric_entry(i, j).evaluate(p)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// `det g(p)`, rejecting singular metrics and signature mismatches.
    pub fn determinant(&self, p: &[f64]) -> Result<f64> {
        let det = self.metric_at(p)?.lu().determinant();
        if !det.is_finite() || libm::fabs(det) < SINGULAR_DET {
            return Err(Error::SingularMetric { det });
        }
        match self.signature {
            Signature::Lorentzian if det > 0.0 => Err(Error::SignatureMismatch { det }),
            Signature::Riemannian if det < 0.0 => Err(Error::SignatureMismatch { det }),
            _ => Ok(det),
        }
    }

    /// `sqrt|det g(p)|`.
    pub fn volume_density(&self, p: &[f64]) -> Result<f64> {
        Ok(libm::sqrt(libm::fabs(self.determinant(p)?)))
    }

    pub fn ln_volume_density(&self, p: &[f64]) -> Result<f64> {
        Ok(0.5 * libm::log(libm::fabs(self.determinant(p)?)))
    }

    /// Gradient of `ln sqrt|g|` by Richardson differences.
    pub fn ln_density_gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_point(p)?;
        (0..self.dimension())
            .map(|i| diff::richardson(|q| self.ln_volume_density(q), p, i, diff::default_step(p[i])))
            .collect()
    }

    pub fn metric_inverse(&self, p: &[f64]) -> Result<Matrix> {
        self.determinant(p)?;
        let g = self.metric_at(p)?;
        let det = g.clone().lu().determinant();
        g.try_inverse().ok_or(Error::SingularMetric { det })
    }
}

/// Supported tensor valences `(r, s)` with `r + s <= 2`, excluding the
/// purely co- or contravariant rank-two cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valence {
    Scalar,
    Vector,
    Covector,
    /// Type `(1,1)`, components stored row-major as `[upper][lower]`.
    Mixed,
}

impl Valence {
    pub fn from_rank(upper: usize, lower: usize) -> Result<Valence> {
        match (upper, lower) {
            (0, 0) => Ok(Valence::Scalar),
            (1, 0) => Ok(Valence::Vector),
            (0, 1) => Ok(Valence::Covector),
            (1, 1) => Ok(Valence::Mixed),
            _ => Err(Error::UnsupportedValence { upper, lower }),
        }
    }

    pub fn rank(self) -> (usize, usize) {
        match self {
            Valence::Scalar => (0, 0),
            Valence::Vector => (1, 0),
            Valence::Covector => (0, 1),
            Valence::Mixed => (1, 1),
        }
    }

    pub fn component_count(self, n: usize) -> usize {
        match self {
            Valence::Scalar => 1,
            Valence::Vector | Valence::Covector => n,
            Valence::Mixed => n * n,
        }
    }
}

/// Components of a tensor at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    pub valence: Valence,
    pub dim: usize,
    pub components: Vec<f64>,
}

impl TensorValue {
    pub fn new(valence: Valence, dim: usize, components: Vec<f64>) -> Result<TensorValue> {
        let expected = valence.component_count(dim);
        if components.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: components.len(),
            });
        }
        Ok(TensorValue {
            valence,
            dim,
            components,
        })
    }

    pub fn scalar(dim: usize, value: f64) -> TensorValue {
        TensorValue {
            valence: Valence::Scalar,
            dim,
            components: alloc::vec![value],
        }
    }

    /// Contraction of a `(1,1)` tensor; `None` for other valences.
    pub fn trace(&self) -> Option<f64> {
        match self.valence {
            Valence::Mixed => Some((0..self.dim).map(|i| self.components[i * self.dim + i]).sum()),
            _ => None,
        }
    }

    pub fn max_abs_diff(&self, other: &TensorValue) -> f64 {
        crate::linalg::vec_max_abs_diff(&self.components, &other.components)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0f64, |m, x| libm::fmax(m, libm::fabs(*x)))
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &TensorValue, b: f64) -> TensorValue {
        TensorValue {
            valence: self.valence,
            dim: self.dim,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// A tensor field given by analytic components.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFieldSpec {
    valence: Valence,
    dim: usize,
    components: Vec<FieldExpr>,
}

impl TensorFieldSpec {
    pub fn new(valence: Valence, dim: usize, components: Vec<FieldExpr>) -> Result<TensorFieldSpec> {
        let expected = valence.component_count(dim);
        if components.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: components.len(),
            });
        }
        if let Some(bad) = components.iter().find(|c| c.dimension() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dimension(),
            });
        }
        Ok(TensorFieldSpec {
            valence,
            dim,
            components,
        })
    }

    pub fn parse<S: AsRef<str>>(chart: &ChartSpec, valence: Valence, sources: &[S]) -> Result<TensorFieldSpec> {
        let components = sources
            .iter()
            .map(|s| chart.parse_expr(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        TensorFieldSpec::new(valence, chart.dimension(), components)
    }

    pub fn scalar(chart: &ChartSpec, source: &str) -> Result<TensorFieldSpec> {
        TensorFieldSpec::parse(chart, Valence::Scalar, &[source])
    }

    pub fn valence(&self) -> Valence {
        self.valence
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[FieldExpr] {
        &self.components
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<TensorValue> {
        Ok(TensorValue {
            valence: self.valence,
            dim: self.dim,
            components: self.components.iter().map(|c| c.evaluate(p)).collect::<Result<_>>()?,
        })
    }

    /// Partial derivative of every component along `coord`.
    pub fn derivative(&self, coord: usize, p: &[f64]) -> Result<TensorValue> {
        Ok(TensorValue {
            valence: self.valence,
            dim: self.dim,
            components: self
                .components
                .iter()
                .map(|c| c.derivative_at(coord, p))
                .collect::<Result<_>>()?,
        })
    }
}
