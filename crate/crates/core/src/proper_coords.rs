//! Volume-preserving coordinate maps: construction from holonomic
//! divergence-free frames, completion by characteristics, certification and
//! affine equivalence.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::ChartSpec;
use crate::diff;
use crate::error::{Error, Result};
use crate::fieldexpr::{FieldExpr, Point};
use crate::frames::{anholonomicity, FrameField};
use crate::linalg::{checked_inverse, vec_max_abs_diff, Matrix};
use crate::ode::rk4;
use crate::quadrature::gauss_legendre;

/// A map certifies when its log-density gradient stays below this.
pub const CERTIFY_TOL: f64 = 1e-6;
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Gates of [`proper_from_divfree_frame`].
pub const HOLONOMY_TOL: f64 = 1e-6;
pub const DIVERGENCE_TOL: f64 = 1e-9;
pub const PATH_TOL: f64 = 1e-8;
/// Acceptance threshold of [`residual_affine_check`].
pub const AFFINE_TOL: f64 = 1e-8;
pub const CHARACTERISTIC_STEPS: usize = 64;

const PANELS: usize = 4;
const PANEL_NODES: usize = 8;
/// Outer step for derivatives of quantities that are differences already.
const NESTED_STEP: f64 = 1e-3;

/// Start data for the characteristic construction: `y1 = seed` on the
/// hyperplane through `base_point` normal to the minor vector there.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedData {
    pub base_point: Point,
    /// `None` means `y1 = 0` on the hyperplane.
    pub values: Option<FieldExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    partial: Vec<FieldExpr>,
    c: f64,
    seed: SeedData,
    normal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    /// `phi^i` given in closed form.
    Expressions(Vec<FieldExpr>),
    /// `phi = base_value + integral of the coframe` along axis-parallel
    /// segments from `base_point`, axis 0 first.
    FramePotential {
        frame: FrameField,
        base_point: Point,
        base_value: Vec<f64>,
    },
    /// `y1` from characteristics, `y2..yn` in closed form.
    Completion(Completion),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProperCoordinateMap {
    chart: Arc<ChartSpec>,
    kind: MapKind,
    certified: bool,
}

impl ProperCoordinateMap {
    pub fn from_expressions<S: AsRef<str>>(chart: Arc<ChartSpec>, sources: &[S]) -> Result<ProperCoordinateMap> {
        if sources.len() != chart.dimension() {
            return Err(Error::DimensionMismatch {
                expected: chart.dimension(),
                found: sources.len(),
            });
        }
        let exprs = sources.iter().map(|s| chart.parse_expr(s.as_ref())).collect::<Result<Vec<_>>>()?;
        Ok(ProperCoordinateMap {
            chart,
            kind: MapKind::Expressions(exprs),
            certified: false,
        })
    }

    /// The identity map of a chart.
    pub fn identity(chart: Arc<ChartSpec>) -> ProperCoordinateMap {
        let names = chart.coordinate_names().to_vec();
        ProperCoordinateMap::from_expressions(chart, &names).expect("coordinate names parse")
    }

    pub fn chart(&self) -> &Arc<ChartSpec> {
        &self.chart
    }

    pub fn dimension(&self) -> usize {
        self.chart.dimension()
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn certified(&self) -> bool {
        self.certified
    }

    /// Closed-form components, when the map has them.
    pub fn phi_exprs(&self) -> Option<&[FieldExpr]> {
        match &self.kind {
            MapKind::Expressions(e) => Some(e),
            _ => None,
        }
    }

    /// Runs [`check_volume_preserving`] and records the verdict.
    pub fn certify(&mut self, grid: &[Point]) -> Result<f64> {
        let (residual, ok) = check_volume_preserving(self, grid)?;
        self.certified = ok;
        Ok(residual)
    }

    /// `phi(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.chart.check_point(x)?;
        match &self.kind {
            MapKind::Expressions(e) => e.iter().map(|f| f.evaluate(x)).collect(),
            MapKind::FramePotential {
                frame,
                base_point,
                base_value,
            } => {
                let order: Vec<usize> = (0..x.len()).collect();
                let integral = coframe_line_integral(frame, base_point, x, &order)?;
                Ok(integral.iter().zip(base_value).map(|(a, b)| a + b).collect())
            }
            MapKind::Completion(c) => {
                let mut out = Vec::with_capacity(x.len());
                out.push(c.first_coordinate(x)?);
                for f in &c.partial {
                    out.push(f.evaluate(x)?);
                }
                Ok(out)
            }
        }
    }

    /// `J[(i, alpha)] = d phi^i / d x^alpha`.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<Matrix> {
        self.chart.check_point(x)?;
        let n = x.len();
        match &self.kind {
            MapKind::Expressions(e) => {
                let mut j = Matrix::zeros(n, n);
                for (i, f) in e.iter().enumerate() {
                    if f.is_constant() {
                        continue;
                    }
                    for (a, g) in f.gradient(x)?.into_iter().enumerate() {
                        j[(i, a)] = g;
                    }
                }
                Ok(j)
            }
            // path independence makes the potential's gradient the coframe
            MapKind::FramePotential { frame, .. } => frame.coframe(x),
            MapKind::Completion(c) => {
                let mut j = Matrix::zeros(n, n);
                for a in 0..n {
                    j[(0, a)] = diff::richardson(|q| c.first_coordinate(q), x, a, diff::default_step(x[a]))?;
                }
                for (i, f) in c.partial.iter().enumerate() {
                    for (a, g) in f.gradient(x)?.into_iter().enumerate() {
                        j[(i + 1, a)] = g;
                    }
                }
                Ok(j)
            }
        }
    }

    fn inverse_jacobian(&self, x: &[f64]) -> Result<(Matrix, f64)> {
        checked_inverse(&self.jacobian_at(x)?).ok_or(Error::SingularJacobian)
    }

    /// Damped Newton solve of `phi(x) = phi_target` from `guess`.
    pub fn inverse(&self, phi_target: &[f64], guess: &[f64]) -> Result<Point> {
        let n = self.dimension();
        if phi_target.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: phi_target.len(),
            });
        }
        let mut x = guess.to_vec();
        let resid = |x: &[f64]| -> Result<(Vec<f64>, f64)> {
            let r: Vec<f64> = self.evaluate(x)?.iter().zip(phi_target).map(|(a, b)| a - b).collect();
            let m = r.iter().fold(0.0f64, |m, v| libm::fmax(m, libm::fabs(*v)));
            Ok((r, m))
        };
        let (mut r, mut size) = resid(&x)?;
        for _ in 0..NEWTON_MAX_ITER {
            if size < NEWTON_TOL {
                return Ok(Point::new(x));
            }
            let (jinv, _) = self.inverse_jacobian(&x)?;
            let dx: Vec<f64> = (0..n).map(|a| (0..n).map(|i| jinv[(a, i)] * r[i]).sum()).collect();
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - t * d).collect();
                match resid(&trial) {
                    Ok((rt, st)) if st < size || t < 1e-4 => {
                        x = trial;
                        r = rt;
                        size = st;
                        break;
                    }
                    _ if t < 1e-4 => return Err(Error::InverseDidNotConverge { residual: size }),
                    _ => t *= 0.5,
                }
            }
        }
        if size < NEWTON_TOL {
            Ok(Point::new(x))
        } else {
            Err(Error::InverseDidNotConverge { residual: size })
        }
    }
}

/// `int Theta(y) dy` along axis-parallel segments from `from` to `to`,
/// moving the axes in `order`.
fn coframe_line_integral(frame: &FrameField, from: &[f64], to: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    let n = from.len();
    let rule = gauss_legendre(PANEL_NODES);
    let mut acc = vec![0.0; n];
    let mut y = from.to_vec();
    for &axis in order {
        let (a, b) = (y[axis], to[axis]);
        if a != b {
            let width = (b - a) / PANELS as f64;
            for p in 0..PANELS {
                let lo = a + p as f64 * width;
                let panel = rule.on_interval(lo, lo + width);
                for (t, w) in panel.nodes.iter().zip(&panel.weights) {
                    let mut q = y.clone();
                    q[axis] = *t;
                    let theta = frame.coframe(&q)?;
                    for (i, v) in acc.iter_mut().enumerate() {
                        // on_interval keeps the sign of width in the weight
                        *v += w * theta[(i, axis)];
                    }
                }
            }
        }
        y[axis] = b;
    }
    Ok(acc)
}

impl Completion {
    /// Cofactors of the first row of the Jacobian: `det J = xi . grad y1`.
    fn minors(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let grads = self.partial.iter().map(|f| f.gradient(x)).collect::<Result<Vec<_>>>()?;
        Ok((0..n)
            .map(|nu| {
                if n == 1 {
                    return 1.0;
                }
                let m = Matrix::from_fn(n - 1, n - 1, |r, c| grads[r][if c < nu { c } else { c + 1 }]);
                let sign = if nu % 2 == 0 { 1.0 } else { -1.0 };
                sign * m.determinant()
            })
            .collect())
    }

    /// Follows the characteristic through `x` back to the seed hyperplane;
    /// returns the end point and the characteristic parameter gained.
    fn to_seed(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = x.len();
        let b = &self.seed.base_point;
        let sigma_q: f64 = (0..n).map(|k| (x[k] - b[k]) * self.normal[k]).sum();
        if sigma_q == 0.0 {
            return Ok((x.to_vec(), 0.0));
        }
        let mut y0 = x.to_vec();
        y0.push(0.0);
        let end = rk4(
            |_, y| {
                let xi = self.minors(&y[..n])?;
                let speed: f64 = xi.iter().zip(&self.normal).map(|(a, b)| a * b).sum();
                let scale = libm::sqrt(xi.iter().map(|v| v * v).sum());
                if !(libm::fabs(speed) > 1e-8 * libm::fmax(scale, 1e-300)) {
                    return Err(Error::CharacteristicsLeftDomain);
                }
                let mut out: Vec<f64> = xi.iter().map(|v| v / speed).collect();
                out.push(1.0 / speed);
                Ok(out)
            },
            sigma_q,
            0.0,
            &y0,
            CHARACTERISTIC_STEPS,
        )
        .map_err(|e| match e {
            Error::Domain(_) => Error::CharacteristicsLeftDomain,
            other => other,
        })?;
        Ok((end[..n].to_vec(), end[n]))
    }

    fn first_coordinate(&self, x: &[f64]) -> Result<f64> {
        let (end, ds) = self.to_seed(x)?;
        let seed = match &self.seed.values {
            Some(f) => f.evaluate(&end)?,
            None => 0.0,
        };
        // ds runs from x to the hyperplane, y1 grows by C per unit s
        Ok(seed - self.c * ds)
    }
}

/// Completes `y2..yn` with a `y1` such that `det(dy/dx) = c`.
pub fn volume_preserving_completion<S: AsRef<str>>(
    chart: Arc<ChartSpec>,
    partial_coords: &[S],
    c: f64,
    seed: SeedData,
) -> Result<ProperCoordinateMap> {
    let n = chart.dimension();
    if partial_coords.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: partial_coords.len(),
        });
    }
    if !(c != 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument("the target determinant must be a nonzero constant"));
    }
    chart.check_point(&seed.base_point)?;
    let partial = partial_coords
        .iter()
        .map(|s| chart.parse_expr(s.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut completion = Completion {
        partial,
        c,
        seed,
        normal: vec![0.0; n],
    };
    let xi = completion.minors(&completion.seed.base_point)?;
    let size = libm::sqrt(xi.iter().map(|v| v * v).sum());
    if !(size > 1e-12) {
        return Err(Error::DegenerateMinors);
    }
    completion.normal = xi.iter().map(|v| v / size).collect();
    Ok(ProperCoordinateMap {
        chart,
        kind: MapKind::Completion(completion),
        certified: false,
    })
}

/// Largest `|det J - c|` over the grid.
pub fn determinant_residual(m: &ProperCoordinateMap, grid: &[Point], c: f64) -> Result<f64> {
    grid.iter().try_fold(0.0f64, |w, p| {
        let det = m.jacobian_at(p)?.determinant();
        Ok(libm::fmax(w, libm::fabs(det - c)))
    })
}

/// Points along the characteristic through `x`, `count` steps of
/// parameter length `ds` each, for freedom checks.
pub fn characteristic_through(m: &ProperCoordinateMap, x: &Point, ds: f64, count: usize) -> Result<Vec<Point>> {
    let c = match &m.kind {
        MapKind::Completion(c) => c,
        _ => return Err(Error::InvalidArgument("only completed maps have characteristics")),
    };
    let mut out = vec![x.clone()];
    let mut y = x.to_vec();
    for _ in 0..count {
        y = rk4(|_, p| c.minors(p), 0.0, ds, &y, 8)?;
        out.push(Point::new(y.clone()));
    }
    Ok(out)
}

/// `ln sqrt|g~|` of the pulled-back metric at the source point `x`:
/// `ln sqrt|g(x)| - ln|det J(x)|`.
fn ln_proper_density(m: &ProperCoordinateMap, x: &[f64]) -> Result<f64> {
    let det = m.jacobian_at(x)?.determinant();
    if !(libm::fabs(det) > 0.0) || !det.is_finite() {
        return Err(Error::SingularJacobian);
    }
    Ok(m.chart.ln_volume_density(x)? - libm::log(libm::fabs(det)))
}

/// `d ln sqrt|g~| / d phi^j` at the source point `x`.
fn proper_density_gradient(m: &ProperCoordinateMap, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let (jinv, _) = m.inverse_jacobian(x)?;
    let step = |a: usize| NESTED_STEP * libm::fmax(1.0, libm::fabs(x[a]));
    let grad = (0..n)
        .map(|a| diff::richardson(|q| ln_proper_density(m, q), x, a, step(a)))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n).map(|j| (0..n).map(|a| grad[a] * jinv[(a, j)]).sum()).collect())
}

/// Largest `|d ln sqrt|g~| / d phi^j|` over the grid, and whether it is
/// below [`CERTIFY_TOL`].
pub fn check_volume_preserving(m: &ProperCoordinateMap, grid: &[Point]) -> Result<(f64, bool)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid"));
    }
    let mut worst = 0.0f64;
    for p in grid {
        for g in proper_density_gradient(m, p)? {
            worst = libm::fmax(worst, libm::fabs(g));
        }
    }
    Ok((worst, worst < CERTIFY_TOL))
}

/// Divergence of `chi_(i) = d/d phi^i` at the source point `p`, computed in
/// the source chart from the columns of `J^-1`.
pub fn tangent_expansion(m: &ProperCoordinateMap, i: usize, p: &[f64]) -> Result<f64> {
    let n = m.dimension();
    if i >= n {
        return Err(Error::InvalidArgument("index out of range"));
    }
    let chi = |q: &[f64]| -> Result<Vec<f64>> {
        let (jinv, _) = m.inverse_jacobian(q)?;
        Ok((0..n).map(|a| jinv[(a, i)]).collect())
    };
    let grad = m.chart.ln_density_gradient(p)?;
    let here = chi(p)?;
    let mut div = 0.0;
    for a in 0..n {
        let step = NESTED_STEP * libm::fmax(1.0, libm::fabs(p[a]));
        div += diff::richardson(|q| Ok(chi(q)?[a]), p, a, step)? + grad[a] * here[a];
    }
    Ok(div)
}

/// `g~ = J^-T g J^-1` at the source point `x`.
pub fn pullback_metric(m: &ProperCoordinateMap, x: &[f64]) -> Result<Matrix> {
    let (jinv, _) = m.inverse_jacobian(x)?;
    let g = m.chart.metric_at(x)?;
    Ok(jinv.transpose() * g * jinv)
}

/// `Gamma^k_{k i} = d_i ln sqrt|g~(phi)|`, differentiating in the proper
/// chart through the inverse map. `guess` seeds the Newton solves.
pub fn christoffel_trace(m: &ProperCoordinateMap, i: usize, phi: &[f64], guess: &[f64]) -> Result<f64> {
    let n = m.dimension();
    if i >= n {
        return Err(Error::InvalidArgument("index out of range"));
    }
    let x0 = m.inverse(phi, guess)?;
    let ln_density = |q: &[f64]| -> Result<f64> {
        let x = m.inverse(q, &x0)?;
        let det = pullback_metric(m, &x)?.determinant();
        Ok(0.5 * libm::log(libm::fabs(det)))
    };
    diff::richardson(ln_density, phi, i, NESTED_STEP * libm::fmax(1.0, libm::fabs(phi[i])))
}

/// Potentials of a holonomic, divergence-free frame: `d phi^i = f^-1^i`.
/// `base_value` is `phi(base_point)`; the gates run on `check_points`, which
/// also serve as the certification grid.
pub fn proper_from_divfree_frame(
    f: &FrameField,
    base_point: &Point,
    base_value: &[f64],
    check_points: &[Point],
) -> Result<ProperCoordinateMap> {
    let n = f.dimension();
    if base_value.len() != n || base_point.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: base_value.len(),
        });
    }
    let c = anholonomicity(f, check_points)?;
    let cmax = c.max_abs();
    if cmax >= HOLONOMY_TOL {
        return Err(Error::NonzeroAnholonomicity { max: cmax });
    }
    let mut div = 0.0f64;
    for p in check_points {
        for i in 0..n {
            div = libm::fmax(div, libm::fabs(f.divergence(i, p)?));
        }
    }
    if div >= DIVERGENCE_TOL {
        return Err(Error::NonzeroDivergence { max: div });
    }
    let forward: Vec<usize> = (0..n).collect();
    let backward: Vec<usize> = (0..n).rev().collect();
    let mut deviation = 0.0f64;
    for p in check_points {
        let a = coframe_line_integral(f, base_point, p, &forward)?;
        let b = coframe_line_integral(f, base_point, p, &backward)?;
        deviation = libm::fmax(deviation, vec_max_abs_diff(&a, &b));
    }
    if deviation >= PATH_TOL {
        return Err(Error::PathDependence { deviation });
    }
    let mut map = ProperCoordinateMap {
        chart: f.chart().clone(),
        kind: MapKind::FramePotential {
            frame: f.clone(),
            base_point: base_point.clone(),
            base_value: base_value.to_vec(),
        },
        certified: false,
    };
    map.certify(check_points)?;
    Ok(map)
}

/// `phi2 = Lambda phi1 + a` fitted on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub is_affine: bool,
    pub lambda: Matrix,
    pub a: Vec<f64>,
    pub max_deviation: f64,
}

pub fn residual_affine_check(m1: &ProperCoordinateMap, m2: &ProperCoordinateMap, grid: &[Point]) -> Result<AffineFit> {
    let n = m1.dimension();
    if m2.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m2.dimension(),
        });
    }
    let p1 = grid.iter().map(|p| m1.evaluate(p)).collect::<Result<Vec<_>>>()?;
    let p2 = grid.iter().map(|p| m2.evaluate(p)).collect::<Result<Vec<_>>>()?;
    // greedy choice of n + 1 affinely independent images
    let mut chosen = vec![0usize];
    for k in 1..grid.len() {
        if chosen.len() == n + 1 {
            break;
        }
        let mut rows: Vec<Vec<f64>> = chosen[1..]
            .iter()
            .map(|&c| p1[c].iter().zip(&p1[0]).map(|(a, b)| a - b).collect())
            .collect();
        rows.push(p1[k].iter().zip(&p1[0]).map(|(a, b)| a - b).collect());
        let m = Matrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        let scale = crate::linalg::max_abs(&m).max(1e-300);
        let sv = m.svd(false, false).singular_values;
        let smallest = sv.iter().fold(f64::INFINITY, |a, b| libm::fmin(a, *b));
        if smallest > 1e-8 * scale {
            chosen.push(k);
        }
    }
    if chosen.len() < n + 1 {
        return Err(Error::SingularFit);
    }
    let system = Matrix::from_fn(n + 1, n + 1, |r, c| if c < n { p1[chosen[r]][c] } else { 1.0 });
    let (inv, _) = checked_inverse(&system).ok_or(Error::SingularFit)?;
    let rhs = Matrix::from_fn(n + 1, n, |r, c| p2[chosen[r]][c]);
    let sol = inv * rhs;
    let lambda = Matrix::from_fn(n, n, |i, j| sol[(j, i)]);
    let a: Vec<f64> = (0..n).map(|i| sol[(n, i)]).collect();
    let mut worst = 0.0f64;
    for (u, v) in p1.iter().zip(&p2) {
        for i in 0..n {
            let fit: f64 = (0..n).map(|j| lambda[(i, j)] * u[j]).sum::<f64>() + a[i];
            worst = libm::fmax(worst, libm::fabs(fit - v[i]));
        }
    }
    Ok(AffineFit {
        is_affine: worst < AFFINE_TOL,
        lambda,
        a,
        max_deviation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{builtin_chart, builtin_frame};
    use crate::chart::Signature;

    fn flat2() -> Arc<ChartSpec> {
        Arc::new(ChartSpec::diagonal("flat", &["x0", "x1"], &["1", "1"], Signature::Riemannian).unwrap())
    }

    fn grid(lo: [f64; 2], hi: [f64; 2], k: usize) -> Vec<Point> {
        let mut out = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let t = i as f64 / (k - 1) as f64;
                let s = j as f64 / (k - 1) as f64;
                out.push(Point::from([lo[0] + t * (hi[0] - lo[0]), lo[1] + s * (hi[1] - lo[1])]));
            }
        }
        out
    }

    #[test]
    fn identity_map_is_certified() {
        let m = ProperCoordinateMap::identity(flat2());
        let (r, ok) = check_volume_preserving(&m, &grid([-1.0, -1.0], [1.0, 1.0], 4)).unwrap();
        assert_eq!(r, 0.0);
        assert!(ok);
        assert_eq!(tangent_expansion(&m, 0, &[0.3, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn polar_and_exp_hand_maps() {
        let polar = Arc::new(builtin_chart("polar2").unwrap());
        let m = ProperCoordinateMap::from_expressions(polar.clone(), &["x0^2/2", "x1"]).unwrap();
        let g = grid([0.6, -1.0], [2.0, 1.0], 5);
        assert!(check_volume_preserving(&m, &g).unwrap().1);
        let gt = pullback_metric(&m, &[1.4, 0.3]).unwrap();
        let u = 1.4f64 * 1.4 / 2.0;
        assert!((gt[(0, 0)] - 1.0 / (2.0 * u)).abs() < 1e-9 && (gt[(1, 1)] - 2.0 * u).abs() < 1e-9);
        let raw = ProperCoordinateMap::identity(polar);
        let te = tangent_expansion(&raw, 0, &[2.0, 0.0]).unwrap();
        assert!((te - 0.5).abs() < 1e-9, "{te}");
        assert!(!check_volume_preserving(&raw, &g).unwrap().1);

        let e = Arc::new(builtin_chart("exp2").unwrap());
        let m = ProperCoordinateMap::from_expressions(e, &["exp(x0)", "x1"]).unwrap();
        assert!(check_volume_preserving(&m, &grid([-1.0, -1.0], [1.0, 1.0], 5)).unwrap().1);
    }

    #[test]
    fn newton_inverse_round_trip() {
        let polar = Arc::new(builtin_chart("polar2").unwrap());
        let m = ProperCoordinateMap::from_expressions(polar, &["x0^2/2", "x1"]).unwrap();
        let x = m.inverse(&[2.0, 0.5], &[1.0, 0.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn divfree_polar_frame_gives_half_square() {
        let f = builtin_frame("polar2-divfree").unwrap();
        let b = Point::from([1.0, 0.0]);
        let pts = grid([0.6, -1.0], [2.0, 1.0], 4);
        let m = proper_from_divfree_frame(&f, &b, &[0.5, 0.0], &pts).unwrap();
        assert!(m.certified());
        for p in &pts {
            let v = m.evaluate(p).unwrap();
            assert!((v[0] - p[0] * p[0] / 2.0).abs() < 1e-12 && (v[1] - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn divfree_gates() {
        let pts = grid([0.6, -1.0], [2.0, 1.0], 3);
        let b = Point::from([1.0, 0.0]);
        let exp = builtin_frame("polar2-exp").unwrap();
        assert!(matches!(
            proper_from_divfree_frame(&exp, &b, &[0.0, 0.0], &pts),
            Err(Error::NonzeroAnholonomicity { .. })
        ));
        let coord = builtin_frame("polar2-coordinate").unwrap();
        assert!(matches!(
            proper_from_divfree_frame(&coord, &b, &[0.0, 0.0], &pts),
            Err(Error::NonzeroDivergence { .. })
        ));
    }

    #[test]
    fn completion_of_x1() {
        let m = volume_preserving_completion(
            flat2(),
            &["x1"],
            1.0,
            SeedData {
                base_point: Point::from([0.0, 0.0]),
                values: None,
            },
        )
        .unwrap();
        for p in grid([-1.0, -1.0], [1.0, 1.0], 3) {
            let v = m.evaluate(&p).unwrap();
            assert!((v[0] - p[0]).abs() < 1e-12 && v[1] == p[1], "{v:?} {p:?}");
        }
    }

    #[test]
    fn completion_rejects_vanishing_minors() {
        let r = volume_preserving_completion(
            flat2(),
            &["x0*x1"],
            1.0,
            SeedData {
                base_point: Point::from([0.0, 0.0]),
                values: None,
            },
        );
        assert_eq!(r, Err(Error::DegenerateMinors));
    }

    #[test]
    fn affine_recovery() {
        let c = flat2();
        let m1 = ProperCoordinateMap::from_expressions(c.clone(), &["x0 + 0.1*x1", "x1"]).unwrap();
        let m2 = ProperCoordinateMap::from_expressions(c.clone(), &["2*(x0 + 0.1*x1) + 1", "x1/2 - 3"]).unwrap();
        let g = grid([-1.0, -1.0], [1.0, 1.0], 4);
        let fit = residual_affine_check(&m1, &m2, &g).unwrap();
        assert!(fit.is_affine);
        assert!((fit.lambda[(0, 0)] - 2.0).abs() < 1e-12 && (fit.lambda[(1, 1)] - 0.5).abs() < 1e-12);
        assert!(fit.lambda[(0, 1)].abs() < 1e-12 && fit.lambda[(1, 0)].abs() < 1e-12);
        assert!((fit.a[0] - 1.0).abs() < 1e-12 && (fit.a[1] + 3.0).abs() < 1e-12);
        let m3 = ProperCoordinateMap::from_expressions(c, &["x0 + 0.1*x1 + x1^2", "x1"]).unwrap();
        assert!(!residual_affine_check(&m1, &m3, &g).unwrap().is_affine);
    }
}
