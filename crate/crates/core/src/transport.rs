//! Shift fields, Lie-dragging of regions and the commutation of averaging
//! with differentiation.
//!
//! A dragged region carries, besides its node positions, the Jacobian
//! `J = det(dx(lambda)/dx(0))` of the flow at every node, integrated with
//! `d ln J / d lambda = d_alpha S^alpha`. Node weights of the transported
//! region are the original coordinate weights times `J`, so the volume
//! `sum w J sqrt|g|` is the volume of the dragged set up to the original
//! quadrature error.

use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::{average_with, mean_at_support, Node, Region};
use crate::bilocal::BilocalOperator;
use crate::chart::{TensorFieldSpec, TensorValue, Valence};
use crate::diff;
use crate::error::{Error, Result};
use crate::fieldexpr::{FieldExpr, Point};
use crate::linalg::{pairwise_sum, Matrix, Rank3};
use crate::ode::rk4_step;

/// `S(x') = W(x', x) xi(x)` for the current supporting point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftField {
    w: BilocalOperator,
    xi: Vec<FieldExpr>,
    support_point: Point,
}

impl ShiftField {
    pub fn new(w: BilocalOperator, xi: Vec<FieldExpr>, support_point: Point) -> Result<ShiftField> {
        let n = w.dimension();
        if xi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: xi.len(),
            });
        }
        if support_point.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: support_point.dim(),
            });
        }
        if let Some(e) = xi.iter().find(|e| e.coordinate_names() != w.frame().chart().coordinate_names()) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: e.dimension(),
            });
        }
        Ok(ShiftField { w, xi, support_point })
    }

    pub fn parse<S: AsRef<str>>(w: BilocalOperator, xi: &[S], support_point: Point) -> Result<ShiftField> {
        let chart = w.frame().chart().clone();
        let xi = xi.iter().map(|s| chart.parse_expr(s.as_ref())).collect::<Result<Vec<_>>>()?;
        ShiftField::new(w, xi, support_point)
    }

    /// Constant coordinate direction `xi`.
    pub fn constant(w: BilocalOperator, xi: &[f64], support_point: Point) -> Result<ShiftField> {
        let names = w.frame().chart().coordinate_names().to_vec();
        let xi = xi.iter().map(|v| FieldExpr::constant(*v, &names)).collect();
        ShiftField::new(w, xi, support_point)
    }

    /// `xi = f_i`, frame vector `i` of the operator's own frame.
    pub fn frame_vector(w: BilocalOperator, i: usize, support_point: Point) -> Result<ShiftField> {
        if i >= w.dimension() {
            return Err(Error::InvalidArgument("frame index out of range"));
        }
        let xi = w.frame().vector_exprs(i).to_vec();
        ShiftField::new(w, xi, support_point)
    }

    pub fn operator(&self) -> &BilocalOperator {
        &self.w
    }

    pub fn support_point(&self) -> &Point {
        &self.support_point
    }

    pub fn xi_at(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.xi.iter().map(|e| e.evaluate(p)).collect()
    }

    /// `Theta(x) xi(x)`: the constant frame coefficients of `S` for the
    /// supporting point `x`.
    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        let theta = self.w.right_factor(x)?;
        let xi = self.xi_at(x)?;
        Ok((0..xi.len()).map(|i| (0..xi.len()).map(|b| theta[(i, b)] * xi[b]).sum()).collect())
    }

    pub fn with_support(&self, support_point: Point) -> ShiftField {
        ShiftField {
            w: self.w.clone(),
            xi: self.xi.clone(),
            support_point,
        }
    }
}

fn apply_frame(w: &BilocalOperator, c: &[f64], xp: &[f64]) -> Result<Vec<f64>> {
    let e = w.left_factor(xp)?;
    let n = c.len();
    Ok((0..n).map(|a| (0..n).map(|i| e[(a, i)] * c[i]).sum()).collect())
}

/// Coordinate divergence `d_alpha f_i^alpha` of every frame vector.
fn coordinate_divergences(w: &BilocalOperator, p: &[f64]) -> Result<Vec<f64>> {
    let f = w.frame();
    let n = f.dimension();
    (0..n)
        .map(|i| {
            let mut d = 0.0;
            for a in 0..n {
                let c = f.component(i, a);
                if !c.is_constant() {
                    d += c.derivative_at(a, p)?;
                }
            }
            Ok(d)
        })
        .collect()
}

/// Metric divergence of `S = c^i f_i` at `p`.
fn metric_divergence(w: &BilocalOperator, c: &[f64], p: &[f64]) -> Result<f64> {
    let mut d = 0.0;
    for (i, ci) in c.iter().enumerate() {
        if *ci != 0.0 {
            d += ci * w.frame().divergence(i, p)?;
        }
    }
    Ok(d)
}

pub fn shift_at(s: &ShiftField, x_prime: &[f64]) -> Result<Vec<f64>> {
    let c = s.coefficients(&s.support_point)?;
    apply_frame(&s.w, &c, x_prime)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragOptions {
    pub steps: usize,
    /// Also take two half steps per step and report the largest state
    /// difference (triples the cost).
    pub estimate_step_error: bool,
}

impl Default for DragOptions {
    fn default() -> Self {
        DragOptions {
            steps: 64,
            estimate_step_error: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub transported_region: Region,
    /// `(lambda, V)` at every step including the start.
    pub volume_history: Vec<(f64, f64)>,
    pub max_step_error: Option<f64>,
}

fn flow_error(e: Error, lambda: f64) -> Error {
    match e {
        Error::Domain(_) | Error::SingularMetric { .. } | Error::SignatureMismatch { .. } => Error::FlowLeftDomain { lambda },
        other => other,
    }
}

pub fn drag_region(r: &Region, s: &ShiftField, delta_lambda: f64, steps: usize) -> Result<FlowResult> {
    drag_region_with(
        r,
        s,
        delta_lambda,
        &DragOptions {
            steps,
            estimate_step_error: false,
        },
    )
}

/// Drags every node along `S` while the supporting point follows `xi`.
/// The starting supporting point is the region's.
pub fn drag_region_with(r: &Region, s: &ShiftField, delta_lambda: f64, opts: &DragOptions) -> Result<FlowResult> {
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1"));
    }
    if !delta_lambda.is_finite() {
        return Err(Error::InvalidArgument("delta_lambda must be finite"));
    }
    let n = r.dimension();
    if s.w.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.w.dimension(),
        });
    }
    let chart = r.chart().clone();
    let stride = n + 1;
    // state: support, then (x, ln J) per node
    let mut y = Vec::with_capacity(n + stride * r.nodes().len());
    y.extend_from_slice(r.support_point());
    for node in r.nodes() {
        y.extend_from_slice(&node.point);
        y.push(0.0);
    }
    let mut rhs = |_: f64, y: &[f64]| -> Result<Vec<f64>> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(crate::error::DomainKind::NonFinite));
        }
        let support = &y[..n];
        let c = s.coefficients(support)?;
        let mut out = Vec::with_capacity(y.len());
        out.extend(s.xi_at(support)?);
        for chunk in y[n..].chunks(stride) {
            let xp = &chunk[..n];
            out.extend(apply_frame(&s.w, &c, xp)?);
            let div = coordinate_divergences(&s.w, xp)?;
            out.push(c.iter().zip(&div).map(|(a, b)| a * b).sum());
        }
        Ok(out)
    };
    let volume = |y: &[f64]| -> Result<f64> {
        let terms = r
            .nodes()
            .iter()
            .zip(y[n..].chunks(stride))
            .map(|(node, chunk)| Ok(node.weight * libm::exp(chunk[n]) * chart.volume_density(&chunk[..n])?))
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum(&terms))
    };
    let h = delta_lambda / opts.steps as f64;
    let mut history = Vec::with_capacity(opts.steps + 1);
    history.push((0.0, volume(&y).map_err(|e| flow_error(e, 0.0))?));
    let mut max_err: Option<f64> = None;
    for k in 0..opts.steps {
        let t = k as f64 * h;
        let next = rk4_step(&mut rhs, t, &y, h).map_err(|e| flow_error(e, t))?;
        if opts.estimate_step_error {
            let half = rk4_step(&mut rhs, t, &y, 0.5 * h).map_err(|e| flow_error(e, t))?;
            let two = rk4_step(&mut rhs, t + 0.5 * h, &half, 0.5 * h).map_err(|e| flow_error(e, t))?;
            let err = crate::linalg::vec_max_abs_diff(&next, &two);
            max_err = Some(libm::fmax(max_err.unwrap_or(0.0), err));
        }
        let lambda = (k + 1) as f64 * h;
        let collapsed = next[n..].chunks(stride).any(|c| {
            let j = libm::exp(c[n]);
            !(j > 0.0 && j.is_finite())
        });
        if collapsed || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::FlowLeftDomain { lambda });
        }
        y = next;
        history.push((lambda, volume(&y).map_err(|e| flow_error(e, lambda))?));
    }
    let nodes = r
        .nodes()
        .iter()
        .zip(y[n..].chunks(stride))
        .map(|(node, chunk)| Node {
            point: Point::new(chunk[..n].to_vec()),
            weight: node.weight * libm::exp(chunk[n]),
        })
        .collect();
    let transported_region = Region::new(chart, Point::new(y[..n].to_vec()), nodes, None)?;
    Ok(FlowResult {
        transported_region,
        volume_history: history,
        max_step_error: max_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeLaw {
    /// `dV/dlambda` at `lambda = 0` from drags of length `+-step`.
    pub measured: f64,
    /// `sum w sqrt|g| div S` over the undragged nodes.
    pub predicted: f64,
}

impl VolumeLaw {
    pub fn residual(&self) -> f64 {
        libm::fabs(self.measured - self.predicted)
    }
}

/// Steps used for each short drag in the finite-difference checks.
pub const SHORT_DRAG_STEPS: usize = 4;

pub fn volume_law_check(r: &Region, s: &ShiftField, step: f64) -> Result<VolumeLaw> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive"));
    }
    let s = s.with_support(r.support_point().clone());
    let v = |l: f64| -> Result<f64> {
        let res = drag_region(r, &s, l, SHORT_DRAG_STEPS)?;
        Ok(res.volume_history.last().expect("history is never empty").1)
    };
    let coarse = (v(step)? - v(-step)?) / (2.0 * step);
    let fine = (v(0.5 * step)? - v(-0.5 * step)?) / step;
    let measured = (4.0 * fine - coarse) / 3.0;
    let c = s.coefficients(r.support_point())?;
    let terms = r
        .nodes()
        .iter()
        .map(|node| Ok(node.weight * r.chart().volume_density(&node.point)? * metric_divergence(&s.w, &c, &node.point)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(VolumeLaw {
        measured,
        predicted: pairwise_sum(&terms),
    })
}

/// `R[a'][b][g] = W_[b,g] + W_[b,d'} W^d'_g]`: the antisymmetrized `x`
/// derivative plus the antisymmetrized `x'` derivative contracted with `W`.
pub fn biholonomicity_residual(w: &BilocalOperator, x: &[f64], x_prime: &[f64], step: f64) -> Result<Rank3> {
    let n = w.dimension();
    let wv = w.evaluate(x_prime, x)?;
    let dx = (0..n).map(|g| w.derivative_second(x_prime, x, g, step)).collect::<Result<Vec<_>>>()?;
    let dxp = (0..n).map(|d| w.derivative_first(x_prime, x, d, step)).collect::<Result<Vec<_>>>()?;
    let mut r = Rank3::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for g in 0..n {
                let first = 0.5 * (dx[g][(a, b)] - dx[b][(a, g)]);
                let mut second = 0.0;
                for d in 0..n {
                    second += dxp[d][(a, b)] * wv[(d, g)] - dxp[d][(a, g)] * wv[(d, b)];
                }
                r.set(a, b, g, first + 0.5 * second);
            }
        }
    }
    Ok(r)
}

/// `W^a'_{b,a'} + (ln sqrt|g|)_{,a'} W^a'_b` at `x' = x`.
pub fn divergence_residual(w: &BilocalOperator, x: &[f64], xi_index: usize) -> Result<f64> {
    let n = w.dimension();
    if xi_index >= n {
        return Err(Error::InvalidArgument("index out of range"));
    }
    let grad = w.frame().chart().ln_density_gradient(x)?;
    let wv = w.evaluate(x, x)?;
    let mut total = 0.0;
    for a in 0..n {
        let d = w.derivative_first(x, x, a, diff::default_step(x[a]))?;
        total += d[(a, xi_index)] + grad[a] * wv[(a, xi_index)];
    }
    Ok(total)
}

/// `S^a_{b g}(x, x') = A^a_e'(x, x') (A^e'_{b,g} + A^e'_{b,s'} W^s'_g)`,
/// with `A = W` evaluated as `W(x', x)`. Indexed `[a][b][g]`.
pub fn structural_functions_at(w: &BilocalOperator, x: &[f64], x_prime: &[f64], step: f64) -> Result<Rank3> {
    let n = w.dimension();
    let back = w.evaluate(x, x_prime)?;
    let forward = w.evaluate(x_prime, x)?;
    let dxp = (0..n).map(|s| w.derivative_first(x_prime, x, s, step)).collect::<Result<Vec<_>>>()?;
    let mut out = Rank3::zeros(n);
    for g in 0..n {
        let mut m = w.derivative_second(x_prime, x, g, step)?;
        for (s, d) in dxp.iter().enumerate() {
            m += d * forward[(s, g)];
        }
        let sg = &back * m;
        for a in 0..n {
            for b in 0..n {
                out.set(a, b, g, sg[(a, b)]);
            }
        }
    }
    Ok(out)
}

/// Structural functions at coincidence.
pub fn structural_functions(w: &BilocalOperator, x: &[f64], step: f64) -> Result<Rank3> {
    structural_functions_at(w, x, x, step)
}

fn slice_gamma(s: &Rank3, g: usize) -> Matrix {
    let n = s.dim();
    Matrix::from_fn(n, n, |a, b| s.get(a, b, g))
}

/// `-S_g p` on the upper index, `p S_g` on the lower one.
fn structural_action(sg: &Matrix, p: &TensorValue) -> (TensorValue, TensorValue) {
    let n = p.dim;
    let zero = TensorValue {
        valence: p.valence,
        dim: n,
        components: vec![0.0; p.components.len()],
    };
    let mut upper = zero.clone();
    let mut lower = zero;
    match p.valence {
        Valence::Scalar => {}
        Valence::Vector => {
            let v = Matrix::from_column_slice(n, 1, &p.components);
            upper.components = (-(sg * v)).iter().copied().collect();
        }
        Valence::Covector => {
            let w = Matrix::from_row_slice(1, n, &p.components);
            lower.components = (w * sg).iter().copied().collect();
        }
        Valence::Mixed => {
            let m = Matrix::from_row_slice(n, n, &p.components);
            let u = -(sg * &m);
            let l = &m * sg;
            upper.components = (0..n * n).map(|k| u[(k / n, k % n)]).collect();
            lower.components = (0..n * n).map(|k| l[(k / n, k % n)]).collect();
        }
    }
    (upper, lower)
}

/// The five averaged terms of the general commutation law. Their sum is
/// the derivative of the average for any operator; the last four vanish
/// under the biholonomicity and divergence-free conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationTerms {
    /// `<extension of S^s p_{,s}>`.
    pub transported_derivative: TensorValue,
    /// `<p-bold div S>`.
    pub weighted_divergence: TensorValue,
    /// `-avg(p) <div S>`.
    pub mean_divergence: TensorValue,
    /// `-<S_g p-bold>` on the upper index.
    pub upper_structural: TensorValue,
    /// `<p-bold S_g>` on the lower index.
    pub lower_structural: TensorValue,
}

impl CommutationTerms {
    pub fn total(&self) -> TensorValue {
        self.transported_derivative
            .combine(1.0, &self.weighted_divergence, 1.0)
            .combine(1.0, &self.mean_divergence, 1.0)
            .combine(1.0, &self.upper_structural, 1.0)
            .combine(1.0, &self.lower_structural, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutationResult {
    /// Central difference of averages over regions dragged `+-step`.
    pub lhs: TensorValue,
    /// `<p-bold_{,g} + p-bold_{,a'} W^a'_g>`.
    pub rhs: TensorValue,
    pub residual: f64,
    pub terms: CommutationTerms,
}

pub fn commutation_check(
    t: &TensorFieldSpec,
    w: &BilocalOperator,
    r: &Region,
    coord: usize,
    step: f64,
) -> Result<CommutationResult> {
    let n = r.dimension();
    if coord >= n {
        return Err(Error::InvalidArgument("coordinate index out of range"));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive"));
    }
    let valence = t.valence();
    let x = r.support_point().clone();
    let mut dir = vec![0.0; n];
    dir[coord] = 1.0;
    let shift = ShiftField::constant(w.clone(), &dir, x.clone())?;

    let avg = |region: &Region| -> Result<TensorValue> { Ok(average_with(w, region, valence, |p| t.evaluate(p))?.0) };
    let plus = drag_region(r, &shift, step, SHORT_DRAG_STEPS)?.transported_region;
    let minus = drag_region(r, &shift, -step, SHORT_DRAG_STEPS)?.transported_region;
    let lhs = avg(&plus)?.combine(0.5 / step, &avg(&minus)?, -0.5 / step);

    let c = shift.coefficients(&x)?;
    // directional derivative of p-bold(x, x') in the doubled space
    let rhs = mean_at_support(r, valence, |xp| {
        let s = apply_frame(w, &c, xp)?;
        let mut y = x.to_vec();
        y.extend_from_slice(xp);
        let mut yd = dir.clone();
        yd.extend_from_slice(&s);
        let h = diff::default_step_for(&y);
        let d = diff::directional(
            |q| Ok(w.extend(&t.evaluate(&q[n..])?, &q[..n], &q[n..])?.components),
            &y,
            &yd,
            h,
        )?;
        TensorValue::new(valence, n, d)
    })?
    .0;

    let mean = avg(r)?;
    let transported_derivative = mean_at_support(r, valence, |xp| {
        let s = apply_frame(w, &c, xp)?;
        let d = diff::directional(|q| Ok(t.evaluate(q)?.components), xp, &s, diff::default_step_for(xp))?;
        w.extend(&TensorValue::new(valence, n, d)?, &x, xp)
    })?
    .0;
    let weighted_divergence = mean_at_support(r, valence, |xp| {
        let div = metric_divergence(w, &c, xp)?;
        let p = w.extend(&t.evaluate(xp)?, &x, xp)?;
        Ok(TensorValue {
            components: p.components.iter().map(|v| v * div).collect(),
            ..p
        })
    })?
    .0;
    let mean_div = mean_at_support(r, Valence::Scalar, |xp| Ok(TensorValue::scalar(n, metric_divergence(w, &c, xp)?)))?
        .0
        .components[0];
    let mean_divergence = mean.combine(-mean_div, &mean, 0.0);
    let mut upper_rows = Vec::new();
    let mut lower_rows = Vec::new();
    for node in r.nodes() {
        let sf = structural_functions_at(w, &x, &node.point, diff::default_step_for(&node.point))?;
        let p = w.extend(&t.evaluate(&node.point)?, &x, &node.point)?;
        let (u, l) = structural_action(&slice_gamma(&sf, coord), &p);
        upper_rows.push(u);
        lower_rows.push(l);
    }
    let mut k = 0;
    let upper_structural = mean_at_support(r, valence, |_| {
        k += 1;
        Ok(upper_rows[k - 1].clone())
    })?
    .0;
    let mut k = 0;
    let lower_structural = mean_at_support(r, valence, |_| {
        k += 1;
        Ok(lower_rows[k - 1].clone())
    })?
    .0;
    let residual = lhs.max_abs_diff(&rhs);
    Ok(CommutationResult {
        lhs,
        rhs,
        residual,
        terms: CommutationTerms {
            transported_derivative,
            weighted_divergence,
            mean_divergence,
            upper_structural,
            lower_structural,
        },
    })
}

/// Mixed second differences of the average along two coordinate paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResidual {
    pub mu: usize,
    pub nu: usize,
    /// `d_mu d_nu avg - d_nu d_mu avg`, per component.
    pub difference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleValuedness {
    pub pairs: Vec<PairResidual>,
    pub max_residual: f64,
}

impl SingleValuedness {
    /// Antisymmetric `n x n` matrix of the differences of one component.
    pub fn matrix(&self, n: usize, component: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for p in &self.pairs {
            m[(p.mu, p.nu)] = p.difference[component];
            m[(p.nu, p.mu)] = -p.difference[component];
        }
        m
    }
}

pub fn single_valuedness_check(t: &TensorFieldSpec, w: &BilocalOperator, r: &Region, step: f64) -> Result<SingleValuedness> {
    let n = r.dimension();
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive"));
    }
    let valence = t.valence();
    let unit = |k: usize| {
        let mut d = vec![0.0; n];
        d[k] = 1.0;
        d
    };
    let drag_along = |region: &Region, k: usize, l: f64| -> Result<Region> {
        let s = ShiftField::constant(w.clone(), &unit(k), region.support_point().clone())?;
        Ok(drag_region(region, &s, l, SHORT_DRAG_STEPS)?.transported_region)
    };
    // second difference along `first` then `second`
    let mixed = |first: usize, second: usize| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; valence.component_count(n)];
        for (s1, s2, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            let region = drag_along(&drag_along(r, first, s1 * step)?, second, s2 * step)?;
            let a = average_with(w, &region, valence, |p| t.evaluate(p))?.0;
            for (acc, v) in acc.iter_mut().zip(&a.components) {
                *acc += sign * v;
            }
        }
        Ok(acc.iter().map(|v| v / (4.0 * step * step)).collect())
    };
    let mut pairs = Vec::new();
    let mut worst = 0.0f64;
    for mu in 0..n {
        for nu in mu + 1..n {
            let a = mixed(mu, nu)?;
            let b = mixed(nu, mu)?;
            let difference: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            worst = difference.iter().fold(worst, |m, d| libm::fmax(m, libm::fabs(*d)));
            pairs.push(PairResidual { mu, nu, difference });
        }
    }
    Ok(SingleValuedness {
        pairs,
        max_residual: worst,
    })
}
