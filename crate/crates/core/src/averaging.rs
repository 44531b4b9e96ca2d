//! Regions, volumes and covariant averages.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bilocal::BilocalOperator;
use crate::chart::{ChartSpec, TensorFieldSpec, TensorValue, Valence};
use crate::error::{Error, Result};
use crate::fieldexpr::Point;
use crate::linalg::{pairwise_sum, pairwise_sum_vectors};
use crate::quadrature::{gauss_legendre, midpoint, tensor_product, Rule1d};
use crate::transport::{drag_region, ShiftField};

pub const DEFAULT_NODES_PER_AXIS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    GaussLegendre,
    Midpoint,
}

impl QuadratureRule {
    fn rule(self, m: usize) -> Rule1d {
        match self {
            QuadratureRule::GaussLegendre => gauss_legendre(m),
            QuadratureRule::Midpoint => midpoint(m),
        }
    }
}

/// The coordinate box a region was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDescriptor {
    pub center: Point,
    pub half_widths: Vec<f64>,
    pub nodes_per_axis: usize,
    pub rule: QuadratureRule,
}

/// A quadrature node. The weight carries the coordinate measure only.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub point: Point,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    chart: Arc<ChartSpec>,
    support_point: Point,
    nodes: Vec<Node>,
    descriptor: Option<BoxDescriptor>,
}

impl Region {
    pub fn new(
        chart: Arc<ChartSpec>,
        support_point: Point,
        nodes: Vec<Node>,
        descriptor: Option<BoxDescriptor>,
    ) -> Result<Region> {
        let n = chart.dimension();
        chart.check_point(&support_point)?;
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("a region needs at least one node"));
        }
        for node in &nodes {
            chart.check_point(&node.point)?;
            if !(node.weight > 0.0 && node.weight.is_finite()) {
                return Err(Error::InvalidArgument("quadrature weights must be positive"));
            }
        }
        for a in 0..n {
            let lo = nodes.iter().map(|p| p.point[a]).fold(f64::INFINITY, libm::fmin);
            let hi = nodes.iter().map(|p| p.point[a]).fold(f64::NEG_INFINITY, libm::fmax);
            let slack = 1e-12 * libm::fmax(1.0, hi - lo);
            let s = support_point[a];
            // single-node rules put the only node on the support point
            if s < lo - slack || s > hi + slack {
                return Err(Error::InvalidArgument("support point outside the node bounding box"));
            }
        }
        Ok(Region {
            chart,
            support_point,
            nodes,
            descriptor,
        })
    }

    pub fn chart(&self) -> &Arc<ChartSpec> {
        &self.chart
    }

    pub fn dimension(&self) -> usize {
        self.chart.dimension()
    }

    pub fn support_point(&self) -> &Point {
        &self.support_point
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn descriptor(&self) -> Option<&BoxDescriptor> {
        self.descriptor.as_ref()
    }

    /// Sum of the coordinate weights.
    pub fn coordinate_measure(&self) -> f64 {
        pairwise_sum(&self.nodes.iter().map(|n| n.weight).collect::<Vec<_>>())
    }
}

pub fn make_box_region(chart: &Arc<ChartSpec>, center: &Point, half_widths: &[f64], nodes_per_axis: usize) -> Result<Region> {
    make_box_region_with_rule(chart, center, half_widths, nodes_per_axis, QuadratureRule::GaussLegendre)
}

pub fn make_box_region_with_rule(
    chart: &Arc<ChartSpec>,
    center: &Point,
    half_widths: &[f64],
    nodes_per_axis: usize,
    rule: QuadratureRule,
) -> Result<Region> {
    if nodes_per_axis < 2 {
        return Err(Error::InvalidArgument("nodes_per_axis must be at least 2"));
    }
    box_region(chart, center, half_widths, nodes_per_axis, rule)
}

fn box_region(
    chart: &Arc<ChartSpec>,
    center: &Point,
    half_widths: &[f64],
    m: usize,
    rule: QuadratureRule,
) -> Result<Region> {
    let n = chart.dimension();
    if n == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if center.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: center.dim(),
        });
    }
    if half_widths.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: half_widths.len(),
        });
    }
    if half_widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::NonPositiveExtent);
    }
    let reference = rule.rule(m);
    let rules: Vec<Rule1d> = (0..n)
        .map(|a| reference.on_interval(center[a] - half_widths[a], center[a] + half_widths[a]))
        .collect();
    let nodes = tensor_product(&rules)
        .into_iter()
        .map(|(p, w)| Node {
            point: Point::new(p),
            weight: w,
        })
        .collect();
    Region::new(
        chart.clone(),
        center.clone(),
        nodes,
        Some(BoxDescriptor {
            center: center.clone(),
            half_widths: half_widths.to_vec(),
            nodes_per_axis: m,
            rule,
        }),
    )
}

/// `sum_k w_k sqrt|g(x_k)|`.
pub fn region_volume(r: &Region) -> Result<f64> {
    let terms = r
        .nodes
        .iter()
        .map(|n| Ok(n.weight * r.chart.volume_density(&n.point)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedValue {
    pub components: TensorValue,
    pub region_volume: f64,
    /// Difference against the same box with one node fewer per axis;
    /// `None` when the region is not an untransported box.
    pub estimated_quadrature_error: Option<f64>,
}

/// `(1/V) sum_k w_k sqrt|g(x_k)| f(x_k)` where `f` already returns
/// components at the support point. Returns the mean and `V`.
pub fn mean_at_support<F>(r: &Region, valence: Valence, mut f: F) -> Result<(TensorValue, f64)>
where
    F: FnMut(&Point) -> Result<TensorValue>,
{
    let n = r.dimension();
    let width = valence.component_count(n);
    let mut reference: Option<Vec<f64>> = None;
    let mut rows = Vec::with_capacity(r.nodes.len());
    let mut densities = Vec::with_capacity(r.nodes.len());
    for node in &r.nodes {
        let value = f(&node.point)?;
        if value.valence != valence || value.dim != n {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: value.components.len(),
            });
        }
        let dw = node.weight * r.chart.volume_density(&node.point)?;
        // accumulate deviations from the first value so constants stay exact
        let base = reference.get_or_insert_with(|| value.components.clone());
        rows.push(value.components.iter().zip(base.iter()).map(|(v, b)| dw * (v - b)).collect::<Vec<_>>());
        densities.push(dw);
    }
    let volume = pairwise_sum(&densities);
    if !(volume > 0.0) {
        return Err(Error::InvalidArgument("region volume must be positive"));
    }
    let sums = pairwise_sum_vectors(&rows, width);
    let base = reference.unwrap_or_else(|| vec![0.0; width]);
    let components = base.iter().zip(&sums).map(|(b, s)| b + s / volume).collect();
    Ok((TensorValue::new(valence, n, components)?, volume))
}

/// Average of an arbitrary tensor-valued function of the node point.
/// `f` returns components at the node; they are carried to the support
/// point by `w`.
pub fn average_with<F>(w: &BilocalOperator, r: &Region, valence: Valence, mut f: F) -> Result<(TensorValue, f64)>
where
    F: FnMut(&Point) -> Result<TensorValue>,
{
    if w.dimension() != r.dimension() {
        return Err(Error::DimensionMismatch {
            expected: r.dimension(),
            found: w.dimension(),
        });
    }
    let x = r.support_point().clone();
    mean_at_support(r, valence, |p| w.extend(&f(p)?, &x, p))
}

pub fn average(t: &TensorFieldSpec, w: &BilocalOperator, r: &Region) -> Result<AveragedValue> {
    if t.dim() != r.dimension() {
        return Err(Error::DimensionMismatch {
            expected: r.dimension(),
            found: t.dim(),
        });
    }
    let (components, region_volume) = average_with(w, r, t.valence(), |p| t.evaluate(p))?;
    let estimated_quadrature_error = match r.descriptor() {
        Some(d) => {
            let coarse = box_region(r.chart(), &d.center, &d.half_widths, d.nodes_per_axis - 1, d.rule)?;
            let (c, _) = average_with(w, &coarse, t.valence(), |p| t.evaluate(p))?;
            Some(components.max_abs_diff(&c))
        }
        None => None,
    };
    Ok(AveragedValue {
        components,
        region_volume,
        estimated_quadrature_error,
    })
}

/// Region sizes tried by [`idempotency_experiment`], as fractions of the
/// macroscopic scale.
pub const IDEMPOTENCY_LADDER: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

/// RK4 steps used to carry the region to each inner support point.
pub const IDEMPOTENCY_DRAG_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdempotencyPoint {
    /// Full coordinate width of the box.
    pub d: f64,
    pub deviation: f64,
}

/// `|avg(avg t) - avg t|` over boxes of width `d` for each admissible ladder
/// step. The box around each inner support point is the outer box dragged
/// there along the constant coordinate displacement.
pub fn idempotency_experiment(
    t: &TensorFieldSpec,
    w: &BilocalOperator,
    base_region: &Region,
    lambda: f64,
    macro_scale: f64,
) -> Result<Vec<IdempotencyPoint>> {
    if !(lambda > 0.0 && lambda < macro_scale) {
        return Err(Error::InvalidArgument("need 0 < lambda < L"));
    }
    let desc = base_region
        .descriptor()
        .ok_or(Error::InvalidArgument("the base region must be a coordinate box"))?;
    let n = base_region.dimension();
    let sizes: Vec<f64> = IDEMPOTENCY_LADDER
        .iter()
        .map(|f| f * macro_scale)
        .filter(|d| *d >= 2.0 * lambda && *d <= 0.5 * macro_scale)
        .collect();
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no ladder size lies in [2 lambda, L/2]"));
    }
    let x = base_region.support_point().clone();
    let mut out = Vec::with_capacity(sizes.len());
    for d in sizes {
        let region = box_region(base_region.chart(), &desc.center, &vec![0.5 * d; n], desc.nodes_per_axis, desc.rule)?;
        let (direct, _) = average_with(w, &region, t.valence(), |p| t.evaluate(p))?;
        let (twice, _) = average_with(w, &region, t.valence(), |xp| {
            let shift: Vec<f64> = xp.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            let inner = if shift.iter().all(|s| *s == 0.0) {
                region.clone()
            } else {
                let s = ShiftField::constant(w.clone(), &shift, x.clone())?;
                drag_region(&region, &s, 1.0, IDEMPOTENCY_DRAG_STEPS)?.transported_region
            };
            Ok(average_with(w, &inner, t.valence(), |p| t.evaluate(p))?.0)
        })?;
        out.push(IdempotencyPoint {
            d,
            deviation: twice.max_abs_diff(&direct),
        });
    }
    Ok(out)
}
