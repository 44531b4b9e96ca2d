use std::sync::Arc;

use macrograv_core::averaging::{
    average, idempotency_experiment, make_box_region_with_rule, region_volume, QuadratureRule, Region,
};
use macrograv_core::bilocal::{algebra_residuals, b_identity_residual, compute_b_functions, factorize_oracle, BilocalOperator};
use macrograv_core::chart::{ChartSpec, Valence};
use macrograv_core::frames::{anholonomicity, jacobi_residual, FrameField};
use macrograv_core::linalg::{matrix_to_rows, Matrix};
use macrograv_core::proper_coords::{
    check_volume_preserving, determinant_residual, proper_from_divfree_frame, residual_affine_check, tangent_expansion,
    volume_preserving_completion, ProperCoordinateMap, SeedData,
};
use macrograv_core::transport::{
    biholonomicity_residual, commutation_check, divergence_residual, drag_region, single_valuedness_check, volume_law_check,
    ShiftField,
};
use macrograv_core::{FieldExpr, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RegionSpec, RuleName, RunConfig};
use crate::output::csv_line;
use crate::CliError;

pub const VERIFY_TOLERANCES: &[(&str, f64)] = &[
    ("b_identity", 1e-7),
    ("b_independence", 1e-8),
    ("biholonomicity", 1e-7),
    ("coincidence", 1e-12),
    ("commutation", 1e-5),
    ("constancy", 1e-6),
    ("divergence", 1e-9),
    ("idempotency", 1e-10),
    ("inverse_pairing", 1e-12),
    ("jacobi", 1e-8),
    ("single_valuedness", 1e-5),
    ("volume_law", 1e-6),
];
pub const PROPER_TOLERANCES: &[(&str, f64)] = &[("determinant", 1e-6), ("tangent", 1e-6)];
pub const FACTORIZE_TOLERANCES: &[(&str, f64)] = &[("factorization", 1e-8)];

/// Result of one subcommand: the report body and whether every numerical
/// check passed.
pub struct Outcome {
    pub body: Value,
    pub csv: String,
    pub pass: bool,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Verify => verify(cfg),
        Command::Average => cmd_average(cfg),
        Command::Drag => drag(cfg),
        Command::ProperCoords => proper_coords(cfg),
        Command::Factorize => factorize(cfg),
    }
}

fn core<T>(r: macrograv_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from_core)
}

fn rng(cfg: &RunConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed)
}

/// Uniform points in the sampling box where the frame is non-degenerate.
fn sample(cfg: &RunConfig, frame: &FrameField, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Point>, CliError> {
    let bounds = cfg.sampling_box()?;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(CliError::Numerical("could not find enough regular sample points".into()));
        }
        let p = Point::new(bounds.iter().map(|[a, b]| if a < b { rng.gen_range(*a..*b) } else { *a }).collect());
        let ok = frame.chart().check_point(&p).is_ok()
            && frame.frame_matrix(&p).map(|e| e.determinant().abs() > 1e-3).unwrap_or(false);
        if ok {
            out.push(p);
        }
    }
    Ok(out)
}

fn build_region(chart: &Arc<ChartSpec>, spec: &RegionSpec, rule: QuadratureRule) -> Result<Region, CliError> {
    if spec.center.len() != chart.dimension() {
        return Err(CliError::Config(format!(
            "region has {} coordinates, chart has {}",
            spec.center.len(),
            chart.dimension()
        )));
    }
    core(make_box_region_with_rule(chart, &Point::new(spec.center.clone()), &spec.half_widths, spec.nodes, rule))
}

fn rule_of(cfg: &RunConfig) -> QuadratureRule {
    match cfg.params.rule {
        Some(RuleName::Midpoint) => QuadratureRule::Midpoint,
        _ => QuadratureRule::GaussLegendre,
    }
}

#[derive(Serialize)]
struct Entry {
    name: &'static str,
    anchor: &'static str,
    residual: f64,
    tolerance: f64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn entry(cfg: &RunConfig, name: &'static str, anchor: &'static str, value: Result<f64, CliError>) -> Entry {
    let tolerance = cfg.tol(name);
    match value {
        Ok(residual) => Entry {
            name,
            anchor,
            residual,
            tolerance,
            pass: residual.is_finite() && residual < tolerance,
            error: None,
        },
        Err(e) => Entry {
            name,
            anchor,
            residual: f64::NAN,
            tolerance,
            pass: false,
            error: Some(e.to_string()),
        },
    }
}

fn fmax(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let frame = cfg.require_frame()?;
    let chart = frame.chart().clone();
    let n = chart.dimension();
    let w = BilocalOperator::new(frame.clone());
    let mut g = rng(cfg);
    let pts = sample(cfg, &frame, cfg.params.samples.unwrap_or(202), &mut g)?;
    let few: Vec<Point> = pts.iter().take(20).cloned().collect();
    let region = build_region(&chart, &cfg.region_or_default()?, QuadratureRule::GaussLegendre)?;
    let field = cfg.field(&chart)?;

    let algebra = core(algebra_residuals(&w, &pts));
    let algebra_part = |pick: fn(&macrograv_core::bilocal::AlgebraResiduals) -> f64| match &algebra {
        Ok(a) => Ok(pick(a)),
        Err(e) => Err(e.clone()),
    };
    let anhol = core(anholonomicity(&frame, &few));
    let mut entries = vec![
        entry(cfg, "coincidence", "W(x, x) is the identity", algebra_part(|a| a.coincidence)),
        entry(cfg, "idempotency", "W(x, y) W(y, z) = W(x, z)", algebra_part(|a| a.idempotency)),
        entry(cfg, "inverse_pairing", "W(x, y) W(y, x) is the identity", algebra_part(|a| a.inverse_pairing)),
        entry(
            cfg,
            "b_independence",
            "B-functions do not depend on the second point",
            core(compute_b_functions(&w, &few[1..6.min(few.len())], &few[0])).map(|b| b.independence_residual),
        ),
        entry(
            cfg,
            "b_identity",
            "integrability identity of the B-functions",
            few.chunks(2)
                .take(4)
                .filter(|c| c.len() == 2)
                .map(|c| core(b_identity_residual(&w, &c[0], &c[1], 1e-3)))
                .collect::<Result<Vec<_>, _>>()
                .map(fmax),
        ),
        entry(
            cfg,
            "constancy",
            "anholonomicity coefficients are constant",
            anhol.as_ref().map(|a| a.constancy_residual).map_err(|e| e.clone()),
        ),
        entry(
            cfg,
            "jacobi",
            "Jacobi identity of the anholonomicity coefficients",
            anhol.as_ref().map(|a| jacobi_residual(a.representative())).map_err(|e| e.clone()),
        ),
        entry(
            cfg,
            "biholonomicity",
            "antisymmetrized derivatives of W cancel",
            few.chunks(2)
                .filter(|c| c.len() == 2)
                .map(|c| core(biholonomicity_residual(&w, &c[0], &c[1], 1e-4)).map(|r| r.max_abs()))
                .collect::<Result<Vec<_>, _>>()
                .map(fmax),
        ),
        entry(
            cfg,
            "divergence",
            "coordination frame is divergence free",
            few.iter()
                .flat_map(|p| (0..n).map(move |b| (p, b)))
                .map(|(p, b)| core(divergence_residual(&w, p, b)).map(f64::abs))
                .collect::<Result<Vec<_>, _>>()
                .map(fmax),
        ),
        entry(
            cfg,
            "volume_law",
            "dV/dlambda equals the integral of div S",
            (0..n)
                .map(|i| {
                    let s = core(ShiftField::frame_vector(w.clone(), i, region.support_point().clone()))?;
                    core(volume_law_check(&region, &s, 1e-3)).map(|l| l.residual())
                })
                .collect::<Result<Vec<_>, _>>()
                .map(fmax),
        ),
        entry(
            cfg,
            "single_valuedness",
            "mixed derivatives of averages commute",
            core(single_valuedness_check(&field, &w, &region, 1e-2)).map(|s| s.max_residual),
        ),
        entry(
            cfg,
            "commutation",
            "derivative of the average equals the average of the derivative",
            (0..n)
                .map(|k| core(commutation_check(&field, &w, &region, k, 1e-3)).map(|c| c.residual))
                .collect::<Result<Vec<_>, _>>()
                .map(fmax),
        ),
    ];
    entries.sort_by_key(|e| order_of(e.name));
    let pass = entries.iter().all(|e| e.pass);
    let mut csv = csv_line(&["name", "anchor", "residual", "tolerance", "pass"]);
    for e in &entries {
        csv += &csv_line(&[
            e.name,
            e.anchor,
            &crate::output::fmt_f64(e.residual),
            &crate::output::fmt_f64(e.tolerance),
            if e.pass { "true" } else { "false" },
        ]);
    }
    Ok(Outcome {
        body: json!({ "entries": entries }),
        csv,
        pass,
    })
}

fn order_of(name: &str) -> usize {
    const ORDER: [&str; 12] = [
        "coincidence",
        "idempotency",
        "inverse_pairing",
        "b_independence",
        "b_identity",
        "constancy",
        "jacobi",
        "biholonomicity",
        "divergence",
        "volume_law",
        "single_valuedness",
        "commutation",
    ];
    ORDER.iter().position(|n| *n == name).unwrap_or(ORDER.len())
}

fn valence_name(v: Valence) -> &'static str {
    match v {
        Valence::Scalar => "scalar",
        Valence::Vector => "vector",
        Valence::Covector => "covector",
        Valence::Mixed => "mixed",
    }
}

fn cmd_average(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let frame = cfg.frame()?;
    let chart = frame.chart().clone();
    let w = BilocalOperator::new(frame);
    let field = cfg.field(&chart)?;
    let region = build_region(&chart, &cfg.region_or_default()?, rule_of(cfg))?;
    if let Some(p) = &cfg.params.idempotency {
        let rows = core(idempotency_experiment(&field, &w, &region, p.lambda, p.macro_scale))?;
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.d, r.deviation)).collect();
        let slope = loglog_slope(&pairs);
        let mut csv = csv_line(&["d", "deviation"]);
        for (d, dev) in &pairs {
            csv += &csv_line(&[&crate::output::fmt_f64(*d), &crate::output::fmt_f64(*dev)]);
        }
        let zero_for_constant = field.components().iter().all(FieldExpr::is_constant);
        return Ok(Outcome {
            body: json!({
                "idempotency": pairs.iter().map(|(d, dev)| json!({"d": d, "deviation": dev})).collect::<Vec<_>>(),
                "measured_slope": slope,
            }),
            csv,
            pass: !zero_for_constant || pairs.iter().all(|(_, dev)| *dev == 0.0),
        });
    }
    let avg = core(average(&field, &w, &region))?;
    let mut csv = csv_line(&["component", "value"]);
    for (k, v) in avg.components.components.iter().enumerate() {
        csv += &csv_line(&[&k.to_string(), &crate::output::fmt_f64(*v)]);
    }
    Ok(Outcome {
        body: json!({
            "valence": valence_name(avg.components.valence),
            "components": avg.components.components,
            "region_volume": avg.region_volume,
            "estimated_quadrature_error": avg.estimated_quadrature_error,
        }),
        csv,
        pass: true,
    })
}

fn loglog_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Some(num / den)
}

fn drag(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let frame = cfg.frame()?;
    let chart = frame.chart().clone();
    let n = chart.dimension();
    let w = BilocalOperator::new(frame);
    let mut region = build_region(&chart, &cfg.region_or_default()?, rule_of(cfg))?;
    let xi = cfg.params.xi.clone().unwrap_or_default();
    let shift = core(ShiftField::parse(w, &xi, region.support_point().clone()))?;
    let lambda = cfg.params.lambda.unwrap_or(1.0);
    let steps = cfg.params.steps.unwrap_or(64);
    if steps == 0 {
        return Err(CliError::Config("--steps must be positive".into()));
    }
    let dl = lambda / steps as f64;
    let mut rows = vec![(0.0, core(region_volume(&region))?, region.support_point().to_vec())];
    // one RK4 step per chunk so every intermediate support point is seen
    for k in 1..=steps {
        let s = shift.with_support(region.support_point().clone());
        let res = core(drag_region(&region, &s, dl, 1))?;
        region = res.transported_region;
        let v = res.volume_history.last().expect("history is never empty").1;
        rows.push((k as f64 * dl, v, region.support_point().to_vec()));
    }
    let mut header = vec!["lambda".to_string(), "V".to_string()];
    header.extend(chart.coordinate_names().iter().map(|c| format!("support_{c}")));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = csv_line(&header_refs);
    for (l, v, x) in &rows {
        let mut cells = vec![crate::output::fmt_f64(*l), crate::output::fmt_f64(*v)];
        cells.extend(x.iter().map(|c| crate::output::fmt_f64(*c)));
        let refs: Vec<&str> = cells.iter().map(|s| s.as_str()).collect();
        csv += &csv_line(&refs);
    }
    let v0 = rows[0].1;
    let drift = rows.iter().fold(0.0f64, |m, r| m.max((r.1 - v0).abs()));
    debug_assert_eq!(rows[0].2.len(), n);
    Ok(Outcome {
        body: json!({
            "history": rows.iter().map(|(l, v, x)| json!({"lambda": l, "volume": v, "support": x})).collect::<Vec<_>>(),
            "max_volume_change": drift,
        }),
        csv,
        pass: true,
    })
}

/// Tensor grid with `k` points per axis over the region box.
fn grid_points(spec: &RegionSpec, k: usize) -> Vec<Point> {
    let n = spec.center.len();
    let axis = |a: usize, i: usize| {
        let t = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
        spec.center[a] - spec.half_widths[a] + 2.0 * spec.half_widths[a] * t
    };
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; n];
            for a in (0..n).rev() {
                p[a] = axis(a, idx % k);
                idx /= k;
            }
            Point::new(p)
        })
        .collect()
}

fn proper_coords(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let chart = cfg.chart()?;
    let n = chart.dimension();
    let spec = cfg.region_or_default()?;
    let grid = grid_points(&spec, cfg.params.grid.unwrap_or(20));
    let base = Point::new(cfg.params.base_point.clone().unwrap_or_else(|| spec.center.clone()));
    if base.dim() != n {
        return Err(CliError::Config("--base-point has the wrong dimension".into()));
    }
    let mut extra = serde_json::Map::new();
    let mut pass;
    let map = if let Some(partial) = &cfg.params.partial {
        let c = cfg.params.determinant.unwrap_or(1.0);
        let values = match &cfg.params.seed_expr {
            Some(s) => Some(core(chart.parse_expr(s))?),
            None => None,
        };
        let m = core(volume_preserving_completion(
            chart.clone(),
            partial,
            c,
            SeedData {
                base_point: base.clone(),
                values,
            },
        ))?;
        let det = core(determinant_residual(&m, &grid, c))?;
        extra.insert("kind".into(), json!("completion"));
        extra.insert("determinant_residual".into(), json!(det));
        pass = det < cfg.tol("determinant");
        m
    } else {
        let frame = cfg.require_frame()?;
        let value = cfg.params.base_value.clone().unwrap_or_else(|| vec![0.0; n]);
        if value.len() != n {
            return Err(CliError::Config("--base-value has the wrong dimension".into()));
        }
        let m = core(proper_from_divfree_frame(&frame, &base, &value, &grid))?;
        extra.insert("kind".into(), json!("frame-potential"));
        pass = m.certified();
        m
    };
    let (residual, certified) = core(check_volume_preserving(&map, &grid))?;
    let tangent = fmax(
        grid.iter()
            .flat_map(|p| (0..n).map(move |i| (p, i)))
            .map(|(p, i)| core(tangent_expansion(&map, i, p)).map(f64::abs))
            .collect::<Result<Vec<_>, _>>()?,
    );
    if extra["kind"] == "frame-potential" {
        pass = pass && tangent < cfg.tol("tangent");
    }
    extra.insert("volume_preserving_residual".into(), json!(residual));
    extra.insert("certified".into(), json!(certified));
    extra.insert("max_tangent_expansion".into(), json!(tangent));
    if let Some(other) = &cfg.params.affine_with {
        let m2 = core(ProperCoordinateMap::from_expressions(chart.clone(), other))?;
        let fit = core(residual_affine_check(&map, &m2, &grid))?;
        extra.insert(
            "affine".into(),
            json!({
                "is_affine": fit.is_affine,
                "lambda": matrix_to_rows(&fit.lambda),
                "a": fit.a,
                "max_deviation": fit.max_deviation,
            }),
        );
    }
    let mut table = Vec::with_capacity(grid.len());
    let mut header: Vec<String> = chart.coordinate_names().to_vec();
    header.extend((0..n).map(|i| format!("phi{i}")));
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = csv_line(&refs);
    for p in &grid {
        let phi = core(map.evaluate(p))?;
        let cells: Vec<String> = p.iter().chain(&phi).map(|v| crate::output::fmt_f64(*v)).collect();
        let refs: Vec<&str> = cells.iter().map(|s| s.as_str()).collect();
        csv += &csv_line(&refs);
        table.push(json!({"x": p.to_vec(), "phi": phi}));
    }
    extra.insert("map".into(), Value::Array(table));
    Ok(Outcome {
        body: Value::Object(extra),
        csv,
        pass,
    })
}

fn factorize(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let chart = cfg.chart()?;
    let n = chart.dimension();
    let frame = cfg.frame()?;
    let mut g = rng(cfg);
    let probes = sample(cfg, &frame, cfg.params.probes.unwrap_or(12), &mut g)?;
    let base = match &cfg.params.base_point {
        Some(b) => Point::new(b.clone()),
        None => probes[0].clone(),
    };
    if base.dim() != n {
        return Err(CliError::Config("--base-point has the wrong dimension".into()));
    }
    let fact = if let Some(entries) = &cfg.params.entries {
        if entries.len() != n * n {
            return Err(CliError::Config(format!("--entry needs {} expressions, got {}", n * n, entries.len())));
        }
        // the first point's coordinates carry a trailing `p`
        let mut names: Vec<String> = chart.coordinate_names().iter().map(|c| format!("{c}p")).collect();
        names.extend(chart.coordinate_names().iter().cloned());
        let exprs = entries
            .iter()
            .map(|s| FieldExpr::parse(s, &names))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from_core)?;
        let sample_fn = |a: &[f64], b: &[f64]| -> macrograv_core::Result<Matrix> {
            let mut q = a.to_vec();
            q.extend_from_slice(b);
            let vals = exprs.iter().map(|e| e.evaluate(&q)).collect::<macrograv_core::Result<Vec<_>>>()?;
            Ok(Matrix::from_row_slice(n, n, &vals))
        };
        core(factorize_oracle(sample_fn, &base, &probes))?
    } else {
        if cfg.frame.is_none() {
            return Err(CliError::Config("factorize needs --frame or --entry".into()));
        }
        let w = BilocalOperator::new(frame);
        core(factorize_oracle(|a, b| w.evaluate(a, b), &base, &probes))?
    };
    let pass = fact.certifies(cfg.tol("factorization"));
    let mut header: Vec<String> = chart.coordinate_names().to_vec();
    header.extend((0..n * n).map(|k| format!("F{}{}", k / n, k % n)));
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = csv_line(&refs);
    for (p, f) in &fact.factor {
        let mut cells: Vec<String> = p.iter().map(|v| crate::output::fmt_f64(*v)).collect();
        cells.extend((0..n * n).map(|k| crate::output::fmt_f64(f[(k / n, k % n)])));
        let refs: Vec<&str> = cells.iter().map(|s| s.as_str()).collect();
        csv += &csv_line(&refs);
    }
    Ok(Outcome {
        body: json!({
            "base_point": fact.base_point.to_vec(),
            "residual": fact.residual,
            "tolerance": cfg.tol("factorization"),
            "certified": pass,
            "factor": fact.factor.iter().map(|(p, f)| json!({"x": p.to_vec(), "F": matrix_to_rows(f)})).collect::<Vec<_>>(),
        }),
        csv,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_lexicographic() {
        let spec = RegionSpec {
            center: vec![0.0, 10.0],
            half_widths: vec![1.0, 2.0],
            nodes: 3,
        };
        let g = grid_points(&spec, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].to_vec(), vec![-1.0, 8.0]);
        assert_eq!(g[1].to_vec(), vec![-1.0, 10.0]);
        assert_eq!(g[8].to_vec(), vec![1.0, 12.0]);
    }

    #[test]
    fn slope_of_power_law() {
        let pairs: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&d: &f64| (d, 3.0 * d * d)).collect();
        assert!((loglog_slope(&pairs).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(0.1, 0.0), (0.2, 0.0)]), None);
    }
}
