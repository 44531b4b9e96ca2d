#![allow(dead_code)]

use std::sync::Arc;

use macrograv_core::catalog::{builtin_chart, catalog_frame, sample_domain};
use macrograv_core::chart::{ChartSpec, Signature};
use macrograv_core::frames::FrameField;
use macrograv_core::linalg::Matrix;
use macrograv_core::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in the catalog sample box of `chart_name`, shrunk by
/// `margin` on every side, rejecting points where `keep` fails.
pub fn sample_points<F>(chart_name: &str, count: usize, margin: f64, rng: &mut ChaCha8Rng, keep: F) -> Vec<Point>
where
    F: Fn(&Point) -> bool,
{
    let domain = sample_domain(chart_name).unwrap();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Point::new(domain.iter().map(|(a, b)| rng.gen_range(a + margin..b - margin)).collect());
        if keep(&p) {
            out.push(p);
        }
    }
    out
}

/// Points where the frame is comfortably non-degenerate.
pub fn frame_points(frame: &FrameField, chart_name: &str, count: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    sample_points(chart_name, count, 0.05, rng, |p| {
        frame
            .frame_matrix(p)
            .map(|e| e.determinant().abs() > 0.05)
            .unwrap_or(false)
    })
}

pub fn chart_of(frame_name: &str) -> &'static str {
    catalog_frame(frame_name).unwrap().chart
}

pub fn flat(n: usize) -> Arc<ChartSpec> {
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    Arc::new(ChartSpec::diagonal("flat", &names, &vec!["1"; n], Signature::Riemannian).unwrap())
}

pub fn catalog_chart(name: &str) -> Arc<ChartSpec> {
    Arc::new(builtin_chart(name).unwrap())
}

/// Regular `k x k` grid on `[lo, hi]`.
pub fn grid2(lo: [f64; 2], hi: [f64; 2], k: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let t = i as f64 / (k - 1) as f64;
            let s = j as f64 / (k - 1) as f64;
            out.push(Point::from([lo[0] + t * (hi[0] - lo[0]), lo[1] + s * (hi[1] - lo[1])]));
        }
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Lie bracket `[f_i, f_j]` from the frame expressions, converted to frame
/// components: the commutator route to the anholonomicity coefficients.
pub fn commutator_coefficients(frame: &FrameField, p: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = frame.dimension();
    let e = frame.frame_matrix(p).unwrap();
    let theta = e.clone().try_inverse().unwrap();
    let d = |i: usize, a: usize, b: usize| -> f64 {
        // d_b f_i^a
        let h = 1e-5;
        let mut q = p.to_vec();
        q[b] += h;
        let plus = frame.component(i, a).evaluate(&q).unwrap();
        q[b] -= 2.0 * h;
        let minus = frame.component(i, a).evaluate(&q).unwrap();
        (plus - minus) / (2.0 * h)
    };
    let mut c = vec![vec![vec![0.0; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let bracket: Vec<f64> = (0..n)
                .map(|a| (0..n).map(|b| e[(b, i)] * d(j, a, b) - e[(b, j)] * d(i, a, b)).sum())
                .collect();
            for (k, row) in c.iter_mut().enumerate() {
                row[i][j] = (0..n).map(|a| theta[(k, a)] * bracket[a]).sum();
            }
        }
    }
    c
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}
