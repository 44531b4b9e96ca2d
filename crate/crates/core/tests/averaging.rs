mod common;

use std::f64::consts::PI;

use common::*;
use macrograv_core::averaging::*;
use macrograv_core::bilocal::BilocalOperator;
use macrograv_core::catalog::builtin_frame;
use macrograv_core::chart::{TensorFieldSpec, Valence};
use macrograv_core::frames::FrameField;
use macrograv_core::Point;
use proptest::prelude::*;

#[test]
fn flat_box_integrals() {
    let c = flat(1);
    let w = BilocalOperator::new(FrameField::coordinate(c.clone()));
    for a in [0.1, 0.5, 1.0, 3.0] {
        let r = make_box_region(&c, &Point::from([0.0]), &[a], DEFAULT_NODES_PER_AXIS).unwrap();
        let t = TensorFieldSpec::scalar(&c, "x0^2").unwrap();
        let v = average(&t, &w, &r).unwrap().components.components[0];
        assert!((v - a * a / 3.0).abs() < 1e-10);
        let k = TensorFieldSpec::scalar(&c, "-7.25").unwrap();
        assert_eq!(average(&k, &w, &r).unwrap().components.components[0], -7.25);
    }
}

#[test]
fn polar_half_annulus_volume() {
    let polar = catalog_chart("polar2");
    let r = make_box_region(&polar, &Point::from([1.5, PI / 2.0]), &[0.5, PI / 2.0], DEFAULT_NODES_PER_AXIS).unwrap();
    assert!((region_volume(&r).unwrap() - 1.5 * PI).abs() < 1e-8);
}

#[test]
fn gauss_legendre_matches_midpoint_oracle() {
    // flat chart with the identity operator: the plain coordinate mean
    let c = flat(2);
    let w = BilocalOperator::new(FrameField::coordinate(c.clone()));
    let t = TensorFieldSpec::scalar(&c, "exp(x0) * cos(x1)").unwrap();
    let center = Point::from([0.2, -0.1]);
    let gl = make_box_region(&c, &center, &[0.5, 0.5], 8).unwrap();
    let mid = make_box_region_with_rule(&c, &center, &[0.5, 0.5], 200, QuadratureRule::Midpoint).unwrap();
    let a = average(&t, &w, &gl).unwrap().components.components[0];
    let b = average(&t, &w, &mid).unwrap().components.components[0];
    // exact mean: (e^0.7 - e^-0.3)(sin 0.4 + sin 0.6) / 1
    let exact = ((0.7f64).exp() - (-0.3f64).exp()) * ((0.4f64).sin() + (0.6f64).sin());
    assert!((a - exact).abs() < 1e-12);
    // midpoint error bound: (h^2 / 24) * (f_xx + f_yy) with h = 1/200
    let bound = (1.0 / 200.0f64).powi(2) / 24.0 * 2.0 * (0.7f64).exp();
    assert!((a - b).abs() < bound);
}

#[test]
fn quadrature_error_estimate_reflects_refinement() {
    let polar = catalog_chart("polar2");
    let w = BilocalOperator::new(builtin_frame("polar2-exp").unwrap());
    let t = TensorFieldSpec::parse(&polar, Valence::Vector, &["sin(3*x0)", "x1*x0"]).unwrap();
    let rough = make_box_region(&polar, &Point::from([1.4, 0.1]), &[0.5, 0.6], 3).unwrap();
    let fine = make_box_region(&polar, &Point::from([1.4, 0.1]), &[0.5, 0.6], 8).unwrap();
    let a = average(&t, &w, &rough).unwrap();
    let b = average(&t, &w, &fine).unwrap();
    assert!(b.estimated_quadrature_error.unwrap() < a.estimated_quadrature_error.unwrap());
    assert!(b.estimated_quadrature_error.unwrap() < 1e-6);
}

#[test]
fn contraction_commutes_with_averaging() {
    let w = BilocalOperator::new(builtin_frame("polar2-nonconst").unwrap());
    let polar = w.frame().chart().clone();
    let r = make_box_region(&polar, &Point::from([1.2, -0.3]), &[0.3, 0.4], 6).unwrap();
    let m = TensorFieldSpec::parse(&polar, Valence::Mixed, &["x0*x1", "sin(x1)", "exp(x0)", "x0^2"]).unwrap();
    let tr = TensorFieldSpec::scalar(&polar, "x0*x1 + x0^2").unwrap();
    let a = average(&m, &w, &r).unwrap().components.trace().unwrap();
    let b = average(&tr, &w, &r).unwrap().components.components[0];
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn shrinking_region_limit_is_second_order() {
    let w = BilocalOperator::new(builtin_frame("polar2-exp").unwrap());
    let polar = w.frame().chart().clone();
    let t = TensorFieldSpec::parse(&polar, Valence::Vector, &["sin(x0) + x1", "x0*cos(x1)"]).unwrap();
    let x = Point::from([1.3, 0.4]);
    let exact = t.evaluate(&x).unwrap();
    let ds = [0.4, 0.2, 0.1, 0.05];
    let errs: Vec<f64> = ds
        .iter()
        .map(|d| {
            let r = make_box_region(&polar, &x, &[0.5 * d, 0.5 * d], 6).unwrap();
            average(&t, &w, &r).unwrap().components.max_abs_diff(&exact)
        })
        .collect();
    let slope = loglog_slope(&ds, &errs);
    assert!(slope >= 1.8, "slope {slope}, errors {errs:?}");
}

#[test]
fn idempotency_deviation_decreases_along_ladder() {
    let c = flat(2);
    let w = BilocalOperator::new(FrameField::coordinate(c.clone()));
    let r = make_box_region(&c, &Point::from([0.1, 0.2]), &[0.1, 0.1], 6).unwrap();
    let t = TensorFieldSpec::scalar(&c, "sin(2*pi*x0)").unwrap();
    let rows = idempotency_experiment(&t, &w, &r, 0.01, 1.0).unwrap();
    assert_eq!(rows.iter().map(|p| p.d).collect::<Vec<_>>(), vec![0.4, 0.2, 0.1, 0.05]);
    for pair in rows.windows(2) {
        assert!(pair[1].deviation < pair[0].deviation);
    }
    let k = TensorFieldSpec::scalar(&c, "1.5").unwrap();
    assert!(idempotency_experiment(&k, &w, &r, 0.01, 1.0).unwrap().iter().all(|p| p.deviation == 0.0));
}

#[test]
fn idempotency_with_curved_operator() {
    let w = BilocalOperator::new(builtin_frame("polar2-divfree").unwrap());
    let polar = w.frame().chart().clone();
    let r = make_box_region(&polar, &Point::from([1.5, 0.2]), &[0.1, 0.1], 6).unwrap();
    let t = TensorFieldSpec::parse(&polar, Valence::Vector, &["sin(2*pi*x0)", "cos(2*pi*x1)"]).unwrap();
    let rows = idempotency_experiment(&t, &w, &r, 0.01, 1.0).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[1].deviation < pair[0].deviation);
    }
    let k = TensorFieldSpec::scalar(&polar, "2").unwrap();
    assert!(idempotency_experiment(&k, &w, &r, 0.01, 1.0).unwrap().iter().all(|p| p.deviation == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn averaging_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, cx in 0.8f64..2.0, cy in -1.0f64..1.0) {
        let w = BilocalOperator::new(builtin_frame("polar2-exp").unwrap());
        let polar = w.frame().chart().clone();
        let r = make_box_region(&polar, &Point::from([cx, cy]), &[0.2, 0.3], 4).unwrap();
        let t1 = ["sin(x0)", "x1^2"];
        let t2 = ["x0*x1", "exp(-x0)"];
        let combo: Vec<String> = t1.iter().zip(&t2).map(|(p, q)| format!("({a:?})*({p}) + ({b:?})*({q})")).collect();
        let s1 = TensorFieldSpec::parse(&polar, Valence::Vector, &t1).unwrap();
        let s2 = TensorFieldSpec::parse(&polar, Valence::Vector, &t2).unwrap();
        let sc = TensorFieldSpec::parse(&polar, Valence::Vector, &combo).unwrap();
        let lhs = average(&sc, &w, &r).unwrap().components;
        let rhs = average(&s1, &w, &r).unwrap().components.combine(a, &average(&s2, &w, &r).unwrap().components, b);
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn constants_average_exactly(value in -100.0f64..100.0, cx in 0.8f64..2.0, hw in 0.05f64..0.5) {
        let w = BilocalOperator::new(builtin_frame("polar2-nonconst").unwrap());
        let polar = w.frame().chart().clone();
        let r = make_box_region(&polar, &Point::from([cx, 0.0]), &[hw.min(cx - 0.3), hw], 5).unwrap();
        let t = TensorFieldSpec::scalar(&polar, &format!("{value:?}")).unwrap();
        prop_assert_eq!(average(&t, &w, &r).unwrap().components.components[0], value);
    }

    #[test]
    fn box_weights_sum_to_coordinate_volume(h0 in 0.01f64..3.0, h1 in 0.01f64..3.0, m in 2usize..9) {
        let c = flat(2);
        let r = make_box_region(&c, &Point::from([0.0, 0.0]), &[h0, h1], m).unwrap();
        prop_assert!((r.coordinate_measure() - 4.0 * h0 * h1).abs() < 1e-12 * (1.0 + 4.0 * h0 * h1));
        prop_assert!(r.nodes().iter().all(|n| n.weight > 0.0));
    }
}
