mod common;

use common::*;
use macrograv_core::catalog::builtin_frame;
use macrograv_core::chart::{ChartSpec, Signature};
use macrograv_core::frames::FrameField;
use macrograv_core::proper_coords::*;
use macrograv_core::{Error, Point};
use proptest::prelude::*;
use std::sync::Arc;

fn completion_seed(values: Option<&str>) -> SeedData {
    let chart = flat(2);
    SeedData {
        base_point: Point::from([1.0, 0.5]),
        values: values.map(|s| chart.parse_expr(s).unwrap()),
    }
}

#[test]
fn polar_potential_is_half_square() {
    let f = builtin_frame("polar2-divfree").unwrap();
    let grid = grid2([0.6, -1.2], [2.4, 1.2], 20);
    let m = proper_from_divfree_frame(&f, &Point::from([1.0, 0.0]), &[0.5, 0.0], &grid).unwrap();
    assert!(m.certified());
    for p in &grid {
        let v = m.evaluate(p).unwrap();
        assert!((v[0] - 0.5 * p[0] * p[0]).abs() < 1e-8 && (v[1] - p[1]).abs() < 1e-8);
    }
    let (res, ok) = check_volume_preserving(&m, &grid).unwrap();
    assert!(ok && res < 1e-9, "{res}");
    for p in grid.iter().step_by(7) {
        for i in 0..2 {
            assert!(tangent_expansion(&m, i, p).unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn exp_potential() {
    // coframe rows (exp(x0), 0), (0, 1) integrate to (exp(x0), x1)
    let f = builtin_frame("exp2-divfree").unwrap();
    let grid = grid2([-0.9, -0.9], [0.9, 0.9], 20);
    let m = proper_from_divfree_frame(&f, &Point::from([0.0, 0.0]), &[1.0, 0.0], &grid).unwrap();
    assert!(m.certified());
    for p in &grid {
        let v = m.evaluate(p).unwrap();
        assert!((v[0] - p[0].exp()).abs() < 1e-8 && (v[1] - p[1]).abs() < 1e-8);
    }
    assert!(check_volume_preserving(&m, &grid).unwrap().0 < 1e-9);
    for p in grid.iter().step_by(11) {
        for i in 0..2 {
            assert!(tangent_expansion(&m, i, p).unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn frame_gates() {
    let grid = grid2([-0.5, -0.5], [0.5, 0.5], 4);
    let c = flat(2);
    let id = FrameField::coordinate(c.clone());
    let m = proper_from_divfree_frame(&id, &Point::from([0.0, 0.0]), &[0.0, 0.0], &grid).unwrap();
    for p in &grid {
        let v = m.evaluate(p).unwrap();
        assert!((v[0] - p[0]).abs() < 1e-14 && (v[1] - p[1]).abs() < 1e-14);
    }
    // [f_0, f_1] = f_1: constant, nonzero
    let lie = FrameField::parse(c, &[vec!["1", "0"], vec!["0", "exp(x0)"]], "lie").unwrap();
    assert!(matches!(
        proper_from_divfree_frame(&lie, &Point::from([0.0, 0.0]), &[0.0, 0.0], &grid),
        Err(Error::NonzeroAnholonomicity { .. })
    ));
}

#[test]
fn completion_of_product_coordinate() {
    let m = volume_preserving_completion(flat(2), &["x0*x1"], 1.0, completion_seed(None)).unwrap();
    let grid = grid2([0.7, 0.2], [1.3, 0.8], 6);
    let res = determinant_residual(&m, &grid, 1.0).unwrap();
    assert!(res < 1e-6, "{res}");
    for p in &grid {
        assert!((m.evaluate(p).unwrap()[1] - p[0] * p[1]).abs() < 1e-14);
    }
}

#[test]
fn completion_seed_freedom_is_constant_along_characteristics() {
    let a = volume_preserving_completion(flat(2), &["x0*x1"], 1.0, completion_seed(None)).unwrap();
    let b = volume_preserving_completion(flat(2), &["x0*x1"], 1.0, completion_seed(Some("sin(3*x0) + x1^2"))).unwrap();
    let grid = grid2([0.8, 0.3], [1.2, 0.7], 4);
    assert!(determinant_residual(&b, &grid, 1.0).unwrap() < 1e-6);
    let mut spread_max = 0.0f64;
    let mut varied = false;
    for start in &grid {
        let path = characteristic_through(&a, start, 0.02, 8).unwrap();
        let diffs: Vec<f64> = path.iter().map(|p| b.evaluate(p).unwrap()[0] - a.evaluate(p).unwrap()[0]).collect();
        let spread = diffs.iter().fold(0.0f64, |m, d| m.max((d - diffs[0]).abs()));
        spread_max = spread_max.max(spread);
        varied |= diffs[0].abs() > 1e-3;
    }
    assert!(spread_max < 1e-6, "{spread_max}");
    assert!(varied, "seed choices should give genuinely different maps");
}

#[test]
fn completion_against_hand_solution() {
    // y2 = x1 with zero seed on x0 = 0 gives y1 = x0
    let m = volume_preserving_completion(
        flat(2),
        &["x1"],
        2.0,
        SeedData {
            base_point: Point::from([0.0, 0.0]),
            values: None,
        },
    )
    .unwrap();
    for p in grid2([-1.0, -1.0], [1.0, 1.0], 5) {
        assert!((m.evaluate(&p).unwrap()[0] - 2.0 * p[0]).abs() < 1e-12);
    }
}

#[test]
fn completion_scope_on_polar_chart() {
    // completion only targets det J = C; the polar density is not absorbed
    let polar = catalog_chart("polar2");
    let m = volume_preserving_completion(
        polar,
        &["x1"],
        1.0,
        SeedData {
            base_point: Point::from([1.0, 0.0]),
            values: None,
        },
    )
    .unwrap();
    let grid = grid2([0.8, -0.5], [1.6, 0.5], 4);
    assert!(determinant_residual(&m, &grid, 1.0).unwrap() < 1e-6);
    let (res, ok) = check_volume_preserving(&m, &grid).unwrap();
    assert!(!ok && res > 0.5);
    let known = ProperCoordinateMap::from_expressions(catalog_chart("polar2"), &["x0^2/2", "x1"]).unwrap();
    assert!(check_volume_preserving(&known, &grid).unwrap().1);
}

#[test]
fn certification_matches_tangent_expansions() {
    let grid = grid2([0.8, -0.5], [1.8, 0.5], 5);
    let polar = catalog_chart("polar2");
    for (src, expect) in [
        (["x0^2/2", "x1"], true),
        (["x0^2/2 + 3", "2*x1 - 1"], true),
        (["x0", "x1"], false),
        (["x0^3", "x1"], false),
    ] {
        let m = ProperCoordinateMap::from_expressions(polar.clone(), &src).unwrap();
        let (_, ok) = check_volume_preserving(&m, &grid).unwrap();
        let tangents = grid
            .iter()
            .all(|p| (0..2).all(|i| tangent_expansion(&m, i, p).unwrap().abs() < 1e-6));
        assert_eq!(ok, expect, "{src:?}");
        assert_eq!(ok, tangents, "{src:?}");
    }
}

#[test]
fn christoffel_trace_vanishes_in_proper_maps() {
    let polar = catalog_chart("polar2");
    let m = ProperCoordinateMap::from_expressions(polar.clone(), &["x0^2/2", "x1"]).unwrap();
    let raw = ProperCoordinateMap::identity(polar);
    for x in grid2([0.8, -0.5], [1.8, 0.5], 4) {
        let phi = m.evaluate(&x).unwrap();
        for i in 0..2 {
            assert!(christoffel_trace(&m, i, &phi, &x).unwrap().abs() < 1e-6);
        }
        let t = christoffel_trace(&raw, 0, &x, &x).unwrap();
        assert!((t - 1.0 / x[0]).abs() < 1e-6);
    }
    let mink = Arc::new(ChartSpec::diagonal("m", &["x0", "x1"], &["-1", "1"], Signature::Lorentzian).unwrap());
    let id = ProperCoordinateMap::identity(mink);
    assert_eq!(christoffel_trace(&id, 1, &[0.2, 0.3], &[0.2, 0.3]).unwrap(), 0.0);
}

#[test]
fn affine_relations_between_proper_maps() {
    let polar = catalog_chart("polar2");
    let grid = grid2([0.8, -0.5], [1.8, 0.5], 5);
    let m1 = ProperCoordinateMap::from_expressions(polar.clone(), &["x0^2/2", "x1"]).unwrap();
    let m2 = ProperCoordinateMap::from_expressions(polar.clone(), &["2*(x0^2/2) + 1", "x1/2 - 3"]).unwrap();
    assert!(check_volume_preserving(&m2, &grid).unwrap().1);
    let fit = residual_affine_check(&m1, &m2, &grid).unwrap();
    assert!(fit.is_affine);
    let want = [[2.0, 0.0], [0.0, 0.5]];
    for r in 0..2 {
        for c in 0..2 {
            assert!((fit.lambda[(r, c)] - want[r][c]).abs() < 1e-12);
        }
    }
    assert!((fit.a[0] - 1.0).abs() < 1e-12 && (fit.a[1] + 3.0).abs() < 1e-12);

    let same = residual_affine_check(&m1, &m1, &grid).unwrap();
    assert!(same.is_affine && same.max_deviation == 0.0);
    assert!((same.lambda[(0, 0)] - 1.0).abs() < 1e-12 && same.a.iter().all(|v| v.abs() < 1e-12));

    let quad = ProperCoordinateMap::from_expressions(polar, &["x0^2/2 + x1^2", "x1"]).unwrap();
    assert!(!residual_affine_check(&m1, &quad, &grid).unwrap().is_affine);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn newton_inverse_round_trips(r in 0.7f64..2.2, th in -1.0f64..1.0) {
        let m = ProperCoordinateMap::from_expressions(catalog_chart("polar2"), &["x0^2/2", "x1 + 0.1*x0"]).unwrap();
        let phi = m.evaluate(&[r, th]).unwrap();
        let x = m.inverse(&phi, &[1.4, 0.0]).unwrap();
        prop_assert!((x[0] - r).abs() < 1e-9 && (x[1] - th).abs() < 1e-9);
    }

    #[test]
    fn affine_fit_recovers_random_maps(l00 in 0.5f64..2.0, l01 in -1.0f64..1.0, l11 in 0.5f64..2.0, a0 in -3.0f64..3.0, a1 in -3.0f64..3.0) {
        let c = flat(2);
        let m1 = ProperCoordinateMap::from_expressions(c.clone(), &["x0 + 0.2*x1", "x1"]).unwrap();
        let src = [
            format!("{l00:?}*(x0 + 0.2*x1) + {l01:?}*x1 + {a0:?}"),
            format!("{l11:?}*x1 + {a1:?}"),
        ];
        let m2 = ProperCoordinateMap::from_expressions(c, &src).unwrap();
        let fit = residual_affine_check(&m1, &m2, &grid2([-1.0, -1.0], [1.0, 1.0], 4)).unwrap();
        prop_assert!(fit.is_affine);
        prop_assert!((fit.lambda[(0, 0)] - l00).abs() < 1e-10 && (fit.lambda[(0, 1)] - l01).abs() < 1e-10);
        prop_assert!((fit.lambda[(1, 1)] - l11).abs() < 1e-10 && fit.lambda[(1, 0)].abs() < 1e-10);
        prop_assert!((fit.a[0] - a0).abs() < 1e-10 && (fit.a[1] - a1).abs() < 1e-10);
    }
}
