use std::f64::consts::PI;

use homlab::geometry::{make_obstacle, Shape};
use homlab::{build_perforated_grid, build_reference_cell, DomainKind, Obstacle};
use proptest::prelude::*;

#[test]
fn ball_porosity_converges_to_the_analytic_value() {
    let ob = Obstacle::ball(0.5).unwrap();
    let exact = 1.0 - PI * 0.25 / 4.0;
    assert!((ob.analytic_porosity(2).unwrap() - exact).abs() < 1e-15);
    let errs: Vec<f64> = [32, 64, 128].iter().map(|&n| (build_reference_cell(&ob, 2, n).unwrap().theta_h - exact).abs()).collect();
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[2] < 5e-3, "{errs:?}");
}

#[test]
fn obstacles_touching_the_unit_ball_are_rejected() {
    assert!(Obstacle::ball(1.0).is_err());
    assert!(Obstacle::ball(0.0).is_err());
    assert!(make_obstacle(&Shape::Superellipse { exponent: 4.0, semi_axes: [0.9, 0.9, 0.9] }).is_err());
    assert!(make_obstacle(&Shape::Superellipse { exponent: 4.0, semi_axes: [0.5, 0.3, 0.4] }).is_ok());
}

#[test]
fn torus_rejects_non_integer_cell_counts() {
    let cell = build_reference_cell(&Obstacle::ball(0.5).unwrap(), 2, 16).unwrap();
    assert!(build_perforated_grid(DomainKind::Torus, 1.0, 0.2, &cell).is_err());
    assert!(build_perforated_grid(DomainKind::Torus, 1.0, 0.25, &cell).is_ok());
}

#[test]
fn box_distance_is_nonnegative_and_small_at_the_wall() {
    let cell = build_reference_cell(&Obstacle::ball(0.5).unwrap(), 2, 16).unwrap();
    let g = build_perforated_grid(DomainKind::Box, 1.0, 0.125, &cell).unwrap();
    assert_eq!(g.boundary_distance.len(), g.mac.len());
    let min = g.boundary_distance.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min >= 0.0 && min <= g.h(), "{min}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_tiling_preserves_porosity(cells in 1usize..5, n in prop::sample::select(vec![16usize, 32]), r in 0.2f64..0.7) {
        let cell = build_reference_cell(&Obstacle::ball(r).unwrap(), 2, n).unwrap();
        let eps = 1.0 / (2.0 * cells as f64);
        let g = build_perforated_grid(DomainKind::Torus, 1.0, eps, &cell).unwrap();
        prop_assert_eq!(g.holed_cells(), cells * cells);
        prop_assert!((g.fluid_fraction() - cell.theta_h).abs() < 1e-12);
        prop_assert_eq!(g.mac.len(), (cells * n).pow(2));
    }

    #[test]
    fn ball_membership_is_radial(r in 0.1f64..0.9, y0 in -1.0f64..1.0, y1 in -1.0f64..1.0) {
        let ob = Obstacle::ball(r).unwrap();
        let rad = (y0 * y0 + y1 * y1).sqrt();
        prop_assume!((rad - r).abs() > 1e-12);
        prop_assert_eq!(ob.contains(&[y0, y1]), rad < r);
    }
}
