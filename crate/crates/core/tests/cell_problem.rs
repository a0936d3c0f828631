use homlab::cell_problem::{check_cell_average_identity, permeability, solve_cell, solve_vector_potential, CellOptions, CellSolution};
use homlab::{build_reference_cell, Obstacle};

fn solve(r: f64, n: usize) -> CellSolution<f64> {
    let cell = build_reference_cell(&Obstacle::ball(r).unwrap(), 2, n).unwrap();
    solve_cell(&cell, &CellOptions::default()).unwrap()
}

#[test]
fn velocity_is_divergence_free_and_vanishes_on_closed_faces() {
    let sol = solve(0.5, 32);
    let mac = &sol.grid.mac;
    let mut div = vec![0.0; mac.len()];
    for col in &sol.columns {
        mac.divergence(&col.w, &mut div);
        assert!(div.iter().all(|v| v.abs() < 1e-10));
        for (a, comp) in col.w.comps.iter().enumerate() {
            for (g, &v) in comp.iter().enumerate() {
                if !mac.open(a)[g] {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
}

#[test]
fn permeability_is_symmetric_positive_and_isotropic_for_a_ball() {
    let sol = solve(0.5, 32);
    let rep = permeability(&sol);
    assert!(rep.symmetry_defect < 1e-10 * rep.k[0]);
    assert!(rep.eigenvalues[0] > 0.0);
    assert!(rep.energy_discrepancy < 1e-8, "{}", rep.energy_discrepancy);
    assert!(rep.isotropy_defect < 1e-8, "{}", rep.isotropy_defect);
    let kinv = sol.k_inverse().unwrap();
    let prod = kinv[0] * sol.k[0] + kinv[1] * sol.k[2];
    assert!((prod - 1.0).abs() < 1e-12);
}

#[test]
fn larger_obstacles_are_less_permeable() {
    let k: Vec<f64> = [0.3, 0.5, 0.7].iter().map(|&r| solve(r, 32).k[0]).collect();
    assert!(k[0] > k[1] && k[1] > k[2], "{k:?}");
}

#[test]
fn fluid_average_identity_improves_with_resolution() {
    let coarse = check_cell_average_identity(&solve(0.5, 16)).unwrap();
    let fine = check_cell_average_identity(&solve(0.5, 64)).unwrap();
    assert!(fine.defect < coarse.defect, "{} {}", coarse.defect, fine.defect);
    assert!(fine.discrete_defect < 1e-10);
}

#[test]
fn vector_potential_reproduces_the_zero_mean_part() {
    let sol = solve(0.5, 32);
    let vp = solve_vector_potential(&sol).unwrap();
    assert!(vp.mean_defect < 1e-12, "{}", vp.mean_defect);
    assert!(vp.curl_defect < 1e-8, "{}", vp.curl_defect);
}
