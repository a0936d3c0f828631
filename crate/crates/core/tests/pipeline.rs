use std::f64::consts::PI;
use std::sync::Arc;

use homlab::cell_problem::CellOptions;
use homlab::pipeline::{rate_sweep, run_epsilon, sample_times, solve_cell_data, solve_limit_trajectory, FlowDt, FlowSetup};
use homlab::{build_perforated_grid, DomainKind, Obstacle, PressureLaw};
use proptest::prelude::*;

fn setup(t_end: f64, samples: usize) -> FlowSetup {
    FlowSetup {
        dim: 2,
        kind: DomainKind::Torus,
        length: 1.0,
        obstacle: Obstacle::ball(0.5).unwrap(),
        n_per_cell: 16,
        law: PressureLaw::new(2.0, 1.0).unwrap(),
        lambda: 2.5,
        eta: 0.0,
        force: None,
        rho0: Arc::new(|x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos()),
        t_end,
        samples,
        dt: FlowDt::Adaptive { safety: 0.9 },
    }
}

#[test]
fn single_epsilon_run_conserves_mass_and_reports_finite_errors() {
    let s = setup(0.01, 4);
    let cell = solve_cell_data(&s, &CellOptions::default()).unwrap();
    let grid = build_perforated_grid(s.kind, s.length, 0.25, &cell.solution.grid).unwrap();
    let limit = solve_limit_trajectory(&s, &cell.solution, &grid).unwrap();
    let run = run_epsilon(&s, &cell, &grid, &limit).unwrap();
    assert!(run.max_mass_drift() < 1e-12);
    assert!(run.errors.total().is_finite() && run.errors.total() > 0.0);
    assert!((run.final_state.t - 0.01).abs() < 1e-14);
}

#[test]
fn sweep_needs_three_epsilons_and_errors_shrink() {
    let s = setup(0.01, 4);
    assert!(rate_sweep(&s, &[0.25, 0.125], &CellOptions::default()).is_err());
    let sweep = rate_sweep(&s, &[0.25, 0.125, 0.0625], &CellOptions::default()).unwrap();
    let e: Vec<f64> = sweep.runs.iter().map(|r| r.errors.total()).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    assert!(sweep.report.beta_emp > 0.0);
}

proptest! {
    #[test]
    fn sample_times_span_the_interval(t_end in 1e-3f64..1.0, samples in 1usize..50) {
        let t = sample_times(&setup(t_end, samples));
        prop_assert_eq!(t.len(), samples + 1);
        prop_assert_eq!(t[0], 0.0);
        prop_assert!((t[samples] - t_end).abs() <= 1e-15 * t_end);
        prop_assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
