//! Invariant suite over every module, one row per check.

use std::f64::consts::PI;

use homlab::analysis::{norm_neg_sobolev, poincare_constant, theoretical_rate};
use homlab::cell_problem::{check_cell_average_identity, permeability, solve_cell, solve_vector_potential, CellOptions};
use homlab::correctors::{build_boundary_corrector, corrector_bounds, verify_corrector_bounds};
use homlab::geometry::Shape;
use homlab::limit_solver::{solve_limit, step_limit, DtPolicy, LimitProblem, LimitState};
use homlab::nse_solver::{initialize_flow, solve_nse, InitialMomentum, NseDt, NseParams, NseProblem, NseSolver};
use homlab::pressure_law::check_entropy_lower_bound;
use homlab::{build_perforated_grid, build_reference_cell, Boundary, DomainKind, Lattice, MacGrid, Obstacle, PressureLaw, Stagger};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::io::Table;

/// `value ≤ threshold` unless `at_least` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub module: &'static str,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub at_least: bool,
    pub note: String,
}

impl CheckRow {
    fn at_most(module: &'static str, check: &str, value: f64, threshold: f64) -> Self {
        CheckRow { module, check: check.into(), value, threshold, at_least: false, note: String::new() }
    }

    fn at_least(module: &'static str, check: &str, value: f64, threshold: f64) -> Self {
        CheckRow { module, check: check.into(), value, threshold, at_least: true, note: String::new() }
    }

    pub fn passed(&self) -> bool {
        if self.at_least {
            self.value >= self.threshold
        } else {
            self.value <= self.threshold
        }
    }
}

type Suite = fn(&ExperimentConfig) -> homlab::Result<Vec<CheckRow>>;

fn field(mac: &MacGrid, f: impl Fn(&[f64; 3]) -> f64) -> Vec<f64> {
    (0..mac.len()).map(|g| f(&mac.lattice().position(g, Stagger::Cell, mac.h()))).collect()
}

fn pressure_law(cfg: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut identity: f64 = 0.0;
    let mut normal: f64 = 0.0;
    for _ in 0..1000 {
        let law = PressureLaw::new(rng.gen_range(2.0..6.0), rng.gen_range(0.1..5.0))?;
        let s: f64 = rng.gen_range(0.0..10.0);
        identity = identity.max((s * law.dh(s) - law.h(s) - law.p(s)).abs() / law.p(s).max(1.0));
        normal = normal.max(law.h(1.0).abs());
    }
    let quad = PressureLaw::new(2.0, 1.0)?;
    let mut entropy: f64 = 0.0;
    for _ in 0..1000 {
        let (s, r): (f64, f64) = (rng.gen_range(0.0..10.0), rng.gen_range(0.01..10.0));
        let exact = (s - r).powi(2);
        entropy = entropy.max((quad.relative_entropy(s, r)? - exact).abs() / exact.max(1.0));
    }
    let bound = check_entropy_lower_bound(&quad, (0.5, 2.0), 10.0, 10_000)?;
    Ok(vec![
        CheckRow::at_most("pressure_law", "s H'(s) - H(s) = p(s)", identity, 1e-12),
        CheckRow::at_most("pressure_law", "H(1) = 0", normal, 1e-12),
        CheckRow::at_most("pressure_law", "gamma=2 entropy = (s-r)^2", entropy, 1e-14),
        CheckRow::at_least("pressure_law", "entropy lower-bound constant", bound.constant, 0.125),
    ])
}

fn geometry(cfg: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let g = &cfg.geometry;
    let cell = build_reference_cell(&g.obstacle, g.dim, g.resolution)?;
    let theta = g.obstacle.analytic_porosity(g.dim).unwrap_or(cell.theta_h);
    let mut rows = vec![CheckRow::at_most("geometry", "discrete porosity vs analytic", (cell.theta_h - theta).abs(), 4.0 * cell.h())];
    for &eps in &g.epsilon {
        let torus = match g.kind {
            DomainKind::Torus => build_perforated_grid(g.kind, g.length, eps, &cell)?,
            DomainKind::Box => continue,
        };
        rows.push(CheckRow::at_most(
            "geometry",
            &format!("torus fluid fraction = cell porosity (eps {eps})"),
            (torus.fluid_fraction() - cell.theta_h).abs(),
            1e-12,
        ));
    }
    Ok(rows)
}

fn cell_problem(cfg: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let g = &cfg.geometry;
    let cell = build_reference_cell(&g.obstacle, g.dim, g.resolution)?;
    let sol = solve_cell::<f64>(&cell, &cfg.cell_options)?;
    let mac = &sol.grid.mac;
    let mut div = vec![0.0; mac.len()];
    let mut div_max: f64 = 0.0;
    for col in &sol.columns {
        mac.divergence(&col.w, &mut div);
        div_max = div_max.max(div.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let rep = permeability(&sol);
    let avg = check_cell_average_identity(&sol)?;
    let kmax = rep.eigenvalues.last().copied().unwrap_or(1.0);
    let mut rows = vec![
        CheckRow::at_most("cell_problem", "max |div w_i|", div_max, 1e-10),
        CheckRow::at_most("cell_problem", "K symmetry defect / K_max", rep.symmetry_defect / kmax, 1e-10),
        CheckRow::at_least("cell_problem", "smallest eigenvalue of K", rep.eigenvalues[0], f64::MIN_POSITIVE),
        CheckRow::at_most("cell_problem", "|K - K_energy| / |K|", rep.energy_discrepancy, 0.01),
        CheckRow::at_most("cell_problem", "fluid-average identity defect", avg.defect, 0.02),
    ];
    if matches!(g.shape, Shape::Ball { .. }) {
        rows.push(CheckRow::at_most("cell_problem", "cubic isotropy defect", rep.isotropy_defect, 1e-3));
    }
    Ok(rows)
}

fn limit_solver(cfg: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let mac = MacGrid::full(Lattice::cubic(2, 32, Boundary::Walls), 1.0 / 32.0);
    let problem = LimitProblem::new(mac.clone(), vec![0.4, 0.05, 0.05, 0.3], 0.75, cfg.physics.law)?
        .with_force(|x| [(2.0 * PI * x[1]).cos(), 0.5 * (2.0 * PI * x[0]).sin(), 0.0]);
    let mut state = LimitState::new(&problem, 0.0, field(&mac, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).sin()))?;
    let m0 = problem.mass(&state.rho);
    for _ in 0..1000 {
        let dt = 0.9 * problem.stable_dt(&state.rho);
        step_limit(&problem, &mut state, dt)?;
    }
    let drift = ((problem.mass(&state.rho) - m0) / m0).abs();
    // without force the scheme is monotone: the minimum cannot drop
    let free = LimitProblem::new(mac.clone(), vec![0.5, 0.0, 0.0, 0.5], 0.9, cfg.physics.law)?;
    let out = solve_limit(&free, field(&mac, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos()), &[0.01], DtPolicy::Adaptive { safety: 0.9 })?;
    let min1 = out[0].rho.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        CheckRow::at_most("limit_solver", "relative mass drift over 1000 steps", drift, 1e-10),
        CheckRow::at_least("limit_solver", "minimum principle (min rho, f = 0)", min1, 0.7 * (1.0 - 1e-12)),
    ])
}

fn nse_solver(cfg: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let cell = build_reference_cell(&Obstacle::ball(0.5)?, 2, 16)?;
    let grid = build_perforated_grid(DomainKind::Box, 1.0, 0.125, &cell)?;
    let params = NseParams { lambda: cfg.physics.lambda, eta: cfg.physics.eta, law: cfg.physics.law };
    let p = NseProblem::new(grid, params)?;
    let mac = &p.grid.mac;
    let s0 = initialize_flow(&p, field(mac, |x| 1.0 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).cos()), InitialMomentum::Explicit(mac.zeros_faces()))?;
    let dt0 = 0.9 * NseSolver::new(&p).stable_dt(&s0);
    let (mut slip, mut drift): (f64, f64) = (0.0, 0.0);
    let mut c = Vec::new();
    for k in 0..2 {
        let dt = dt0 / 2f64.powi(k);
        let run = solve_nse(&p, s0.clone(), &[40.0 * dt0], NseDt::Fixed(dt))?;
        for (a, comp) in run.snapshots[0].u.comps.iter().enumerate() {
            for (g, &v) in comp.iter().enumerate() {
                if !mac.open(a)[g] {
                    slip = slip.max(v.abs());
                }
            }
        }
        drift = drift.max(run.max_mass_drift());
        c.push(run.max_energy_defect() / dt);
    }
    let spread = if c[0] > 0.0 && c[1] > 0.0 { (c[1] / c[0]).max(c[0] / c[1]) } else if c[0] == c[1] { 1.0 } else { f64::INFINITY };
    Ok(vec![
        CheckRow::at_most("nse_solver", "max |u| on closed faces", slip, 0.0),
        CheckRow::at_most("nse_solver", "relative mass drift", drift, 1e-10),
        CheckRow::at_most("nse_solver", "energy-defect constant change under dt halving", spread, 2.0),
    ])
}

fn correctors(cfg: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let cell = build_reference_cell(&Obstacle::ball(0.5)?, 2, 16)?;
    let sol = solve_cell::<f64>(&cell, &CellOptions::default())?;
    let vp = solve_vector_potential(&sol)?;
    let law = cfg.physics.law;
    let mut rows = Vec::new();
    let mut l2 = Vec::new();
    let mut residual: f64 = 0.0;
    for eps in [0.25, 0.125, 0.0625] {
        let grid = build_perforated_grid(DomainKind::Box, 1.0, eps, &cell)?;
        let mac = MacGrid::full(grid.mac.lattice().clone(), grid.h());
        let lp = LimitProblem::new(mac.clone(), sol.k.clone(), sol.theta(), law)?;
        let st = solve_limit(&lp, field(&mac, |x| 1.0 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).cos()), &[0.0, 0.001], DtPolicy::Adaptive { safety: 0.9 })?;
        rows.push(corrector_bounds(&sol, &grid, &law, &st[0], &st[1])?);
        let b = build_boundary_corrector(&sol, &vp, &st[0], &grid)?;
        l2.push(b.psi_l2);
        residual = residual.max(b.boundary_residual);
    }
    let worst = match verify_corrector_bounds(&rows, f64::INFINITY, 1e-12) {
        Ok(r) => r.worst_ratio,
        Err(_) => f64::INFINITY,
    };
    let halving = l2.windows(2).map(|w| (w[1] / w[0] - 0.5f64.sqrt()).abs() / 0.5f64.sqrt()).fold(0.0, f64::max);
    Ok(vec![
        CheckRow::at_most("correctors", "corrector constants: worst ratio between consecutive eps", worst, 2.0),
        CheckRow::at_most("correctors", "max |w_tilde| on the boundary", residual, 0.0),
        CheckRow::at_most("correctors", "|Psi L2 halving ratio / sqrt(1/2) - 1|", halving, 0.25),
    ])
}

fn analysis(_: &ExperimentConfig) -> homlab::Result<Vec<CheckRow>> {
    let lat = Lattice::cubic(2, 64, Boundary::Periodic);
    let g: Vec<f64> = (0..lat.len()).map(|i| (2.0 * PI * lat.position(i, Stagger::Cell, 1.0 / 64.0)[0]).sin()).collect();
    let norm = norm_neg_sobolev(&lat, 1.0, DomainKind::Torus, &g)?.value;
    let exact = 0.5f64.sqrt() / (1.0 + 4.0 * PI * PI).sqrt();
    let cell = build_reference_cell(&Obstacle::ball(0.5)?, 2, 16)?;
    let c1 = poincare_constant(&build_perforated_grid(DomainKind::Torus, 1.0, 0.25, &cell)?)?.constant;
    let c2 = poincare_constant(&build_perforated_grid(DomainKind::Torus, 1.0, 0.125, &cell)?)?.constant;
    let rate = [
        theoretical_rate(3.0, 2.0, DomainKind::Torus),
        theoretical_rate(2.0, 2.5, DomainKind::Torus),
        theoretical_rate(2.0, 2.0, DomainKind::Box),
    ];
    let expected = [(2.0, 1.0), (13.0 / 6.0, 1.0), (13.0 / 6.0, 0.5)];
    let formula = rate.iter().zip(expected).map(|(t, (l, b))| (t.lambda0 - l).abs().max((t.beta - b).abs())).fold(0.0, f64::max);
    Ok(vec![
        CheckRow::at_most("analysis", "spectral W^-1,2 norm of sin(2 pi x)", (norm - exact).abs(), 1e-6),
        CheckRow::at_most("analysis", "|C(1/8)/C(1/4) - 1/2|", (c2 / c1 - 0.5).abs(), 0.1),
        CheckRow::at_most("analysis", "rate formula", formula, 1e-14),
    ])
}

/// Runs every suite; a suite that errors contributes one failing row.
pub fn run_checks(cfg: &ExperimentConfig) -> Vec<CheckRow> {
    let suites: [(&'static str, Suite); 7] = [
        ("pressure_law", pressure_law),
        ("geometry", geometry),
        ("cell_problem", cell_problem),
        ("limit_solver", limit_solver),
        ("nse_solver", nse_solver),
        ("correctors", correctors),
        ("analysis", analysis),
    ];
    let mut rows = Vec::new();
    for (module, suite) in suites {
        match suite(cfg) {
            Ok(r) => rows.extend(r),
            Err(e) => rows.push(CheckRow {
                module,
                check: "suite".into(),
                value: f64::NAN,
                threshold: f64::NAN,
                at_least: false,
                note: e.to_string(),
            }),
        }
    }
    rows
}

pub fn check_table(rows: &[CheckRow]) -> Table {
    let mut t = Table::new(&["module", "check", "value", "threshold", "comparison", "status", "note"]);
    for r in rows {
        t.push(vec![
            r.module.into(),
            r.check.clone().into(),
            r.value.into(),
            r.threshold.into(),
            (if r.at_least { ">=" } else { "<=" }).into(),
            (if r.passed() { "PASS" } else { "FAIL" }).into(),
            r.note.clone().into(),
        ]);
    }
    t
}
