//! The five experiment kinds: solve, then write tables and dumps into the
//! output directory.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use homlab::analysis::HypothesisStatus;
use homlab::cell_problem::{check_cell_average_identity, permeability, solve_cell, CellSolution};
use homlab::limit_solver::{solve_limit, DtPolicy, LimitState};
use homlab::nse_solver::{initialize_flow, solve_nse, FlowRecord, InitialMomentum, NseDt, NseParams, NseProblem, NseRun};
use homlab::pipeline::{limit_problem, rate_sweep, FlowSetup};
use homlab::{build_perforated_grid, build_reference_cell, MacGrid, PerforatedGrid, Stagger};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, StepRule, OUTSIDE_HYPOTHESES};
use crate::io::{grid_record, Dumper, GridRecord, Table};
use crate::RunError;

/// What a run left on disk.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub grids: Vec<GridRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    /// Set when a verification suite found failures.
    pub failures: Vec<String>,
}

impl Artifacts {
    fn table(&mut self, out: &Path, name: &str, table: &Table) -> Result<(), RunError> {
        table.write(&out.join(name))?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

pub fn hypotheses_label(status: HypothesisStatus) -> &'static str {
    match status {
        HypothesisStatus::Inside => "inside Theorem 1 hypotheses",
        HypothesisStatus::Boundary => "on the λ = λ₀ boundary of Theorem 1",
        HypothesisStatus::Outside => OUTSIDE_HYPOTHESES,
    }
}

pub fn flow_setup(cfg: &ExperimentConfig) -> FlowSetup {
    let g = &cfg.geometry;
    let p = &cfg.physics;
    let force = p.force.clone().map(|f| {
        let f = Arc::new(f);
        Arc::new(move |x: &[f64; 3]| {
            let mut v = [0.0; 3];
            for (vi, e) in v.iter_mut().zip(f.iter()) {
                *vi = e.eval(x);
            }
            v
        }) as homlab::pipeline::VectorFn
    });
    let rho0 = Arc::new(p.rho0.clone());
    FlowSetup {
        dim: g.dim,
        kind: g.kind,
        length: g.length,
        obstacle: g.obstacle.clone(),
        n_per_cell: g.resolution,
        law: p.law,
        lambda: p.lambda,
        eta: p.eta,
        force,
        rho0: Arc::new(move |x: &[f64; 3]| rho0.eval(x)),
        t_end: cfg.time.t_end,
        samples: cfg.time.samples,
        dt: cfg.time.flow_dt(),
    }
}

fn eps_dir(out: &Path, eps: f64) -> Result<std::path::PathBuf, RunError> {
    let dir = out.join(format!("eps_{eps}"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn dumper<'a>(dir: &'a Path, mac: &MacGrid, epsilon: Option<f64>) -> Dumper<'a> {
    let lat = mac.lattice();
    Dumper { dir, shape: lat.n()[..lat.dim()].to_vec(), spacing: vec![mac.h(); lat.dim()], epsilon }
}

fn cell_samples(mac: &MacGrid, f: &dyn Fn(&[f64; 3]) -> f64) -> Vec<f64> {
    (0..mac.len()).map(|g| f(&mac.lattice().position(g, Stagger::Cell, mac.h()))).collect()
}

fn k_table(sol: &CellSolution<f64>) -> Table {
    let d = sol.dim();
    let mut t = Table::new(&["i", "j", "K", "K_energy"]);
    for i in 0..d {
        for j in 0..d {
            t.push(vec![i.into(), j.into(), sol.k[i * d + j].into(), sol.k_energy[i * d + j].into()]);
        }
    }
    t
}

fn solve_reference(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CellSolution<f64>, RunError> {
    let g = &cfg.geometry;
    let cell = build_reference_cell(&g.obstacle, g.dim, g.resolution)?;
    art.grids.push(grid_record("reference cell", None, &cell.mac));
    Ok(solve_cell::<f64>(&cell, &cfg.cell_options)?)
}

pub fn run_cell(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, RunError> {
    let mut art = Artifacts::default();
    let sol = solve_reference(cfg, &mut art)?;
    let rep = permeability(&sol);
    let avg = check_cell_average_identity(&sol)?;
    let d = sol.dim();
    println!("K =");
    for i in 0..d {
        let row: Vec<String> = (0..d).map(|j| format!("{:>22.15e}", sol.k[i * d + j])).collect();
        println!("  [{} ]", row.join(" "));
    }
    art.table(out, "cell_K.csv", &k_table(&sol))?;
    let mut s = Table::new(&["quantity", "value"]);
    let mut put = |name: String, v: f64| s.push(vec![name.into(), v.into()]);
    put("theta_h".into(), avg.theta_h);
    put("theta".into(), avg.theta);
    put("symmetry_defect".into(), rep.symmetry_defect);
    put("energy_discrepancy".into(), rep.energy_discrepancy);
    put("isotropy_defect".into(), rep.isotropy_defect);
    put("average_identity_defect".into(), avg.defect);
    for (i, e) in rep.eigenvalues.iter().enumerate() {
        put(format!("eigenvalue_{i}"), *e);
    }
    for col in &sol.columns {
        let j = col.direction;
        put(format!("column_{j}_iterations"), col.stats.iterations as f64);
        put(format!("column_{j}_div_residual"), col.stats.div_residual);
        put(format!("column_{j}_momentum_residual"), col.stats.momentum_residual);
    }
    art.table(out, "cell_summary.csv", &s)?;
    if cfg.dump_fields {
        let dir = out.join("fields");
        fs::create_dir_all(&dir)?;
        let dump = dumper(&dir, &sol.grid.mac, None);
        let mask: Vec<f64> = sol.grid.mac.fluid().iter().map(|&f| f as u8 as f64).collect();
        dump.cells("fluid", &mask, None)?;
        for col in &sol.columns {
            dump.faces(&format!("w{}", col.direction), &col.w, None)?;
            dump.cells(&format!("q{}", col.direction), &col.q, None)?;
        }
        art.outputs.push("fields/".into());
    }
    Ok(art)
}

fn finest_grid(cfg: &ExperimentConfig, sol: &CellSolution<f64>) -> Result<PerforatedGrid, RunError> {
    let g = &cfg.geometry;
    let eps = *g.epsilon.last().expect("validated nonempty");
    Ok(build_perforated_grid(g.kind, g.length, eps, &sol.grid)?)
}

pub fn run_limit(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, RunError> {
    let mut art = Artifacts::default();
    let sol = solve_reference(cfg, &mut art)?;
    art.table(out, "cell_K.csv", &k_table(&sol))?;
    let setup = flow_setup(cfg);
    let grid = finest_grid(cfg, &sol)?;
    let problem = limit_problem(&setup, &sol, &grid)?;
    art.grids.push(grid_record("limit", None, &problem.mac));
    let rho0 = cell_samples(&problem.mac, &*setup.rho0);
    let policy = match cfg.time.dt {
        StepRule::Adaptive { safety } => DtPolicy::Adaptive { safety },
        StepRule::Fixed { step } => DtPolicy::Fixed(step),
        StepRule::Proportional { coefficient } => DtPolicy::Fixed(coefficient * problem.mac.h()),
    };
    let states = solve_limit(&problem, rho0, &cfg.time.output_times, policy)?;
    let mut t = Table::new(&["t", "mass", "rho_min", "rho_max", "u_max"]);
    for s in &states {
        let (lo, hi) = min_max(&s.rho);
        let umax = s.u.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        t.push(vec![s.t.into(), problem.mass(&s.rho).into(), lo.into(), hi.into(), umax.into()]);
    }
    art.table(out, "limit.csv", &t)?;
    if cfg.dump_fields {
        let dir = out.join("fields");
        fs::create_dir_all(&dir)?;
        dump_limit(&dumper(&dir, &problem.mac, None), &states)?;
        art.outputs.push("fields/".into());
    }
    Ok(art)
}

fn dump_limit(dump: &Dumper, states: &[LimitState<f64>]) -> Result<(), RunError> {
    for (k, s) in states.iter().enumerate() {
        dump.cells(&format!("rho_t{k}"), &s.rho, Some(s.t))?;
        dump.faces(&format!("u_t{k}"), &s.u, Some(s.t))?;
    }
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn record_table(records: &[FlowRecord]) -> Table {
    let mut t = Table::new(&[
        "t",
        "dt",
        "mass",
        "kinetic",
        "internal",
        "dissipation",
        "energy_defect",
        "inertial",
        "velocity_l2",
        "viscous",
        "density_gamma",
        "poincare_ratio",
        "iterations",
    ]);
    for r in records {
        t.push(vec![
            r.t.into(),
            r.dt.into(),
            r.mass.into(),
            r.kinetic.into(),
            r.internal.into(),
            r.dissipation.into(),
            r.energy_defect.into(),
            r.inertial.into(),
            r.velocity_l2.into(),
            r.viscous.into(),
            r.density_gamma.into(),
            r.poincare_ratio.into(),
            r.iterations.into(),
        ]);
    }
    t
}

pub fn run_nse(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, RunError> {
    let mut art = Artifacts::default();
    let g = &cfg.geometry;
    let cell = build_reference_cell(&g.obstacle, g.dim, g.resolution)?;
    art.grids.push(grid_record("reference cell", None, &cell.mac));
    let setup = flow_setup(cfg);
    // independent runs per ε; files are written afterwards on this thread
    let runs: Vec<(NseProblem<f64>, NseRun<f64>)> = g
        .epsilon
        .par_iter()
        .map(|&eps| {
            let grid = build_perforated_grid(g.kind, g.length, eps, &cell)?;
            let params = NseParams { lambda: setup.lambda, eta: setup.eta, law: setup.law };
            let mut problem = NseProblem::new(grid, params)?;
            if let Some(f) = setup.force.clone() {
                problem = problem.with_force(move |x| f(x));
            }
            let mac = &problem.grid.mac;
            let rho0 = cell_samples(mac, &*setup.rho0);
            let s0 = initialize_flow(&problem, rho0, InitialMomentum::Explicit(mac.zeros_faces()))?;
            let policy = match cfg.time.dt {
                StepRule::Adaptive { safety } => NseDt::Adaptive { safety },
                StepRule::Fixed { step } => NseDt::Fixed(step),
                StepRule::Proportional { coefficient } => NseDt::Fixed(coefficient * mac.h()),
            };
            let run = solve_nse(&problem, s0, &cfg.time.output_times, policy)?;
            Ok((problem, run))
        })
        .collect::<Result<_, homlab::Error>>()?;
    let mut summary = Table::new(&["epsilon", "h", "steps", "mass_drift", "max_energy_defect", "final_energy"]);
    for (problem, run) in &runs {
        let eps = problem.epsilon();
        let mac = &problem.grid.mac;
        art.grids.push(grid_record("perforated", Some(eps), mac));
        let dir = eps_dir(out, eps)?;
        record_table(&run.records).write(&dir.join("nse.csv"))?;
        art.outputs.push(format!("eps_{eps}/nse.csv"));
        let last = run.records.last().expect("initial record");
        summary.push(vec![
            eps.into(),
            mac.h().into(),
            (run.records.len() - 1).into(),
            run.max_mass_drift().into(),
            run.max_energy_defect().into(),
            (last.kinetic + last.internal).into(),
        ]);
        if cfg.dump_fields {
            let dump = dumper(&dir, mac, Some(eps));
            for (k, s) in run.snapshots.iter().enumerate() {
                dump.cells(&format!("rho_t{k}"), &s.rho, Some(s.t))?;
                dump.faces(&format!("u_t{k}"), &s.u, Some(s.t))?;
            }
            art.outputs.push(format!("eps_{eps}/*.bin"));
        }
    }
    art.table(out, "nse_summary.csv", &summary)?;
    Ok(art)
}

pub fn run_rate(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, RunError> {
    let mut art = Artifacts::default();
    let g = &cfg.geometry;
    let setup = flow_setup(cfg);
    let sweep = rate_sweep(&setup, &g.epsilon, &cfg.cell_options)?;
    let cell = build_reference_cell(&g.obstacle, g.dim, g.resolution)?;
    art.grids.push(grid_record("reference cell", None, &cell.mac));
    let r = &sweep.report;
    let mut rate = Table::new(&[
        "epsilon",
        "h",
        "steps",
        "error_density",
        "error_velocity",
        "error_total",
        "error_corrector_velocity",
        "relen_max_defect",
        "relen_defect_bound",
        "mass_drift",
        "energy_defect",
        "norm",
        "beta_emp",
        "r_squared",
        "beta_theory",
        "lambda0",
        "monotone",
        "hypotheses",
    ]);
    for run in &sweep.runs {
        let eps = run.epsilon;
        let grid = build_perforated_grid(g.kind, g.length, eps, &cell)?;
        art.grids.push(grid_record("perforated", Some(eps), &grid.mac));
        let dir = eps_dir(out, eps)?;
        let e = &run.energy;
        let mut t = Table::new(&["t", "energy", "dissipation", "R1", "R2", "R3", "R4", "R5", "defect"]);
        for k in 0..e.times.len() {
            let rt = e.remainder_terms[k];
            t.push(vec![
                e.times[k].into(),
                e.energy[k].into(),
                e.dissipation[k].into(),
                rt[0].into(),
                rt[1].into(),
                rt[2].into(),
                rt[3].into(),
                rt[4].into(),
                e.inequality_defect[k].into(),
            ]);
        }
        t.write(&dir.join("energy.csv"))?;
        art.outputs.push(format!("eps_{eps}/energy.csv"));
        rate.push(vec![
            eps.into(),
            run.h.into(),
            (run.records.len() - 1).into(),
            run.errors.density.into(),
            run.errors.velocity.into(),
            run.errors.total().into(),
            run.errors.corrector_velocity.into(),
            e.max_defect().into(),
            e.defect_bound().into(),
            run.max_mass_drift().into(),
            run.max_energy_defect().into(),
            (if run.errors.approximate { "reflected" } else { "spectral" }).into(),
            r.beta_emp.into(),
            r.r_squared.into(),
            r.beta_theory.into(),
            r.lambda0.into(),
            (if r.monotone { "true" } else { "false" }).into(),
            hypotheses_label(cfg.hypotheses).into(),
        ]);
        if cfg.dump_fields {
            let dump = dumper(&dir, &grid.mac, Some(eps));
            let t_end = Some(run.final_state.t);
            dump.cells("rho", &run.final_state.rho, t_end)?;
            dump.faces("u", &run.final_state.u, t_end)?;
            dump.cells("r_eps", &run.final_pair.r_eps, t_end)?;
            dump.faces("w_tilde", &run.final_pair.w_tilde, t_end)?;
            dump.cells("rho_limit", &run.final_limit.rho, t_end)?;
            dump.faces("u_limit", &run.final_limit.u, t_end)?;
            art.outputs.push(format!("eps_{eps}/*.bin"));
        }
    }
    art.table(out, "rate.csv", &rate)?;
    println!(
        "beta_emp = {:.4} (r² {:.4}), beta_theory = {}, error {} in ε",
        r.beta_emp,
        r.r_squared,
        r.beta_theory,
        if r.monotone { "monotone" } else { "not monotone" }
    );
    Ok(art)
}
