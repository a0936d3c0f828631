//! End-to-end studies built from the solvers: the limit trajectory shared by
//! an ε-sweep, one flow run per ε with its correctors and diagnostics, the
//! rate sweep, and the (h, dt) refinement study of the relative-energy
//! inequality.

use std::sync::Arc;

use rayon::prelude::*;

use crate::analysis::{error_functional, rate_report, EnergyReport, ErrorFunctional, RateReport, RelenTracker};
use crate::cell_problem::{solve_cell, solve_vector_potential, CellOptions, CellSolution, VectorPotential};
use crate::correctors::{build_correctors, CorrectorPair};
use crate::error::{Error, Result};
use crate::geometry::{build_perforated_grid, build_reference_cell, DomainKind, Obstacle, PerforatedGrid};
use crate::lattice::{Lattice, Stagger};
use crate::limit_solver::{darcy_velocity, solve_limit, DtPolicy, LimitProblem, LimitState};
use crate::mac::MacGrid;
use crate::nse_solver::{initialize_flow, FlowRecord, FlowState, InitialMomentum, NseParams, NseProblem, NseSolver};
use crate::pressure_law::PressureLaw;

pub type VectorFn = Arc<dyn Fn(&[f64; 3]) -> [f64; 3] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

/// Step-size rule of the flow runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowDt {
    /// `safety · stable_dt`, re-evaluated every step.
    Adaptive { safety: f64 },
    /// A fixed step `coefficient · h` (the refinement study halves h and dt together).
    Proportional { coefficient: f64 },
}

/// Everything a flow study needs besides ε.
#[derive(Clone)]
pub struct FlowSetup {
    pub dim: usize,
    pub kind: DomainKind,
    pub length: f64,
    pub obstacle: Obstacle,
    pub n_per_cell: usize,
    pub law: PressureLaw<f64>,
    pub lambda: f64,
    pub eta: f64,
    pub force: Option<VectorFn>,
    pub rho0: ScalarFn,
    pub t_end: f64,
    /// Number of sampling intervals on [0, T] for the error functional.
    pub samples: usize,
    pub dt: FlowDt,
}

/// The solved reference cell and, in box mode, its vector potential.
pub struct CellData {
    pub solution: CellSolution<f64>,
    pub potential: Option<VectorPotential<f64>>,
}

pub fn solve_cell_data(setup: &FlowSetup, opts: &CellOptions) -> Result<CellData> {
    let cell = build_reference_cell(&setup.obstacle, setup.dim, setup.n_per_cell)?;
    let solution = solve_cell::<f64>(&cell, opts)?;
    let potential = match setup.kind {
        DomainKind::Box => Some(solve_vector_potential(&solution)?),
        DomainKind::Torus => None,
    };
    Ok(CellData { solution, potential })
}

/// Limit snapshots on a uniform time grid; intermediate times are
/// interpolated linearly in ρ with the Darcy velocity recomputed.
#[derive(Clone)]
pub struct LimitTrajectory {
    pub problem: LimitProblem<f64>,
    pub snapshots: Vec<LimitState<f64>>,
}

impl LimitTrajectory {
    pub fn at(&self, t: f64) -> Result<LimitState<f64>> {
        let s = &self.snapshots;
        let last = s.last().expect("nonempty trajectory");
        if t < s[0].t - 1e-12 || t > last.t * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Domain(format!("limit trajectory covers [{}, {}], asked for t = {t}", s[0].t, last.t)));
        }
        let k = s.partition_point(|x| x.t <= t).clamp(1, s.len() - 1);
        let (a, b) = (&s[k - 1], &s[k]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let rho: Vec<f64> = a.rho.iter().zip(&b.rho).map(|(x, y)| (1.0 - w) * x + w * y).collect();
        let u = darcy_velocity(&self.problem, &rho);
        Ok(LimitState { t, rho, u })
    }

    /// Block average onto the grid coarser by `factor` per axis.
    pub fn restrict(&self, coarse: &LimitProblem<f64>, factor: usize) -> Result<LimitTrajectory> {
        let fine = self.problem.mac.lattice();
        let lat = coarse.mac.lattice();
        let d = fine.dim();
        for a in 0..d {
            if fine.n()[a] != factor * lat.n()[a] {
                return Err(Error::GridMismatch(format!("cannot restrict {:?} by {factor} to {:?}", fine.n(), lat.n())));
            }
        }
        let weight = 1.0 / (factor as f64).powi(d as i32);
        let snapshots = self
            .snapshots
            .iter()
            .map(|s| {
                let mut rho = vec![0.0; lat.len()];
                for (g, &r) in s.rho.iter().enumerate() {
                    let c = fine.coords(g);
                    let mut cc = [0usize; 3];
                    for a in 0..d {
                        cc[a] = c[a] / factor;
                    }
                    rho[lat.index(cc)] += weight * r;
                }
                let u = darcy_velocity(coarse, &rho);
                LimitState { t: s.t, rho, u }
            })
            .collect();
        Ok(LimitTrajectory { problem: coarse.clone(), snapshots })
    }
}

pub fn sample_times(setup: &FlowSetup) -> Vec<f64> {
    (0..=setup.samples).map(|k| setup.t_end * k as f64 / setup.samples as f64).collect()
}

/// The Darcy problem on the unperforated lattice of `grid`.
pub fn limit_problem(setup: &FlowSetup, cell: &CellSolution<f64>, grid: &PerforatedGrid) -> Result<LimitProblem<f64>> {
    let mac = MacGrid::full(grid.mac.lattice().clone(), grid.h());
    let p = LimitProblem::new(mac, cell.k.clone(), cell.theta(), setup.law)?;
    Ok(match &setup.force {
        Some(f) => {
            let f = f.clone();
            p.with_force(move |x| f(x))
        }
        None => p,
    })
}

fn cell_samples(lat: &Lattice, h: f64, f: &ScalarFn) -> Vec<f64> {
    (0..lat.len()).map(|g| f(&lat.position(g, Stagger::Cell, h))).collect()
}

/// Solves the limit system on the grid of `grid`.
pub fn solve_limit_trajectory(setup: &FlowSetup, cell: &CellSolution<f64>, grid: &PerforatedGrid) -> Result<LimitTrajectory> {
    let problem = limit_problem(setup, cell, grid)?;
    let rho0 = cell_samples(problem.mac.lattice(), problem.mac.h(), &setup.rho0);
    let snapshots = solve_limit(&problem, rho0, &sample_times(setup), DtPolicy::Adaptive { safety: 0.9 })?;
    Ok(LimitTrajectory { problem, snapshots })
}

/// One flow run at a fixed ε.
#[derive(Clone, Debug)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub h: f64,
    pub cells: usize,
    /// One record per step, preceded by the initial state.
    pub records: Vec<FlowRecord>,
    pub energy: EnergyReport,
    pub errors: ErrorFunctional,
    pub max_dt: f64,
    pub final_state: FlowState<f64>,
    pub final_pair: CorrectorPair<f64>,
    pub final_limit: LimitState<f64>,
}

impl EpsilonRun {
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass;
        self.records.iter().fold(0.0, |m, r| m.max(((r.mass - m0) / m0).abs()))
    }

    pub fn max_energy_defect(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.energy_defect))
    }
}

/// Runs the flow at `grid.epsilon` from well-prepared data (ρ_ε(0), u_ε(0)) =
/// (r_ε(0), w̃_ε(0)), tracking the relative-energy inequality at every step
/// and the error functional at the sample times.
pub fn run_epsilon(setup: &FlowSetup, cell: &CellData, grid: &PerforatedGrid, limit: &LimitTrajectory) -> Result<EpsilonRun> {
    let sol = &cell.solution;
    let pot = cell.potential.as_ref();
    let params = NseParams { lambda: setup.lambda, eta: setup.eta, law: setup.law };
    let problem = NseProblem::new(grid.clone(), params)?;
    let problem = match &setup.force {
        Some(f) => {
            let f = f.clone();
            problem.with_force(move |x| f(x))
        }
        None => problem,
    };
    let pair_at = |state: &LimitState<f64>| build_correctors(sol, pot, state, grid, &setup.law);
    let l0 = limit.at(0.0)?;
    let p0 = pair_at(&l0)?;
    let mut state = initialize_flow(&problem, p0.r_eps.clone(), InitialMomentum::WellPrepared(p0.w_tilde.clone()))?;
    let mut solver = NseSolver::new(&problem);
    let mut records = vec![solver.record(&state)];
    let mut tracker = RelenTracker::new(&problem);
    tracker.push(&state, p0.clone())?;
    let times = sample_times(setup);
    let mut flows = vec![state.clone()];
    let mut limits = vec![l0];
    let mut pairs = vec![p0];
    let mut max_dt: f64 = 0.0;
    let fixed = match setup.dt {
        FlowDt::Proportional { coefficient } => Some(coefficient * grid.h()),
        FlowDt::Adaptive { .. } => None,
    };
    for &t_out in &times[1..] {
        while state.t < t_out * (1.0 - 1e-13) {
            let dt = match setup.dt {
                FlowDt::Adaptive { safety } => safety * solver.stable_dt(&state),
                FlowDt::Proportional { .. } => fixed.unwrap(),
            };
            // land on the sample time without a sliver step
            let remaining = t_out - state.t;
            let dt = if dt >= remaining {
                remaining
            } else if remaining - dt < 0.1 * dt {
                0.5 * remaining
            } else {
                dt
            };
            let rec = solver.step(&mut state, dt)?;
            max_dt = max_dt.max(dt);
            records.push(rec);
            let lim = limit.at(state.t.min(t_out))?;
            tracker.push(&state, pair_at(&lim)?)?;
        }
        state.t = t_out;
        let lim = limit.at(t_out)?;
        pairs.push(pair_at(&lim)?);
        limits.push(lim);
        flows.push(state.clone());
    }
    let errors = error_functional(grid, &flows, &limits, &pairs)?;
    Ok(EpsilonRun {
        epsilon: grid.epsilon,
        h: grid.h(),
        cells: grid.mac.len(),
        records,
        energy: tracker.finish(),
        errors,
        max_dt,
        final_state: flows.pop().unwrap(),
        final_pair: pairs.pop().unwrap(),
        final_limit: limits.pop().unwrap(),
    })
}

/// Outcome of an ε-sweep.
pub struct RateSweep {
    pub runs: Vec<EpsilonRun>,
    pub report: RateReport,
}

/// Solves the cell problem once, the limit once on the finest grid
/// (restricted by block averaging to the coarser ones), and one flow per ε
/// in parallel on the current rayon pool.
pub fn rate_sweep(setup: &FlowSetup, epsilons: &[f64], opts: &CellOptions) -> Result<RateSweep> {
    if epsilons.len() < 3 {
        return Err(Error::Config(format!("a rate sweep needs three or more ε, got {}", epsilons.len())));
    }
    let cell = solve_cell_data(setup, opts)?;
    let grids: Vec<PerforatedGrid> = epsilons
        .iter()
        .map(|&e| build_perforated_grid(setup.kind, setup.length, e, &cell.solution.grid))
        .collect::<Result<_>>()?;
    let finest = grids
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.epsilon.total_cmp(&b.1.epsilon))
        .map(|(i, _)| i)
        .unwrap();
    let fine_limit = solve_limit_trajectory(setup, &cell.solution, &grids[finest])?;
    let nf = grids[finest].mac.lattice().n()[0];
    let runs: Vec<EpsilonRun> = grids
        .par_iter()
        .map(|grid| {
            let n = grid.mac.lattice().n()[0];
            let limit = if n == nf {
                fine_limit.clone()
            } else {
                if !nf.is_multiple_of(n) {
                    return Err(Error::GridMismatch(format!("grid {n} does not divide the finest grid {nf}")));
                }
                fine_limit.restrict(&limit_problem(setup, &cell.solution, grid)?, nf / n)?
            };
            run_epsilon(setup, &cell, grid, &limit)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = runs.iter().map(|r| (r.epsilon, r.errors.total())).collect();
    let report = rate_report(&pairs, setup.law.gamma(), setup.lambda, setup.kind)?;
    Ok(RateSweep { runs, report })
}

/// One level of the relative-energy refinement study.
#[derive(Clone, Debug)]
pub struct RelenLevel {
    pub n_per_cell: usize,
    pub h: f64,
    pub dt: f64,
    /// Largest positive part of the defect.
    pub max_defect: f64,
    /// Largest |defect|.
    pub defect_bound: f64,
    pub constant: f64,
    pub report: EnergyReport,
}

/// Runs the flow at one ε on a sequence of cell resolutions with
/// `dt ∝ h`, each level with its own cell problem and limit solve.
pub fn relen_refinement(setup: &FlowSetup, epsilon: f64, resolutions: &[usize], opts: &CellOptions) -> Result<Vec<RelenLevel>> {
    let FlowDt::Proportional { .. } = setup.dt else {
        return Err(Error::Config("the refinement study needs a step proportional to h".into()));
    };
    resolutions
        .iter()
        .map(|&n| {
            let s = FlowSetup { n_per_cell: n, ..setup.clone() };
            let cell = solve_cell_data(&s, opts)?;
            let grid = build_perforated_grid(s.kind, s.length, epsilon, &cell.solution.grid)?;
            let limit = solve_limit_trajectory(&s, &cell.solution, &grid)?;
            let run = run_epsilon(&s, &cell, &grid, &limit)?;
            let max_defect = run.energy.max_defect();
            Ok(RelenLevel {
                n_per_cell: n,
                h: run.h,
                dt: run.max_dt,
                max_defect,
                defect_bound: run.energy.defect_bound(),
                constant: run.energy.constant(run.h, run.max_dt),
                report: run.energy,
            })
        })
        .collect()
}
