//! Scaled compressible Navier–Stokes equations on the perforated grid:
//!
//! ```text
//! ∂t ρ + div(ρu) = 0,
//! ε^λ (∂t(ρu) + div(ρu⊗u)) − ε² div S(∇u) + ∇p(ρ) = ρ f,
//! S(∇u) = ∇u + ∇uᵀ − (2/3) div u Id + η div u Id,
//! ```
//!
//! with u = 0 on hole and outer-boundary faces. Each step transports the
//! density upwind with u^n, then solves the momentum balance (divided by
//! ε^λ) with implicit viscosity, upwind convection on the dual cells and the
//! pressure p(ρ^{n+1}).

use crate::error::{Error, Result};
use crate::geometry::PerforatedGrid;
use crate::lattice::{FaceField, Stagger, NO_NEIGHBOR};
use crate::linalg::{pcg, Multigrid, Stencil};
use crate::pressure_law::PressureLaw;
use crate::scalar::{dot, Real};

#[derive(Clone, Debug)]
pub struct NseParams<T> {
    pub lambda: f64,
    /// Bulk viscosity η ≥ 0 (μ = 1).
    pub eta: f64,
    pub law: PressureLaw<T>,
}

pub struct NseProblem<T> {
    pub grid: PerforatedGrid,
    pub params: NseParams<T>,
    /// f_a on the faces of axis a.
    force: Option<FaceField<T>>,
}

impl<T: Real> NseProblem<T> {
    pub fn new(grid: PerforatedGrid, params: NseParams<T>) -> Result<Self> {
        if !(params.lambda > 0.0) || !params.lambda.is_finite() {
            return Err(Error::Domain(format!("λ = {} must be positive", params.lambda)));
        }
        if !(params.eta >= 0.0) {
            return Err(Error::Domain(format!("bulk viscosity η = {} must be nonnegative", params.eta)));
        }
        Ok(NseProblem { grid, params, force: None })
    }

    /// Samples a time-independent force on the open faces.
    pub fn with_force(mut self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let mac = &self.grid.mac;
        let lat = mac.lattice();
        let mut force = mac.zeros_faces();
        for (a, fa) in force.comps.iter_mut().enumerate() {
            for (g, v) in fa.iter_mut().enumerate() {
                if mac.open(a)[g] {
                    *v = T::lit(f(&lat.position(g, Stagger::Face(a), mac.h()))[a]);
                }
            }
        }
        if force.comps.iter().flatten().any(|v| *v != T::zero()) {
            self.force = Some(force);
        }
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.grid.epsilon
    }

    /// ε^λ
    pub fn inertia(&self) -> f64 {
        self.epsilon().powf(self.params.lambda)
    }

    /// Viscosity after division by ε^λ: ε^{2−λ}.
    pub fn viscosity(&self) -> f64 {
        self.epsilon().powf(2.0 - self.params.lambda)
    }

    /// Coefficient of ∇div in div S: 1/3 + η.
    pub fn grad_div(&self) -> f64 {
        1.0 / 3.0 + self.params.eta
    }

    /// Face samples of the force, if any.
    pub fn force(&self) -> Option<&FaceField<T>> {
        self.force.as_ref()
    }

    /// Arithmetic mean of the two adjacent cell densities; zero on wall slots.
    pub fn face_density(&self, rho: &[T], a: usize, g: usize) -> T {
        match self.grid.mac.cell_down(g, a) {
            Some(lo) => T::lit(0.5) * (rho[g] + rho[lo]),
            None => T::zero(),
        }
    }
}

/// Energy bookkeeping along a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBalance {
    /// ½ ε^λ Σ ρ_σ u_σ² h^d
    pub kinetic: f64,
    /// Σ H(ρ) h^d
    pub internal: f64,
    /// Accumulated ε² ∫ S(∇u):∇u.
    pub dissipation: f64,
    /// Accumulated ∫ ρ f·u.
    pub work: f64,
    pub initial: f64,
}

impl EnergyBalance {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.internal
    }

    /// E(t) + dissipation − work − E(0); nonpositive for an exact energy
    /// inequality.
    pub fn defect(&self) -> f64 {
        self.energy() + self.dissipation - self.work - self.initial
    }
}

#[derive(Clone, Debug)]
pub struct FlowState<T> {
    pub t: f64,
    /// Cell-centred density, zero in solid cells.
    pub rho: Vec<T>,
    /// Face velocity, zero on every closed face.
    pub u: FaceField<T>,
    pub balance: EnergyBalance,
}

/// Initial momentum.
#[derive(Clone, Debug)]
pub enum InitialMomentum<T> {
    /// Velocity taken from the corrector w_ε(0).
    WellPrepared(FaceField<T>),
    /// Face momentum m₀.
    Explicit(FaceField<T>),
}

pub fn initialize_flow<T: Real>(
    problem: &NseProblem<T>,
    rho0: Vec<T>,
    momentum: InitialMomentum<T>,
) -> Result<FlowState<T>> {
    let mac = &problem.grid.mac;
    if rho0.len() != mac.len() {
        return Err(Error::GridMismatch(format!("density has {} values, grid {}", rho0.len(), mac.len())));
    }
    if let Some(r) = rho0.iter().find(|r| !(**r >= T::zero()) || !r.is_finite()) {
        return Err(Error::Domain(format!("initial density must be finite and nonnegative, found {r}")));
    }
    let rho: Vec<T> = rho0.iter().zip(mac.fluid()).map(|(&r, &f)| if f { r } else { T::zero() }).collect();
    let mut u = match momentum {
        InitialMomentum::WellPrepared(u) => u,
        InitialMomentum::Explicit(m) => {
            let mut u = mac.zeros_faces();
            for a in 0..mac.dim() {
                for g in 0..mac.len() {
                    let mg = m.comps[a][g];
                    if mg == T::zero() || !mac.open(a)[g] {
                        continue;
                    }
                    let lo = mac.cell_down(g, a).expect("open faces have two cells");
                    if rho[g] == T::zero() || rho[lo] == T::zero() {
                        return Err(Error::Compatibility(format!(
                            "momentum {mg} on a face touching vacuum (axis {a}, face {g})"
                        )));
                    }
                    u.comps[a][g] = mg / problem.face_density(&rho, a, g);
                }
            }
            u
        }
    };
    if u.comps.len() != mac.dim() || u.comps.iter().any(|c| c.len() != mac.len()) {
        return Err(Error::GridMismatch("initial velocity does not match the grid".into()));
    }
    mac.mask_faces(&mut u);
    let mut state = FlowState { t: 0.0, rho, u, balance: EnergyBalance::default() };
    let (kinetic, internal) = energies(problem, &state.rho, &state.u);
    state.balance = EnergyBalance { kinetic, internal, dissipation: 0.0, work: 0.0, initial: kinetic + internal };
    Ok(state)
}

fn energies<T: Real>(problem: &NseProblem<T>, rho: &[T], u: &FaceField<T>) -> (f64, f64) {
    let mac = &problem.grid.mac;
    let vol = mac.cell_volume();
    let mut kin = 0.0;
    for a in 0..mac.dim() {
        for g in 0..mac.len() {
            let v = u.comps[a][g].f64();
            if v != 0.0 {
                kin += problem.face_density(rho, a, g).f64() * v * v;
            }
        }
    }
    let internal: f64 = rho
        .iter()
        .zip(mac.fluid())
        .filter(|(_, &f)| f)
        .map(|(&r, _)| problem.params.law.h(r).f64())
        .sum();
    (0.5 * problem.inertia() * kin * vol, internal * vol)
}

/// Per-step diagnostics, including the a priori bound monitors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub dissipation: f64,
    pub energy_defect: f64,
    /// ε^λ ‖ρ|u|²‖₁
    pub inertial: f64,
    /// ‖u‖₂²
    pub velocity_l2: f64,
    /// ε² ‖∇u‖₂²
    pub viscous: f64,
    /// ‖ρ‖_γ^γ
    pub density_gamma: f64,
    /// ‖u‖₂ / (ε ‖∇u‖₂), zero for u ≡ 0.
    pub poincare_ratio: f64,
    pub iterations: usize,
}

/// Time stepper; caches the preconditioner between steps of equal size.
pub struct NseSolver<'p, T> {
    pub problem: &'p NseProblem<T>,
    pub rtol: f64,
    pub max_iterations: usize,
    precond: Option<(f64, Vec<Multigrid<T>>)>,
    rho_ref: f64,
}

impl<'p, T: Real> NseSolver<'p, T> {
    pub fn new(problem: &'p NseProblem<T>) -> Self {
        NseSolver { problem, rtol: 1e-11, max_iterations: 2000, precond: None, rho_ref: 1.0 }
    }

    pub fn mass(&self, rho: &[T]) -> f64 {
        rho.iter().copied().sum::<T>().f64() * self.problem.grid.mac.cell_volume()
    }

    /// Largest step allowed by the acoustic, advective and slaved-pressure
    /// restrictions.
    pub fn stable_dt(&self, state: &FlowState<T>) -> f64 {
        let p = self.problem;
        let mac = &p.grid.mac;
        let h = mac.h();
        let d = mac.dim() as f64;
        let mut c2: f64 = 0.0;
        let mut rp: f64 = 0.0;
        for (&r, &f) in state.rho.iter().zip(mac.fluid()) {
            if f && r > T::zero() {
                let dp = p.params.law.dp(r).f64();
                c2 = c2.max(dp);
                rp = rp.max(r.f64() * dp);
            }
        }
        let umax = state.u.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs().f64()));
        let mut dt = f64::INFINITY;
        if c2 > 0.0 {
            dt = dt.min(0.5 * h * p.inertia().sqrt() / c2.sqrt());
        }
        if umax > 0.0 {
            dt = dt.min(h / (2.0 * d * umax));
        }
        if rp > 0.0 {
            // pressure driving a viscosity-dominated velocity: ‖D A⁻¹ Dᵀ‖ ≤ 1
            dt = dt.min(p.epsilon().powi(2) / rp);
        }
        dt
    }

    fn preconditioner(&mut self, dt: f64) -> &Vec<Multigrid<T>> {
        let stale = match &self.precond {
            Some((d, _)) => (d - dt).abs() > 1e-12 * dt,
            None => true,
        };
        if stale {
            let mac = &self.problem.grid.mac;
            let nu = self.problem.viscosity();
            let w = T::lit(nu / (mac.h() * mac.h()));
            let mg = (0..mac.dim())
                .map(|a| {
                    let sigma = vec![T::lit(self.rho_ref / dt); mac.len()];
                    Multigrid::new(Stencil::masked_laplacian(mac.lattice(), Stagger::Face(a), mac.open(a), w, Some(&sigma)))
                })
                .collect();
            self.precond = Some((dt, mg));
        }
        &self.precond.as_ref().unwrap().1
    }

    /// Mass fluxes ρ_up u on every face.
    fn mass_fluxes(&self, rho: &[T], u: &FaceField<T>) -> FaceField<T> {
        let mac = &self.problem.grid.mac;
        let mut f = mac.zeros_faces();
        for (a, fa) in f.comps.iter_mut().enumerate() {
            for (g, v) in fa.iter_mut().enumerate() {
                let ug = u.comps[a][g];
                if ug == T::zero() || !mac.open(a)[g] {
                    continue;
                }
                let lo = mac.cell_down(g, a).expect("open face");
                *v = ug * if ug > T::zero() { rho[lo] } else { rho[g] };
            }
        }
        f
    }

    /// Upwind convection Σ min(F_out, 0)(u_nbr − u_σ)/h on the dual cells,
    /// written against the dual mass balance.
    fn convection(&self, flux: &FaceField<T>, u: &FaceField<T>, a: usize, g: usize) -> T {
        let mac = &self.problem.grid.mac;
        let d = mac.dim();
        let lo = mac.cell_down(g, a).expect("open face");
        let half = T::lit(0.5);
        let ua = &u.comps[a];
        let open = mac.open(a);
        let nbr_val = |j: usize| if open[j] { ua[j] } else { T::zero() };
        let us = ua[g];
        let mut c = T::zero();
        let mut add = |out: T, un: T| {
            if out < T::zero() {
                c += out * (un - us);
            }
        };
        let fa = &flux.comps[a];
        let up = mac.upper_face(g, a);
        add(half * (fa[g] + fa[up]), nbr_val(up));
        add(-half * (fa[lo] + fa[g]), nbr_val(lo));
        let fnbr = mac.face_neighbors(a);
        for b in (0..d).filter(|&b| b != a) {
            let fb = &flux.comps[b];
            let ub_up = fnbr[g * 2 * d + 2 * b + 1];
            let ub_dn = fnbr[g * 2 * d + 2 * b];
            let val = |j: u32| if j == NO_NEIGHBOR { T::zero() } else { nbr_val(j as usize) };
            add(half * (fb[mac.upper_face(g, b)] + fb[mac.upper_face(lo, b)]), val(ub_up));
            add(-half * (fb[g] + fb[lo]), val(ub_dn));
        }
        c / T::lit(mac.h())
    }

    /// Advances `state` by `dt`; the state is unchanged on error.
    pub fn step(&mut self, state: &mut FlowState<T>, dt: f64) -> Result<FlowRecord> {
        let stable = self.stable_dt(state);
        if dt > stable * (1.0 + 1e-9) {
            return Err(Error::StepRejected { reason: format!("dt = {dt:.3e} above the stability bound"), suggested_dt: stable });
        }
        let p = self.problem;
        let mac = &p.grid.mac;
        let d = mac.dim();
        let n = mac.len();
        let h = mac.h();
        let inv_lambda = T::lit(1.0 / p.inertia());
        let tdt = T::lit(dt);

        // continuity with u^n
        let flux = self.mass_fluxes(&state.rho, &state.u);
        let mut rho = state.rho.clone();
        for (g, r) in rho.iter_mut().enumerate() {
            if !mac.fluid()[g] {
                continue;
            }
            let mut div = T::zero();
            for a in 0..d {
                div += flux.comps[a][mac.upper_face(g, a)] - flux.comps[a][g];
            }
            *r -= tdt * div / T::lit(h);
        }
        if let Some(r) = rho.iter().find(|r| **r < T::zero()) {
            return Err(Error::StepRejected {
                reason: format!("negative density {r} after transport"),
                suggested_dt: 0.5 * dt,
            });
        }
        let pres: Vec<T> = rho.iter().map(|&r| p.params.law.p(r)).collect();

        // momentum
        let mut diag = vec![T::zero(); d * n];
        let mut rhs = vec![T::zero(); d * n];
        for a in 0..d {
            for g in 0..n {
                if !mac.open(a)[g] {
                    continue;
                }
                let lo = mac.cell_down(g, a).expect("open face");
                let rs = p.face_density(&rho, a, g);
                let mut b = rs * state.u.comps[a][g] / tdt - self.convection(&flux, &state.u, a, g);
                b -= inv_lambda * (pres[g] - pres[lo]) / T::lit(h);
                if let Some(f) = &p.force {
                    b += inv_lambda * rs * f.comps[a][g];
                }
                rhs[a * n + g] = b;
                diag[a * n + g] = rs / tdt;
            }
        }
        self.rho_ref = {
            let s: f64 = rho.iter().map(|r| r.f64()).sum();
            (s / mac.fluid_count() as f64).max(1e-12)
        };
        let (rtol, max_it) = (self.rtol, self.max_iterations);
        let mut x: Vec<T> = state.u.comps.concat();
        let stats = {
            let mg = self.preconditioner(dt);
            pcg(
                |v: &[T], y: &mut [T]| momentum_apply(p, &diag, v, y),
                |r: &[T], z: &mut [T]| {
                    for a in 0..d {
                        mg[a].vcycle(&r[a * n..(a + 1) * n], &mut z[a * n..(a + 1) * n]);
                    }
                },
                &rhs,
                &mut x,
                rtol,
                max_it,
            )
        };
        if !stats.converged {
            return Err(Error::NoConvergence {
                context: "implicit momentum solve".into(),
                iterations: stats.iterations,
                residual: stats.residual,
            });
        }
        let mut u = FaceField { comps: (0..d).map(|a| x[a * n..(a + 1) * n].to_vec()).collect() };
        mac.mask_faces(&mut u);

        // energy bookkeeping
        let eps2 = p.epsilon().powi(2);
        let grad2 = mac.gradient_energy(&u).f64();
        let mut div = vec![T::zero(); n];
        mac.divergence(&u, &mut div);
        let div2 = dot(&div, &div).f64() * mac.cell_volume();
        let mut work = 0.0;
        if let Some(f) = &p.force {
            for a in 0..d {
                for g in 0..n {
                    work += (p.face_density(&rho, a, g) * f.comps[a][g] * u.comps[a][g]).f64();
                }
            }
            work *= dt * mac.cell_volume();
        }
        let (kinetic, internal) = energies(p, &rho, &u);
        let mut balance = state.balance;
        balance.kinetic = kinetic;
        balance.internal = internal;
        balance.dissipation += dt * eps2 * (grad2 + p.grad_div() * div2);
        balance.work += work;

        state.rho = rho;
        state.u = u;
        state.t += dt;
        state.balance = balance;
        let mut rec = self.record(state);
        rec.dt = dt;
        rec.iterations = stats.iterations;
        Ok(rec)
    }

    /// Diagnostics of the current state.
    pub fn record(&self, state: &FlowState<T>) -> FlowRecord {
        let p = self.problem;
        let mac = &p.grid.mac;
        let vol = mac.cell_volume();
        let u2: f64 = state.u.comps.iter().flatten().map(|v| v.f64() * v.f64()).sum::<f64>() * vol;
        let grad2 = mac.gradient_energy(&state.u).f64();
        let gamma = p.params.law.gamma().f64();
        let rho_g: f64 = state.rho.iter().map(|r| r.f64().powf(gamma)).sum::<f64>() * vol;
        let eps = p.epsilon();
        let b = state.balance;
        FlowRecord {
            t: state.t,
            dt: 0.0,
            mass: self.mass(&state.rho),
            kinetic: b.kinetic,
            internal: b.internal,
            dissipation: b.dissipation,
            energy_defect: b.defect(),
            inertial: 2.0 * b.kinetic,
            velocity_l2: u2,
            viscous: eps * eps * grad2,
            density_gamma: rho_g,
            poincare_ratio: if grad2 > 0.0 { u2.sqrt() / (eps * grad2.sqrt()) } else { 0.0 },
            iterations: 0,
        }
    }
}

/// (ρ_σ/dt + ν(−Δ) − ν(1/3+η)∇div) applied to the stacked face vector.
fn momentum_apply<T: Real>(p: &NseProblem<T>, diag: &[T], x: &[T], y: &mut [T]) {
    let mac = &p.grid.mac;
    let d = mac.dim();
    let n = mac.len();
    let nu = T::lit(p.viscosity());
    let c = nu * T::lit(p.grad_div());
    let u = FaceField { comps: (0..d).map(|a| x[a * n..(a + 1) * n].to_vec()).collect() };
    let mut div = vec![T::zero(); n];
    mac.divergence(&u, &mut div);
    let mut gd = mac.zeros_faces();
    mac.gradient(&div, &mut gd);
    for a in 0..d {
        let ya = &mut y[a * n..(a + 1) * n];
        mac.neg_laplacian(a, &u.comps[a], ya);
        let open = mac.open(a);
        for g in 0..n {
            ya[g] = if open[g] { diag[a * n + g] * u.comps[a][g] + nu * ya[g] - c * gd.comps[a][g] } else { T::zero() };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NseDt {
    Fixed(f64),
    /// `safety · stable_dt`, re-evaluated every step.
    Adaptive { safety: f64 },
}

#[derive(Clone, Debug)]
pub struct NseRun<T> {
    /// One record per step, preceded by the initial state.
    pub records: Vec<FlowRecord>,
    /// States at the requested snapshot times.
    pub snapshots: Vec<FlowState<T>>,
}

impl<T> NseRun<T> {
    /// max over the run of the positive part of the energy defect.
    pub fn max_energy_defect(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.energy_defect))
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass;
        self.records.iter().fold(0.0, |m, r| m.max(((r.mass - m0) / m0).abs()))
    }
}

/// Integrates to the last snapshot time, landing on each one exactly.
pub fn solve_nse<T: Real>(
    problem: &NseProblem<T>,
    state: FlowState<T>,
    snapshot_times: &[f64],
    policy: NseDt,
) -> Result<NseRun<T>> {
    let mut solver = NseSolver::new(problem);
    let mut state = state;
    let mut records = vec![solver.record(&state)];
    let mut snapshots = Vec::new();
    let mut times = snapshot_times.to_vec();
    times.sort_by(f64::total_cmp);
    for &t_out in &times {
        while state.t < t_out * (1.0 - 1e-13) {
            let dt = match policy {
                NseDt::Fixed(dt) => dt,
                NseDt::Adaptive { safety } => safety * solver.stable_dt(&state),
            };
            // avoid a sliver step before the output time
            let remaining = t_out - state.t;
            let dt = if dt >= remaining { remaining } else if dt > 0.5 * remaining { 0.5 * remaining } else { dt };
            let rec = solver.step(&mut state, dt)?;
            records.push(rec);
        }
        state.t = t_out;
        snapshots.push(state.clone());
    }
    Ok(NseRun { records, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perforated_grid, build_reference_cell, DomainKind, Obstacle};

    fn problem(kind: DomainKind) -> NseProblem<f64> {
        let cell = build_reference_cell(&Obstacle::ball(0.5).unwrap(), 2, 16).unwrap();
        let grid = build_perforated_grid(kind, 1.0, 0.25, &cell).unwrap();
        let params = NseParams { lambda: 2.5, eta: 0.0, law: PressureLaw::new(2.0, 1.0).unwrap() };
        NseProblem::new(grid, params).unwrap()
    }

    #[test]
    fn rest_state_is_a_fixed_point() {
        let p = problem(DomainKind::Box);
        let rho0 = vec![1.0; p.grid.mac.len()];
        let u0 = p.grid.mac.zeros_faces();
        let state = initialize_flow(&p, rho0, InitialMomentum::Explicit(u0)).unwrap();
        assert_eq!(state.balance.kinetic, 0.0);
        assert_eq!(state.balance.internal, 0.0);
        let run = solve_nse(&p, state, &[0.01], NseDt::Adaptive { safety: 0.9 }).unwrap();
        let s = &run.snapshots[0];
        assert!(s.u.comps.iter().flatten().all(|&v| v == 0.0));
        assert!(s.rho.iter().zip(p.grid.mac.fluid()).all(|(&r, &f)| r == if f { 1.0 } else { 0.0 }));
    }

    #[test]
    fn momentum_on_vacuum_is_rejected() {
        let p = problem(DomainKind::Torus);
        let mac = &p.grid.mac;
        let mut rho0 = vec![1.0; mac.len()];
        let g = (0..mac.len()).find(|&g| mac.open(0)[g]).unwrap();
        rho0[g] = 0.0;
        let mut m0 = mac.zeros_faces();
        m0.comps[0][g] = 0.1;
        let r = initialize_flow(&p, rho0, InitialMomentum::Explicit(m0));
        assert!(matches!(r, Err(Error::Compatibility(_))));
    }
}
