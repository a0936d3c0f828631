//! Relative energy of a computed flow with respect to a corrector pair, the
//! five remainder integrals, and the relative-energy inequality along a
//! trajectory.

use crate::correctors::CorrectorPair;
use crate::error::{Error, Result};
use crate::lattice::{FaceField, NO_NEIGHBOR};
use crate::nse_solver::{FlowState, NseProblem};
use crate::pressure_law::PressureLaw;
use crate::scalar::{dot, Real};

fn check_shapes<T: Real>(problem: &NseProblem<T>, state: &FlowState<T>, pair: &CorrectorPair<T>) -> Result<()> {
    let n = problem.grid.mac.len();
    let d = problem.grid.dim();
    let faces_ok = |f: &FaceField<T>| f.comps.len() == d && f.comps.iter().all(|c| c.len() == n);
    if state.rho.len() != n || pair.r_eps.len() != n || !faces_ok(&state.u) || !faces_ok(&pair.w_tilde) {
        return Err(Error::GridMismatch("flow state, corrector pair and grid differ in size".into()));
    }
    if (pair.epsilon - problem.epsilon()).abs() > 1e-12 * problem.epsilon() {
        return Err(Error::GridMismatch(format!(
            "corrector pair built for ε = {}, flow at ε = {}",
            pair.epsilon,
            problem.epsilon()
        )));
    }
    Ok(())
}

/// The comparison velocity w̃_ε (equal to w_ε on the torus), checked to
/// vanish on every closed face.
fn comparison_velocity<'a, T: Real>(problem: &NseProblem<T>, pair: &'a CorrectorPair<T>) -> Result<&'a FaceField<T>> {
    let mac = &problem.grid.mac;
    let w = &pair.w_tilde;
    let scale = w.comps.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs().f64()));
    for (a, wa) in w.comps.iter().enumerate() {
        for (g, v) in wa.iter().enumerate() {
            if !mac.open(a)[g] && v.abs().f64() > 1e-12 * scale {
                return Err(Error::Admissibility(format!(
                    "comparison velocity {v} on closed face (axis {a}, index {g})"
                )));
            }
        }
    }
    Ok(w)
}

fn difference<T: Real>(u: &FaceField<T>, w: &FaceField<T>) -> FaceField<T> {
    FaceField {
        comps: u.comps.iter().zip(&w.comps).map(|(ua, wa)| ua.iter().zip(wa).map(|(&x, &y)| x - y).collect()).collect(),
    }
}

/// `E = Σ_fluid [½ ε^λ ρ |u − w|² + H(ρ) − H'(r)(ρ − r) − H(r)] h^d`, the
/// kinetic part summed over faces with the arithmetic face density as in the
/// solver energy.
pub fn relative_energy<T: Real>(problem: &NseProblem<T>, state: &FlowState<T>, pair: &CorrectorPair<T>) -> Result<f64> {
    check_shapes(problem, state, pair)?;
    let w = comparison_velocity(problem, pair)?;
    let mac = &problem.grid.mac;
    let law = &problem.params.law;
    let mut kinetic = 0.0;
    for a in 0..mac.dim() {
        for g in 0..mac.len() {
            if mac.open(a)[g] {
                let v = (state.u.comps[a][g] - w.comps[a][g]).f64();
                kinetic += problem.face_density(&state.rho, a, g).f64() * v * v;
            }
        }
    }
    let mut internal = 0.0;
    for g in 0..mac.len() {
        if mac.fluid()[g] {
            internal += law.relative_entropy(state.rho[g], pair.r_eps[g])?.f64();
        }
    }
    Ok((0.5 * problem.inertia() * kinetic + internal) * mac.cell_volume())
}

/// Backward time differences of the corrector pair.
#[derive(Clone, Debug)]
pub struct CorrectorRates<T> {
    /// ∂t w̃_ε on faces.
    pub dw: FaceField<T>,
    /// ∂t H'(r_ε) at cell centres.
    pub dh_prime: Vec<T>,
}

impl<T: Real> CorrectorRates<T> {
    /// Rates of a stationary pair.
    pub fn zero(pair: &CorrectorPair<T>) -> Self {
        let dw = FaceField { comps: pair.w_tilde.comps.iter().map(|c| vec![T::zero(); c.len()]).collect() };
        CorrectorRates { dw, dh_prime: vec![T::zero(); pair.r_eps.len()] }
    }

    pub fn between(before: &CorrectorPair<T>, after: &CorrectorPair<T>, dt: f64, law: &PressureLaw<T>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("corrector samples must advance in time, dt = {dt}")));
        }
        let inv = T::lit(1.0 / dt);
        let dw = difference(&after.w_tilde, &before.w_tilde);
        let dw = FaceField { comps: dw.comps.into_iter().map(|c| c.into_iter().map(|v| v * inv).collect()).collect() };
        let dh_prime = before
            .r_eps
            .iter()
            .zip(&after.r_eps)
            .map(|(&r0, &r1)| if r0 > T::zero() && r1 > T::zero() { (law.dh(r1) - law.dh(r0)) * inv } else { T::zero() })
            .collect();
        Ok(CorrectorRates { dw, dh_prime })
    }
}

/// The five remainder integrals
///
/// ```text
/// R¹ = ∫ ε^λ ρ (∂t w + (u·∇)w)·(w − u)
/// R² = ∫ ε² S(∇w) : ∇(w − u)
/// R³ = ∫ ρ f·(u − w)
/// R⁴ = ∫ (r − ρ) ∂t H'(r) + ∇H'(r)·(r w − ρ u)
/// R⁵ = −∫ div w (p(ρ) − p(r))
/// ```
///
/// by midpoint quadrature on the MAC grid.
pub fn remainder<T: Real>(
    problem: &NseProblem<T>,
    state: &FlowState<T>,
    pair: &CorrectorPair<T>,
    rates: &CorrectorRates<T>,
) -> Result<[f64; 5]> {
    check_shapes(problem, state, pair)?;
    let w = comparison_velocity(problem, pair)?;
    let mac = &problem.grid.mac;
    let law = &problem.params.law;
    let d = mac.dim();
    let n = mac.len();
    let h = mac.h();
    let vol = mac.cell_volume();
    let (rho, u, r) = (&state.rho, &state.u, &pair.r_eps);
    let v = difference(w, u);

    let mut r1 = 0.0;
    let mut r3 = 0.0;
    let mut r4_flux = 0.0;
    let h_prime: Vec<f64> = r.iter().map(|&x| if x > T::zero() { law.dh(x).f64() } else { 0.0 }).collect();
    for a in 0..d {
        let open = mac.open(a);
        let nbr = mac.face_neighbors(a);
        let wa = &w.comps[a];
        let value = |j: u32| if j != NO_NEIGHBOR && open[j as usize] { wa[j as usize].f64() } else { 0.0 };
        let ut = mac.velocity_at_faces(u, a);
        for g in 0..n {
            if !open[g] {
                continue;
            }
            let lo = mac.cell_down(g, a).expect("open faces have two cells");
            let rs = problem.face_density(rho, a, g).f64();
            let mut conv = 0.0;
            for b in 0..d {
                let grad = (value(nbr[g * 2 * d + 2 * b + 1]) - value(nbr[g * 2 * d + 2 * b])) / (2.0 * h);
                conv += ut[b][g].f64() * grad;
            }
            let va = v.comps[a][g].f64();
            r1 += rs * (rates.dw.comps[a][g].f64() + conv) * va;
            if let Some(f) = problem.force() {
                r3 -= rs * f.comps[a][g].f64() * va;
            }
            let r_face = 0.5 * (r[g] + r[lo]).f64();
            let grad_hp = (h_prime[g] - h_prime[lo]) / h;
            r4_flux += grad_hp * (r_face * wa[g].f64() - rs * u.comps[a][g].f64());
        }
    }
    r1 *= problem.inertia() * vol;
    r3 *= vol;

    let mut div_w = vec![T::zero(); n];
    let mut div_v = vec![T::zero(); n];
    mac.divergence(w, &mut div_w);
    mac.divergence(&v, &mut div_v);
    let eps2 = problem.epsilon().powi(2);
    let r2 = eps2 * (mac.gradient_inner(w, &v).f64() + problem.grad_div() * dot(&div_w, &div_v).f64() * vol);

    let mut r4_cell = 0.0;
    let mut r5 = 0.0;
    for g in 0..n {
        if mac.fluid()[g] {
            r4_cell += (r[g] - rho[g]).f64() * rates.dh_prime[g].f64();
            r5 -= div_w[g].f64() * (law.p(rho[g]) - law.p(r[g])).f64();
        }
    }
    Ok([r1, r2, r3, (r4_cell + r4_flux) * vol, r5 * vol])
}

/// `ε² ∫ (S(∇u) − S(∇w)) : (∇u − ∇w)` at one instant.
pub fn relative_dissipation<T: Real>(problem: &NseProblem<T>, state: &FlowState<T>, pair: &CorrectorPair<T>) -> Result<f64> {
    check_shapes(problem, state, pair)?;
    let mac = &problem.grid.mac;
    let v = difference(&state.u, &pair.w_tilde);
    let mut div = vec![T::zero(); mac.len()];
    mac.divergence(&v, &mut div);
    let eps2 = problem.epsilon().powi(2);
    Ok(eps2 * (mac.gradient_energy(&v).f64() + problem.grad_div() * dot(&div, &div).f64() * mac.cell_volume()))
}

/// Relative-energy bookkeeping along a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Accumulated relative dissipation.
    pub dissipation: Vec<f64>,
    /// R¹…R⁵ at each sample (zero at the first).
    pub remainder_terms: Vec<[f64; 5]>,
    /// E(τ) + ∫D − E(0) − ∫R.
    pub inequality_defect: Vec<f64>,
}

impl EnergyReport {
    /// Largest positive part of the defect.
    pub fn max_defect(&self) -> f64 {
        self.inequality_defect.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Largest |defect|: the discretization residual of the relative-energy
    /// balance, which is an identity for smooth solutions.
    pub fn defect_bound(&self) -> f64 {
        self.inequality_defect.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Measured constant C in `|defect| ≤ C (h + dt)`.
    pub fn constant(&self, h: f64, dt: f64) -> f64 {
        self.defect_bound() / (h + dt)
    }
}

/// Streaming evaluation of the relative-energy inequality: samples are
/// pushed in time order and the time integrals use the right-endpoint rule,
/// matching the implicit momentum step.
pub struct RelenTracker<'p, T> {
    problem: &'p NseProblem<T>,
    previous: Option<(f64, CorrectorPair<T>)>,
    initial: f64,
    dissipation: f64,
    integral: f64,
    report: EnergyReport,
}

impl<'p, T: Real> RelenTracker<'p, T> {
    pub fn new(problem: &'p NseProblem<T>) -> Self {
        RelenTracker { problem, previous: None, initial: 0.0, dissipation: 0.0, integral: 0.0, report: EnergyReport::default() }
    }

    pub fn push(&mut self, state: &FlowState<T>, pair: CorrectorPair<T>) -> Result<()> {
        let p = self.problem;
        let e = relative_energy(p, state, &pair)?;
        let terms = match &self.previous {
            None => {
                self.initial = e;
                [0.0; 5]
            }
            Some((t0, prev)) => {
                let dt = state.t - t0;
                let rates = CorrectorRates::between(prev, &pair, dt, &p.params.law)?;
                let terms = remainder(p, state, &pair, &rates)?;
                self.dissipation += dt * relative_dissipation(p, state, &pair)?;
                self.integral += dt * terms.iter().sum::<f64>();
                terms
            }
        };
        let r = &mut self.report;
        r.times.push(state.t);
        r.energy.push(e);
        r.dissipation.push(self.dissipation);
        r.remainder_terms.push(terms);
        r.inequality_defect.push(e + self.dissipation - self.initial - self.integral);
        self.previous = Some((state.t, pair));
        Ok(())
    }

    pub fn report(&self) -> &EnergyReport {
        &self.report
    }

    pub fn finish(self) -> EnergyReport {
        self.report
    }
}

/// Evaluates the inequality on stored samples (one corrector pair per state).
pub fn check_relen_inequality<T: Real>(
    problem: &NseProblem<T>,
    states: &[FlowState<T>],
    pairs: &[CorrectorPair<T>],
) -> Result<EnergyReport> {
    if states.len() != pairs.len() {
        return Err(Error::GridMismatch(format!("{} states but {} corrector pairs", states.len(), pairs.len())));
    }
    let mut tracker = RelenTracker::new(problem);
    for (s, p) in states.iter().zip(pairs) {
        tracker.push(s, p.clone())?;
    }
    Ok(tracker.finish())
}
