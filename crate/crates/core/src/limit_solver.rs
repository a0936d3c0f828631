//! Darcy / porous-medium limit system on Ω:
//!
//! ```text
//! θ ∂t ρ + div(ρ u) = 0,   u = K (ρ f − ∇p(ρ)),
//! ```
//!
//! equivalently `θ∂tρ − div(ρK∇p(ρ)) + div(ρ²Kf) = 0`, with zero normal flux
//! on the walls in box mode. Explicit finite volumes: arithmetic face
//! density for the pressure flux, upwinded `ρ²` for the force flux.

use crate::error::{Error, Result};
use crate::lattice::{FaceField, Stagger};
use crate::linalg::dense::symmetric_eigenvalues;
use crate::mac::MacGrid;
use crate::pressure_law::PressureLaw;
use crate::scalar::Real;

/// Static data of the limit problem.
#[derive(Clone, Debug)]
pub struct LimitProblem<T> {
    pub mac: MacGrid,
    /// Row-major d×d permeability.
    pub k: Vec<T>,
    pub theta: T,
    pub law: PressureLaw<T>,
    /// `force[a][b]`: f_b sampled on the faces normal to axis `a`.
    force: Option<Vec<Vec<Vec<T>>>>,
    /// `(K f)_a` on the faces normal to axis `a`.
    kf: Option<Vec<Vec<T>>>,
    k_norm: f64,
    diagonal: bool,
}

impl<T: Real> LimitProblem<T> {
    pub fn new(mac: MacGrid, k: Vec<T>, theta: T, law: PressureLaw<T>) -> Result<Self> {
        let d = mac.dim();
        if k.len() != d * d {
            return Err(Error::Domain(format!("permeability must be {d}×{d}")));
        }
        let ks: Vec<T> = (0..d * d).map(|m| T::lit(0.5) * (k[m] + k[(m % d) * d + m / d])).collect();
        let eig = symmetric_eigenvalues(&ks, d);
        if !(eig[0] > T::zero()) {
            return Err(Error::Singular(format!("permeability not positive definite (λ_min = {})", eig[0])));
        }
        if !(theta > T::zero() && theta <= T::one()) {
            return Err(Error::Domain(format!("porosity {theta} outside (0, 1]")));
        }
        // max row sum, a Gershgorin bound on the spectrum
        let k_norm = (0..d).map(|i| (0..d).map(|j| k[i * d + j].abs().f64()).sum::<f64>()).fold(0.0, f64::max);
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || k[i * d + j] == T::zero()));
        Ok(LimitProblem { mac, k, theta, law, force: None, kf: None, k_norm, diagonal })
    }

    /// Samples a time-independent force on the faces.
    pub fn with_force(mut self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let d = self.mac.dim();
        let lat = self.mac.lattice().clone();
        let h = self.mac.h();
        let force: Vec<Vec<Vec<T>>> = (0..d)
            .map(|a| {
                let vals: Vec<[f64; 3]> =
                    (0..lat.len()).map(|g| f(&lat.position(g, Stagger::Face(a), h))).collect();
                (0..d).map(|b| vals.iter().map(|v| T::lit(v[b])).collect()).collect()
            })
            .collect();
        let kf = (0..d)
            .map(|a| {
                (0..lat.len())
                    .map(|g| (0..d).map(|b| self.k[a * d + b] * force[a][b][g]).sum())
                    .collect()
            })
            .collect();
        if force.iter().flatten().flatten().all(|v| *v == T::zero()) {
            return self;
        }
        self.force = Some(force);
        self.kf = Some(kf);
        self
    }

    pub fn dim(&self) -> usize {
        self.mac.dim()
    }

    /// θ ∫ ρ dx.
    pub fn mass(&self, rho: &[T]) -> T {
        self.theta * rho.iter().copied().sum::<T>() * T::lit(self.mac.cell_volume())
    }

    fn pressure(&self, rho: &[T]) -> Vec<T> {
        rho.iter().map(|&r| self.law.p(r)).collect()
    }

    /// Cell-centred derivative along `b`, one-sided at walls.
    fn cell_derivative(&self, p: &[T], c: usize, b: usize) -> T {
        let h = T::lit(self.mac.h());
        match (self.mac.cell_down(c, b), self.mac.cell_up(c, b)) {
            (Some(lo), Some(hi)) => (p[hi] - p[lo]) / (h + h),
            (None, Some(hi)) => (p[hi] - p[c]) / h,
            (Some(lo), None) => (p[c] - p[lo]) / h,
            (None, None) => T::zero(),
        }
    }

    /// `−(K∇p)_a` on face (a, g) between cells `lo` and `g`.
    fn pressure_velocity(&self, p: &[T], a: usize, g: usize, lo: usize) -> T {
        let d = self.dim();
        let h = T::lit(self.mac.h());
        let mut v = -self.k[a * d + a] * (p[g] - p[lo]) / h;
        if !self.diagonal {
            let half = T::lit(0.5);
            for b in (0..d).filter(|&b| b != a) {
                let kab = self.k[a * d + b];
                if kab != T::zero() {
                    let db = half * (self.cell_derivative(p, g, b) + self.cell_derivative(p, lo, b));
                    v -= kab * db;
                }
            }
        }
        v
    }

    /// Normal fluxes `ρ u·e_a` on every face; zero on walls.
    fn fluxes(&self, rho: &[T]) -> FaceField<T> {
        let p = self.pressure(rho);
        let mut out = self.mac.zeros_faces();
        let half = T::lit(0.5);
        for (a, fa) in out.comps.iter_mut().enumerate() {
            for (g, fg) in fa.iter_mut().enumerate() {
                let Some(lo) = self.mac.cell_down(g, a) else { continue };
                let mut flux = half * (rho[g] + rho[lo]) * self.pressure_velocity(&p, a, g, lo);
                if let Some(kf) = &self.kf {
                    let v = kf[a][g];
                    let up = if v > T::zero() { rho[lo] } else { rho[g] };
                    flux += up * up * v;
                }
                *fg = flux;
            }
        }
        out
    }

    /// Largest stable step for the current density.
    pub fn stable_dt(&self, rho: &[T]) -> f64 {
        let d = self.dim();
        let h = self.mac.h();
        let theta = self.theta.f64();
        let mut diff: f64 = 0.0;
        let mut rmax: f64 = 0.0;
        for &r in rho {
            diff = diff.max((r * self.law.dp(r)).f64());
            rmax = rmax.max(r.f64());
        }
        let inv_diff = 2.0 * d as f64 * diff * self.k_norm / (theta * h * h);
        let inv_adv = match &self.kf {
            Some(kf) => {
                let speed: f64 = kf.iter().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs().f64()))).sum();
                2.0 * rmax * speed / (theta * h)
            }
            None => 0.0,
        };
        let inv = inv_diff + inv_adv;
        if inv > 0.0 {
            1.0 / inv
        } else {
            f64::INFINITY
        }
    }
}

/// Snapshot of the limit solution.
#[derive(Clone, Debug)]
pub struct LimitState<T> {
    pub t: f64,
    pub rho: Vec<T>,
    /// Darcy velocity on faces, refreshed when the state is recorded.
    pub u: FaceField<T>,
}

/// `u = K(ρ f − ∇p(ρ))` on faces with arithmetic face density; zero normal
/// component on walls.
pub fn darcy_velocity<T: Real>(problem: &LimitProblem<T>, rho: &[T]) -> FaceField<T> {
    let p = problem.pressure(rho);
    let d = problem.dim();
    let mac = &problem.mac;
    let half = T::lit(0.5);
    let mut out = mac.zeros_faces();
    for (a, ua) in out.comps.iter_mut().enumerate() {
        for (g, v) in ua.iter_mut().enumerate() {
            let Some(lo) = mac.cell_down(g, a) else { continue };
            let mut w = problem.pressure_velocity(&p, a, g, lo);
            if let Some(force) = &problem.force {
                let rf = half * (rho[g] + rho[lo]);
                w += (0..d).map(|b| problem.k[a * d + b] * rf * force[a][b][g]).sum::<T>();
            }
            *v = w;
        }
    }
    out
}

impl<T: Real> LimitState<T> {
    pub fn new(problem: &LimitProblem<T>, t: f64, rho: Vec<T>) -> Result<Self> {
        if rho.len() != problem.mac.len() {
            return Err(Error::GridMismatch(format!("density has {} values, grid {}", rho.len(), problem.mac.len())));
        }
        if let Some(r) = rho.iter().find(|r| !(**r > T::zero())) {
            return Err(Error::Domain(format!("density must be positive, found {r}")));
        }
        let u = darcy_velocity(problem, &rho);
        Ok(LimitState { t, rho, u })
    }

    pub fn refresh_velocity(&mut self, problem: &LimitProblem<T>) {
        self.u = darcy_velocity(problem, &self.rho);
    }
}

/// One explicit step; the state is left untouched on rejection.
pub fn step_limit<T: Real>(problem: &LimitProblem<T>, state: &mut LimitState<T>, dt: f64) -> Result<()> {
    let stable = problem.stable_dt(&state.rho);
    if dt > stable * (1.0 + 1e-9) {
        return Err(Error::StepRejected { reason: format!("dt = {dt:.3e} above the stability bound"), suggested_dt: stable });
    }
    let flux = problem.fluxes(&state.rho);
    let mac = &problem.mac;
    let c = T::lit(dt / mac.h()) / problem.theta;
    let mut next = state.rho.clone();
    for (g, r) in next.iter_mut().enumerate() {
        let mut div = T::zero();
        for (a, fa) in flux.comps.iter().enumerate() {
            if mac.cell_up(g, a).is_some() {
                div += fa[mac.upper_face(g, a)];
            }
            div -= fa[g];
        }
        *r -= c * div;
    }
    if let Some(r) = next.iter().find(|r| !(**r > T::zero())) {
        return Err(Error::StepRejected { reason: format!("density lost positivity ({r})"), suggested_dt: 0.5 * dt });
    }
    state.rho = next;
    state.t += dt;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `safety · stable_dt`, re-evaluated every step.
    Adaptive { safety: f64 },
}

/// Integrates from `rho0` at t = 0, recording a state at every requested
/// output time (steps are shortened to hit them exactly).
pub fn solve_limit<T: Real>(
    problem: &LimitProblem<T>,
    rho0: Vec<T>,
    output_times: &[f64],
    policy: DtPolicy,
) -> Result<Vec<LimitState<T>>> {
    let mut state = LimitState::new(problem, 0.0, rho0)?;
    let mut out = Vec::with_capacity(output_times.len());
    let mut times = output_times.to_vec();
    times.sort_by(f64::total_cmp);
    for &t_out in &times {
        if t_out < state.t {
            return Err(Error::Domain(format!("output time {t_out} is negative")));
        }
        while state.t < t_out * (1.0 - 1e-14) {
            let dt = match policy {
                DtPolicy::Fixed(dt) => dt,
                DtPolicy::Adaptive { safety } => safety * problem.stable_dt(&state.rho),
            };
            let dt = dt.min(t_out - state.t);
            step_limit(problem, &mut state, dt)?;
        }
        state.t = t_out;
        state.refresh_velocity(problem);
        out.push(state.clone());
    }
    Ok(out)
}
