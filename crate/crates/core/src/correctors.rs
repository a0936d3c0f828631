//! Two-scale comparison pair built from a limit state and the cell solution:
//!
//! ```text
//! w_ε = W(x/ε) K⁻¹ u,    r_ε = p⁻¹(p(ρ) + ε q(x/ε)·K⁻¹ u),
//! ```
//!
//! and, in box mode, the boundary corrector
//!
//! ```text
//! w̃_ε = ε curl(η_ε Φ(x/ε)) K⁻¹u + η_ε u,    Ψ_ε = w̃_ε − w_ε,
//! ```
//!
//! with η_ε = η(dist(x, ∂Ω)/ε) a smoothstep cutoff. The perforated grid
//! resolves each ε-cell exactly like the reference cell, so x/ε lookups are
//! index arithmetic.

use crate::cell_problem::{CellSolution, VectorPotential};
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, PerforatedGrid};
use crate::lattice::{FaceField, Stagger, NO_NEIGHBOR};
use crate::limit_solver::LimitState;
use crate::linalg::dense::matvec;
use crate::pressure_law::PressureLaw;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct CorrectorPair<T> {
    pub epsilon: f64,
    /// Cell-centred density corrector.
    pub r_eps: Vec<T>,
    pub w_eps: FaceField<T>,
    /// Zero on the torus.
    pub psi_eps: FaceField<T>,
    pub w_tilde: FaceField<T>,
    /// Cutoff at cell centres; identically one on the torus.
    pub eta_eps: Vec<T>,
}

fn check_grid<T: Real>(sol: &CellSolution<T>, limit: &LimitState<T>, grid: &PerforatedGrid) -> Result<()> {
    check_cell(sol, grid)?;
    if limit.rho.len() != grid.mac.len() {
        return Err(Error::GridMismatch("limit state and perforated grid differ".into()));
    }
    Ok(())
}

fn check_cell<T: Real>(sol: &CellSolution<T>, grid: &PerforatedGrid) -> Result<()> {
    if sol.grid.n != grid.n_per_cell || sol.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "cell grid n = {} (d = {}) does not match {} per ε-cell (d = {})",
            sol.grid.n,
            sol.dim(),
            grid.n_per_cell,
            grid.dim()
        )));
    }
    Ok(())
}

/// `K⁻¹ u` with u interpolated to the faces of each axis:
/// `out[a][j][g]` is component j on face (a, g).
fn kinv_u_at_faces<T: Real>(kinv: &[T], grid: &PerforatedGrid, u: &FaceField<T>) -> Vec<Vec<Vec<T>>> {
    let d = grid.dim();
    (0..d)
        .map(|a| {
            let comps = grid.mac.velocity_at_faces(u, a);
            let mut out = vec![vec![T::zero(); grid.mac.len()]; d];
            for g in 0..grid.mac.len() {
                let v: Vec<T> = (0..d).map(|b| comps[b][g]).collect();
                let k = matvec(kinv, &v, d);
                for j in 0..d {
                    out[j][g] = k[j];
                }
            }
            out
        })
        .collect()
}

/// `w_ε = W(x/ε) K⁻¹ u`.
pub fn velocity_corrector<T: Real>(sol: &CellSolution<T>, grid: &PerforatedGrid, u: &FaceField<T>) -> Result<FaceField<T>> {
    check_cell(sol, grid)?;
    if u.comps.len() != grid.dim() || u.comps.iter().any(|c| c.len() != grid.mac.len()) {
        return Err(Error::GridMismatch("velocity and perforated grid differ".into()));
    }
    let d = grid.dim();
    let kinv = sol.k_inverse()?;
    let ku = kinv_u_at_faces(&kinv, grid, u);
    let reference = sol.grid.mac.lattice();
    let mut w = grid.mac.zeros_faces();
    for (a, wa) in w.comps.iter_mut().enumerate() {
        for (g, v) in wa.iter_mut().enumerate() {
            let l = grid.local_flat(g, reference);
            *v = (0..d).map(|j| sol.columns[j].w.comps[a][l] * ku[a][j][g]).sum();
        }
    }
    Ok(w)
}

/// `r_ε = p⁻¹(p(ρ) + ε q(x/ε)·K⁻¹u)` with u averaged to cell centres.
pub fn density_corrector<T: Real>(
    sol: &CellSolution<T>,
    grid: &PerforatedGrid,
    law: &PressureLaw<T>,
    rho: &[T],
    u: &FaceField<T>,
) -> Result<Vec<T>> {
    check_cell(sol, grid)?;
    if rho.len() != grid.mac.len() || u.comps.iter().any(|c| c.len() != grid.mac.len()) {
        return Err(Error::GridMismatch("limit fields and perforated grid differ".into()));
    }
    let d = grid.dim();
    let kinv = sol.k_inverse()?;
    let uc = grid.mac.velocity_at_cells(u);
    let reference = sol.grid.mac.lattice();
    let eps = T::lit(grid.epsilon);
    let mut min_arg = f64::INFINITY;
    let mut r = vec![T::zero(); rho.len()];
    for (g, rg) in r.iter_mut().enumerate() {
        let v: Vec<T> = (0..d).map(|b| uc[b][g]).collect();
        let k = matvec(&kinv, &v, d);
        let l = grid.local_flat(g, reference);
        let qk: T = (0..d).map(|j| sol.columns[j].q[l] * k[j]).sum();
        let arg = law.p(rho[g]) + eps * qk;
        min_arg = min_arg.min(arg.f64());
        if arg > T::zero() {
            *rg = law.inverse(arg)?;
        }
    }
    if !(min_arg > 0.0) {
        return Err(Error::EpsilonTooLarge { min_argument: min_arg });
    }
    Ok(r)
}

/// Smoothstep cutoff η(t) = 3s² − 2s³, s = t/d clamped to [0, 1].
pub fn cutoff(t: f64, d: f64) -> f64 {
    let s = (t / d).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Data for evaluating the boundary corrector at arbitrary staggered
/// coordinates, including the upper boundary planes that the grid stores
/// only implicitly.
struct Collar<'a, T> {
    grid: &'a PerforatedGrid,
    sol: &'a CellSolution<T>,
    potential: &'a VectorPotential<T>,
    kinv: Vec<T>,
    u: &'a FaceField<T>,
    /// Cutoff width in units of ε (the nominal d minus one grid step, so the
    /// curl stencil stays inside dist < ε d).
    width: f64,
    nglob: usize,
}

impl<T: Real> Collar<'_, T> {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn position(&self, c: [usize; 3], at: Stagger) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = (c[a] as f64 + at.offset(a)) * self.grid.h();
        }
        x
    }

    fn eta(&self, x: &[f64; 3]) -> f64 {
        let l = self.grid.length;
        let dist = (0..self.dim()).map(|a| x[a].min(l - x[a])).fold(f64::INFINITY, f64::min);
        cutoff(dist / self.grid.epsilon, self.width)
    }

    fn local(&self, c: [usize; 3]) -> usize {
        let mut l = [0usize; 3];
        for a in 0..self.dim() {
            l[a] = self.grid.local_index(c[a]);
        }
        self.sol.grid.mac.lattice().index(l)
    }

    /// Flat index of in-range coordinates.
    fn flat(&self, c: [usize; 3]) -> Option<usize> {
        (0..self.dim()).all(|a| c[a] < self.nglob).then(|| self.grid.mac.lattice().index(c))
    }

    /// Component b of the limit velocity on face (a, c), c_a ∈ [0, N]; the
    /// normal component vanishes on walls, tangential ones average the
    /// available neighbours (absent ones count as zero).
    fn u_at(&self, a: usize, b: usize, c: [usize; 3]) -> T {
        let ub = &self.u.comps[b];
        if a == b {
            return match self.flat(c) {
                Some(g) if c[a] > 0 => ub[g],
                _ => T::zero(),
            };
        }
        let mut s = T::zero();
        for shift in [0usize, 1] {
            if c[a] < shift {
                continue;
            }
            let mut cc = c;
            cc[a] -= shift;
            let Some(g) = self.flat(cc) else { continue };
            s += ub[g];
            if cc[b] + 1 < self.nglob {
                let mut up = cc;
                up[b] += 1;
                s += ub[self.grid.mac.lattice().index(up)];
            }
        }
        s * T::lit(0.25)
    }

    fn kinv_u(&self, a: usize, c: [usize; 3]) -> Vec<T> {
        let d = self.dim();
        let v: Vec<T> = (0..d).map(|b| self.u_at(a, b, c)).collect();
        matvec(&self.kinv, &v, d)
    }

    /// (η − 1) Φ_{j,l} at edge coordinates.
    fn edge_value(&self, j: usize, l: usize, c: [usize; 3]) -> T {
        let eta = self.eta(&self.position(c, Stagger::Edge(l)));
        if eta == 1.0 {
            return T::zero();
        }
        let comp = if self.dim() == 2 { 0 } else { l };
        T::lit(eta - 1.0) * self.potential.phi[j][comp][self.local(c)]
    }

    /// Ψ_a on face (a, c) away from the boundary planes.
    fn psi_interior(&self, a: usize, c: [usize; 3]) -> T {
        let d = self.dim();
        let h = T::lit(self.grid.h());
        let eps = T::lit(self.grid.epsilon);
        let eta = self.eta(&self.position(c, Stagger::Face(a)));
        let ku = self.kinv_u(a, c);
        let (p, q) = ((a + 1) % 3, (a + 2) % 3);
        let has = |l: usize| d == 3 || l == 2;
        let mut curl = T::zero();
        for (j, kj) in ku.iter().enumerate() {
            // ∂_p G_q − ∂_q G_p, forward differences
            let mut v = T::zero();
            if has(q) && p < d {
                let mut up = c;
                up[p] += 1;
                v += self.edge_value(j, q, up) - self.edge_value(j, q, c);
            }
            if has(p) && q < d {
                let mut up = c;
                up[q] += 1;
                v -= self.edge_value(j, p, up) - self.edge_value(j, p, c);
            }
            curl += v * *kj;
        }
        eps * curl / h + T::lit(eta - 1.0) * self.u_at(a, a, c)
    }

    fn w_eps_at(&self, a: usize, c: [usize; 3]) -> T {
        let ku = self.kinv_u(a, c);
        let l = self.local(c);
        ku.iter().enumerate().map(|(j, &k)| self.sol.columns[j].w.comps[a][l] * k).sum()
    }

    /// Ψ_a at any face, c_a ∈ [0, N]; equal to −w_ε on the boundary planes.
    fn psi(&self, a: usize, c: [usize; 3]) -> T {
        if c[a] == 0 || c[a] == self.nglob {
            -self.w_eps_at(a, c)
        } else {
            self.psi_interior(a, c)
        }
    }
}

/// Boundary-corrector fields and their measured properties.
#[derive(Clone, Debug)]
pub struct BoundaryCorrector<T> {
    pub psi: FaceField<T>,
    pub w_tilde: FaceField<T>,
    pub eta: Vec<T>,
    /// ‖Ψ_ε‖_{L²(Ω)}, upper boundary planes included.
    pub psi_l2: f64,
    /// max |div Ψ_ε| over cells.
    pub div_psi_max: f64,
    /// Largest dist(x, ∂Ω)/ε over faces where Ψ_ε ≠ 0.
    pub support: f64,
    /// max |w̃_ε| over the boundary planes.
    pub boundary_residual: f64,
    /// max |u·n| of the limit velocity on ∂Ω.
    pub normal_flux: f64,
}

/// Builds Ψ_ε, w̃_ε and η_ε (box mode).
pub fn build_boundary_corrector<T: Real>(
    sol: &CellSolution<T>,
    potential: &VectorPotential<T>,
    limit: &LimitState<T>,
    grid: &PerforatedGrid,
) -> Result<BoundaryCorrector<T>> {
    check_grid(sol, limit, grid)?;
    let d = grid.dim();
    let lat = grid.mac.lattice();
    let w_eps = velocity_corrector(sol, grid, &limit.u)?;
    if grid.kind == DomainKind::Torus {
        return Ok(BoundaryCorrector {
            psi: grid.mac.zeros_faces(),
            w_tilde: w_eps,
            eta: vec![T::one(); lat.len()],
            psi_l2: 0.0,
            div_psi_max: 0.0,
            support: 0.0,
            boundary_residual: 0.0,
            normal_flux: 0.0,
        });
    }
    let nglob = lat.n()[0];
    let collar = Collar {
        grid,
        sol,
        potential,
        kinv: sol.k_inverse()?,
        u: &limit.u,
        width: sol.grid.obstacle.cell_clearance(d) - sol.grid.h(),
        nglob,
    };
    if !(collar.width > 0.0) {
        return Err(Error::Resolution(format!("no room for a cutoff: clearance below one grid step ({})", sol.grid.h())));
    }
    let mut psi = grid.mac.zeros_faces();
    let mut psi2 = 0.0;
    let mut support: f64 = 0.0;
    let mut normal_flux: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let h = grid.h();
    let dist_of = |x: &[f64; 3]| (0..d).map(|a| x[a].min(grid.length - x[a])).fold(f64::INFINITY, f64::min);
    for a in 0..d {
        let mut visit = |c: [usize; 3], store: Option<usize>| {
            let v = collar.psi(a, c);
            if let Some(g) = store {
                psi.comps[a][g] = v;
            }
            let vf = v.f64();
            psi2 += vf * vf;
            if vf != 0.0 {
                support = support.max(dist_of(&collar.position(c, Stagger::Face(a))) / grid.epsilon);
            }
            if c[a] == 0 || c[a] == nglob {
                normal_flux = normal_flux.max(collar.u_at(a, a, c).abs().f64());
                residual = residual.max((v + collar.w_eps_at(a, c)).abs().f64());
            }
        };
        for g in 0..lat.len() {
            visit(lat.coords(g), Some(g));
        }
        // upper boundary plane, not stored on the grid
        for g in 0..lat.len() {
            let mut c = lat.coords(g);
            if c[a] == 0 {
                c[a] = nglob;
                visit(c, None);
            }
        }
    }
    let mut div_max: f64 = 0.0;
    for g in 0..lat.len() {
        let c = lat.coords(g);
        let mut div = T::zero();
        for a in 0..d {
            let mut up = c;
            up[a] += 1;
            div += collar.psi(a, up) - psi.comps[a][g];
        }
        div_max = div_max.max((div / T::lit(h)).abs().f64());
    }
    let mut w_tilde = w_eps.clone();
    for a in 0..d {
        for g in 0..lat.len() {
            w_tilde.comps[a][g] = if lat.coords(g)[a] == 0 { T::zero() } else { w_eps.comps[a][g] + psi.comps[a][g] };
        }
    }
    let eta = (0..lat.len()).map(|g| T::lit(collar.eta(&lat.position(g, Stagger::Cell, h)))).collect();
    Ok(BoundaryCorrector {
        psi,
        w_tilde,
        eta,
        psi_l2: (psi2 * grid.mac.cell_volume()).sqrt(),
        div_psi_max: div_max,
        support,
        boundary_residual: residual,
        normal_flux,
    })
}

/// Assembles (r_ε, w_ε) and, in box mode, the boundary corrector.
pub fn build_correctors<T: Real>(
    sol: &CellSolution<T>,
    potential: Option<&VectorPotential<T>>,
    limit: &LimitState<T>,
    grid: &PerforatedGrid,
    law: &PressureLaw<T>,
) -> Result<CorrectorPair<T>> {
    check_grid(sol, limit, grid)?;
    let r_eps = density_corrector(sol, grid, law, &limit.rho, &limit.u)?;
    let w_eps = velocity_corrector(sol, grid, &limit.u)?;
    let (psi_eps, w_tilde, eta_eps) = match (grid.kind, potential) {
        (DomainKind::Torus, _) => (grid.mac.zeros_faces(), w_eps.clone(), vec![T::one(); limit.rho.len()]),
        (DomainKind::Box, Some(phi)) => {
            let b = build_boundary_corrector(sol, phi, limit, grid)?;
            (b.psi, b.w_tilde, b.eta)
        }
        (DomainKind::Box, None) => {
            return Err(Error::Domain("box mode needs the vector potential for the boundary corrector".into()))
        }
    };
    Ok(CorrectorPair { epsilon: grid.epsilon, r_eps, w_eps, psi_eps, w_tilde, eta_eps })
}

/// Measured corrector constants at one ε.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorrectorBounds {
    pub epsilon: f64,
    /// ‖r_ε − ρ‖_∞ / ε
    pub density: f64,
    /// ‖∂t(r_ε − ρ)‖_∞ / ε
    pub density_rate: f64,
    /// ε ‖∇w_ε‖_∞
    pub gradient: f64,
    /// ‖div w_ε‖_∞
    pub divergence: f64,
    /// Largest dictionary ratio |∫(θ⁻¹Id − W^ε)1_{Ω_ε} : Ψ| / (ε ‖Ψ‖_{W^{1,1}}).
    pub duality: f64,
    pub r_min: f64,
    pub r_max: f64,
}

/// Trigonometric test fields for the duality check: (i, j, wave vector,
/// phase) giving Ψ = e_i ⊗ e_j · cos(2π k·x/L + phase).
fn dictionary(d: usize) -> Vec<(usize, usize, [f64; 3], f64)> {
    let waves: &[[f64; 3]] = &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [2.0, 1.0, 1.0]];
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            for w in waves.iter().filter(|w| w[2] == 0.0 || d == 3) {
                for phase in [0.0, 0.5 * std::f64::consts::PI] {
                    out.push((i, j, *w, phase));
                }
            }
        }
    }
    out
}

/// Evaluates the corrector constants from two limit snapshots (for ∂t).
pub fn corrector_bounds<T: Real>(
    sol: &CellSolution<T>,
    grid: &PerforatedGrid,
    law: &PressureLaw<T>,
    limit: &LimitState<T>,
    later: &LimitState<T>,
) -> Result<CorrectorBounds> {
    check_grid(sol, limit, grid)?;
    let d = grid.dim();
    let eps = grid.epsilon;
    let mac = &grid.mac;
    let r0 = density_corrector(sol, grid, law, &limit.rho, &limit.u)?;
    let r1 = density_corrector(sol, grid, law, &later.rho, &later.u)?;
    let dt = later.t - limit.t;
    if !(dt > 0.0) {
        return Err(Error::Domain("the second limit snapshot must be later".into()));
    }
    let mut b = CorrectorBounds { epsilon: eps, r_min: f64::INFINITY, r_max: 0.0, ..Default::default() };
    for g in 0..mac.len() {
        if !mac.fluid()[g] {
            continue;
        }
        let e0 = (r0[g] - limit.rho[g]).f64();
        let e1 = (r1[g] - later.rho[g]).f64();
        b.density = b.density.max(e0.abs() / eps);
        b.density_rate = b.density_rate.max(((e1 - e0) / dt).abs() / eps);
        b.r_min = b.r_min.min(r0[g].f64());
        b.r_max = b.r_max.max(r0[g].f64());
    }
    let w = velocity_corrector(sol, grid, &limit.u)?;
    let h = mac.h();
    for a in 0..d {
        let nbr = mac.face_neighbors(a);
        for g in 0..mac.len() {
            for k in 0..2 * d {
                let j = nbr[g * 2 * d + k];
                if j != NO_NEIGHBOR {
                    let dv = (w.comps[a][j as usize] - w.comps[a][g]).abs().f64() / h;
                    b.gradient = b.gradient.max(eps * dv);
                }
            }
        }
    }
    let mut div = vec![T::zero(); mac.len()];
    mac.divergence(&w, &mut div);
    for (g, v) in div.iter().enumerate() {
        // the upper boundary plane is not stored; skip cells reading it
        let touches_top = grid.kind == DomainKind::Box && (0..d).any(|a| mac.cell_up(g, a).is_none());
        if !touches_top {
            b.divergence = b.divergence.max(v.abs().f64());
        }
    }
    b.duality = duality_defect(sol, grid)?;
    Ok(b)
}

/// sup over the dictionary of |∫(θ⁻¹Id − W^ε)1_{Ω_ε} : Ψ| / (ε ‖Ψ‖_{W^{1,1}}),
/// with the face-mask porosity of each axis so that the per-cell identity
/// holds exactly on the grid.
fn duality_defect<T: Real>(sol: &CellSolution<T>, grid: &PerforatedGrid) -> Result<f64> {
    let d = grid.dim();
    let kinv = sol.k_inverse()?;
    let mac = &grid.mac;
    let lat = mac.lattice();
    let reference = sol.grid.mac.lattice();
    let h = mac.h();
    let vol = mac.cell_volume();
    let l = grid.length;
    let theta: Vec<f64> = (0..d)
        .map(|a| sol.grid.mac.open(a).iter().filter(|&&o| o).count() as f64 / reference.len() as f64)
        .collect();
    // W^ε = W K⁻¹ on faces of axis i, row i
    let mut worst: f64 = 0.0;
    for (i, j, k, phase) in dictionary(d) {
        let two_pi = 2.0 * std::f64::consts::PI / l;
        let mut integral = 0.0;
        for g in 0..lat.len() {
            if !mac.open(i)[g] {
                continue;
            }
            let loc = grid.local_flat(g, reference);
            let x = lat.position(g, Stagger::Face(i), h);
            let arg = two_pi * (0..d).map(|a| k[a] * x[a]).sum::<f64>() + phase;
            let wij: f64 = (0..d).map(|m| sol.columns[m].w.comps[i][loc].f64() * kinv[m * d + j].f64()).sum();
            let id = if i == j { 1.0 / theta[i] } else { 0.0 };
            integral += (id - wij) * arg.cos();
        }
        integral *= vol;
        // ‖Ψ‖_{W^{1,1}} of cos(2πk·x/L + φ) on (0, L)^d: (2/π)(1 + 2π|k|₁/L) L^d
        let norm = (2.0 / std::f64::consts::PI) * (1.0 + two_pi * k.iter().map(|v| v.abs()).sum::<f64>()) * l.powi(d as i32);
        worst = worst.max(integral.abs() / (grid.epsilon * norm));
    }
    Ok(worst)
}

/// Bounded-ratio report across an ε-sweep.
#[derive(Clone, Debug)]
pub struct CorrectorReport {
    pub rows: Vec<CorrectorBounds>,
    /// Largest ratio between consecutive values of any monitored constant.
    pub worst_ratio: f64,
    pub worst_epsilon: f64,
}

/// Checks that every measured constant stays within a factor `spread` between
/// consecutive ε (values below `floor` count as bounded).
pub fn verify_corrector_bounds(rows: &[CorrectorBounds], spread: f64, floor: f64) -> Result<CorrectorReport> {
    if rows.len() < 3 {
        return Err(Error::Domain(format!("need correctors at three or more ε, got {}", rows.len())));
    }
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let pick = |r: &CorrectorBounds| [r.density, r.density_rate, r.gradient, r.divergence, r.duality];
    let mut worst: f64 = 1.0;
    let mut worst_eps = rows[0].epsilon;
    for pair in rows.windows(2) {
        for (a, b) in pick(&pair[0]).iter().zip(pick(&pair[1])) {
            if a.max(b) < floor {
                continue;
            }
            let r = if a.min(b) <= 0.0 { f64::INFINITY } else { (b / a).max(a / b) };
            if r > worst {
                worst = r;
                worst_eps = pair[1].epsilon;
            }
        }
    }
    if worst > spread {
        return Err(Error::BoundViolated(format!("corrector constant changes by {worst:.3} at ε = {worst_eps}")));
    }
    Ok(CorrectorReport { rows, worst_ratio: worst, worst_epsilon: worst_eps })
}
