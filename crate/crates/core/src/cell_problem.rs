//! Periodic Stokes cell problem on Q \ O:
//!
//! ```text
//! −Δw_i + ∇q_i = e_i in Q \ O,   div w_i = 0,   w_i = 0 in O,   Q-periodic,
//! ```
//!
//! discretized on the MAC grid of a [`CellGrid`] with obstacle faces
//! eliminated. The permeability is `K_ij = ⨍_Q (w_j)_i`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::CellGrid;
use crate::lattice::{FaceField, Stagger, NO_NEIGHBOR};
use crate::linalg::dense::{inverse, symmetric_eigenvalues};
use crate::linalg::spectral::poisson_periodic;
use crate::linalg::{minres, pcg, Multigrid, Stencil};
use crate::mac::{curl_edges_to_faces, curl_faces_to_edges, MacGrid};
use crate::scalar::{max_abs, Real};

/// Iteration used for the velocity–pressure saddle point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaddleMethod {
    /// Block-preconditioned MINRES on the coupled system: one multigrid
    /// V-cycle per velocity component and iteration.
    Minres,
    /// Conjugate gradients on the pressure Schur complement `D A⁻¹ Dᵀ`,
    /// with multigrid-preconditioned inner velocity solves.
    UzawaCg,
}

#[derive(Clone, Debug)]
pub struct CellOptions {
    pub method: SaddleMethod,
    /// Required max-norm of the discrete divergence.
    pub div_tol: f64,
    /// Required max-norm of the momentum residual.
    pub momentum_tol: f64,
    pub max_iterations: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { method: SaddleMethod::Minres, div_tol: 1e-11, momentum_tol: 1e-9, max_iterations: 4000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ColumnStats {
    pub iterations: usize,
    pub div_residual: f64,
    pub momentum_residual: f64,
}

/// Solution for one forcing direction.
#[derive(Clone, Debug)]
pub struct CellColumn<T> {
    pub direction: usize,
    pub w: FaceField<T>,
    /// Zero mean over fluid cells; harmonically extended into the obstacle.
    pub q: Vec<T>,
    pub stats: ColumnStats,
}

impl<T: Real> CellColumn<T> {
    /// Full-cell mean of each velocity component, a column of K.
    pub fn mean_velocity(&self) -> Vec<T> {
        self.w.comps.iter().map(|c| c.iter().copied().sum::<T>() / T::of(c.len())).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CellSolution<T> {
    pub grid: CellGrid,
    /// `columns[j]` solves the problem forced by `e_j`.
    pub columns: Vec<CellColumn<T>>,
    /// Row-major d×d permeability from velocity averages.
    pub k: Vec<T>,
    /// Row-major d×d permeability from the Dirichlet form.
    pub k_energy: Vec<T>,
}

impl<T: Real> CellSolution<T> {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn theta(&self) -> f64 {
        self.grid.theta_h
    }

    pub fn k_inverse(&self) -> Result<Vec<T>> {
        inverse(&self.k, self.dim())
    }
}

struct Blocks<T> {
    mac: MacGrid,
    mg: Vec<Multigrid<T>>,
}

impl<T: Real> Blocks<T> {
    fn new(mac: &MacGrid) -> Self {
        let inv_h2 = T::lit(1.0 / (mac.h() * mac.h()));
        let mg = (0..mac.dim())
            .map(|a| {
                Multigrid::new(Stencil::masked_laplacian(mac.lattice(), Stagger::Face(a), mac.open(a), inv_h2, None))
            })
            .collect();
        Blocks { mac: mac.clone(), mg }
    }

    fn n(&self) -> usize {
        self.mac.len()
    }

    fn split<'a>(&self, x: &'a [T]) -> (Vec<&'a [T]>, &'a [T]) {
        let n = self.n();
        let d = self.mac.dim();
        ((0..d).map(|a| &x[a * n..(a + 1) * n]).collect(), &x[d * n..])
    }

    fn as_faces(&self, x: &[T]) -> FaceField<T> {
        let (w, _) = self.split(x);
        FaceField { comps: w.iter().map(|c| c.to_vec()).collect() }
    }

    /// `[A, −Dᵀ; −D, 0]` applied to `[w; q]`.
    fn saddle(&self, x: &[T], y: &mut [T]) {
        let n = self.n();
        let d = self.mac.dim();
        let (_, q) = self.split(x);
        let mut gq = self.mac.zeros_faces();
        self.mac.gradient(q, &mut gq);
        for a in 0..d {
            let ya = &mut y[a * n..(a + 1) * n];
            self.mg[a].operator().apply(&x[a * n..(a + 1) * n], ya);
            for (v, g) in ya.iter_mut().zip(&gq.comps[a]) {
                *v += *g;
            }
        }
        let w = self.as_faces(x);
        let yq = &mut y[d * n..];
        self.mac.divergence(&w, yq);
        for (v, &f) in yq.iter_mut().zip(self.mac.fluid()) {
            *v = if f { -*v } else { T::zero() };
        }
    }

    fn project_mean(&self, q: &mut [T]) {
        let fluid = self.mac.fluid();
        let mean = q.iter().zip(fluid).filter(|(_, &f)| f).map(|(&v, _)| v).sum::<T>()
            / T::of(self.mac.fluid_count());
        for (v, &f) in q.iter_mut().zip(fluid) {
            *v = if f { *v - mean } else { T::zero() };
        }
    }

    fn precondition(&self, r: &[T], z: &mut [T]) {
        let n = self.n();
        let d = self.mac.dim();
        for a in 0..d {
            self.mg[a].vcycle(&r[a * n..(a + 1) * n], &mut z[a * n..(a + 1) * n]);
        }
        z[d * n..].copy_from_slice(&r[d * n..]);
        self.project_mean(&mut z[d * n..]);
    }

    fn residuals(&self, x: &[T], b: &[T]) -> (f64, f64) {
        let mut y = vec![T::zero(); x.len()];
        self.saddle(x, &mut y);
        let n = self.n();
        let d = self.mac.dim();
        let mom = (0..d * n).map(|i| (y[i] - b[i]).abs()).fold(T::zero(), T::max);
        let div = max_abs(&y[d * n..]);
        (mom.f64(), div.f64())
    }
}

fn check_solvable(cell: &CellGrid) -> Result<()> {
    if cell.mac.fluid_count() == cell.mac.len() {
        return Err(Error::Incompatible(
            "no obstacle: a mean forcing on the torus cannot be balanced".into(),
        ));
    }
    Ok(())
}

/// Solves the cell problem forced by `e_direction`.
pub fn solve_cell_direction<T: Real>(cell: &CellGrid, direction: usize, opts: &CellOptions) -> Result<CellColumn<T>> {
    check_solvable(cell)?;
    if direction >= cell.dim() {
        return Err(Error::Domain(format!("direction {direction} out of range")));
    }
    let blocks = Blocks::<T>::new(&cell.mac);
    solve_with(&blocks, direction, opts)
}

fn solve_with<T: Real>(blocks: &Blocks<T>, direction: usize, opts: &CellOptions) -> Result<CellColumn<T>> {
    let n = blocks.n();
    let d = blocks.mac.dim();
    let mut b = vec![T::zero(); (d + 1) * n];
    for (g, &o) in blocks.mac.open(direction).iter().enumerate() {
        if o {
            b[direction * n + g] = T::one();
        }
    }
    let mut x = vec![T::zero(); (d + 1) * n];
    let iterations = match opts.method {
        SaddleMethod::Minres => run_minres(blocks, &b, &mut x, opts)?,
        SaddleMethod::UzawaCg => run_uzawa(blocks, &b, &mut x, opts)?,
    };
    blocks.project_mean(&mut x[d * n..]);
    let (mom, div) = blocks.residuals(&x, &b);
    if div > opts.div_tol || mom > opts.momentum_tol {
        return Err(Error::NoConvergence {
            context: format!("cell problem, direction {direction} (momentum {mom:.2e})"),
            iterations,
            residual: div,
        });
    }
    let mut q = x[d * n..].to_vec();
    extend_into_obstacle(&blocks.mac, &mut q)?;
    Ok(CellColumn {
        direction,
        w: blocks.as_faces(&x),
        q,
        stats: ColumnStats { iterations, div_residual: div, momentum_residual: mom },
    })
}

/// Replaces the solid values of a cell field by the discrete harmonic
/// extension of its fluid values, so that lookups near an unperforated
/// boundary see a continuous field.
fn extend_into_obstacle<T: Real>(mac: &MacGrid, q: &mut [T]) -> Result<()> {
    let solid: Vec<bool> = mac.fluid().iter().map(|f| !f).collect();
    let lat = mac.lattice();
    let d = lat.dim();
    let nbr = lat.neighbor_table(Stagger::Cell);
    let mut rhs = vec![T::zero(); q.len()];
    for (i, r) in rhs.iter_mut().enumerate() {
        if solid[i] {
            for k in 0..2 * d {
                let j = nbr[i * 2 * d + k];
                if j != NO_NEIGHBOR && mac.fluid()[j as usize] {
                    *r += q[j as usize];
                }
            }
        }
    }
    let stencil = Stencil::masked_laplacian(lat, Stagger::Cell, &solid, T::one(), None);
    let mg = Multigrid::new(stencil.clone());
    let mut x = vec![T::zero(); q.len()];
    let stats = pcg(|v: &[T], y: &mut [T]| stencil.apply(v, y), |r: &[T], z: &mut [T]| mg.vcycle(r, z), &rhs, &mut x, 1e-12, 500);
    if !stats.converged {
        return Err(Error::NoConvergence { context: "pressure extension".into(), iterations: stats.iterations, residual: stats.residual });
    }
    for (i, v) in q.iter_mut().enumerate() {
        if solid[i] {
            *v = x[i];
        }
    }
    Ok(())
}

fn run_minres<T: Real>(blocks: &Blocks<T>, b: &[T], x: &mut [T], opts: &CellOptions) -> Result<usize> {
    let mut total = 0;
    let mut rtol = 1e-10;
    // restarts guard against loss of orthogonality: the stopping test of
    // MINRES is on the preconditioned residual, the contract on max norms
    for _ in 0..8 {
        let st = minres(
            |v: &[T], y: &mut [T]| blocks.saddle(v, y),
            |r: &[T], z: &mut [T]| blocks.precondition(r, z),
            b,
            x,
            rtol,
            opts.max_iterations,
        );
        total += st.iterations;
        let (mom, div) = blocks.residuals(x, b);
        if div <= opts.div_tol && mom <= opts.momentum_tol {
            break;
        }
        rtol = (rtol * 0.1).max(1e-14);
        if !st.converged && st.iterations >= opts.max_iterations {
            break;
        }
    }
    Ok(total)
}

fn run_uzawa<T: Real>(blocks: &Blocks<T>, b: &[T], x: &mut [T], opts: &CellOptions) -> Result<usize> {
    let n = blocks.n();
    let d = blocks.mac.dim();
    let mac = &blocks.mac;
    // velocity solves A y = rhs per component
    let solve_a = |rhs: &FaceField<T>| -> Result<FaceField<T>> {
        let mut out = mac.zeros_faces();
        for a in 0..d {
            let mg = &blocks.mg[a];
            let st = pcg(
                |v: &[T], y: &mut [T]| mg.operator().apply(v, y),
                |r: &[T], z: &mut [T]| mg.vcycle(r, z),
                &rhs.comps[a],
                &mut out.comps[a],
                1e-14,
                500,
            );
            if !st.converged && st.residual > 1e-11 {
                return Err(Error::NoConvergence {
                    context: "inner velocity solve".into(),
                    iterations: st.iterations,
                    residual: st.residual,
                });
            }
        }
        Ok(out)
    };
    let rhs = FaceField { comps: (0..d).map(|a| b[a * n..(a + 1) * n].to_vec()).collect() };
    let mut w = solve_a(&rhs)?;
    let mut q = vec![T::zero(); n];
    // Schur residual r = −D w for the system D A⁻¹ Dᵀ q = −D A⁻¹ b
    let residual = |w: &FaceField<T>| -> Vec<T> {
        let mut r = vec![T::zero(); n];
        mac.divergence(w, &mut r);
        for (v, &f) in r.iter_mut().zip(mac.fluid()) {
            *v = if f { -*v } else { T::zero() };
        }
        blocks.project_mean(&mut r);
        r
    };
    let mut r = residual(&w);
    let mut p = r.clone();
    let mut rr = crate::scalar::dot(&r, &r);
    let mut it = 0;
    while it < opts.max_iterations {
        if max_abs(&r).f64() <= 0.1 * opts.div_tol {
            break;
        }
        it += 1;
        // y = A⁻¹ Dᵀ p = −A⁻¹ G p
        let mut gp = mac.zeros_faces();
        mac.gradient(&p, &mut gp);
        for c in gp.comps.iter_mut() {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        let y = solve_a(&gp)?;
        let mut dy = vec![T::zero(); n];
        mac.divergence(&y, &mut dy);
        for (v, &f) in dy.iter_mut().zip(mac.fluid()) {
            if !f {
                *v = T::zero();
            }
        }
        let pap = crate::scalar::dot(&p, &dy);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rr / pap;
        crate::scalar::axpy(alpha, &p, &mut q);
        for a in 0..d {
            crate::scalar::axpy(alpha, &y.comps[a], &mut w.comps[a]);
        }
        r = residual(&w);
        let rr_new = crate::scalar::dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    for a in 0..d {
        x[a * n..(a + 1) * n].copy_from_slice(&w.comps[a]);
    }
    x[d * n..].copy_from_slice(&q);
    Ok(it)
}

/// Solves all `d` directions and assembles both permeability tensors.
pub fn solve_cell<T: Real>(cell: &CellGrid, opts: &CellOptions) -> Result<CellSolution<T>> {
    check_solvable(cell)?;
    let d = cell.dim();
    let blocks = Blocks::<T>::new(&cell.mac);
    let columns = (0..d)
        .into_par_iter()
        .map(|j| solve_with(&blocks, j, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut k = vec![T::zero(); d * d];
    for (j, col) in columns.iter().enumerate() {
        for (i, m) in col.mean_velocity().into_iter().enumerate() {
            k[i * d + j] = m;
        }
    }
    let mut k_energy = vec![T::zero(); d * d];
    let cells = T::of(cell.mac.len());
    let vol = T::lit(cell.mac.cell_volume());
    for i in 0..d {
        for j in i..d {
            let e = cell.mac.gradient_inner(&columns[i].w, &columns[j].w) / (vol * cells);
            k_energy[i * d + j] = e;
            k_energy[j * d + i] = e;
        }
    }
    Ok(CellSolution { grid: cell.clone(), columns, k, k_energy })
}

#[derive(Clone, Debug)]
pub struct PermeabilityReport<T> {
    pub k: Vec<T>,
    pub k_energy: Vec<T>,
    /// max |K_ij − K_ji|
    pub symmetry_defect: T,
    /// ‖K − K_energy‖_F / ‖K‖_F
    pub energy_discrepancy: T,
    /// Eigenvalues of the symmetric part of K, ascending.
    pub eigenvalues: Vec<T>,
    /// Spread of the diagonal relative to its mean, plus the largest
    /// off-diagonal entry relative to the mean diagonal.
    pub isotropy_defect: T,
}

pub fn permeability<T: Real>(sol: &CellSolution<T>) -> PermeabilityReport<T> {
    let d = sol.dim();
    let k = &sol.k;
    let mut sym = T::zero();
    let mut ks = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            sym = sym.max((k[i * d + j] - k[j * d + i]).abs());
            ks[i * d + j] = T::lit(0.5) * (k[i * d + j] + k[j * d + i]);
        }
    }
    let frob = |m: &[T]| m.iter().map(|&v| v * v).sum::<T>().sqrt();
    let diff: Vec<T> = k.iter().zip(&sol.k_energy).map(|(&a, &b)| a - b).collect();
    let diag: Vec<T> = (0..d).map(|i| k[i * d + i]).collect();
    let mean = diag.iter().copied().sum::<T>() / T::of(d);
    let spread = diag.iter().fold(T::zero(), |m, &v| m.max((v - mean).abs()));
    let mut off = T::zero();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off = off.max(k[i * d + j].abs());
            }
        }
    }
    PermeabilityReport {
        k: k.clone(),
        k_energy: sol.k_energy.clone(),
        symmetry_defect: sym,
        energy_discrepancy: frob(&diff) / frob(k),
        eigenvalues: symmetric_eigenvalues(&ks, d),
        isotropy_defect: (spread + off) / mean,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AverageIdentity {
    /// Relative defect ‖⨍_{Q∖O} W K⁻¹ − θ⁻¹ Id‖_F / ‖θ⁻¹ Id‖_F, the fluid
    /// average taken over masked cells and θ the continuum porosity when it
    /// is known. This is the mask quadrature error of the identity.
    pub defect: f64,
    /// The same against θ_h⁻¹ Id; zero up to roundoff since the zero
    /// extension makes fluid and full-cell sums coincide.
    pub discrete_defect: f64,
    pub theta: f64,
    pub theta_h: f64,
}

/// Fluid-cell average of W K⁻¹ against θ⁻¹ Id.
pub fn check_cell_average_identity<T: Real>(sol: &CellSolution<T>) -> Result<AverageIdentity> {
    let d = sol.dim();
    let kinv = sol.k_inverse()?;
    let theta_h = sol.theta();
    let theta = sol.grid.obstacle.analytic_porosity(d).unwrap_or(theta_h);
    let mac = &sol.grid.mac;
    // fluid sums of (w_j)_i over open faces, per grid cell
    let mut sums = vec![0.0; d * d];
    for (j, col) in sol.columns.iter().enumerate() {
        for i in 0..d {
            let s: T = col.w.comps[i].iter().zip(mac.open(i)).filter(|(_, &o)| o).map(|(&v, _)| v).sum();
            sums[i * d + j] = s.f64() / mac.len() as f64;
        }
    }
    // relative Frobenius defect of θ_h⁻¹ M against target⁻¹ Id
    let defect_with = |target: f64| {
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let m: f64 = (0..d).map(|l| sums[i * d + l] * kinv[l * d + j].f64()).sum();
                let e = if i == j { 1.0 / target } else { 0.0 };
                acc += (m / theta_h - e).powi(2);
            }
        }
        acc.sqrt() * target / (d as f64).sqrt()
    };
    Ok(AverageIdentity { defect: defect_with(theta), discrete_defect: defect_with(theta_h), theta, theta_h })
}

/// Vector potential of W − K: `curl Φ_j = w_j − K e_j` for each column.
#[derive(Clone, Debug)]
pub struct VectorPotential<T> {
    /// `phi[j]`: edge components of Φ for column j (one vertex field in 2D).
    pub phi: Vec<Vec<Vec<T>>>,
    /// Largest |mean of W − K| found before the solve.
    pub mean_defect: f64,
    /// max |curl Φ − (W − K)| over all faces.
    pub curl_defect: f64,
}

pub fn solve_vector_potential<T: Real>(sol: &CellSolution<T>) -> Result<VectorPotential<T>> {
    let d = sol.dim();
    let mac = &sol.grid.mac;
    let lat = mac.lattice();
    let h = mac.h();
    let kmax = max_abs(&sol.k).f64();
    let mut phi = Vec::with_capacity(d);
    let mut mean_defect: f64 = 0.0;
    let mut curl_defect: f64 = 0.0;
    for (j, col) in sol.columns.iter().enumerate() {
        let rhs: Vec<Vec<T>> = (0..d)
            .map(|a| col.w.comps[a].iter().map(|&v| v - sol.k[a * d + j]).collect())
            .collect();
        for r in &rhs {
            let m = r.iter().copied().sum::<T>().f64() / r.len() as f64;
            mean_defect = mean_defect.max(m.abs());
        }
        if mean_defect > 1e-10 * kmax.max(1.0) {
            return Err(Error::Incompatible(format!("W − K has mean {mean_defect:.3e}; K inconsistent with W")));
        }
        let f = FaceField { comps: rhs.iter().map(|r| poisson_periodic(lat, h, r)).collect() };
        let p = curl_faces_to_edges(lat, h, &f);
        let back = curl_edges_to_faces(lat, h, &p);
        for a in 0..d {
            for (u, r) in back.comps[a].iter().zip(&rhs[a]) {
                curl_defect = curl_defect.max((*u - *r).abs().f64());
            }
        }
        phi.push(p);
    }
    Ok(VectorPotential { phi, mean_defect, curl_defect })
}
