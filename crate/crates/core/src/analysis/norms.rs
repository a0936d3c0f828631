//! Error norms: the spectral W^{-1,2} norm and the error functional of a
//! flow trajectory against the limit solution.

use crate::correctors::CorrectorPair;
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, PerforatedGrid};
use crate::lattice::{Boundary, FaceField, Lattice};
use crate::limit_solver::LimitState;
use crate::linalg::spectral::neg_sobolev_norm;
use crate::nse_solver::FlowState;
use crate::scalar::Real;

/// A norm value; `approximate` marks the reflected box-mode evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegNorm {
    pub value: f64,
    pub approximate: bool,
}

/// `‖(1 − Δ)^{-1/2} g‖_{L²}` of grid samples on (0, L)^d. On the torus the
/// multiplier acts on the discrete Fourier modes directly; in box mode the
/// field is first extended by even reflection to (0, 2L)^d.
pub fn norm_neg_sobolev<T: Real>(lattice: &Lattice, length: f64, kind: DomainKind, g: &[T]) -> Result<NegNorm> {
    if g.len() != lattice.len() {
        return Err(Error::GridMismatch(format!("field has {} values, lattice {}", g.len(), lattice.len())));
    }
    match (kind, lattice.boundary()) {
        (DomainKind::Torus, Boundary::Periodic) => {
            Ok(NegNorm { value: neg_sobolev_norm(lattice, length, g).f64(), approximate: false })
        }
        (DomainKind::Box, Boundary::Walls) => {
            let d = lattice.dim();
            let n = lattice.n();
            let mut n2 = [1usize; 3];
            for a in 0..d {
                n2[a] = 2 * n[a];
            }
            let big = Lattice::new(d, n2, Boundary::Periodic);
            let mut ext = vec![T::zero(); big.len()];
            for (idx, v) in ext.iter_mut().enumerate() {
                let c = big.coords(idx);
                let mut src = [0usize; 3];
                for a in 0..d {
                    src[a] = if c[a] < n[a] { c[a] } else { n2[a] - 1 - c[a] };
                }
                *v = g[lattice.index(src)];
            }
            let value = neg_sobolev_norm(&big, 2.0 * length, &ext).f64() / 2f64.powi(d as i32).sqrt();
            Ok(NegNorm { value, approximate: true })
        }
        (DomainKind::Torus, _) => Err(Error::Domain("torus norm requested for a non-periodic field".into())),
        (DomainKind::Box, _) => Err(Error::Domain("box norm requested for a periodic lattice".into())),
    }
}

/// Euclidean combination of the component norms of a face field.
pub fn face_field_neg_sobolev<T: Real>(lattice: &Lattice, length: f64, kind: DomainKind, f: &FaceField<T>) -> Result<NegNorm> {
    let mut sum = 0.0;
    let mut approximate = false;
    for c in &f.comps {
        let v = norm_neg_sobolev(lattice, length, kind, c)?;
        sum += v.value * v.value;
        approximate |= v.approximate;
    }
    Ok(NegNorm { value: sum.sqrt(), approximate })
}

/// The three error measures of a flow trajectory against the limit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorFunctional {
    /// max_t ‖ρ_ε − ρ‖²_{L²(Ω_ε)}
    pub density: f64,
    /// ∫ ‖u_ε − u‖²_{W^{-1,2}(Ω)} dt with u_ε extended by zero.
    pub velocity: f64,
    /// ∫ ‖u_ε − w_ε‖²_{L²(Ω_ε)} dt
    pub corrector_velocity: f64,
    /// Whether the velocity norm used the reflected box evaluation.
    pub approximate: bool,
}

impl ErrorFunctional {
    /// density + velocity error.
    pub fn total(&self) -> f64 {
        self.density + self.velocity
    }
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Evaluates the error functional on aligned samples of the flow, the limit
/// (on the unperforated lattice of the same grid) and the corrector pair.
pub fn error_functional<T: Real>(
    grid: &PerforatedGrid,
    flow: &[FlowState<T>],
    limit: &[LimitState<T>],
    pairs: &[CorrectorPair<T>],
) -> Result<ErrorFunctional> {
    if flow.len() != limit.len() || flow.len() != pairs.len() || flow.is_empty() {
        return Err(Error::Domain(format!(
            "misaligned samples: {} flow, {} limit, {} corrector",
            flow.len(),
            limit.len(),
            pairs.len()
        )));
    }
    for (f, l) in flow.iter().zip(limit) {
        if (f.t - l.t).abs() > 1e-9 * f.t.abs().max(1.0) {
            return Err(Error::Domain(format!("flow sample at t = {} paired with limit sample at t = {}", f.t, l.t)));
        }
    }
    let mac = &grid.mac;
    let n = mac.len();
    let vol = mac.cell_volume();
    if limit.iter().any(|l| l.rho.len() != n) || flow.iter().any(|f| f.rho.len() != n) {
        return Err(Error::GridMismatch("samples do not live on the perforated grid".into()));
    }
    let mut out = ErrorFunctional::default();
    let mut vel = Vec::with_capacity(flow.len());
    let mut corr = Vec::with_capacity(flow.len());
    for ((f, l), p) in flow.iter().zip(limit).zip(pairs) {
        let mut dens = 0.0;
        for g in 0..n {
            if mac.fluid()[g] {
                let e = (f.rho[g] - l.rho[g]).f64();
                dens += e * e;
            }
        }
        out.density = out.density.max(dens * vol);
        let diff = FaceField {
            comps: (0..grid.dim())
                .map(|a| (0..n).map(|g| if mac.open(a)[g] { f.u.comps[a][g] } else { T::zero() } - l.u.comps[a][g]).collect())
                .collect(),
        };
        let norm = face_field_neg_sobolev(mac.lattice(), grid.length, grid.kind, &diff)?;
        out.approximate |= norm.approximate;
        vel.push(norm.value * norm.value);
        let mut c = 0.0;
        for a in 0..grid.dim() {
            for g in 0..n {
                if mac.open(a)[g] {
                    let e = (f.u.comps[a][g] - p.w_tilde.comps[a][g]).f64();
                    c += e * e;
                }
            }
        }
        corr.push(c * vol);
    }
    let t: Vec<f64> = flow.iter().map(|f| f.t).collect();
    out.velocity = trapezoid(&t, &vel);
    out.corrector_velocity = trapezoid(&t, &corr);
    Ok(out)
}
