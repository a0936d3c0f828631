//! Poincaré constant of the perforated domain from the lowest Dirichlet
//! eigenvalue of the masked cell Laplacian.

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, PerforatedGrid};
use crate::lattice::Stagger;
use crate::linalg::{pcg, Multigrid, Stencil};
use crate::scalar::dot;

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareReport {
    /// C(ε) = λ_min^{-1/2}
    pub constant: f64,
    pub eigenvalue: f64,
    pub iterations: usize,
    /// Set when the grid has no holes and the constant is the domain one.
    pub warning: Option<String>,
}

/// Inverse power iteration with a multigrid-preconditioned CG inner solve,
/// stopped when the Rayleigh quotient changes by less than `1e-8` relative.
pub fn poincare_constant(grid: &PerforatedGrid) -> Result<PoincareReport> {
    let mac = &grid.mac;
    let holes = mac.fluid_count() < mac.len();
    if !holes && grid.kind == DomainKind::Torus {
        return Err(Error::Singular("the unperforated torus has no Poincaré inequality for zero-trace fields".into()));
    }
    let warning = (!holes).then(|| "no holes: domain Poincaré constant, independent of ε".to_string());
    let h = mac.h();
    let stencil = Stencil::masked_laplacian(mac.lattice(), Stagger::Cell, mac.fluid(), 1.0 / (h * h), None);
    let apply = |x: &[f64], y: &mut [f64]| stencil.apply(x, y);
    let mg = Multigrid::new(stencil.clone());
    let n = mac.len();
    let mut x: Vec<f64> = mac.fluid().iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mut ax = vec![0.0; n];
    let mut lambda_old = f64::INFINITY;
    for it in 1..=500 {
        let norm = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let mut y = x.clone();
        let stats = pcg(apply, |r: &[f64], z: &mut [f64]| mg.vcycle(r, z), &x, &mut y, 1e-12, 500);
        if !stats.converged {
            return Err(Error::NoConvergence {
                context: "Poincaré inverse iteration".into(),
                iterations: stats.iterations,
                residual: stats.residual,
            });
        }
        x = y;
        apply(&x, &mut ax);
        let lambda = dot(&x, &ax) / dot(&x, &x);
        if (lambda - lambda_old).abs() <= 1e-8 * lambda {
            return Ok(PoincareReport { constant: 1.0 / lambda.sqrt(), eigenvalue: lambda, iterations: it, warning });
        }
        lambda_old = lambda;
    }
    Err(Error::NoConvergence { context: "Poincaré inverse iteration".into(), iterations: 500, residual: f64::NAN })
}

/// Lowest eigenvalue of `−f'' − (d−1)/ρ f' = λ f` on the shell
/// `a < ρ < b` with `f(a) = 0` and `f'(b) = 0`, by a conservative finite
/// difference on `m` intervals and inverse iteration.
pub fn radial_shell_eigenvalue(dim: usize, a: f64, b: f64, m: usize) -> Result<f64> {
    if !(0.0 < a && a < b) || m < 4 {
        return Err(Error::Domain(format!("radial shell needs 0 < a < b and m ≥ 4, got a = {a}, b = {b}, m = {m}")));
    }
    let dr = (b - a) / m as f64;
    let k = dim as f64 - 1.0;
    // unknowns at ρ_i = a + i dr, i = 1..=m; weights ρ^{d−1}
    let rho = |i: f64| a + i * dr;
    let flux = |i: f64| rho(i).powf(k) / (dr * dr);
    let mass: Vec<f64> = (1..=m).map(|i| if i == m { 0.5 } else { 1.0 } * rho(i as f64).powf(k)).collect();
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m - 1];
    for i in 1..=m {
        let lower = flux(i as f64 - 0.5);
        let upper = if i < m { flux(i as f64 + 0.5) } else { 0.0 };
        diag[i - 1] = lower + upper;
        if i < m {
            off[i - 1] = -upper;
        }
    }
    // inverse iteration on A x = λ M x with a tridiagonal solve
    let solve = |rhs: &[f64]| {
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        c[0] = if m > 1 { off[0] / diag[0] } else { 0.0 };
        d[0] = rhs[0] / diag[0];
        for i in 1..m {
            let den = diag[i] - off[i - 1] * c[i - 1];
            if i < m - 1 {
                c[i] = off[i] / den;
            }
            d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / den;
        }
        let mut x = d;
        for i in (0..m - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let mut x = vec![1.0; m];
    let mut lambda_old = f64::INFINITY;
    for _ in 0..1000 {
        let mx: Vec<f64> = x.iter().zip(&mass).map(|(v, w)| v * w).collect();
        x = solve(&mx);
        let mut ax = vec![0.0; m];
        for i in 0..m {
            ax[i] = diag[i] * x[i];
            if i > 0 {
                ax[i] += off[i - 1] * x[i - 1];
            }
            if i < m - 1 {
                ax[i] += off[i] * x[i + 1];
            }
        }
        let num: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(&mass).map(|(v, w)| v * v * w).sum();
        let lambda = num / den;
        let s = den.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        if (lambda - lambda_old).abs() <= 1e-13 * lambda {
            return Ok(lambda);
        }
        lambda_old = lambda;
    }
    Ok(lambda_old)
}
