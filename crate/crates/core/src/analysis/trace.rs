//! Thickened trace inequality `‖φ‖_{L¹(U_δ)} ≤ C δ ‖φ‖_{W^{1,1}(U)}` on the
//! box, measured over a dictionary of smooth test functions.

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, PerforatedGrid};
use crate::lattice::Stagger;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub delta: f64,
    /// sup over the dictionary of ‖φ‖_{L¹(U_δ)} / (δ ‖φ‖_{W^{1,1}(U)}).
    pub ratio: f64,
    pub worst_function: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceReport {
    pub rows: Vec<TraceRow>,
    /// Largest ratio over the sweep.
    pub constant: f64,
    /// Largest over smallest ratio across δ.
    pub spread: f64,
}

type TestFn = (&'static str, Box<dyn Fn(&[f64; 3]) -> f64>);

fn dictionary(dim: usize, l: f64) -> Vec<TestFn> {
    let pi = std::f64::consts::PI;
    vec![
        ("one", Box::new(|_: &[f64; 3]| 1.0)),
        ("dist", Box::new(move |x: &[f64; 3]| (0..dim).map(|a| x[a].min(l - x[a])).fold(f64::INFINITY, f64::min))),
        ("cos", Box::new(move |x: &[f64; 3]| (0..dim).map(|a| (pi * x[a] / l).cos()).product())),
        ("exp", Box::new(move |x: &[f64; 3]| (0..dim).map(|a| x[a] / l).sum::<f64>().exp())),
        ("poly", Box::new(move |x: &[f64; 3]| (x[0] / l).powi(2) + x[1] / l)),
        ("bump", Box::new(move |x: &[f64; 3]| {
            let r2: f64 = (0..dim).map(|a| (x[a] / l - 0.5).powi(2)).sum();
            (-8.0 * r2).exp()
        })),
    ]
}

/// Evaluates the trace ratios by cell-centre quadrature on the grid of
/// `grid` (box mode), with central-difference gradients of the test functions.
pub fn thickened_trace_constant(grid: &PerforatedGrid, deltas: &[f64]) -> Result<TraceReport> {
    if grid.kind != DomainKind::Box {
        return Err(Error::Domain("the thickened trace inequality is measured in box mode".into()));
    }
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Domain("collar widths must be positive".into()));
    }
    let mac = &grid.mac;
    let lat = mac.lattice();
    let dim = grid.dim();
    let h = mac.h();
    let vol = mac.cell_volume();
    let fd = 1e-6 * grid.length;
    let mut rows = Vec::new();
    let funcs = dictionary(dim, grid.length);
    let mut norms = Vec::new();
    for (_, f) in &funcs {
        let mut w11 = 0.0;
        for g in 0..lat.len() {
            let x = lat.position(g, Stagger::Cell, h);
            w11 += f(&x).abs();
            for a in 0..dim {
                let (mut xp, mut xm) = (x, x);
                xp[a] += fd;
                xm[a] -= fd;
                w11 += ((f(&xp) - f(&xm)) / (2.0 * fd)).abs();
            }
        }
        norms.push(w11 * vol);
    }
    for &delta in deltas {
        let mut row = TraceRow { delta, ratio: 0.0, worst_function: "" };
        for ((name, f), norm) in funcs.iter().zip(&norms) {
            let mut collar = 0.0;
            for g in 0..lat.len() {
                if grid.boundary_distance[g] < delta {
                    collar += f(&lat.position(g, Stagger::Cell, h)).abs();
                }
            }
            let ratio = collar * vol / (delta * norm);
            if ratio > row.ratio {
                row.ratio = ratio;
                row.worst_function = name;
            }
        }
        rows.push(row);
    }
    let constant = rows.iter().fold(0.0f64, |m, r| m.max(r.ratio));
    let low = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.ratio));
    Ok(TraceReport { rows, constant, spread: constant / low })
}
