//! Reference cell Q = (−1,1)^d with an obstacle, and the perforated domain
//! Ω_ε obtained by tiling it with period 2ε.
//!
//! Cells are sharp staircase masks: a grid cell is solid when its centre lies
//! in the obstacle, and a face is open only when both adjacent cells are fluid.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, Stagger};
use crate::mac::MacGrid;

/// Level-set description of the reference obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Ball { radius: f64 },
    /// `Σ |x_i / a_i|^p ≤ 1`
    Superellipse { exponent: f64, semi_axes: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle {
    shape: Option<Shape>,
    /// Distance from the obstacle to ∂B₁ in cell units.
    clearance: f64,
}

impl Obstacle {
    /// The empty obstacle. Useful for porosity bookkeeping; the cell problem
    /// rejects it.
    pub fn empty() -> Self {
        Obstacle { shape: None, clearance: 1.0 }
    }

    pub fn ball(radius: f64) -> Result<Self> {
        make_obstacle(&Shape::Ball { radius })
    }

    pub fn shape(&self) -> Option<&Shape> {
        self.shape.as_ref()
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_none()
    }

    /// Distance from the obstacle to the faces of Q, the `d` of the cutoff.
    pub fn cell_clearance(&self, dim: usize) -> f64 {
        match &self.shape {
            None => 1.0,
            Some(Shape::Ball { radius }) => 1.0 - radius,
            Some(Shape::Superellipse { semi_axes, .. }) => {
                1.0 - semi_axes[..dim].iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match &self.shape {
            None => false,
            Some(Shape::Ball { radius }) => y.iter().map(|v| v * v).sum::<f64>() < radius * radius,
            Some(Shape::Superellipse { exponent, semi_axes }) => {
                y.iter().zip(semi_axes).map(|(v, a)| (v / a).abs().powf(*exponent)).sum::<f64>() < 1.0
            }
        }
    }

    /// Volume fraction of Q occupied by fluid in the continuum, when known
    /// in closed form.
    pub fn analytic_porosity(&self, dim: usize) -> Option<f64> {
        let q = 2f64.powi(dim as i32);
        match &self.shape {
            None => Some(1.0),
            Some(Shape::Ball { radius }) => {
                let v = if dim == 2 { PI * radius * radius } else { 4.0 / 3.0 * PI * radius.powi(3) };
                Some(1.0 - v / q)
            }
            Some(Shape::Superellipse { exponent, semi_axes }) => {
                // |{Σ|x_i|^p ≤ 1}| = (2Γ(1+1/p))^d / Γ(1+d/p)
                let p = *exponent;
                let g = |x: f64| gamma_fn(x);
                let unit = (2.0 * g(1.0 + 1.0 / p)).powi(dim as i32) / g(1.0 + dim as f64 / p);
                let scale: f64 = semi_axes[..dim].iter().product();
                Some(1.0 - unit * scale / q)
            }
        }
    }
}

/// Lanczos approximation of Γ(x) for x > 0.
fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Validates a shape against the setting O ⋐ B₁, 0 ∈ int O.
pub fn make_obstacle(shape: &Shape) -> Result<Obstacle> {
    match shape {
        Shape::Ball { radius } => {
            let r = *radius;
            if !(r > 0.0) {
                return Err(Error::Obstacle(format!("ball radius {r} gives an empty obstacle")));
            }
            if !(r < 1.0) {
                return Err(Error::Obstacle(format!("ball radius {r} not strictly inside B1")));
            }
            Ok(Obstacle { shape: Some(shape.clone()), clearance: 1.0 - r })
        }
        Shape::Superellipse { exponent, semi_axes } => {
            let p = *exponent;
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::Obstacle(format!("superellipse exponent {p} must be ≥ 1")));
            }
            if semi_axes.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::Obstacle("superellipse semi-axes must be positive".into()));
            }
            let rmax = superellipse_max_radius(p, semi_axes);
            if !(rmax < 1.0) {
                return Err(Error::Obstacle(format!(
                    "superellipse reaches radius {rmax:.6} ≥ 1, not inside B1"
                )));
            }
            Ok(Obstacle { shape: Some(shape.clone()), clearance: 1.0 - rmax })
        }
    }
}

/// Largest distance from the origin to the superellipse boundary, sampled
/// over directions in 3D (covers the 2D section as well).
fn superellipse_max_radius(p: f64, a: &[f64; 3]) -> f64 {
    let radius = |v: [f64; 3]| {
        let s: f64 = v.iter().zip(a).map(|(vi, ai)| (vi / ai).abs().powf(p)).sum();
        s.powf(-1.0 / p)
    };
    let (nt, np) = (400, 800);
    let mut best: f64 = 0.0;
    for i in 0..=nt {
        let th = PI * i as f64 / nt as f64;
        for j in 0..np {
            let ph = 2.0 * PI * j as f64 / np as f64;
            let v = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
            best = best.max(radius(v));
        }
    }
    best
}

/// Discretized reference cell Q \ O.
#[derive(Clone, Debug)]
pub struct CellGrid {
    pub obstacle: Obstacle,
    pub n: usize,
    pub mac: MacGrid,
    pub theta_h: f64,
}

impl CellGrid {
    pub fn dim(&self) -> usize {
        self.mac.dim()
    }

    /// Grid spacing of the reference cell, 2/n.
    pub fn h(&self) -> f64 {
        self.mac.h()
    }
}

/// Centre of the reference cell with index `j` (per axis), in Q coordinates.
#[inline]
pub fn reference_center(j: usize, n: usize) -> f64 {
    -1.0 + (j as f64 + 0.5) * 2.0 / n as f64
}

pub fn build_reference_cell(obstacle: &Obstacle, dim: usize, n: usize) -> Result<CellGrid> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::Config(format!("dimension {dim} not in {{2,3}}")));
    }
    if n < 16 || !n.is_multiple_of(2) {
        return Err(Error::Resolution(format!("cell resolution {n} must be even and ≥ 16")));
    }
    let lat = Lattice::cubic(dim, n, Boundary::Periodic);
    let mut fluid = vec![true; lat.len()];
    for (idx, f) in fluid.iter_mut().enumerate() {
        let c = lat.coords(idx);
        let y: Vec<f64> = (0..dim).map(|a| reference_center(c[a], n)).collect();
        *f = !obstacle.contains(&y);
    }
    let mac = MacGrid::new(lat, 2.0 / n as f64, fluid);
    check_connected(&mac)?;
    let theta_h = mac.fluid_count() as f64 / mac.lattice().len() as f64;
    Ok(CellGrid { obstacle: obstacle.clone(), n, mac, theta_h })
}

/// Flood fill over open faces; errors when the fluid splits into several
/// components.
fn check_connected(mac: &MacGrid) -> Result<()> {
    let lat = mac.lattice();
    let Some(start) = (0..lat.len()).find(|&i| mac.fluid()[i]) else {
        return Err(Error::Resolution("no fluid cells".into()));
    };
    let mut seen = vec![false; lat.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for a in 0..lat.dim() {
            // upper face of i is face index of the forward cell
            if let Some(j) = lat.step(i, a, true, Stagger::Cell) {
                if mac.open(a)[j] && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
            if let Some(j) = lat.step(i, a, false, Stagger::Cell) {
                if mac.open(a)[i] && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
    }
    if count != mac.fluid_count() {
        return Err(Error::Resolution(format!(
            "fluid region disconnected at this resolution ({count} of {} cells reachable)",
            mac.fluid_count()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Torus,
    Box,
}

impl DomainKind {
    pub fn boundary(self) -> Boundary {
        match self {
            DomainKind::Torus => Boundary::Periodic,
            DomainKind::Box => Boundary::Walls,
        }
    }
}

/// Ω_ε on a uniform grid with `n_per_cell` grid cells across each ε-cell.
#[derive(Clone, Debug)]
pub struct PerforatedGrid {
    pub kind: DomainKind,
    /// Side length of the cubic domain Ω = (0, L)^d.
    pub length: f64,
    pub epsilon: f64,
    pub n_per_cell: usize,
    pub mac: MacGrid,
    /// Per ε-cell (multi-index flattened per axis): whether it carries a hole.
    holed_range: (usize, usize),
    cells_per_axis: usize,
    /// dist(x, ∂Ω) at cell centres (box mode; empty on the torus).
    pub boundary_distance: Vec<f64>,
}

impl PerforatedGrid {
    pub fn dim(&self) -> usize {
        self.mac.dim()
    }

    pub fn h(&self) -> f64 {
        self.mac.h()
    }

    /// Number of ε-cells along each axis (torus) or of index positions
    /// i with centre 2εi inside [0, L] (box).
    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    /// Reference-cell index of a global grid index along one axis.
    #[inline]
    pub fn local_index(&self, g: usize) -> usize {
        let n = self.n_per_cell;
        (g + n / 2) % n
    }

    /// ε-cell index i (centre 2εi) of a global grid index along one axis.
    #[inline]
    pub fn cell_index(&self, g: usize) -> usize {
        (g + self.n_per_cell / 2) / self.n_per_cell
    }

    /// Flat reference-cell index of a global flat index (any stagger).
    pub fn local_flat(&self, idx: usize, reference: &Lattice) -> usize {
        let c = self.mac.lattice().coords(idx);
        let mut l = [0usize; 3];
        for a in 0..self.dim() {
            l[a] = self.local_index(c[a]);
        }
        reference.index(l)
    }

    /// Whether the ε-cell containing global cell `idx` carries a hole.
    pub fn cell_has_hole(&self, idx: usize) -> bool {
        let c = self.mac.lattice().coords(idx);
        (0..self.dim()).all(|a| {
            let i = self.cell_index(c[a]);
            let i = if self.kind == DomainKind::Torus { i % self.cells_per_axis } else { i };
            i >= self.holed_range.0 && i <= self.holed_range.1
        })
    }

    /// Number of ε-cells carrying a hole.
    pub fn holed_cells(&self) -> usize {
        let k = self.holed_range.1 + 1 - self.holed_range.0;
        k.pow(self.dim() as u32)
    }

    /// Fraction of |Ω| occupied by fluid.
    pub fn fluid_fraction(&self) -> f64 {
        self.mac.fluid_count() as f64 / self.mac.lattice().len() as f64
    }
}

/// Tiles the reference cell over Ω = (0, L)^d with period 2ε.
pub fn build_perforated_grid(
    kind: DomainKind,
    length: f64,
    epsilon: f64,
    cell: &CellGrid,
) -> Result<PerforatedGrid> {
    if !(epsilon > 0.0) || !(length > 0.0) {
        return Err(Error::Config("epsilon and domain length must be positive".into()));
    }
    let dim = cell.dim();
    let n = cell.n;
    let ratio = length / (2.0 * epsilon);
    let cells_per_axis = ratio.round() as usize;
    let holed_range = match kind {
        DomainKind::Torus => {
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || cells_per_axis == 0 {
                return Err(Error::Config(format!(
                    "torus requires L/(2ε) ∈ ℕ, got {ratio} for ε = {epsilon}"
                )));
            }
            (0, cells_per_axis - 1)
        }
        DomainKind::Box => {
            // cells [2εi − ε, 2εi + ε] ⊂ [0, L]
            let imax = ((length / epsilon - 1.0) / 2.0 + 1e-9).floor();
            if imax < 1.0 {
                return Err(Error::Config(format!(
                    "ε = {epsilon} too large: no cell of size 2ε fits inside (0, {length})"
                )));
            }
            (1, imax as usize)
        }
    };
    let nglob = length * n as f64 / (2.0 * epsilon);
    if (nglob - nglob.round()).abs() > 1e-9 * nglob {
        return Err(Error::Config(format!(
            "grid spacing 2ε/n = {} does not divide L = {length}",
            2.0 * epsilon / n as f64
        )));
    }
    let nglob = nglob.round() as usize;
    let lat = Lattice::cubic(dim, nglob, kind.boundary());
    let h = length / nglob as f64;
    let mut grid = PerforatedGrid {
        kind,
        length,
        epsilon,
        n_per_cell: n,
        mac: MacGrid::full(lat.clone(), h),
        holed_range,
        cells_per_axis: if kind == DomainKind::Torus { cells_per_axis } else { holed_range.1 + 1 },
        boundary_distance: Vec::new(),
    };
    let reference = cell.mac.lattice();
    let mut fluid = vec![true; lat.len()];
    for (idx, f) in fluid.iter_mut().enumerate() {
        if grid.cell_has_hole(idx) {
            *f = cell.mac.fluid()[grid.local_flat(idx, reference)];
        }
    }
    grid.mac = MacGrid::new(lat.clone(), h, fluid);
    if kind == DomainKind::Box {
        grid.boundary_distance = (0..lat.len())
            .map(|idx| {
                let x = lat.position(idx, Stagger::Cell, h);
                (0..dim).map(|a| x[a].min(length - x[a])).fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_clearance() {
        assert_eq!(Obstacle::ball(0.5).unwrap().clearance(), 0.5);
        assert!((Obstacle::ball(0.999).unwrap().clearance() - 0.001).abs() < 1e-12);
        assert!(Obstacle::ball(1.2).is_err());
        assert!(Obstacle::ball(0.0).is_err());
    }

    #[test]
    fn superellipse_admissibility() {
        let ok = make_obstacle(&Shape::Superellipse { exponent: 4.0, semi_axes: [0.5, 0.4, 0.3] });
        assert!(ok.is_ok());
        // corner of a p = 8 superellipse with semi-axes 0.9 pokes out of B1
        let bad = make_obstacle(&Shape::Superellipse { exponent: 8.0, semi_axes: [0.9, 0.9, 0.9] });
        assert!(bad.is_err());
    }

    #[test]
    fn gamma_function_values() {
        assert!((gamma_fn(5.0) - 24.0).abs() < 1e-10);
        assert!((gamma_fn(1.5) - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn superellipse_with_exponent_two_is_an_ellipse() {
        let o = make_obstacle(&Shape::Superellipse { exponent: 2.0, semi_axes: [0.5, 0.5, 0.5] }).unwrap();
        let b = Obstacle::ball(0.5).unwrap();
        assert!((o.analytic_porosity(3).unwrap() - b.analytic_porosity(3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn empty_obstacle_has_unit_porosity() {
        let c = build_reference_cell(&Obstacle::empty(), 2, 16).unwrap();
        assert_eq!(c.theta_h, 1.0);
    }

    #[test]
    fn resolution_gate() {
        let o = Obstacle::ball(0.5).unwrap();
        assert!(build_reference_cell(&o, 2, 15).is_err());
        assert!(build_reference_cell(&o, 2, 8).is_err());
    }

    #[test]
    fn torus_gate() {
        let o = Obstacle::ball(0.5).unwrap();
        let c = build_reference_cell(&o, 2, 16).unwrap();
        assert!(build_perforated_grid(DomainKind::Torus, 1.0, 1.0 / 6.0, &c).is_ok());
        assert!(build_perforated_grid(DomainKind::Torus, 1.0, 0.2, &c).is_err());
    }

    #[test]
    fn box_interior_cells() {
        let o = Obstacle::ball(0.5).unwrap();
        let c = build_reference_cell(&o, 2, 16).unwrap();
        let g = build_perforated_grid(DomainKind::Box, 1.0, 0.125, &c).unwrap();
        assert_eq!(g.holed_cells(), 9);
        assert!(build_perforated_grid(DomainKind::Box, 1.0, 0.5, &c).is_err());
    }
}
