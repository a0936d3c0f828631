//! Marker-and-cell (staggered) grid with a fluid mask and the discrete
//! operators built on it.
//!
//! Densities and pressures live at cell centres, velocity component `a` on
//! the faces normal to axis `a`. Face `g` along axis `a` is the lower face of
//! cell `g`. A face is open when both adjacent cells are fluid; in box mode
//! the slot 0 faces are the boundary planes and are always closed. Closed
//! faces carry zero velocity and every operator treats them as homogeneous
//! Dirichlet data.

use crate::lattice::{Boundary, FaceField, Lattice, Stagger, NO_NEIGHBOR};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct MacGrid {
    lattice: Lattice,
    h: f64,
    fluid: Vec<bool>,
    fluid_count: usize,
    open: Vec<Vec<bool>>,
    cell_nbr: Vec<u32>,
    face_nbr: Vec<Vec<u32>>,
}

impl MacGrid {
    pub fn new(lattice: Lattice, h: f64, fluid: Vec<bool>) -> Self {
        assert_eq!(fluid.len(), lattice.len());
        let d = lattice.dim();
        let cell_nbr = lattice.neighbor_table(Stagger::Cell);
        let mut open = vec![vec![false; lattice.len()]; d];
        for (a, oa) in open.iter_mut().enumerate() {
            for (g, o) in oa.iter_mut().enumerate() {
                let below = cell_nbr[g * 2 * d + 2 * a];
                *o = below != NO_NEIGHBOR && fluid[g] && fluid[below as usize];
                if lattice.boundary() == Boundary::Walls && lattice.coords(g)[a] == 0 {
                    *o = false;
                }
            }
        }
        let face_nbr = (0..d).map(|a| lattice.neighbor_table(Stagger::Face(a))).collect();
        let fluid_count = fluid.iter().filter(|&&f| f).count();
        MacGrid { lattice, h, fluid, fluid_count, open, cell_nbr, face_nbr }
    }

    /// Grid without obstacles.
    pub fn full(lattice: Lattice, h: f64) -> Self {
        let n = lattice.len();
        Self::new(lattice, h, vec![true; n])
    }

    #[inline]
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Volume of one grid cell, h^d.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    #[inline]
    pub fn fluid(&self) -> &[bool] {
        &self.fluid
    }

    #[inline]
    pub fn fluid_count(&self) -> usize {
        self.fluid_count
    }

    #[inline]
    pub fn open(&self, axis: usize) -> &[bool] {
        &self.open[axis]
    }

    /// Neighbor table of cell centres (see [`Lattice::neighbor_table`]).
    #[inline]
    pub fn cell_neighbors(&self) -> &[u32] {
        &self.cell_nbr
    }

    #[inline]
    pub fn face_neighbors(&self, axis: usize) -> &[u32] {
        &self.face_nbr[axis]
    }

    /// Cell `g + e_a` (wrapping, or `None` at a wall).
    #[inline]
    pub fn cell_up(&self, g: usize, a: usize) -> Option<usize> {
        let j = self.cell_nbr[g * 2 * self.dim() + 2 * a + 1];
        (j != NO_NEIGHBOR).then_some(j as usize)
    }

    #[inline]
    pub fn cell_down(&self, g: usize, a: usize) -> Option<usize> {
        let j = self.cell_nbr[g * 2 * self.dim() + 2 * a];
        (j != NO_NEIGHBOR).then_some(j as usize)
    }

    /// Index of the upper face (axis `a`) of cell `g`. On walls this is the
    /// pinned slot 0, which is closed.
    #[inline]
    pub fn upper_face(&self, g: usize, a: usize) -> usize {
        self.lattice.wrap(g, a, true)
    }

    pub fn zeros_faces<T: Real>(&self) -> FaceField<T> {
        FaceField::zeros(&self.lattice)
    }

    /// Zeroes every closed face.
    pub fn mask_faces<T: Real>(&self, u: &mut FaceField<T>) {
        for (a, c) in u.comps.iter_mut().enumerate() {
            for (v, &o) in c.iter_mut().zip(&self.open[a]) {
                if !o {
                    *v = T::zero();
                }
            }
        }
    }

    /// `(div u)_c = Σ_a (u_a[c + e_a] − u_a[c]) / h` on every cell.
    pub fn divergence<T: Real>(&self, u: &FaceField<T>, out: &mut [T]) {
        let inv_h = T::lit(1.0 / self.h);
        let d = self.dim();
        out.iter_mut().for_each(|v| *v = T::zero());
        for a in 0..d {
            let ua = &u.comps[a];
            for (g, o) in out.iter_mut().enumerate() {
                let up = self.upper_face(g, a);
                *o += (ua[up] - ua[g]) * inv_h;
            }
        }
    }

    /// Cell-centred gradient on open faces, zero on closed ones.
    pub fn gradient<T: Real>(&self, p: &[T], out: &mut FaceField<T>) {
        let inv_h = T::lit(1.0 / self.h);
        for a in 0..self.dim() {
            let oa = &mut out.comps[a];
            for g in 0..self.len() {
                oa[g] = if self.open[a][g] {
                    let below = self.cell_nbr[g * 2 * self.dim() + 2 * a] as usize;
                    (p[g] - p[below]) * inv_h
                } else {
                    T::zero()
                };
            }
        }
    }

    /// `−Δ_h u_a` on open faces of axis `a` with zero Dirichlet data on
    /// closed faces and walls; zero on closed faces.
    pub fn neg_laplacian<T: Real>(&self, a: usize, u: &[T], out: &mut [T]) {
        let d = self.dim();
        let inv_h2 = T::lit(1.0 / (self.h * self.h));
        let nbr = &self.face_nbr[a];
        let open = &self.open[a];
        let two_d = T::of(2 * d);
        for g in 0..self.len() {
            if !open[g] {
                out[g] = T::zero();
                continue;
            }
            let mut s = two_d * u[g];
            for k in 0..2 * d {
                let j = nbr[g * 2 * d + k];
                if j != NO_NEIGHBOR && open[j as usize] {
                    s -= u[j as usize];
                }
            }
            out[g] = s * inv_h2;
        }
    }

    /// Discrete Dirichlet energy Σ |∇u|² h^d of a face field, consistent with
    /// [`Self::neg_laplacian`]: `⟨−Δ_h u, u⟩ h^d` equals this value.
    pub fn gradient_energy<T: Real>(&self, u: &FaceField<T>) -> T {
        let d = self.dim();
        let scale = T::lit(self.h.powi(d as i32 - 2));
        let mut total = T::zero();
        for a in 0..d {
            let nbr = &self.face_nbr[a];
            let open = &self.open[a];
            let ua = &u.comps[a];
            let value = |j: u32| if j != NO_NEIGHBOR && open[j as usize] { ua[j as usize] } else { T::zero() };
            for g in 0..self.len() {
                for b in 0..d {
                    let up = nbr[g * 2 * d + 2 * b + 1];
                    let ug = if open[g] { ua[g] } else { T::zero() };
                    let diff = value(up) - ug;
                    total += diff * diff;
                    // wall below: the pair with the ghost is counted here once
                    if nbr[g * 2 * d + 2 * b] == NO_NEIGHBOR {
                        total += ug * ug;
                    }
                }
            }
        }
        total * scale
    }

    /// Bilinear form Σ ∇u : ∇v h^d matching [`Self::gradient_energy`].
    pub fn gradient_inner<T: Real>(&self, u: &FaceField<T>, v: &FaceField<T>) -> T {
        let d = self.dim();
        let scale = T::lit(self.h.powi(d as i32 - 2));
        let mut total = T::zero();
        for a in 0..d {
            let nbr = &self.face_nbr[a];
            let open = &self.open[a];
            let (ua, va) = (&u.comps[a], &v.comps[a]);
            let val = |f: &[T], j: u32| if j != NO_NEIGHBOR && open[j as usize] { f[j as usize] } else { T::zero() };
            for g in 0..self.len() {
                let (ug, vg) = if open[g] { (ua[g], va[g]) } else { (T::zero(), T::zero()) };
                for b in 0..d {
                    let up = nbr[g * 2 * d + 2 * b + 1];
                    total += (val(ua, up) - ug) * (val(va, up) - vg);
                    if nbr[g * 2 * d + 2 * b] == NO_NEIGHBOR {
                        total += ug * vg;
                    }
                }
            }
        }
        total * scale
    }

    /// Sum of `f` over fluid cells times h^d.
    pub fn integrate_fluid<T: Real>(&self, f: &[T]) -> T {
        let vol = T::lit(self.cell_volume());
        f.iter().zip(&self.fluid).filter(|(_, &fl)| fl).map(|(&v, _)| v).sum::<T>() * vol
    }

    /// Arithmetic mean of the cell field at face positions (both neighbors),
    /// defined on every face with a cell below; the wall slot takes the
    /// single adjacent value.
    pub fn face_average<T: Real>(&self, a: usize, c: &[T], out: &mut [T]) {
        let half = T::lit(0.5);
        for g in 0..self.len() {
            out[g] = match self.cell_down(g, a) {
                Some(b) => half * (c[g] + c[b]),
                None => c[g],
            };
        }
    }

    /// Value of velocity component `b` interpolated to the faces of axis `a`
    /// by averaging the four surrounding `b`-faces (identity for `b = a`).
    pub fn component_at_faces<T: Real>(&self, u: &FaceField<T>, b: usize, a: usize, out: &mut [T]) {
        if a == b {
            out.copy_from_slice(&u.comps[a]);
            return;
        }
        let quarter = T::lit(0.25);
        let ub = &u.comps[b];
        for g in 0..self.len() {
            // face (a, g) sits between cells g − e_a and g; the b-faces
            // around it are the lower/upper b-faces of those two cells.
            let mut s = T::zero();
            let cells = [Some(g), self.cell_down(g, a)];
            for c in cells.into_iter().flatten() {
                s += ub[c] + ub[self.upper_face(c, b)];
            }
            out[g] = s * quarter;
        }
    }

    /// Full velocity vector at the faces of axis `a`.
    pub fn velocity_at_faces<T: Real>(&self, u: &FaceField<T>, a: usize) -> Vec<Vec<T>> {
        (0..self.dim())
            .map(|b| {
                let mut out = vec![T::zero(); self.len()];
                self.component_at_faces(u, b, a, &mut out);
                out
            })
            .collect()
    }

    /// Face velocity averaged to cell centres, per component.
    pub fn velocity_at_cells<T: Real>(&self, u: &FaceField<T>) -> Vec<Vec<T>> {
        let half = T::lit(0.5);
        (0..self.dim())
            .map(|a| {
                let ua = &u.comps[a];
                (0..self.len()).map(|g| half * (ua[g] + ua[self.upper_face(g, a)])).collect()
            })
            .collect()
    }
}

/// Discrete curl of a face field, landing on edges: component `c` lives on
/// `Edge(c)`. In 2D only the out-of-plane component (on vertices) is
/// returned. Walls are treated as periodic; callers in box mode only use the
/// result away from the boundary or overwrite it there.
pub fn curl_faces_to_edges<T: Real>(lattice: &Lattice, h: f64, f: &FaceField<T>) -> Vec<Vec<T>> {
    let inv_h = T::lit(1.0 / h);
    let d = lattice.dim();
    let comps: Vec<usize> = if d == 2 { vec![2] } else { vec![0, 1, 2] };
    comps
        .into_iter()
        .map(|c| {
            let (p, q) = ((c + 1) % 3, (c + 2) % 3);
            (0..lattice.len())
                .map(|i| {
                    // ∂_p F_q − ∂_q F_p, backward differences
                    let mut v = T::zero();
                    if q < d && p < d {
                        v += (f.comps[q][i] - f.comps[q][lattice.wrap(i, p, false)]) * inv_h;
                        v -= (f.comps[p][i] - f.comps[p][lattice.wrap(i, q, false)]) * inv_h;
                    }
                    v
                })
                .collect()
        })
        .collect()
}

/// Discrete curl of an edge field (as returned by [`curl_faces_to_edges`]),
/// landing on faces. In 2D the input is the single vertex component ψ and
/// the result is (∂₁ψ, −∂₀ψ).
pub fn curl_edges_to_faces<T: Real>(lattice: &Lattice, h: f64, phi: &[Vec<T>]) -> FaceField<T> {
    let inv_h = T::lit(1.0 / h);
    let d = lattice.dim();
    let edge = |c: usize| -> Option<&Vec<T>> {
        if d == 2 {
            (c == 2).then(|| &phi[0])
        } else {
            Some(&phi[c])
        }
    };
    let comps = (0..d)
        .map(|a| {
            let (p, q) = ((a + 1) % 3, (a + 2) % 3);
            (0..lattice.len())
                .map(|i| {
                    // ∂_p Φ_q − ∂_q Φ_p, forward differences
                    let mut v = T::zero();
                    if let (Some(fq), true) = (edge(q), p < d) {
                        v += (fq[lattice.wrap(i, p, true)] - fq[i]) * inv_h;
                    }
                    if let (Some(fp), true) = (edge(p), q < d) {
                        v -= (fp[lattice.wrap(i, q, true)] - fp[i]) * inv_h;
                    }
                    v
                })
                .collect()
        })
        .collect();
    FaceField { comps }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(boundary: Boundary) -> MacGrid {
        let lat = Lattice::cubic(2, 8, boundary);
        let mut fluid = vec![true; lat.len()];
        fluid[lat.index([3, 4, 0])] = false;
        fluid[lat.index([4, 4, 0])] = false;
        MacGrid::new(lat, 0.125, fluid)
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn gradient_is_minus_divergence_adjoint() {
        for b in [Boundary::Periodic, Boundary::Walls] {
            let m = grid(b);
            let p = pseudo_random(m.len(), 1);
            let mut u = FaceField { comps: vec![pseudo_random(m.len(), 2), pseudo_random(m.len(), 3)] };
            m.mask_faces(&mut u);
            let mut div = vec![0.0; m.len()];
            m.divergence(&u, &mut div);
            let mut gp = m.zeros_faces::<f64>();
            m.gradient(&p, &mut gp);
            let lhs: f64 = div.iter().zip(&p).map(|(a, b)| a * b).sum();
            let rhs: f64 = -(0..2).map(|a| crate::scalar::dot(&u.comps[a], &gp.comps[a])).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
        }
    }

    #[test]
    fn laplacian_matches_gradient_energy() {
        for b in [Boundary::Periodic, Boundary::Walls] {
            let m = grid(b);
            let mut u = FaceField { comps: vec![pseudo_random(m.len(), 4), pseudo_random(m.len(), 5)] };
            m.mask_faces(&mut u);
            let mut quad = 0.0;
            for a in 0..2 {
                let mut lu = vec![0.0; m.len()];
                m.neg_laplacian(a, &u.comps[a], &mut lu);
                quad += crate::scalar::dot(&lu, &u.comps[a]) * m.cell_volume();
            }
            let e = m.gradient_energy(&u);
            assert!((quad - e).abs() < 1e-10 * e, "{quad} {e}");
            assert!((m.gradient_inner(&u, &u) - e).abs() < 1e-10 * e);
        }
    }

    #[test]
    fn faces_next_to_solid_cells_are_closed() {
        let m = grid(Boundary::Periodic);
        let l = m.lattice();
        assert!(!m.open(0)[l.index([3, 4, 0])]);
        assert!(!m.open(0)[l.index([4, 4, 0])]);
        assert!(!m.open(0)[l.index([5, 4, 0])]);
        assert!(m.open(0)[l.index([6, 4, 0])]);
        let w = grid(Boundary::Walls);
        assert!(!w.open(0)[w.lattice().index([0, 2, 0])]);
        assert!(w.open(1)[w.lattice().index([0, 2, 0])]);
    }

    #[test]
    fn curl_of_curl_is_minus_laplacian_on_divergence_free_fields() {
        for d in [2, 3] {
            let lat = Lattice::cubic(d, 6, Boundary::Periodic);
            let h = 0.5;
            // a divergence-free field: the curl of a random edge potential
            let ncomp = if d == 2 { 1 } else { 3 };
            let a: Vec<Vec<f64>> = (0..ncomp).map(|c| pseudo_random(lat.len(), 10 + c as u64)).collect();
            let u = curl_edges_to_faces(&lat, h, &a);
            let full = MacGrid::full(lat.clone(), h);
            let mut div = vec![0.0; lat.len()];
            full.divergence(&u, &mut div);
            assert!(crate::scalar::max_abs(&div) < 1e-12);
            let back = curl_edges_to_faces(&lat, h, &curl_faces_to_edges(&lat, h, &u));
            for c in 0..d {
                let mut lap = vec![0.0; lat.len()];
                full.neg_laplacian(c, &u.comps[c], &mut lap);
                for i in 0..lat.len() {
                    assert!((back.comps[c][i] - lap[i]).abs() < 1e-10);
                }
            }
        }
    }
}
