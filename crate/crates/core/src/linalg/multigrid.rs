//! Aggregation multigrid for masked, structured, diagonally weighted
//! Laplacians `σ_i x_i + Σ_j w_ij (x_i − x_j)` with homogeneous Dirichlet
//! data on inactive nodes and walls.
//!
//! Coarse levels merge 2^d blocks with piecewise-constant prolongation and
//! exact Galerkin products; a symmetric V-cycle (forward Gauss–Seidel down,
//! backward up) makes the cycle usable as a CG preconditioner.

use crate::lattice::{Lattice, Stagger, NO_NEIGHBOR};
use crate::linalg::dense::Cholesky;
use crate::scalar::Real;

/// Seven/five-point operator on a lattice. Row `i` reads
/// `diag_i x_i − Σ_b (edge_b[i] x_{i+e_b} + edge_b[i−e_b] x_{i−e_b})`.
#[derive(Clone, Debug)]
pub struct Stencil<T> {
    lattice: Lattice,
    nbr: Vec<u32>,
    active: Vec<bool>,
    diag: Vec<T>,
    edge: Vec<Vec<T>>,
}

impl<T: Real> Stencil<T> {
    /// `σ + w·(−h²Δ)` restricted to active nodes of a field at `at`.
    pub fn masked_laplacian(lattice: &Lattice, at: Stagger, active: &[bool], weight: T, sigma: Option<&[T]>) -> Self {
        let d = lattice.dim();
        let nbr = lattice.neighbor_table(at);
        let mut edge = vec![vec![T::zero(); lattice.len()]; d];
        let mut diag = vec![T::zero(); lattice.len()];
        for i in 0..lattice.len() {
            if !active[i] {
                continue;
            }
            diag[i] = weight * T::of(2 * d) + sigma.map_or(T::zero(), |s| s[i]);
            for (b, eb) in edge.iter_mut().enumerate() {
                let j = nbr[i * 2 * d + 2 * b + 1];
                if j != NO_NEIGHBOR && active[j as usize] {
                    eb[i] = weight;
                }
            }
        }
        Stencil { lattice: lattice.clone(), nbr, active: active.to_vec(), diag, edge }
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    #[inline]
    fn offdiag_sum(&self, i: usize, x: &[T]) -> T {
        let d = self.lattice.dim();
        let mut s = T::zero();
        for b in 0..d {
            let e = self.edge[b][i];
            if e != T::zero() {
                s += e * x[self.nbr[i * 2 * d + 2 * b + 1] as usize];
            }
            let j = self.nbr[i * 2 * d + 2 * b];
            if j != NO_NEIGHBOR {
                let e = self.edge[b][j as usize];
                if e != T::zero() {
                    s += e * x[j as usize];
                }
            }
        }
        s
    }

    /// `y = A x` (zero on inactive nodes).
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.len() {
            y[i] = if self.active[i] { self.diag[i] * x[i] - self.offdiag_sum(i, x) } else { T::zero() };
        }
    }

    fn residual(&self, b: &[T], x: &[T], r: &mut [T]) {
        for i in 0..self.len() {
            r[i] = if self.active[i] { b[i] - self.diag[i] * x[i] + self.offdiag_sum(i, x) } else { T::zero() };
        }
    }

    fn gauss_seidel(&self, b: &[T], x: &mut [T], forward: bool) {
        let n = self.len();
        for k in 0..n {
            let i = if forward { k } else { n - 1 - k };
            if self.active[i] {
                x[i] = (b[i] + self.offdiag_sum(i, x)) / self.diag[i];
            }
        }
    }

    /// Galerkin coarse operator for 2×…×2 aggregation, with the parent map.
    fn coarsen(&self) -> (Stencil<T>, Vec<u32>) {
        let d = self.lattice.dim();
        let n = self.lattice.n();
        let mut nc = [1usize; 3];
        for a in 0..d {
            nc[a] = n[a] / 2;
        }
        let coarse_lat = Lattice::new(d, nc, self.lattice.boundary());
        let parent: Vec<u32> = (0..self.len())
            .map(|i| {
                let c = self.lattice.coords(i);
                let mut p = [0usize; 3];
                for a in 0..d {
                    p[a] = c[a] / 2;
                }
                coarse_lat.index(p) as u32
            })
            .collect();
        let nbr = self.nbr_table_like(&coarse_lat);
        let mut active = vec![false; coarse_lat.len()];
        let mut diag = vec![T::zero(); coarse_lat.len()];
        let mut edge = vec![vec![T::zero(); coarse_lat.len()]; d];
        for i in 0..self.len() {
            if !self.active[i] {
                continue;
            }
            let pi = parent[i] as usize;
            active[pi] = true;
            diag[pi] += self.diag[i];
            for b in 0..d {
                let e = self.edge[b][i];
                if e == T::zero() {
                    continue;
                }
                let pj = parent[self.nbr[i * 2 * d + 2 * b + 1] as usize] as usize;
                if pj == pi {
                    diag[pi] -= e + e;
                } else {
                    debug_assert_eq!(nbr[pi * 2 * d + 2 * b + 1] as usize, pj);
                    edge[b][pi] += e;
                }
            }
        }
        (Stencil { lattice: coarse_lat, nbr, active, diag, edge }, parent)
    }

    /// Neighbor table on a coarser lattice with the same wall semantics as
    /// this level (walls where this level's table has them at the ends).
    fn nbr_table_like(&self, coarse: &Lattice) -> Vec<u32> {
        let d = self.lattice.dim();
        let mut t = vec![NO_NEIGHBOR; coarse.len() * 2 * d];
        for a in 0..d {
            // probe whether the fine level wraps along this axis
            let first = 0usize;
            let wraps = self.nbr[first * 2 * d + 2 * a] != NO_NEIGHBOR;
            for i in 0..coarse.len() {
                let c = coarse.coords(i)[a];
                let n = coarse.n()[a];
                let s = coarse.stride(a);
                if c > 0 {
                    t[i * 2 * d + 2 * a] = (i - s) as u32;
                } else if wraps {
                    t[i * 2 * d + 2 * a] = (i + (n - 1) * s) as u32;
                }
                if c + 1 < n {
                    t[i * 2 * d + 2 * a + 1] = (i + s) as u32;
                } else if wraps {
                    t[i * 2 * d + 2 * a + 1] = (i + s - n * s) as u32;
                }
            }
        }
        t
    }
}

struct CoarseSolve<T> {
    map: Vec<usize>,
    chol: Cholesky<T>,
}

pub struct Multigrid<T> {
    levels: Vec<Stencil<T>>,
    parents: Vec<Vec<u32>>,
    coarse: Option<CoarseSolve<T>>,
    /// Scaling of the coarse-grid correction; aggregation with constant
    /// prolongation under-corrects smooth error by about a factor two.
    pub correction: T,
    pub sweeps: usize,
}

const MAX_DENSE: usize = 2000;

impl<T: Real> Multigrid<T> {
    pub fn new(fine: Stencil<T>) -> Self {
        let d = fine.lattice.dim();
        let mut levels = vec![fine];
        let mut parents = Vec::new();
        loop {
            let l = levels.last().unwrap();
            let n = l.lattice.n();
            if !(0..d).all(|a| n[a] % 2 == 0 && n[a] >= 8) {
                break;
            }
            let (c, p) = l.coarsen();
            levels.push(c);
            parents.push(p);
        }
        let coarse = Self::factor(levels.last().unwrap());
        Multigrid { levels, parents, coarse, correction: T::lit(1.6), sweeps: 2 }
    }

    fn factor(l: &Stencil<T>) -> Option<CoarseSolve<T>> {
        let map: Vec<usize> = (0..l.len()).filter(|&i| l.active[i]).collect();
        let m = map.len();
        if m == 0 || m > MAX_DENSE {
            return None;
        }
        let mut pos = vec![usize::MAX; l.len()];
        for (k, &i) in map.iter().enumerate() {
            pos[i] = k;
        }
        let mut a = vec![T::zero(); m * m];
        let mut e = vec![T::zero(); l.len()];
        for (k, &i) in map.iter().enumerate() {
            e[i] = T::one();
            let mut col = vec![T::zero(); l.len()];
            l.apply(&e, &mut col);
            e[i] = T::zero();
            for (r, &j) in map.iter().enumerate() {
                a[r * m + k] = col[j];
            }
        }
        // tiny shift keeps pure-Neumann coarse problems factorizable
        let shift = (0..m).map(|k| a[k * m + k]).fold(T::zero(), T::max) * T::lit(1e-12);
        for k in 0..m {
            a[k * m + k] += shift;
        }
        Cholesky::new(&a, m).ok().map(|chol| CoarseSolve { map, chol })
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn operator(&self) -> &Stencil<T> {
        &self.levels[0]
    }

    /// `z ≈ A⁻¹ r` by one V-cycle from a zero initial guess.
    pub fn vcycle(&self, r: &[T], z: &mut [T]) {
        self.cycle(0, r, z);
    }

    fn cycle(&self, lvl: usize, b: &[T], x: &mut [T]) {
        let op = &self.levels[lvl];
        x.iter_mut().for_each(|v| *v = T::zero());
        if lvl + 1 == self.levels.len() {
            match &self.coarse {
                Some(cs) => {
                    let mut rhs: Vec<T> = cs.map.iter().map(|&i| b[i]).collect();
                    cs.chol.solve(&mut rhs);
                    for (k, &i) in cs.map.iter().enumerate() {
                        x[i] = rhs[k];
                    }
                }
                None => {
                    for _ in 0..50 {
                        op.gauss_seidel(b, x, true);
                        op.gauss_seidel(b, x, false);
                    }
                }
            }
            return;
        }
        for _ in 0..self.sweeps {
            op.gauss_seidel(b, x, true);
        }
        let mut r = vec![T::zero(); op.len()];
        op.residual(b, x, &mut r);
        let coarse = &self.levels[lvl + 1];
        let parent = &self.parents[lvl];
        let mut rc = vec![T::zero(); coarse.len()];
        for i in 0..op.len() {
            if op.active[i] {
                rc[parent[i] as usize] += r[i];
            }
        }
        let mut xc = vec![T::zero(); coarse.len()];
        self.cycle(lvl + 1, &rc, &mut xc);
        for i in 0..op.len() {
            if op.active[i] {
                x[i] += self.correction * xc[parent[i] as usize];
            }
        }
        for _ in 0..self.sweeps {
            op.gauss_seidel(b, x, false);
        }
    }
}
