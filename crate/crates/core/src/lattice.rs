//! Structured index space shared by cell-, face- and edge-centred fields.
//!
//! Every staggered field is stored on the same `n0 × n1 × n2` array
//! (`n2 = 1` in 2D). Indices wrap periodically; in box mode a location that
//! sits half a cell off the boundary along an axis sees a Dirichlet wall
//! instead of its periodic image. Locations lying *on* the boundary plane
//! (offset 0 along the axis) keep the wrap: the planes x = 0 and x = L are the
//! same storage slot and are pinned by masks.

use serde::{Deserialize, Serialize};

/// Outer boundary treatment of the computational box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Walls,
}

/// Where a degree of freedom lives inside a grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stagger {
    Cell,
    /// Face normal to the given axis.
    Face(usize),
    /// Edge parallel to the given axis (3D). In 2D `Edge(2)` is a vertex.
    Edge(usize),
}

impl Stagger {
    /// `true` when the location is offset by half a cell along `axis`.
    #[inline]
    pub fn half_on(self, axis: usize) -> bool {
        match self {
            Stagger::Cell => true,
            Stagger::Face(a) => a != axis,
            Stagger::Edge(l) => l == axis,
        }
    }

    #[inline]
    pub fn offset(self, axis: usize) -> f64 {
        if self.half_on(axis) {
            0.5
        } else {
            0.0
        }
    }
}

pub const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    dim: usize,
    n: [usize; 3],
    boundary: Boundary,
}

impl Lattice {
    pub fn new(dim: usize, n: [usize; 3], boundary: Boundary) -> Self {
        assert!(dim == 2 || dim == 3, "dimension must be 2 or 3");
        let mut n = n;
        if dim == 2 {
            n[2] = 1;
        }
        assert!(n[..dim].iter().all(|&k| k >= 2), "at least two points per axis");
        Lattice { dim, n, boundary }
    }

    pub fn cubic(dim: usize, n: usize, boundary: Boundary) -> Self {
        Self::new(dim, [n, n, n], boundary)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n[1] + i[1]) * self.n[2] + i[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i2 = idx % self.n[2];
        let r = idx / self.n[2];
        [r / self.n[1], r % self.n[1], i2]
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.n[1] * self.n[2],
            1 => self.n[2],
            _ => 1,
        }
    }

    /// Whether stepping across the outer boundary along `axis` hits a wall
    /// for a field living at `at`.
    #[inline]
    pub fn wall(&self, at: Stagger, axis: usize) -> bool {
        self.boundary == Boundary::Walls && at.half_on(axis)
    }

    /// Neighbor of `idx` one step along `axis` (forward or backward).
    #[inline]
    pub fn step(&self, idx: usize, axis: usize, forward: bool, at: Stagger) -> Option<usize> {
        let c = self.coords(idx)[axis];
        let n = self.n[axis];
        let s = self.stride(axis);
        if forward {
            if c + 1 < n {
                Some(idx + s)
            } else if self.wall(at, axis) {
                None
            } else {
                Some(idx + s - n * s)
            }
        } else if c > 0 {
            Some(idx - s)
        } else if self.wall(at, axis) {
            None
        } else {
            Some(idx + (n - 1) * s)
        }
    }

    /// Periodic neighbor, ignoring walls.
    #[inline]
    pub fn wrap(&self, idx: usize, axis: usize, forward: bool) -> usize {
        self.step(idx, axis, forward, Stagger::Face(axis))
            .expect("periodic step always exists")
    }

    /// Neighbor table: `2·dim` entries per point ordered
    /// `[axis0-, axis0+, axis1-, axis1+, ...]`, [`NO_NEIGHBOR`] at walls.
    pub fn neighbor_table(&self, at: Stagger) -> Vec<u32> {
        let d = self.dim;
        let mut t = vec![NO_NEIGHBOR; self.len() * 2 * d];
        for idx in 0..self.len() {
            for a in 0..d {
                if let Some(j) = self.step(idx, a, false, at) {
                    t[idx * 2 * d + 2 * a] = j as u32;
                }
                if let Some(j) = self.step(idx, a, true, at) {
                    t[idx * 2 * d + 2 * a + 1] = j as u32;
                }
            }
        }
        t
    }

    /// Position of the point `idx` for a field at `at`, with grid spacing `h`.
    #[inline]
    pub fn position(&self, idx: usize, at: Stagger, h: f64) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (c[a] as f64 + at.offset(a)) * h;
        }
        x
    }
}

/// One scalar array per velocity component, component `a` on `Face(a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField<T> {
    pub comps: Vec<Vec<T>>,
}

impl<T: Copy + Default> FaceField<T> {
    pub fn zeros(lattice: &Lattice) -> Self {
        FaceField {
            comps: (0..lattice.dim()).map(|_| vec![T::default(); lattice.len()]).collect(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn fill(&mut self, v: T) {
        for c in &mut self.comps {
            c.iter_mut().for_each(|x| *x = v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let l = Lattice::new(3, [4, 5, 6], Boundary::Periodic);
        for idx in 0..l.len() {
            assert_eq!(l.index(l.coords(idx)), idx);
        }
        let l2 = Lattice::new(2, [4, 5, 9], Boundary::Periodic);
        assert_eq!(l2.n(), [4, 5, 1]);
        assert_eq!(l2.len(), 20);
    }

    #[test]
    fn walls_only_for_half_offset_locations() {
        let l = Lattice::cubic(2, 4, Boundary::Walls);
        let corner = l.index([0, 0, 0]);
        assert_eq!(l.step(corner, 0, false, Stagger::Cell), None);
        // x-faces sit on the x = 0 plane: wrap onto the pinned boundary slot.
        assert_eq!(l.step(corner, 0, false, Stagger::Face(0)), Some(l.index([3, 0, 0])));
        assert_eq!(l.step(corner, 1, false, Stagger::Face(0)), None);
        let p = Lattice::cubic(2, 4, Boundary::Periodic);
        assert_eq!(p.step(corner, 1, false, Stagger::Cell), Some(p.index([0, 3, 0])));
    }

    #[test]
    fn neighbor_table_is_symmetric() {
        let l = Lattice::new(3, [4, 6, 2], Boundary::Walls);
        for at in [Stagger::Cell, Stagger::Face(1), Stagger::Edge(2)] {
            let t = l.neighbor_table(at);
            for i in 0..l.len() {
                for a in 0..3 {
                    let j = t[i * 6 + 2 * a + 1];
                    if j != NO_NEIGHBOR {
                        assert_eq!(t[j as usize * 6 + 2 * a] as usize, i);
                    }
                }
            }
        }
    }
}
