//! FFT-based periodic Poisson inversion and spectral multiplier norms.
//!
//! Transforms run in `f64`; inputs of any [`Real`] type are converted.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::Lattice;
use crate::scalar::Real;

/// Separable d-dimensional complex FFT on a row-major lattice.
pub struct LatticeFft {
    n: [usize; 3],
    dim: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl LatticeFft {
    pub fn new(lattice: &Lattice) -> Self {
        let mut planner = FftPlanner::new();
        let dim = lattice.dim();
        let n = lattice.n();
        let forward = (0..dim).map(|a| planner.plan_fft_forward(n[a])).collect();
        let inverse = (0..dim).map(|a| planner.plan_fft_inverse(n[a])).collect();
        LatticeFft { n, dim, forward, inverse }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let n = self.n;
        let strides = [n[1] * n[2], n[2], 1];
        let total = n[0] * n[1] * n[2];
        for a in 0..self.dim {
            let len = n[a];
            let s = strides[a];
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plans[a].get_inplace_scratch_len()];
            for start in 0..total {
                // visit each line once: coordinate along `a` must be zero
                if !(start / s).is_multiple_of(len) {
                    continue;
                }
                for k in 0..len {
                    line[k] = data[start + k * s];
                }
                plans[a].process_with_scratch(&mut line, &mut scratch);
                for k in 0..len {
                    data[start + k * s] = line[k];
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the 1/N normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    /// Signed integer wavenumbers of a flat index.
    pub fn wavenumbers(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let c = [idx / (n[1] * n[2]), (idx / n[2]) % n[1], idx % n[2]];
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            let m = c[a] as i64;
            let na = n[a] as i64;
            k[a] = if m <= na / 2 { m as f64 } else { (m - na) as f64 };
        }
        k
    }
}

fn to_complex<T: Real>(v: &[T]) -> Vec<Complex64> {
    v.iter().map(|x| Complex64::new(x.f64(), 0.0)).collect()
}

/// Solves `−Δ_h F = g` on the periodic lattice with the standard
/// (2d+1)-point Laplacian of spacing `h`. The mean of `g` is discarded and
/// `F` has zero mean.
pub fn poisson_periodic<T: Real>(lattice: &Lattice, h: f64, g: &[T]) -> Vec<T> {
    let fft = LatticeFft::new(lattice);
    let mut data = to_complex(g);
    fft.forward(&mut data);
    let n = lattice.n();
    for (idx, c) in data.iter_mut().enumerate() {
        let k = fft.wavenumbers(idx);
        let mut sym = 0.0;
        for a in 0..lattice.dim() {
            let s = (PI * k[a] / n[a] as f64).sin();
            sym += 4.0 * s * s / (h * h);
        }
        *c = if sym > 0.0 { *c / sym } else { Complex64::new(0.0, 0.0) };
    }
    fft.inverse(&mut data);
    data.iter().map(|c| T::lit(c.re)).collect()
}

/// `‖(1 − Δ)^{-1/2} g‖_{L²}` on the torus (0, L)^d from grid samples of `g`,
/// using the continuum multiplier `(1 + |2πk/L|²)^{-1/2}` on each discrete
/// Fourier mode.
pub fn neg_sobolev_norm<T: Real>(lattice: &Lattice, length: f64, g: &[T]) -> T {
    let fft = LatticeFft::new(lattice);
    let mut data = to_complex(g);
    fft.forward(&mut data);
    let n_total = data.len() as f64;
    let volume = length.powi(lattice.dim() as i32);
    let mut sum = 0.0;
    for (idx, c) in data.iter().enumerate() {
        let k = fft.wavenumbers(idx);
        let k2: f64 = k.iter().map(|&ka| (2.0 * PI * ka / length).powi(2)).sum();
        sum += c.norm_sqr() / (1.0 + k2);
    }
    T::lit((volume * sum / (n_total * n_total)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Stagger};

    #[test]
    fn sine_mode_norm() {
        let lat = Lattice::cubic(2, 32, Boundary::Periodic);
        let g: Vec<f64> = (0..lat.len())
            .map(|i| (2.0 * PI * lat.position(i, Stagger::Cell, 1.0 / 32.0)[0]).sin())
            .collect();
        let v = neg_sobolev_norm(&lat, 1.0, &g);
        let exact = (0.5f64).sqrt() / (1.0 + 4.0 * PI * PI).sqrt();
        assert!((v - exact).abs() < 1e-12, "{v} {exact}");
    }

    #[test]
    fn poisson_inverts_discrete_laplacian() {
        let lat = Lattice::new(3, [8, 6, 4], Boundary::Periodic);
        let h = 0.3;
        let mut g: Vec<f64> = (0..lat.len()).map(|i| ((i * 7919) % 13) as f64).collect();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|v| *v -= mean);
        let f = poisson_periodic(&lat, h, &g);
        for i in 0..lat.len() {
            let mut lap = 6.0 * f[i];
            for a in 0..3 {
                lap -= f[lat.wrap(i, a, true)] + f[lat.wrap(i, a, false)];
            }
            assert!((lap / (h * h) - g[i]).abs() < 1e-10);
        }
    }
}
