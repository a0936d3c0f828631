//! Preconditioned conjugate gradients and MINRES on matrix-free operators.

use crate::scalar::{axpy, dot, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual (Euclidean for CG, preconditioned for MINRES).
    pub residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` with an SPD
/// preconditioner `M⁻¹`. `x` holds the initial guess on entry.
pub fn pcg<T, A, M>(mut a: A, mut m: M, b: &[T], x: &mut [T], rtol: f64, max_iter: usize) -> SolveStats
where
    T: Real,
    A: FnMut(&[T], &mut [T]),
    M: FnMut(&[T], &mut [T]),
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt().f64();
    let mut r = vec![T::zero(); n];
    a(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = rtol * if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut rnorm = dot(&r, &r).sqrt().f64();
    if rnorm <= target {
        return SolveStats { iterations: 0, residual: rnorm / bnorm.max(f64::MIN_POSITIVE), converged: true };
    }
    let mut z = vec![T::zero(); n];
    m(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for it in 1..=max_iter {
        a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return SolveStats { iterations: it, residual: rnorm / bnorm.max(f64::MIN_POSITIVE), converged: false };
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        rnorm = dot(&r, &r).sqrt().f64();
        if rnorm <= target {
            return SolveStats { iterations: it, residual: rnorm / bnorm.max(f64::MIN_POSITIVE), converged: true };
        }
        m(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    SolveStats { iterations: max_iter, residual: rnorm / bnorm.max(f64::MIN_POSITIVE), converged: false }
}

/// Preconditioned MINRES for symmetric (possibly indefinite, consistent
/// singular) systems. The preconditioner must be symmetric positive
/// definite on the range of `A`. Stops when the preconditioned residual
/// norm has dropped by `rtol`.
pub fn minres<T, A, M>(mut a: A, mut m: M, b: &[T], x: &mut [T], rtol: f64, max_iter: usize) -> SolveStats
where
    T: Real,
    A: FnMut(&[T], &mut [T]),
    M: FnMut(&[T], &mut [T]),
{
    let n = b.len();
    let mut v = vec![T::zero(); n];
    a(x, &mut v);
    for (vi, &bi) in v.iter_mut().zip(b) {
        *vi = bi - *vi;
    }
    let mut v_old = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    m(&v, &mut z);
    let mut gamma = dot(&z, &v).max(T::zero()).sqrt();
    let gamma1 = gamma;
    if gamma1 == T::zero() {
        return SolveStats { iterations: 0, residual: 0.0, converged: true };
    }
    let mut gamma_old = T::one();
    let mut eta = gamma;
    let (mut s_old, mut s) = (T::zero(), T::zero());
    let (mut c_old, mut c) = (T::one(), T::one());
    let mut w_old = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut az = vec![T::zero(); n];
    let mut z_new = vec![T::zero(); n];
    let target = T::lit(rtol) * gamma1;
    for it in 1..=max_iter {
        let inv = T::one() / gamma;
        z.iter_mut().for_each(|zi| *zi *= inv);
        a(&z, &mut az);
        let delta = dot(&az, &z);
        // v_new = A z − (δ/γ) v − (γ/γ_old) v_old, stored into v_old
        let (f1, f2) = (delta / gamma, gamma / gamma_old);
        for i in 0..n {
            v_old[i] = az[i] - f1 * v[i] - f2 * v_old[i];
        }
        std::mem::swap(&mut v, &mut v_old);
        m(&v, &mut z_new);
        let gamma_new = dot(&z_new, &v).max(T::zero()).sqrt();
        let alpha0 = c * delta - c_old * s * gamma;
        let alpha1 = (alpha0 * alpha0 + gamma_new * gamma_new).sqrt();
        let alpha2 = s * delta + c_old * c * gamma;
        let alpha3 = s_old * gamma;
        if alpha1 == T::zero() {
            return SolveStats { iterations: it, residual: (eta / gamma1).abs().f64(), converged: false };
        }
        let c_new = alpha0 / alpha1;
        let s_new = gamma_new / alpha1;
        let ia1 = T::one() / alpha1;
        for i in 0..n {
            let wn = (z[i] - alpha3 * w_old[i] - alpha2 * w[i]) * ia1;
            w_old[i] = w[i];
            w[i] = wn;
        }
        axpy(c_new * eta, &w, x);
        eta = -s_new * eta;
        gamma_old = gamma;
        gamma = gamma_new;
        c_old = c;
        c = c_new;
        s_old = s;
        s = s_new;
        std::mem::swap(&mut z, &mut z_new);
        if eta.abs() <= target || gamma == T::zero() {
            return SolveStats { iterations: it, residual: (eta / gamma1).abs().f64(), converged: true };
        }
    }
    SolveStats { iterations: max_iter, residual: (eta / gamma1).abs().f64(), converged: false }
}
