//! γ-law pressure p(s) = a·s^γ, its potential H and the relative entropy
//! h(s|r) = H(s) − H'(r)(s − r) − H(r).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Derivative order for [`PressureLaw::pressure`] and [`PressureLaw::potential`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl Order {
    pub fn from_index(k: usize) -> Result<Self> {
        match k {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::Domain(format!("derivative order {k} not in {{0,1,2}}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureLaw<T> {
    gamma: T,
    a: T,
}

impl<T: Real> PressureLaw<T> {
    /// γ-law admissible for the convergence theorem (γ ≥ 2, a > 0).
    pub fn new(gamma: T, a: T) -> Result<Self> {
        if !(gamma >= T::lit(2.0)) {
            return Err(Error::Domain(format!("adiabatic exponent {gamma} < 2")));
        }
        Self::exploratory(gamma, a)
    }

    /// Any γ > 1; used for runs outside the theorem's hypotheses.
    pub fn exploratory(gamma: T, a: T) -> Result<Self> {
        if !(gamma > T::one()) || !gamma.is_finite() {
            return Err(Error::Domain(format!("adiabatic exponent {gamma} must exceed 1")));
        }
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::Domain(format!("pressure coefficient {a} must be positive")));
        }
        Ok(PressureLaw { gamma, a })
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.gamma
    }

    #[inline]
    pub fn coefficient(&self) -> T {
        self.a
    }

    /// lim p'(s)/s^{γ−1}, equal to a·γ for the γ-law.
    pub fn p_infinity(&self) -> T {
        self.a * self.gamma
    }

    pub fn within_theorem(&self) -> bool {
        self.gamma >= T::lit(2.0)
    }

    fn check_density(s: T) -> Result<()> {
        if s < T::zero() || s.is_nan() {
            return Err(Error::Domain(format!("negative density {s}")));
        }
        Ok(())
    }

    /// a·s^e·coef, defined at s = 0 only for e ≥ 0.
    fn power_term(&self, s: T, e: T, coef: T) -> Result<T> {
        if s == T::zero() {
            if e > T::zero() {
                return Ok(T::zero());
            }
            if e == T::zero() {
                return Ok(coef);
            }
            return Err(Error::Domain("derivative singular at s = 0".into()));
        }
        Ok(coef * s.powf(e))
    }

    pub fn pressure(&self, s: T, order: Order) -> Result<T> {
        Self::check_density(s)?;
        let (g, a, one) = (self.gamma, self.a, T::one());
        match order {
            Order::Value => self.power_term(s, g, a),
            Order::First => self.power_term(s, g - one, a * g),
            Order::Second => self.power_term(s, g - one - one, a * g * (g - one)),
        }
    }

    /// p(s) for s ≥ 0 without error plumbing; negative input is clamped to 0.
    #[inline]
    pub fn p(&self, s: T) -> T {
        if s <= T::zero() {
            T::zero()
        } else {
            self.a * s.powf(self.gamma)
        }
    }

    /// p'(s), clamped like [`Self::p`].
    #[inline]
    pub fn dp(&self, s: T) -> T {
        if s <= T::zero() {
            T::zero()
        } else {
            self.a * self.gamma * s.powf(self.gamma - T::one())
        }
    }

    /// p^{-1}(y) = (y/a)^{1/γ}.
    pub fn inverse(&self, y: T) -> Result<T> {
        if y < T::zero() || y.is_nan() {
            return Err(Error::Domain(format!("negative pressure {y} has no density")));
        }
        if y == T::zero() {
            return Ok(T::zero());
        }
        Ok((y / self.a).powf(T::one() / self.gamma))
    }

    /// H(s) = a(s^γ − s)/(γ − 1) and its derivatives.
    pub fn potential(&self, s: T, order: Order) -> Result<T> {
        Self::check_density(s)?;
        let (g, a, one) = (self.gamma, self.a, T::one());
        let k = a / (g - one);
        match order {
            Order::Value => Ok(k * (self.power_term(s, g, one)? - s)),
            Order::First => Ok(k * (self.power_term(s, g - one, g)? - one)),
            Order::Second => self.power_term(s, g - one - one, a * g),
        }
    }

    #[inline]
    pub fn h(&self, s: T) -> T {
        let s = s.max(T::zero());
        self.a * (s.powf(self.gamma) - s) / (self.gamma - T::one())
    }

    #[inline]
    pub fn dh(&self, s: T) -> T {
        self.a * (self.gamma * s.powf(self.gamma - T::one()) - T::one()) / (self.gamma - T::one())
    }

    /// Relative entropy h(s|r) = H(s) − H'(r)(s − r) − H(r), r > 0.
    pub fn relative_entropy(&self, s: T, r: T) -> Result<T> {
        Self::check_density(s)?;
        if !(r > T::zero()) {
            return Err(Error::Domain(format!("reference density {r} must be positive")));
        }
        Ok(self.entropy_unchecked(s, r))
    }

    /// h(s|r) = a/(γ−1)·r^γ·[(1+t)^γ − 1 − γt], t = (s − r)/r.
    ///
    /// The linear parts of H cancel analytically; the bracket is summed as a
    /// series for small |t| so that h vanishes only on the diagonal and
    /// reproduces (s − r)² for γ = 2 to rounding.
    #[inline]
    pub fn entropy_unchecked(&self, s: T, r: T) -> T {
        let g = self.gamma;
        let t = (s.max(T::zero()) - r) / r;
        let bracket = if t.abs() <= T::lit(0.25) {
            binomial_tail(g, t)
        } else {
            (g * t.ln_1p()).exp_m1() - g * t
        };
        self.a / (g - T::one()) * r.powf(g) * bracket
    }
}

/// Σ_{k≥2} C(γ,k) t^k for |t| ≤ 1/4.
fn binomial_tail<T: Real>(g: T, t: T) -> T {
    let mut coef = g * (g - T::one()) / T::lit(2.0);
    let mut power = t * t;
    let mut sum = coef * power;
    for k in 2..200 {
        let kk = T::of(k);
        coef = coef * (g - kk) / (kk + T::one());
        power *= t;
        let term = coef * power;
        sum += term;
        if term.abs() <= T::epsilon() * T::lit(0.01) * sum.abs() {
            break;
        }
    }
    sum
}

/// Lower-bound constant of the relative entropy on a compact density range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyBound<T> {
    /// Largest c with h(s|r) ≥ c·((r − s)² + p(s)·1{s ≥ 2r}) on the grid.
    pub constant: T,
    /// Grid point attaining the minimum ratio.
    pub argmin_s: T,
    pub argmin_r: T,
}

/// Samples h(s|r)/((r − s)² + p(s)1{s ≥ 2r}) on an r × s tensor grid with
/// `samples` points in total (split evenly between the two directions).
pub fn check_entropy_lower_bound<T: Real>(
    law: &PressureLaw<T>,
    r_interval: (T, T),
    s_max: T,
    samples: usize,
) -> Result<EntropyBound<T>> {
    let (r_lo, r_hi) = r_interval;
    if !(r_lo > T::zero()) || r_lo > r_hi {
        return Err(Error::Domain(format!("empty density interval [{r_lo}, {r_hi}]")));
    }
    if !(s_max > T::lit(2.0) * r_hi) {
        return Err(Error::Domain("s_max must exceed 2·r_hi".into()));
    }
    if samples < 100 {
        return Err(Error::Domain("at least 100 samples required".into()));
    }
    let per = (samples as f64).sqrt().ceil() as usize;
    let nr = if r_lo == r_hi { 1 } else { per };
    let ns = samples.div_ceil(nr);
    let mut best = EntropyBound { constant: T::infinity(), argmin_s: T::zero(), argmin_r: r_lo };
    for i in 0..nr {
        let r = if nr == 1 { r_lo } else { r_lo + (r_hi - r_lo) * T::of(i) / T::of(nr - 1) };
        for j in 0..ns {
            let s = s_max * T::of(j) / T::of(ns - 1);
            let mut denom = (r - s) * (r - s);
            if s >= T::lit(2.0) * r {
                denom += law.p(s);
            }
            if denom <= T::zero() {
                continue;
            }
            let ratio = law.entropy_unchecked(s, r) / denom;
            if ratio < best.constant {
                best = EntropyBound { constant: ratio, argmin_s: s, argmin_r: r };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(g: f64, a: f64) -> PressureLaw<f64> {
        PressureLaw::new(g, a).unwrap()
    }

    #[test]
    fn pressure_values() {
        assert_eq!(law(2.0, 1.0).pressure(3.0, Order::Value).unwrap(), 9.0);
        assert_eq!(law(2.0, 1.0).pressure(0.0, Order::Value).unwrap(), 0.0);
        assert!((law(3.0, 2.0).pressure(2.0, Order::First).unwrap() - 24.0).abs() < 1e-12);
        assert!(law(2.0, 1.0).pressure(-1.0, Order::Value).is_err());
        assert_eq!(law(2.0, 1.0).p_infinity(), 2.0);
    }

    #[test]
    fn inverse_values() {
        assert!((law(2.0, 1.0).inverse(9.0).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(law(2.0, 1.0).inverse(0.0).unwrap(), 0.0);
        assert!((law(3.0, 1.0).inverse(8.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(law(2.0, 1.0).inverse(-1e-3).is_err());
    }

    #[test]
    fn potential_values() {
        assert!((law(2.0, 1.0).potential(3.0, Order::Value).unwrap() - 6.0).abs() < 1e-14);
        assert_eq!(law(2.0, 1.0).potential(1.0, Order::Value).unwrap(), 0.0);
        assert!((law(3.0, 1.0).potential(2.0, Order::Value).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn relative_entropy_values() {
        assert!((law(2.0, 1.0).relative_entropy(3.0, 1.0).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(law(2.0, 1.0).relative_entropy(5.0, 5.0).unwrap(), 0.0);
        // h(0|r) = r H'(r) − H(r) = p(r)
        assert!((law(3.0, 1.0).relative_entropy(0.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(law(2.0, 1.0).relative_entropy(1.0, 0.0).is_err());
    }

    #[test]
    fn theorem_gate() {
        assert!(PressureLaw::new(1.4, 1.0).is_err());
        let l = PressureLaw::exploratory(1.4, 1.0).unwrap();
        assert!(!l.within_theorem());
        assert!(PressureLaw::<f64>::exploratory(1.0, 1.0).is_err());
        assert!(PressureLaw::<f64>::new(2.0, 0.0).is_err());
    }

    #[test]
    fn entropy_lower_bound_gamma2() {
        let b = check_entropy_lower_bound(&law(2.0, 1.0), (0.5, 2.0), 10.0, 10_000).unwrap();
        assert!(b.constant >= 0.125, "{b:?}");
        // h(2r|r) = r² = (r − s)² at r = 1
        let h = law(2.0, 1.0).relative_entropy(2.0, 1.0).unwrap();
        assert!((h - 1.0).abs() < 1e-14);
    }

    #[test]
    fn entropy_lower_bound_rejects_empty_interval() {
        assert!(check_entropy_lower_bound(&law(2.0, 1.0), (2.0, 1.0), 10.0, 1000).is_err());
        assert!(check_entropy_lower_bound(&law(2.0, 1.0), (0.0, 1.0), 10.0, 1000).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let l = PressureLaw::<f32>::new(2.0, 1.0).unwrap();
        assert!((l.relative_entropy(3.0, 1.0).unwrap() - 4.0).abs() < 1e-5);
    }
}
