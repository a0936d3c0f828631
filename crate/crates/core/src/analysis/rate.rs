//! Convergence-rate fitting and the rate predicted by the main theorem.

use crate::error::{Error, Result};
use crate::geometry::DomainKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypothesisStatus {
    /// γ ≥ 2 and λ > λ₀.
    Inside,
    /// λ = λ₀ to rounding.
    Boundary,
    /// γ < 2 or λ < λ₀.
    Outside,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoreticalRate {
    pub lambda0: f64,
    pub beta: f64,
    pub status: HypothesisStatus,
    /// 2 ≤ γ < 3: the estimate additionally needs the smallness condition
    /// on ε^{2λ−5} times the initial relative energy.
    pub initial_condition: bool,
}

/// λ₀ = 1 + 3/γ (γ ≥ 3) or 5/3 + 1/γ (γ < 3); β = min{1, 2λ−2, λ−3/γ} on the
/// torus, with 1 replaced by 1/2 in a bounded domain.
pub fn theoretical_rate(gamma: f64, lambda: f64, kind: DomainKind) -> TheoreticalRate {
    let lambda0 = if gamma >= 3.0 { 1.0 + 3.0 / gamma } else { 5.0 / 3.0 + 1.0 / gamma };
    let cap: f64 = match kind {
        DomainKind::Torus => 1.0,
        DomainKind::Box => 0.5,
    };
    let beta = cap.min(2.0 * lambda - 2.0).min(lambda - 3.0 / gamma);
    let status = if gamma < 2.0 || lambda < lambda0 - 1e-12 * lambda0 {
        HypothesisStatus::Outside
    } else if (lambda - lambda0).abs() <= 1e-12 * lambda0 {
        HypothesisStatus::Boundary
    } else {
        HypothesisStatus::Inside
    };
    TheoreticalRate { lambda0, beta, status, initial_condition: (2.0..3.0).contains(&gamma) }
}

/// Least-squares fit of `log error = β log ε + c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub beta: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let mut eps: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 3 {
        return Err(Error::Domain(format!("rate fit needs three distinct ε, got {}", eps.len())));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.0 > 0.0) || !(p.1 > 0.0) || !p.1.is_finite()) {
        return Err(Error::Domain(format!("rate fit needs positive ε and error, got ({}, {})", p.0, p.1)));
    }
    let n = pairs.len() as f64;
    let x: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let beta = sxy / sxx;
    let intercept = my - beta * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(RateFit { beta, intercept, r_squared })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    /// (ε, error) sorted by decreasing ε.
    pub pairs: Vec<(f64, f64)>,
    pub beta_emp: f64,
    pub r_squared: f64,
    pub beta_theory: f64,
    pub lambda0: f64,
    pub status: HypothesisStatus,
    pub initial_condition: bool,
    /// Error decreases strictly with ε.
    pub monotone: bool,
}

impl RateReport {
    /// Upper-bound direction: the measured rate may exceed the theorem's.
    pub fn within_theory(&self, slack: f64) -> bool {
        self.beta_emp >= self.beta_theory - slack
    }
}

pub fn rate_report(pairs: &[(f64, f64)], gamma: f64, lambda: f64, kind: DomainKind) -> Result<RateReport> {
    let fit = fit_rate(pairs)?;
    let theory = theoretical_rate(gamma, lambda, kind);
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(RateReport {
        pairs: sorted,
        beta_emp: fit.beta,
        r_squared: fit.r_squared,
        beta_theory: theory.beta,
        lambda0: theory.lambda0,
        status: theory.status,
        initial_condition: theory.initial_condition,
        monotone,
    })
}
