//! Diagnostics: relative energy and its inequality, error norms, the
//! Poincaré and thickened-trace constants, and convergence rates.

pub mod energy;
pub mod norms;
pub mod poincare;
pub mod rate;
pub mod trace;

pub use energy::{
    check_relen_inequality, relative_dissipation, relative_energy, remainder, CorrectorRates, EnergyReport, RelenTracker,
};
pub use norms::{error_functional, face_field_neg_sobolev, norm_neg_sobolev, ErrorFunctional, NegNorm};
pub use poincare::{poincare_constant, radial_shell_eigenvalue, PoincareReport};
pub use rate::{fit_rate, rate_report, theoretical_rate, HypothesisStatus, RateFit, RateReport, TheoreticalRate};
pub use trace::{thickened_trace_constant, TraceReport, TraceRow};
