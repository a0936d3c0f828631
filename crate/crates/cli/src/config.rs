//! Experiment configuration: TOML with a strict schema. Every violation is
//! collected before the config is rejected.

use std::fmt;
use std::path::Path;

use homlab::analysis::{theoretical_rate, HypothesisStatus};
use homlab::cell_problem::{CellOptions, SaddleMethod};
use homlab::geometry::{make_obstacle, Shape};
use homlab::pipeline::FlowDt;
use homlab::{DomainKind, Obstacle, PressureLaw};
use serde::Deserialize;

use crate::expr::Expr;

pub const OUTSIDE_HYPOTHESES: &str = "outside Theorem 1 hypotheses";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Cell,
    Limit,
    Nse,
    Rate,
    Check,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Cell => "cell",
            Kind::Limit => "limit",
            Kind::Nse => "nse",
            Kind::Rate => "rate",
            Kind::Check => "check",
        }
    }

    fn from_name(s: &str) -> Option<Kind> {
        [Kind::Cell, Kind::Limit, Kind::Nse, Kind::Rate, Kind::Check].into_iter().find(|k| k.name() == s)
    }
}

/// The schema as written; every field optional so that defaults and
/// validation happen in one place.
#[derive(Debug, Default, Deserialize)]
struct Raw {
    kind: Option<String>,
    seed: Option<u64>,
    geometry: Option<RawGeometry>,
    physics: Option<RawPhysics>,
    time: Option<RawTime>,
    io: Option<RawIo>,
    solver: Option<RawSolver>,
}

#[derive(Debug, Default, Deserialize)]
struct RawGeometry {
    domain: Option<String>,
    dimension: Option<usize>,
    length: Option<f64>,
    obstacle: Option<RawObstacle>,
    epsilon: Option<Vec<f64>>,
    resolution: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawObstacle {
    shape: Option<String>,
    radius: Option<f64>,
    exponent: Option<f64>,
    semi_axes: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawPhysics {
    gamma: Option<f64>,
    a: Option<f64>,
    lambda: Option<f64>,
    eta_bulk: Option<f64>,
    force: Option<Vec<String>>,
    rho0: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct RawTime {
    t_end: Option<f64>,
    samples: Option<usize>,
    dt: Option<String>,
    safety: Option<f64>,
    step: Option<f64>,
    coefficient: Option<f64>,
    output_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawIo {
    output: Option<String>,
    dump_fields: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
struct RawSolver {
    method: Option<String>,
    div_tol: Option<f64>,
    momentum_tol: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Geometry {
    pub kind: DomainKind,
    pub dim: usize,
    pub length: f64,
    pub shape: Shape,
    pub obstacle: Obstacle,
    /// Strictly decreasing.
    pub epsilon: Vec<f64>,
    /// Grid cells per axis of the reference cell.
    pub resolution: usize,
}

#[derive(Clone, Debug)]
pub struct Physics {
    pub law: PressureLaw,
    pub lambda: f64,
    pub eta: f64,
    /// One expression per axis, `None` when every component is zero.
    pub force: Option<Vec<Expr>>,
    pub rho0: Expr,
    pub force_src: Vec<String>,
    pub rho0_src: String,
}

/// Time-step rule as configured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Adaptive { safety: f64 },
    Fixed { step: f64 },
    Proportional { coefficient: f64 },
}

#[derive(Clone, Debug)]
pub struct Time {
    pub t_end: f64,
    pub samples: usize,
    pub dt: StepRule,
    /// Sorted, within [0, t_end].
    pub output_times: Vec<f64>,
}

impl Time {
    /// The rule the pipeline accepts; fixed steps are rejected at validation
    /// for the kinds that use it.
    pub fn flow_dt(&self) -> FlowDt {
        match self.dt {
            StepRule::Adaptive { safety } => FlowDt::Adaptive { safety },
            StepRule::Proportional { coefficient } => FlowDt::Proportional { coefficient },
            StepRule::Fixed { .. } => FlowDt::Adaptive { safety: 0.9 },
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub geometry: Geometry,
    pub physics: Physics,
    pub time: Time,
    pub output: Option<String>,
    pub dump_fields: bool,
    pub cell_options: CellOptions,
    /// Hypothesis warnings; the run proceeds.
    pub warnings: Vec<String>,
    pub hypotheses: HypothesisStatus,
    /// The file as parsed, echoed into the manifest.
    pub echo: toml::Value,
}

/// All reasons a config was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem{}):", self.violations.len(), if self.violations.len() == 1 { "" } else { "s" })?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn one(msg: impl Into<String>) -> ConfigError {
    ConfigError { violations: vec![msg.into()] }
}

pub fn parse_config(path: &Path, kind: Kind) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| one(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, kind)
}

pub fn parse_config_str(text: &str, kind: Kind) -> Result<ExperimentConfig, ConfigError> {
    let echo: toml::Value = toml::from_str(text).map_err(|e| one(format!("TOML syntax: {}", e.message())))?;
    let mut violations = Vec::new();
    let mut unknown = Vec::new();
    let raw: Raw = serde_ignored::deserialize(echo.clone(), |path| unknown.push(path.to_string().replace(".?", "")))
        .map_err(|e| one(format!("schema: {e}")))?;
    violations.extend(unknown.into_iter().map(|p| format!("unknown key '{p}'")));
    let mut warnings = Vec::new();

    if let Some(k) = &raw.kind {
        match Kind::from_name(k) {
            Some(found) if found != kind => {
                violations.push(format!("config is for '{k}' but the '{}' command was run", kind.name()))
            }
            Some(_) => {}
            None => violations.push(format!("kind '{k}' is not one of cell, limit, nse, rate, check")),
        }
    }

    let geometry = geometry(raw.geometry.unwrap_or_default(), kind, &mut violations);
    let physics = physics(raw.physics.unwrap_or_default(), geometry.as_ref().map(|g| g.dim), &mut violations);
    let time = time(raw.time.unwrap_or_default(), kind, &mut violations);
    let cell_options = solver(raw.solver.unwrap_or_default(), &mut violations);
    let io = raw.io.unwrap_or_default();

    if !violations.is_empty() {
        return Err(ConfigError { violations });
    }
    let (geometry, physics, time, cell_options) = (geometry.unwrap(), physics.unwrap(), time.unwrap(), cell_options.unwrap());
    let gamma = physics.law.gamma();
    let status = theoretical_rate(gamma, physics.lambda, geometry.kind);
    if gamma < 2.0 {
        warnings.insert(0, format!("γ = {gamma} < 2: {OUTSIDE_HYPOTHESES}"));
    } else if status.status == HypothesisStatus::Outside {
        warnings.push(format!("λ = {} below λ₀ = {:.6}: {OUTSIDE_HYPOTHESES}", physics.lambda, status.lambda0));
    }
    let hypotheses = if gamma < 2.0 { HypothesisStatus::Outside } else { status.status };
    Ok(ExperimentConfig {
        kind,
        seed: raw.seed.unwrap_or(0),
        geometry,
        physics,
        time,
        output: io.output,
        dump_fields: io.dump_fields.unwrap_or(false),
        cell_options,
        warnings,
        hypotheses,
        echo,
    })
}

fn geometry(raw: RawGeometry, kind: Kind, v: &mut Vec<String>) -> Option<Geometry> {
    let start = v.len();
    let domain = match raw.domain.as_deref().unwrap_or("torus") {
        "torus" => Some(DomainKind::Torus),
        "box" => Some(DomainKind::Box),
        other => {
            v.push(format!("geometry.domain '{other}' is not 'torus' or 'box'"));
            None
        }
    };
    let dim = raw.dimension.unwrap_or(3);
    if dim != 2 && dim != 3 {
        v.push(format!("geometry.dimension must be 2 or 3, got {dim}"));
    }
    let length = raw.length.unwrap_or(1.0);
    if !(length > 0.0 && length.is_finite()) {
        v.push(format!("geometry.length must be positive, got {length}"));
    }
    let ro = raw.obstacle.unwrap_or_default();
    let shape = match ro.shape.as_deref().unwrap_or("ball") {
        "ball" => {
            if ro.exponent.is_some() || ro.semi_axes.is_some() {
                v.push("geometry.obstacle: 'exponent' and 'semi_axes' belong to shape = \"superellipse\"".into());
            }
            Some(Shape::Ball { radius: ro.radius.unwrap_or(0.5) })
        }
        "superellipse" => {
            if ro.radius.is_some() {
                v.push("geometry.obstacle: 'radius' belongs to shape = \"ball\"".into());
            }
            match (ro.exponent, ro.semi_axes) {
                (Some(exponent), Some(ax)) if ax.len() == dim => {
                    let mut semi_axes = [1.0; 3];
                    semi_axes[..dim].copy_from_slice(&ax);
                    Some(Shape::Superellipse { exponent, semi_axes })
                }
                (Some(_), Some(ax)) => {
                    v.push(format!("geometry.obstacle.semi_axes needs {dim} entries, got {}", ax.len()));
                    None
                }
                _ => {
                    v.push("geometry.obstacle: superellipse needs 'exponent' and 'semi_axes'".into());
                    None
                }
            }
        }
        other => {
            v.push(format!("geometry.obstacle.shape '{other}' is not 'ball' or 'superellipse'"));
            None
        }
    };
    let obstacle = shape.as_ref().and_then(|s| match make_obstacle(s) {
        Ok(o) => Some(o),
        Err(e) => {
            v.push(format!("geometry.obstacle: {e}"));
            None
        }
    });
    let resolution = raw.resolution.unwrap_or(64);
    if resolution < 16 || !resolution.is_multiple_of(2) {
        v.push(format!("geometry.resolution must be an even number ≥ 16, got {resolution}"));
    }
    let epsilon = raw.epsilon.unwrap_or_else(|| vec![0.25]);
    if epsilon.is_empty() {
        v.push("geometry.epsilon is empty".into());
    }
    if let Some(e) = epsilon.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        v.push(format!("geometry.epsilon must be positive, got {e}"));
    }
    if epsilon.windows(2).any(|w| !(w[1] < w[0])) {
        v.push(format!("geometry.epsilon must be strictly decreasing, got {epsilon:?}"));
    }
    if kind == Kind::Rate && epsilon.len() < 3 {
        v.push(format!("a rate sweep needs three or more ε, got {}", epsilon.len()));
    }
    if length > 0.0 {
        for &e in epsilon.iter().filter(|e| **e > 0.0) {
            let ratio = length / (2.0 * e);
            if domain == Some(DomainKind::Torus) && ((ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0) {
                v.push(format!("torus ε = {e}: L/(2ε) = {ratio} is not a positive integer"));
            }
            if domain == Some(DomainKind::Box) && length / e < 3.0 - 1e-9 {
                v.push(format!("box ε = {e}: no cell of size 2ε fits inside (0, {length})"));
            }
            let nglob = ratio * resolution as f64;
            if (nglob - nglob.round()).abs() > 1e-9 * nglob.max(1.0) {
                v.push(format!("ε = {e}: grid spacing 2ε/{resolution} does not divide L = {length}"));
            }
        }
    }
    if v.len() > start {
        return None;
    }
    Some(Geometry { kind: domain?, dim, length, shape: shape?, obstacle: obstacle?, epsilon, resolution })
}

fn physics(raw: RawPhysics, dim: Option<usize>, v: &mut Vec<String>) -> Option<Physics> {
    let start = v.len();
    let gamma = raw.gamma.unwrap_or(2.0);
    let a = raw.a.unwrap_or(1.0);
    let law = match PressureLaw::exploratory(gamma, a) {
        Ok(l) => Some(l),
        Err(e) => {
            v.push(format!("physics: {e}"));
            None
        }
    };
    let lambda = raw.lambda.unwrap_or(2.5);
    if !(lambda > 0.0 && lambda.is_finite()) {
        v.push(format!("physics.lambda must be positive, got {lambda}"));
    }
    let eta = raw.eta_bulk.unwrap_or(0.0);
    if !(eta >= 0.0 && eta.is_finite()) {
        v.push(format!("physics.eta_bulk must be nonnegative, got {eta}"));
    }
    let parse = |key: &str, src: &str, v: &mut Vec<String>| match Expr::parse(src) {
        Ok(e) => {
            if let (Some(d), Some(c)) = (dim, e.max_coord()) {
                if c >= d {
                    v.push(format!("{key}: coordinate {} used in a {d}D run", ["x", "y", "z"][c]));
                }
            }
            Some(e)
        }
        Err(msg) => {
            v.push(format!("{key}: {msg}"));
            None
        }
    };
    let force_src = raw.force.unwrap_or_default();
    if let Some(d) = dim {
        if force_src.len() > d {
            v.push(format!("physics.force has {} components in a {d}D run", force_src.len()));
        }
    }
    let force: Vec<Option<Expr>> = force_src.iter().enumerate().map(|(i, s)| parse(&format!("physics.force[{i}]"), s, v)).collect();
    let rho0_src = raw.rho0.unwrap_or_else(|| "1".into());
    let rho0 = parse("physics.rho0", &rho0_src, v);
    if v.len() > start {
        return None;
    }
    let force: Vec<Expr> = force.into_iter().map(Option::unwrap).collect();
    let zero = force.iter().all(|e| *e == Expr::Const(0.0));
    Some(Physics { law: law?, lambda, eta, force: (!zero).then_some(force), rho0: rho0?, force_src, rho0_src })
}

fn time(raw: RawTime, kind: Kind, v: &mut Vec<String>) -> Option<Time> {
    let start = v.len();
    let t_end = raw.t_end.unwrap_or(0.05);
    if !(t_end > 0.0 && t_end.is_finite()) {
        v.push(format!("time.t_end must be positive, got {t_end}"));
    }
    let samples = raw.samples.unwrap_or(10);
    if samples == 0 {
        v.push("time.samples must be at least 1".into());
    }
    let dt = match raw.dt.as_deref().unwrap_or("adaptive") {
        "adaptive" => {
            let safety = raw.safety.unwrap_or(0.9);
            if !(safety > 0.0 && safety <= 1.0) {
                v.push(format!("time.safety must lie in (0, 1], got {safety}"));
            }
            Some(StepRule::Adaptive { safety })
        }
        "fixed" => match raw.step {
            Some(step) if step > 0.0 => {
                if kind == Kind::Rate {
                    v.push("time.dt = \"fixed\" is not available for rate sweeps (use \"adaptive\" or \"proportional\")".into());
                }
                Some(StepRule::Fixed { step })
            }
            _ => {
                v.push("time.dt = \"fixed\" needs a positive time.step".into());
                None
            }
        },
        "proportional" => match raw.coefficient {
            Some(coefficient) if coefficient > 0.0 => Some(StepRule::Proportional { coefficient }),
            _ => {
                v.push("time.dt = \"proportional\" needs a positive time.coefficient".into());
                None
            }
        },
        other => {
            v.push(format!("time.dt '{other}' is not 'adaptive', 'fixed' or 'proportional'"));
            None
        }
    };
    let output_times = match raw.output_times {
        Some(t) => {
            if t.iter().any(|x| !(*x >= 0.0 && *x <= t_end)) {
                v.push(format!("time.output_times must lie in [0, {t_end}]"));
            }
            if t.windows(2).any(|w| !(w[1] > w[0])) {
                v.push("time.output_times must be strictly increasing".into());
            }
            t
        }
        None => (0..=samples).map(|k| t_end * k as f64 / samples.max(1) as f64).collect(),
    };
    if v.len() > start {
        return None;
    }
    Some(Time { t_end, samples, dt: dt?, output_times })
}

fn solver(raw: RawSolver, v: &mut Vec<String>) -> Option<CellOptions> {
    let start = v.len();
    let mut opts = CellOptions::default();
    match raw.method.as_deref() {
        None | Some("minres") => {}
        Some("uzawa") => opts.method = SaddleMethod::UzawaCg,
        Some(other) => v.push(format!("solver.method '{other}' is not 'minres' or 'uzawa'")),
    }
    if let Some(t) = raw.div_tol {
        if !(t > 0.0) {
            v.push(format!("solver.div_tol must be positive, got {t}"));
        }
        opts.div_tol = t;
    }
    if let Some(t) = raw.momentum_tol {
        if !(t > 0.0) {
            v.push(format!("solver.momentum_tol must be positive, got {t}"));
        }
        opts.momentum_tol = t;
    }
    if let Some(m) = raw.max_iterations {
        if m == 0 {
            v.push("solver.max_iterations must be positive".into());
        }
        opts.max_iterations = m;
    }
    (v.len() == start).then_some(opts)
}
