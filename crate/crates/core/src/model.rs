//! Declarative model descriptions.
//!
//! Everything else in the crate consumes these values. They are plain data
//! (serde-friendly, immutable after validation) so one [`ValidSpec`] can be
//! shared by any number of concurrent replications.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;

/// Grid resolution used when checking rate bounds and periodicity.
pub const RATE_GRID_POINTS: usize = 10_000;

const RATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("sinusoid rate requires a period (kappa)")]
    MissingPeriod,
    #[error("invalid specification: {0}")]
    Invalid(ValidationReport),
}

/// One broken invariant found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum Violation {
    RateExceedsBound { t: f64, value: f64, lambda_h: f64 },
    NegativeRate { t: f64, value: f64 },
    RateNotPeriodic { t: f64 },
    NonPeriodicRateForCycleRun,
    NonpositiveServiceSupport { detail: String },
    NegativeCost { detail: String },
    InvalidParameter { detail: String },
    InitMismatch { detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RateExceedsBound { t, value, lambda_h } => {
                write!(f, "rate-exceeds-bound: lambda({t}) = {value} > lambda_h = {lambda_h}")
            }
            Violation::NegativeRate { t, value } => {
                write!(f, "negative-rate: lambda({t}) = {value}")
            }
            Violation::RateNotPeriodic { t } => {
                write!(f, "rate-not-periodic: lambda({t}) != lambda({t} + kappa)")
            }
            Violation::NonPeriodicRateForCycleRun => write!(f, "non-periodic-rate-for-cycle-run"),
            Violation::NonpositiveServiceSupport { detail } => {
                write!(f, "nonpositive-service-support: {detail}")
            }
            Violation::NegativeCost { detail } => write!(f, "negative-cost: {detail}"),
            Violation::InvalidParameter { detail } => write!(f, "invalid-parameter: {detail}"),
            Violation::InitMismatch { detail } => write!(f, "init-mismatch: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    fn invalid(&mut self, detail: impl Into<String>) {
        self.push(Violation::InvalidParameter { detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Rate functions
// ---------------------------------------------------------------------------

/// Arrival intensity `lambda(t)` together with its upper bound `lambda_h`
/// and an optional period `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub lambda_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(flatten)]
    pub kind: RateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateKind {
    Constant {
        level: f64,
    },
    /// `base + amplitude * sin(2 pi t / kappa + phase)`.
    Sinusoid {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `[start, level]` pairs. Each level holds until the next start; the
    /// last one holds until `kappa` (periodic) or forever.
    PiecewiseConstant {
        segments: Vec<[f64; 2]>,
    },
}

impl RateFunction {
    pub fn constant(level: f64) -> Self {
        RateFunction { lambda_h: level, kappa: None, kind: RateKind::Constant { level } }
    }

    pub fn constant_bounded(level: f64, lambda_h: f64) -> Self {
        RateFunction { lambda_h, kappa: None, kind: RateKind::Constant { level } }
    }

    pub fn sinusoid(base: f64, amplitude: f64, kappa: f64, lambda_h: f64) -> Self {
        RateFunction {
            lambda_h,
            kappa: Some(kappa),
            kind: RateKind::Sinusoid { base, amplitude, phase: 0.0 },
        }
    }

    pub fn piecewise(segments: Vec<[f64; 2]>, kappa: Option<f64>, lambda_h: f64) -> Self {
        RateFunction { lambda_h, kappa, kind: RateKind::PiecewiseConstant { segments } }
    }

    pub fn with_period(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    /// The homogeneous rate `lambda_h`, keeping the period so the result can
    /// still drive cycle runs.
    pub fn dominating(&self) -> Self {
        RateFunction {
            lambda_h: self.lambda_h,
            kappa: self.kappa,
            kind: RateKind::Constant { level: self.lambda_h },
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.kappa.is_some()
    }

    /// `lambda(t)`.
    pub fn eval(&self, t: f64) -> Result<f64, ModelError> {
        if t < 0.0 || t.is_nan() {
            return Err(ModelError::NegativeTime(t));
        }
        if matches!(self.kind, RateKind::Sinusoid { .. }) && self.kappa.is_none() {
            return Err(ModelError::MissingPeriod);
        }
        Ok(self.value_at(t))
    }

    /// Infallible evaluation for validated rates and `t >= 0`.
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        match &self.kind {
            RateKind::Constant { level } => *level,
            RateKind::Sinusoid { base, amplitude, phase } => {
                let kappa = self.kappa.unwrap_or(1.0);
                base + amplitude * (2.0 * PI * t / kappa + phase).sin()
            }
            RateKind::PiecewiseConstant { segments } => {
                let t = match self.kappa {
                    Some(k) => t.rem_euclid(k),
                    None => t,
                };
                let idx = segments.partition_point(|s| s[0] <= t);
                segments[idx.saturating_sub(1)][1]
            }
        }
    }

    /// Exact supremum and infimum of the rate per shipped family.
    pub fn analytic_range(&self) -> (f64, f64) {
        match &self.kind {
            RateKind::Constant { level } => (*level, *level),
            RateKind::Sinusoid { base, amplitude, .. } => {
                (base - amplitude.abs(), base + amplitude.abs())
            }
            RateKind::PiecewiseConstant { segments } => segments
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[1]), hi.max(s[1]))),
        }
    }

    fn grid_span(&self) -> f64 {
        match (&self.kind, self.kappa) {
            (_, Some(k)) => k,
            (RateKind::PiecewiseConstant { segments }, None) => {
                segments.last().map(|s| s[0] + 1.0).unwrap_or(1.0)
            }
            _ => 1.0,
        }
    }

    fn check(&self, report: &mut ValidationReport) {
        if !(self.lambda_h.is_finite() && self.lambda_h >= 0.0) {
            report.invalid(format!("lambda_h must be finite and >= 0, got {}", self.lambda_h));
            return;
        }
        if let Some(k) = self.kappa {
            if !(k.is_finite() && k > 0.0) {
                report.invalid(format!("kappa must be finite and > 0, got {k}"));
                return;
            }
        }
        match &self.kind {
            RateKind::Constant { level } if !level.is_finite() => {
                report.invalid("constant level must be finite");
                return;
            }
            RateKind::Sinusoid { base, amplitude, phase } => {
                if self.kappa.is_none() {
                    report.invalid("sinusoid rate requires kappa");
                    return;
                }
                if !(base.is_finite() && amplitude.is_finite() && phase.is_finite()) {
                    report.invalid("sinusoid parameters must be finite");
                    return;
                }
            }
            RateKind::PiecewiseConstant { segments } => {
                if segments.is_empty() || segments[0][0] != 0.0 {
                    report.invalid("piecewise-constant segments must start at t = 0");
                    return;
                }
                if segments.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    report.invalid("piecewise-constant starts must strictly increase");
                    return;
                }
                if let Some(k) = self.kappa {
                    if segments.last().map(|s| s[0] >= k).unwrap_or(false) {
                        report.invalid("piecewise-constant starts must lie in [0, kappa)");
                        return;
                    }
                }
                if segments.iter().any(|s| !s[1].is_finite() || !s[0].is_finite()) {
                    report.invalid("piecewise-constant entries must be finite");
                    return;
                }
            }
            _ => {}
        }

        let (lo, hi) = self.analytic_range();
        if hi > self.lambda_h + RATE_TOL {
            report.push(Violation::RateExceedsBound { t: f64::NAN, value: hi, lambda_h: self.lambda_h });
        }
        if lo < -RATE_TOL {
            report.push(Violation::NegativeRate { t: f64::NAN, value: lo });
        }

        let span = self.grid_span();
        let step = span / RATE_GRID_POINTS as f64;
        let mut exceeded = false;
        let mut negative = false;
        let mut aperiodic = false;
        for i in 0..RATE_GRID_POINTS {
            let t = i as f64 * step;
            let v = self.value_at(t);
            if !exceeded && v > self.lambda_h + RATE_TOL {
                exceeded = true;
                if report.violations.iter().all(|v| !matches!(v, Violation::RateExceedsBound { .. })) {
                    report.push(Violation::RateExceedsBound { t, value: v, lambda_h: self.lambda_h });
                }
            }
            if !negative && v < -RATE_TOL {
                negative = true;
                if report.violations.iter().all(|v| !matches!(v, Violation::NegativeRate { .. })) {
                    report.push(Violation::NegativeRate { t, value: v });
                }
            }
            if let Some(k) = self.kappa {
                // Piecewise rates reduce t mod kappa, so this only bites on
                // the sinusoid, where it guards against a bad phase input.
                if !aperiodic && (self.value_at(t + k) - v).abs() > 1e-9 * (1.0 + v.abs()) {
                    aperiodic = true;
                    report.push(Violation::RateNotPeriodic { t });
                }
            }
        }
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RateKind::Constant { level } => write!(f, "constant(level={level})")?,
            RateKind::Sinusoid { base, amplitude, phase } => {
                write!(f, "sinusoid(base={base},amplitude={amplitude},phase={phase})")?
            }
            RateKind::PiecewiseConstant { segments } => {
                f.write_str("piecewise-constant(")?;
                for (i, s) in segments.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}:{}", s[0], s[1])?;
                }
                f.write_str(")")?
            }
        }
        write!(f, ";lambda_h={}", self.lambda_h)?;
        if let Some(k) = self.kappa {
            write!(f, ";kappa={k}")?;
        }
        Ok(())
    }
}

/// `lambda(t)`; see [`RateFunction::eval`].
pub fn eval_rate(rate: &RateFunction, t: f64) -> Result<f64, ModelError> {
    rate.eval(t)
}

// ---------------------------------------------------------------------------
// Marginal laws
// ---------------------------------------------------------------------------

/// A univariate law on `(0, inf]` sampled by inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    /// Rate parameterisation: mean `1 / rate`.
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    /// Survival `(scale / x)^shape` for `x >= scale`.
    Pareto { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    /// Point mass at `+inf`; only meaningful for patience.
    Infinite,
}

impl Marginal {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Marginal::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Marginal::Pareto { shape, scale } => {
                if x < scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
            Marginal::Uniform { low, high } => {
                if x < low {
                    0.0
                } else if x >= high {
                    1.0
                } else {
                    (x - low) / (high - low)
                }
            }
            Marginal::Infinite => 0.0,
        }
    }

    /// Survival `1 - F(x)`, computed without cancellation where possible.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Marginal::Pareto { shape, scale } => {
                if x < scale {
                    1.0
                } else {
                    (scale / x).powf(shape)
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Generalised inverse at `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Marginal::Exponential { rate } => -(-u).ln_1p() / rate,
            Marginal::Deterministic { value } => value,
            Marginal::Pareto { shape, scale } => scale * (-u).ln_1p().mul_add(-1.0 / shape, 0.0).exp(),
            Marginal::Uniform { low, high } => low + (high - low) * u,
            Marginal::Infinite => f64::INFINITY,
        }
    }

    /// `E[X^m]`, `+inf` when it diverges.
    pub fn moment(&self, m: u32) -> f64 {
        let mf = m as f64;
        match *self {
            Marginal::Exponential { rate } => (1..=m).map(|k| k as f64).product::<f64>() / rate.powi(m as i32),
            Marginal::Deterministic { value } => value.powi(m as i32),
            Marginal::Pareto { shape, scale } => {
                if shape > mf {
                    shape * scale.powi(m as i32) / (shape - mf)
                } else {
                    f64::INFINITY
                }
            }
            Marginal::Uniform { low, high } => {
                if high == low {
                    low.powi(m as i32)
                } else {
                    (high.powi(m as i32 + 1) - low.powi(m as i32 + 1)) / ((mf + 1.0) * (high - low))
                }
            }
            Marginal::Infinite => f64::INFINITY,
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Smallest point of the support (`0` when the infimum is not attained).
    pub fn support_min(&self) -> f64 {
        match *self {
            Marginal::Exponential { .. } => 0.0,
            Marginal::Deterministic { value } => value,
            Marginal::Pareto { scale, .. } => scale,
            Marginal::Uniform { low, .. } => low,
            Marginal::Infinite => f64::INFINITY,
        }
    }

    /// Subexponential families among the shipped ones.
    pub fn is_subexponential(&self) -> bool {
        matches!(self, Marginal::Pareto { .. })
    }

    fn check(&self, what: &str, allow_infinite: bool, report: &mut ValidationReport) {
        match *self {
            Marginal::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    report.push(Violation::NonpositiveServiceSupport {
                        detail: format!("{what}: exponential rate must be > 0, got {rate}"),
                    });
                }
            }
            Marginal::Deterministic { value } => {
                if !(value.is_finite() && value > 0.0) {
                    report.push(Violation::NonpositiveServiceSupport {
                        detail: format!("{what}: deterministic value must be > 0, got {value}"),
                    });
                }
            }
            Marginal::Pareto { shape, scale } => {
                if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) {
                    report.push(Violation::NonpositiveServiceSupport {
                        detail: format!("{what}: pareto needs shape > 0 and scale > 0"),
                    });
                }
            }
            Marginal::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low >= 0.0 && high > 0.0 && high >= low) {
                    report.push(Violation::NonpositiveServiceSupport {
                        detail: format!("{what}: uniform needs 0 <= low <= high, high > 0"),
                    });
                }
            }
            Marginal::Infinite => {
                if !allow_infinite {
                    report.invalid(format!("{what}: infinite law not allowed here"));
                }
            }
        }
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marginal::Exponential { rate } => write!(f, "exp(rate={rate})"),
            Marginal::Deterministic { value } => write!(f, "det({value})"),
            Marginal::Pareto { shape, scale } => write!(f, "pareto(shape={shape},scale={scale})"),
            Marginal::Uniform { low, high } => write!(f, "uniform({low},{high})"),
            Marginal::Infinite => write!(f, "inf"),
        }
    }
}

/// Patience law `H`: a base marginal mixed with an atom at `+inf`.
///
/// `H(y) = (1 - atom) * base(y)` is a sub-distribution whenever
/// `atom > 0`; its survival limit is what enters the stability condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patience {
    #[serde(flatten)]
    pub base: Marginal,
    #[serde(default)]
    pub atom_at_infinity: f64,
}

impl Patience {
    pub fn infinite() -> Self {
        Patience { base: Marginal::Infinite, atom_at_infinity: 0.0 }
    }

    pub fn finite(base: Marginal) -> Self {
        Patience { base, atom_at_infinity: 0.0 }
    }

    pub fn with_atom(base: Marginal, atom_at_infinity: f64) -> Self {
        Patience { base, atom_at_infinity }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if matches!(self.base, Marginal::Infinite) {
            return 0.0;
        }
        (1.0 - self.atom_at_infinity) * self.base.cdf(y)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        if matches!(self.base, Marginal::Infinite) {
            return f64::INFINITY;
        }
        let finite_mass = 1.0 - self.atom_at_infinity;
        if u >= finite_mass {
            f64::INFINITY
        } else {
            self.base.quantile(u / finite_mass)
        }
    }

    /// `lim_{y -> inf} (1 - H(y))`.
    pub fn survival_limit(&self) -> f64 {
        if matches!(self.base, Marginal::Infinite) {
            1.0
        } else {
            self.atom_at_infinity
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.base, Marginal::Infinite) || self.atom_at_infinity >= 1.0
    }

    fn check(&self, report: &mut ValidationReport) {
        self.base.check("patience", true, report);
        if !(0.0..=1.0).contains(&self.atom_at_infinity) {
            report.invalid(format!("patience atom_at_infinity must lie in [0, 1], got {}", self.atom_at_infinity));
        }
    }
}

impl fmt::Display for Patience {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base)?;
        if self.atom_at_infinity > 0.0 {
            write!(f, "+atom_inf({})", self.atom_at_infinity)?;
        }
        Ok(())
    }
}

fn infinite_patience() -> Patience {
    Patience::infinite()
}

/// One customer's `(service, patience)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub service: f64,
    pub patience: f64,
}

/// Joint law of `(S, Y)` with support in `(0, inf) x (0, inf]`.
///
/// Every kind draws the pair from two uniforms and uses `S = G^{-1}(u1)`,
/// so variants that only change the patience side keep the service times
/// of a shared stream bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLaw {
    #[serde(flatten)]
    pub kind: JointKind,
    pub service: Marginal,
    #[serde(default = "infinite_patience")]
    pub patience: Patience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JointKind {
    Product,
    /// `Y = H^{-1}(u)`, `S = G^{-1}(u)` on the same uniform.
    Comonotone,
    GaussianCopula { correlation: f64 },
    InfinitePatience,
}

impl JointLaw {
    pub fn product(service: Marginal, patience: Patience) -> Self {
        JointLaw { kind: JointKind::Product, service, patience }
    }

    pub fn comonotone(service: Marginal, patience: Patience) -> Self {
        JointLaw { kind: JointKind::Comonotone, service, patience }
    }

    pub fn gaussian_copula(service: Marginal, patience: Patience, correlation: f64) -> Self {
        JointLaw { kind: JointKind::GaussianCopula { correlation }, service, patience }
    }

    pub fn infinite_patience(service: Marginal) -> Self {
        JointLaw { kind: JointKind::InfinitePatience, service, patience: Patience::infinite() }
    }

    /// Same service marginal, patience `+inf` almost surely.
    pub fn all_join_variant(&self) -> Self {
        JointLaw::infinite_patience(self.service.clone())
    }

    /// Service marginal `G`.
    pub fn g_cdf(&self, s: f64) -> f64 {
        self.service.cdf(s)
    }

    /// Patience marginal `H`.
    pub fn h_cdf(&self, y: f64) -> f64 {
        match self.kind {
            JointKind::InfinitePatience => 0.0,
            _ => self.patience.cdf(y),
        }
    }

    pub fn patience_survival_limit(&self) -> f64 {
        match self.kind {
            JointKind::InfinitePatience => 1.0,
            _ => self.patience.survival_limit(),
        }
    }

    pub fn has_infinite_patience(&self) -> bool {
        matches!(self.kind, JointKind::InfinitePatience) || self.patience.is_infinite()
    }

    pub fn is_product_form(&self) -> bool {
        match self.kind {
            JointKind::Product | JointKind::InfinitePatience => true,
            JointKind::GaussianCopula { correlation } => correlation == 0.0,
            // A degenerate side makes any coupling a product.
            JointKind::Comonotone => {
                self.has_infinite_patience() || matches!(self.service, Marginal::Deterministic { .. })
            }
        }
    }

    /// Map two independent uniforms in `(0, 1)` to a draw of `(S, Y)`.
    pub fn sample_from_uniforms(&self, u1: f64, u2: f64) -> Mark {
        let service = self.service.quantile(u1);
        let patience = match self.kind {
            JointKind::Product => self.patience.quantile(u2),
            JointKind::Comonotone => self.patience.quantile(u1),
            JointKind::GaussianCopula { correlation } => {
                let normal = standard_normal();
                let z1 = normal.inverse_cdf(u1);
                let z2 = correlation * z1 + (1.0 - correlation * correlation).sqrt() * normal.inverse_cdf(u2);
                let v = normal.cdf(z2).clamp(f64::MIN_POSITIVE, 1.0);
                self.patience.quantile(v)
            }
            JointKind::InfinitePatience => f64::INFINITY,
        };
        Mark { service, patience }
    }

    fn check(&self, report: &mut ValidationReport) {
        self.service.check("service", false, report);
        if !matches!(self.kind, JointKind::InfinitePatience) {
            self.patience.check(report);
        }
        if let JointKind::GaussianCopula { correlation } = self.kind {
            if !(-1.0..=1.0).contains(&correlation) {
                report.invalid(format!("copula correlation must lie in [-1, 1], got {correlation}"));
            }
        }
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

impl fmt::Display for JointLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            JointKind::Product => write!(f, "product(G={},H={})", self.service, self.patience),
            JointKind::Comonotone => write!(f, "comonotone(G={},H={})", self.service, self.patience),
            JointKind::GaussianCopula { correlation } => write!(
                f,
                "gaussian-copula(G={},H={},rho={correlation})",
                self.service, self.patience
            ),
            JointKind::InfinitePatience => write!(f, "infinite-patience(G={})", self.service),
        }
    }
}

// ---------------------------------------------------------------------------
// Cost functions
// ---------------------------------------------------------------------------

/// A non-negative lower semi-continuous holding cost `g` from a fixed menu
/// of families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    #[serde(flatten)]
    pub kind: CostKind,
    /// Integrate with the closed-form antiderivative; `false` forces
    /// adaptive quadrature.
    #[serde(default = "yes")]
    pub closed_form: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostKind {
    Constant { value: f64 },
    /// `w^exponent`, with `0^0 = 1`.
    Power { exponent: f64 },
    /// `exp(-alpha w)`.
    ExpDecay { alpha: f64 },
    /// `1_{(threshold, inf)}(w)`.
    OpenRayIndicator { threshold: f64 },
    /// Linear interpolation through `[w, g]` knots, flat outside them.
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl CostFunction {
    pub fn new(kind: CostKind) -> Self {
        CostFunction { kind, closed_form: true }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(CostKind::Constant { value })
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn power(exponent: f64) -> Self {
        Self::new(CostKind::Power { exponent })
    }

    pub fn identity() -> Self {
        Self::power(1.0)
    }

    pub fn exp_decay(alpha: f64) -> Self {
        Self::new(CostKind::ExpDecay { alpha })
    }

    pub fn indicator_above(threshold: f64) -> Self {
        Self::new(CostKind::OpenRayIndicator { threshold })
    }

    pub fn piecewise_linear(points: Vec<[f64; 2]>) -> Self {
        Self::new(CostKind::PiecewiseLinear { points })
    }

    pub fn quadrature_only(mut self) -> Self {
        self.closed_form = false;
        self
    }

    pub fn eval(&self, w: f64) -> f64 {
        match &self.kind {
            CostKind::Constant { value } => *value,
            CostKind::Power { exponent } => w.powf(*exponent),
            CostKind::ExpDecay { alpha } => (-alpha * w).exp(),
            CostKind::OpenRayIndicator { threshold } => {
                if w > *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            CostKind::PiecewiseLinear { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if w <= first[0] {
                    return first[1];
                }
                if w >= last[0] {
                    return last[1];
                }
                let i = points.partition_point(|p| p[0] <= w);
                let (a, b) = (points[i - 1], points[i]);
                a[1] + (b[1] - a[1]) * (w - a[0]) / (b[0] - a[0])
            }
        }
    }

    /// `g(0)`.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            CostKind::Constant { value } => Some(value),
            _ => None,
        }
    }

    /// `int_0^w g(u) du`, when the closed form is enabled.
    pub fn antiderivative(&self, w: f64) -> Option<f64> {
        if !self.closed_form {
            return None;
        }
        Some(match &self.kind {
            CostKind::Constant { value } => value * w,
            CostKind::Power { exponent } => w.powf(exponent + 1.0) / (exponent + 1.0),
            CostKind::ExpDecay { alpha } => {
                if *alpha == 0.0 {
                    w
                } else {
                    -(-alpha * w).exp_m1() / alpha
                }
            }
            CostKind::OpenRayIndicator { threshold } => (w - threshold).max(0.0),
            CostKind::PiecewiseLinear { points } => {
                let mut acc = 0.0;
                let mut prev_w = 0.0;
                let mut prev_g = self.eval(0.0);
                for p in points.iter().filter(|p| p[0] > 0.0) {
                    if p[0] >= w {
                        break;
                    }
                    acc += 0.5 * (prev_g + p[1]) * (p[0] - prev_w);
                    prev_w = p[0];
                    prev_g = p[1];
                }
                acc + 0.5 * (prev_g + self.eval(w)) * (w - prev_w)
            }
        })
    }

    /// Points where `g` is not smooth; quadrature splits there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            CostKind::OpenRayIndicator { threshold } => vec![*threshold],
            CostKind::PiecewiseLinear { points } => points.iter().map(|p| p[0]).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        match &self.kind {
            CostKind::Constant { .. } | CostKind::OpenRayIndicator { .. } => true,
            CostKind::Power { exponent } => *exponent >= 0.0,
            CostKind::ExpDecay { alpha } => *alpha == 0.0,
            CostKind::PiecewiseLinear { points } => points.windows(2).all(|w| w[1][1] >= w[0][1]),
        }
    }

    pub fn check(&self, report: &mut ValidationReport) {
        match &self.kind {
            CostKind::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    report.push(Violation::NegativeCost { detail: format!("constant {value}") });
                }
            }
            CostKind::Power { exponent } => {
                if !(exponent.is_finite() && *exponent >= 0.0) {
                    report.push(Violation::NegativeCost {
                        detail: format!("power exponent must be >= 0, got {exponent}"),
                    });
                }
            }
            CostKind::ExpDecay { alpha } => {
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    report.invalid(format!("exp-decay alpha must be >= 0, got {alpha}"));
                }
            }
            CostKind::OpenRayIndicator { threshold } => {
                if !(threshold.is_finite() && *threshold >= 0.0) {
                    report.invalid(format!("indicator threshold must be >= 0, got {threshold}"));
                }
            }
            CostKind::PiecewiseLinear { points } => {
                if points.is_empty() {
                    report.invalid("piecewise-linear cost needs at least one knot");
                } else if points[0][0] < 0.0 || points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    report.invalid("piecewise-linear knots must start at w >= 0 and strictly increase");
                } else if let Some(p) = points.iter().find(|p| !(p[1] >= 0.0 && p[1].is_finite())) {
                    report.push(Violation::NegativeCost { detail: format!("g({}) = {}", p[0], p[1]) });
                }
            }
        }
    }
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CostKind::Constant { value } => write!(f, "constant({value})")?,
            CostKind::Power { exponent } => write!(f, "power({exponent})")?,
            CostKind::ExpDecay { alpha } => write!(f, "exp-decay({alpha})")?,
            CostKind::OpenRayIndicator { threshold } => write!(f, "indicator-above({threshold})")?,
            CostKind::PiecewiseLinear { points } => {
                f.write_str("piecewise-linear(")?;
                for (i, p) in points.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}:{}", p[0], p[1])?;
                }
                f.write_str(")")?
            }
        }
        if !self.closed_form {
            f.write_str("[quadrature]")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Queue specification
// ---------------------------------------------------------------------------

/// Waiting-room size, excluding the position in service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Room {
    Finite(u32),
    Infinite,
}

impl Room {
    /// Whether an arrival finding `present` customers has a free place.
    pub fn admits(self, present: usize) -> bool {
        match self {
            Room::Finite(k) => present < k as usize + 1,
            Room::Infinite => true,
        }
    }
}

impl fmt::Display for Room {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Room::Finite(k) => write!(f, "{k}"),
            Room::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RoomRepr {
    Finite(u32),
    Named(String),
}

impl Serialize for Room {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Room::Finite(k) => RoomRepr::Finite(*k),
            Room::Infinite => RoomRepr::Named("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Room {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RoomRepr::deserialize(d)? {
            RoomRepr::Finite(k) => Ok(Room::Finite(k)),
            RoomRepr::Named(s) if matches!(s.as_str(), "inf" | "infinite" | "unbounded") => Ok(Room::Infinite),
            RoomRepr::Named(s) => Err(serde::de::Error::custom(format!("unknown room size {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Discipline {
    /// First-come first-served, unlimited waiting room.
    Fcfs,
    /// Preemptive-resume last-come first-served with a waiting room.
    LcfsPr { room: Room },
}

impl Discipline {
    pub fn room(&self) -> Room {
        match self {
            Discipline::Fcfs => Room::Infinite,
            Discipline::LcfsPr { room } => *room,
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discipline::Fcfs => f.write_str("fcfs"),
            Discipline::LcfsPr { room } => write!(f, "lcfs-pr(k={room})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Init {
    /// One customer in service with remaining work `x`.
    Workload { x: f64 },
    /// One customer whose work is drawn from the service law.
    FromService,
    Empty,
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Workload { x } => write!(f, "x={x}"),
            Init::FromService => f.write_str("x~G"),
            Init::Empty => f.write_str("empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSpec {
    pub rate: RateFunction,
    pub joint: JointLaw,
    pub discipline: Discipline,
    pub init: Init,
}

impl QueueSpec {
    pub fn new(rate: RateFunction, joint: JointLaw, discipline: Discipline, init: Init) -> Self {
        QueueSpec { rate, joint, discipline, init }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_discipline(mut self, discipline: Discipline) -> Self {
        self.discipline = discipline;
        self
    }

    pub fn with_rate(mut self, rate: RateFunction) -> Self {
        self.rate = rate;
        self
    }

    pub fn with_joint(mut self, joint: JointLaw) -> Self {
        self.joint = joint;
        self
    }
}

impl fmt::Display for QueueSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rate={} joint={} discipline={} init={}",
            self.rate, self.joint, self.discipline, self.init
        )
    }
}

/// What a validated spec will be used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    BusyPeriod,
    Cycle,
    Horizon,
}

/// A [`QueueSpec`] whose structural invariants have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidSpec(QueueSpec);

impl ValidSpec {
    pub fn spec(&self) -> &QueueSpec {
        &self.0
    }

    pub fn into_inner(self) -> QueueSpec {
        self.0
    }

    pub fn with_init(&self, init: Init) -> Result<Self, ValidationReport> {
        let spec = self.0.clone().with_init(init);
        let mut report = ValidationReport::default();
        check_init(&spec.init, &mut report);
        if report.is_empty() {
            Ok(ValidSpec(spec))
        } else {
            Err(report)
        }
    }

    pub fn with_discipline(&self, discipline: Discipline) -> Self {
        ValidSpec(self.0.clone().with_discipline(discipline))
    }

    /// Same spec with the rate replaced by the constant `lambda_h`.
    pub fn dominating(&self) -> Self {
        let rate = self.0.rate.dominating();
        ValidSpec(self.0.clone().with_rate(rate))
    }

    /// Same spec where every customer joins (patience `+inf`), keeping the
    /// service draws of a shared stream.
    pub fn all_join(&self) -> Self {
        let joint = self.0.joint.all_join_variant();
        ValidSpec(self.0.clone().with_joint(joint))
    }
}

impl Deref for ValidSpec {
    type Target = QueueSpec;

    fn deref(&self) -> &QueueSpec {
        &self.0
    }
}

fn check_init(init: &Init, report: &mut ValidationReport) {
    if let Init::Workload { x } = init {
        if !(x.is_finite() && *x > 0.0) {
            report.push(Violation::InitMismatch { detail: format!("initial workload must be > 0, got {x}") });
        }
    }
}

/// Check every invariant of `spec`, plus the run-kind preconditions.
pub fn validate_spec(spec: QueueSpec, run: RunKind) -> Result<ValidSpec, ValidationReport> {
    let mut report = ValidationReport::default();
    spec.rate.check(&mut report);
    spec.joint.check(&mut report);
    check_init(&spec.init, &mut report);
    match run {
        RunKind::BusyPeriod => {
            if spec.init == Init::Empty {
                report.push(Violation::InitMismatch { detail: "busy-period runs need a nonempty initial state".into() });
            }
        }
        RunKind::Cycle => {
            if !spec.rate.is_periodic() {
                report.push(Violation::NonPeriodicRateForCycleRun);
            }
            if spec.init != Init::Empty {
                report.push(Violation::InitMismatch { detail: "cycle runs start from an empty system".into() });
            }
        }
        RunKind::Horizon => {}
    }
    if report.is_empty() {
        Ok(ValidSpec(spec))
    } else {
        Err(report)
    }
}

/// Validate a cost function on its own.
pub fn validate_cost(cost: &CostFunction) -> Result<(), ValidationReport> {
    let mut report = ValidationReport::default();
    cost.check(&mut report);
    if report.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> Marginal {
        Marginal::Exponential { rate: 1.0 }
    }

    fn basic_spec() -> QueueSpec {
        QueueSpec::new(
            RateFunction::constant(0.5),
            JointLaw::product(exp1(), Patience::finite(exp1())),
            Discipline::Fcfs,
            Init::Workload { x: 1.0 },
        )
    }

    #[test]
    fn constant_rate_spec_is_valid() {
        assert!(validate_spec(basic_spec(), RunKind::BusyPeriod).is_ok());
    }

    #[test]
    fn sinusoid_above_bound_is_rejected() {
        let spec = basic_spec().with_rate(RateFunction::sinusoid(0.5, 0.6, 1.0, 1.0));
        let err = validate_spec(spec, RunKind::BusyPeriod).unwrap_err();
        assert!(err.violations.iter().any(|v| matches!(v, Violation::RateExceedsBound { .. })));
    }

    #[test]
    fn cycle_run_needs_period() {
        let spec = basic_spec().with_init(Init::Empty);
        let err = validate_spec(spec, RunKind::Cycle).unwrap_err();
        assert_eq!(err.violations, vec![Violation::NonPeriodicRateForCycleRun]);
    }

    #[test]
    fn busy_period_needs_customer() {
        let spec = basic_spec().with_init(Init::Empty);
        assert!(validate_spec(spec, RunKind::BusyPeriod).is_err());
    }

    #[test]
    fn nonpositive_service_is_rejected() {
        let spec = basic_spec().with_joint(JointLaw::product(
            Marginal::Deterministic { value: 0.0 },
            Patience::infinite(),
        ));
        let err = validate_spec(spec, RunKind::BusyPeriod).unwrap_err();
        assert!(matches!(err.violations[0], Violation::NonpositiveServiceSupport { .. }));
    }

    #[test]
    fn negative_cost_is_rejected() {
        let err = validate_cost(&CostFunction::constant(-1.0)).unwrap_err();
        assert!(matches!(err.violations[0], Violation::NegativeCost { .. }));
        let err = validate_cost(&CostFunction::piecewise_linear(vec![[0.0, 1.0], [1.0, -0.5]])).unwrap_err();
        assert!(matches!(err.violations[0], Violation::NegativeCost { .. }));
    }

    #[test]
    fn eval_rate_examples() {
        assert_eq!(RateFunction::constant(0.7).eval(12.3).unwrap(), 0.7);
        let s = RateFunction::sinusoid(0.4, 0.2, 1.0, 0.6);
        assert!((s.eval(0.25).unwrap() - 0.6).abs() < 1e-15);
        let p = RateFunction::piecewise(vec![[0.0, 0.2], [1.0, 0.9]], Some(2.0), 1.0);
        assert_eq!(p.eval(3.5).unwrap(), 0.9);
        assert_eq!(p.eval(2.5).unwrap(), 0.2);
        assert_eq!(p.eval(1.0).unwrap(), 0.9);
        assert_eq!(s.eval(-1.0), Err(ModelError::NegativeTime(-1.0)));
    }

    #[test]
    fn aperiodic_piecewise_holds_last_level() {
        let p = RateFunction::piecewise(vec![[0.0, 0.2], [1.0, 0.9]], None, 1.0);
        assert_eq!(p.eval(100.0).unwrap(), 0.9);
        assert_eq!(p.eval(0.5).unwrap(), 0.2);
    }

    #[test]
    fn patience_atom_gives_subdistribution() {
        let h = Patience::with_atom(exp1(), 0.4);
        assert!((h.cdf(1e9) - 0.6).abs() < 1e-12);
        assert_eq!(h.survival_limit(), 0.4);
        assert_eq!(h.quantile(0.7), f64::INFINITY);
        assert!(h.quantile(0.3).is_finite());
    }

    #[test]
    fn marginal_moments() {
        assert_eq!(exp1().moment(2), 2.0);
        assert_eq!(Marginal::Pareto { shape: 1.5, scale: 1.0 }.moment(1), 3.0);
        assert_eq!(Marginal::Pareto { shape: 1.5, scale: 1.0 }.moment(2), f64::INFINITY);
        assert!((Marginal::Uniform { low: 0.0, high: 2.0 }.moment(2) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn comonotone_scaling_is_exact() {
        let j = JointLaw::comonotone(exp1(), Patience::finite(Marginal::Exponential { rate: 0.5 }));
        for &u in &[1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-12] {
            let m = j.sample_from_uniforms(u, 0.3);
            assert_eq!(m.patience, 2.0 * m.service);
        }
    }

    #[test]
    fn piecewise_linear_cost_antiderivative() {
        let g = CostFunction::piecewise_linear(vec![[0.0, 0.0], [1.0, 2.0], [3.0, 2.0]]);
        assert!((g.antiderivative(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((g.antiderivative(3.0).unwrap() - 5.0).abs() < 1e-15);
        assert!((g.antiderivative(4.0).unwrap() - 7.0).abs() < 1e-15);
        assert!((g.antiderivative(0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn room_admission() {
        assert!(!Room::Finite(0).admits(1));
        assert!(Room::Finite(2).admits(2));
        assert!(!Room::Finite(2).admits(3));
        assert!(Room::Infinite.admits(usize::MAX));
    }

    #[test]
    fn canonical_rendering_is_stable() {
        let text = basic_spec().to_string();
        assert_eq!(
            text,
            "rate=constant(level=0.5);lambda_h=0.5 joint=product(G=exp(rate=1),H=exp(rate=1)) discipline=fcfs init=x=1"
        );
    }
}
