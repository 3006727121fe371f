//! Non-seasonal exponential smoothing in innovations state-space form.
//!
//! Six model classes are supported: additive or multiplicative errors
//! combined with no trend, additive trend or damped additive trend. They are
//! used for one-step-ahead forecasts of annual series (yearly means and
//! yearly dispersions), where a seasonal component has no meaning.
//!
//! Parameters are estimated by maximizing the Gaussian innovations
//! likelihood with the innovation variance concentrated out. The optimizer
//! is derivative-free and deterministic: a fixed multi-start grid followed by
//! coordinate-wise golden-section refinement.

use std::fmt;

use thiserror::Error;

pub const MIN_LENGTH: usize = 4;

/// Lower bound of the damping parameter.
pub const PHI_MIN: f64 = 0.8;
/// Upper bound of the damping parameter.
pub const PHI_MAX: f64 = 0.98;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EtsError {
    #[error("series too short for ETS: {len} observations, need at least {MIN_LENGTH}")]
    TooShort { len: usize },
    #[error("series contains a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("multiplicative errors need strictly positive data (position {0})")]
    NonPositive(usize),
    #[error("no admissible parameters for {0}")]
    NoAdmissibleFit(EtsSpec),
    #[error("every ETS model failed: {}", .0.iter().map(|(s, e)| format!("{s}: {e}")).collect::<Vec<_>>().join("; "))]
    AllFailed(Vec<(EtsSpec, String)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrendKind {
    None,
    Additive,
    DampedAdditive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EtsSpec {
    pub error: ErrorKind,
    pub trend: TrendKind,
}

impl EtsSpec {
    /// All admissible specifications in enumeration order.
    pub const ALL: [EtsSpec; 6] = [
        EtsSpec::new(ErrorKind::Additive, TrendKind::None),
        EtsSpec::new(ErrorKind::Additive, TrendKind::Additive),
        EtsSpec::new(ErrorKind::Additive, TrendKind::DampedAdditive),
        EtsSpec::new(ErrorKind::Multiplicative, TrendKind::None),
        EtsSpec::new(ErrorKind::Multiplicative, TrendKind::Additive),
        EtsSpec::new(ErrorKind::Multiplicative, TrendKind::DampedAdditive),
    ];

    pub const fn new(error: ErrorKind, trend: TrendKind) -> Self {
        Self { error, trend }
    }

    pub fn has_trend(&self) -> bool {
        self.trend != TrendKind::None
    }

    /// Number of estimated quantities: smoothing parameters, initial states
    /// and the innovation variance.
    pub fn n_params(&self) -> usize {
        match self.trend {
            TrendKind::None => 3,
            TrendKind::Additive => 5,
            TrendKind::DampedAdditive => 6,
        }
    }
}

impl fmt::Display for EtsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self.error {
            ErrorKind::Additive => "A",
            ErrorKind::Multiplicative => "M",
        };
        let t = match self.trend {
            TrendKind::None => "N",
            TrendKind::Additive => "A",
            TrendKind::DampedAdditive => "Ad",
        };
        write!(f, "ETS({e},{t},N)")
    }
}

/// Smoothing parameters and initial states of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtsParams {
    pub alpha: f64,
    pub beta_trend: f64,
    pub phi: f64,
    pub initial_level: f64,
    pub initial_trend: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtsFit {
    pub spec: EtsSpec,
    pub alpha: f64,
    /// Zero for models without trend.
    pub beta_trend: f64,
    /// One for undamped models.
    pub phi: f64,
    pub initial_level: f64,
    pub initial_trend: f64,
    pub terminal_level: f64,
    pub terminal_trend: f64,
    /// Maximum-likelihood innovation variance (floored, see [`variance_floor`]).
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
    pub n_obs: usize,
}

impl EtsFit {
    /// Runs the model with fixed parameters over `series` and records the
    /// terminal state and likelihood.
    pub fn from_params(spec: EtsSpec, params: EtsParams, series: &[f64]) -> Result<Self, EtsError> {
        validate(series, spec)?;
        let params = canonical(spec, params);
        let run = filter(series, spec, &params).ok_or(EtsError::NoAdmissibleFit(spec))?;
        let n_params = spec.n_params();
        Ok(Self {
            spec,
            alpha: params.alpha,
            beta_trend: params.beta_trend,
            phi: params.phi,
            initial_level: params.initial_level,
            initial_trend: params.initial_trend,
            terminal_level: run.level,
            terminal_trend: run.trend,
            sigma2: run.sigma2,
            log_likelihood: run.log_likelihood,
            aic: -2.0 * run.log_likelihood + 2.0 * n_params as f64,
            n_params,
            n_obs: series.len(),
        })
    }

    pub fn params(&self) -> EtsParams {
        EtsParams {
            alpha: self.alpha,
            beta_trend: self.beta_trend,
            phi: self.phi,
            initial_level: self.initial_level,
            initial_trend: self.initial_trend,
        }
    }
}

/// One-step-ahead point forecast from the terminal state.
pub fn forecast_one(fit: &EtsFit) -> f64 {
    match fit.spec.trend {
        TrendKind::None => fit.terminal_level,
        TrendKind::Additive => fit.terminal_level + fit.terminal_trend,
        TrendKind::DampedAdditive => fit.terminal_level + fit.phi * fit.terminal_trend,
    }
}

fn validate(series: &[f64], spec: EtsSpec) -> Result<(), EtsError> {
    if series.len() < MIN_LENGTH {
        return Err(EtsError::TooShort { len: series.len() });
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(EtsError::NonFinite(i));
    }
    if spec.error == ErrorKind::Multiplicative {
        if let Some(i) = series.iter().position(|v| *v <= 0.0) {
            return Err(EtsError::NonPositive(i));
        }
    }
    Ok(())
}

/// Zeroes the parameters a spec does not use.
fn canonical(spec: EtsSpec, mut p: EtsParams) -> EtsParams {
    match spec.trend {
        TrendKind::None => {
            p.beta_trend = 0.0;
            p.initial_trend = 0.0;
            p.phi = 1.0;
        }
        TrendKind::Additive => p.phi = 1.0,
        TrendKind::DampedAdditive => {}
    }
    p
}

/// Smallest innovation variance used in the likelihood. Exact fits would
/// otherwise have unbounded likelihood. For multiplicative errors the
/// innovations are relative, so the floor is relative too; the two floors
/// give identical likelihoods on a constant series.
pub fn variance_floor(series: &[f64], error: ErrorKind) -> f64 {
    match error {
        ErrorKind::Additive => {
            f64::EPSILON * series.iter().map(|v| v * v).sum::<f64>() / series.len() as f64
        }
        ErrorKind::Multiplicative => f64::EPSILON,
    }
    .max(f64::MIN_POSITIVE)
}

struct FilterRun {
    level: f64,
    trend: f64,
    sigma2: f64,
    log_likelihood: f64,
}

fn filter(series: &[f64], spec: EtsSpec, p: &EtsParams) -> Option<FilterRun> {
    let mut level = p.initial_level;
    let mut trend = p.initial_trend;
    let mut sum_sq = 0.0;
    let mut sum_log_pred = 0.0;
    for &y in series {
        let pred = level + p.phi * trend;
        match spec.error {
            ErrorKind::Additive => {
                let e = y - pred;
                level = pred + p.alpha * e;
                trend = p.phi * trend + p.beta_trend * e;
                sum_sq += e * e;
            }
            ErrorKind::Multiplicative => {
                if pred.is_nan() || pred <= 0.0 {
                    return None;
                }
                let eps = (y - pred) / pred;
                level = pred * (1.0 + p.alpha * eps);
                trend = p.phi * trend + p.beta_trend * pred * eps;
                sum_sq += eps * eps;
                sum_log_pred += pred.ln();
            }
        }
        if !(level.is_finite() && trend.is_finite()) {
            return None;
        }
    }
    let n = series.len() as f64;
    let sigma2 = (sum_sq / n).max(variance_floor(series, spec.error));
    let log_likelihood =
        -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - sum_log_pred;
    log_likelihood.is_finite().then_some(FilterRun {
        level,
        trend,
        sigma2,
        log_likelihood,
    })
}

/// Search coordinates. `beta_ratio` expresses the trend smoothing parameter
/// as a fraction of alpha so the constraint `beta <= alpha` is a box.
#[derive(Debug, Clone, Copy)]
struct Point {
    alpha: f64,
    beta_ratio: f64,
    phi: f64,
    level: f64,
    trend: f64,
}

impl Point {
    fn params(&self) -> EtsParams {
        EtsParams {
            alpha: self.alpha,
            beta_trend: self.alpha * self.beta_ratio,
            phi: self.phi,
            initial_level: self.level,
            initial_trend: self.trend,
        }
    }

    fn get(&self, i: usize) -> f64 {
        [
            self.alpha,
            self.beta_ratio,
            self.phi,
            self.level,
            self.trend,
        ][i]
    }

    fn with(mut self, i: usize, v: f64) -> Self {
        match i {
            0 => self.alpha = v,
            1 => self.beta_ratio = v,
            2 => self.phi = v,
            3 => self.level = v,
            _ => self.trend = v,
        }
        self
    }
}

const ALPHA_GRID: [f64; 5] = [0.05, 0.2, 0.5, 0.8, 0.95];
const BETA_RATIO_GRID: [f64; 3] = [0.05, 0.3, 0.7];
const PHI_GRID: [f64; 3] = [0.8, 0.9, 0.98];
const SWEEPS: usize = 6;
const GOLDEN_ITERS: usize = 40;

/// Maximum-likelihood fit of one specification.
pub fn fit_ets(series: &[f64], spec: EtsSpec) -> Result<EtsFit, EtsError> {
    validate(series, spec)?;
    let n = series.len();
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = series.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let spread = (hi - lo).max(1e-6 * scale).max(1e-12);

    let mean_diff = (series[n - 1] - series[0]) / (n - 1) as f64;
    let (level0, trend0) = if spec.has_trend() {
        (series[0] - mean_diff, mean_diff)
    } else {
        (series[0], 0.0)
    };

    let mut bounds: Vec<(usize, f64, f64)> = vec![(0, 0.0, 1.0), (3, lo - spread, hi + spread)];
    if spec.has_trend() {
        bounds.push((1, 0.0, 1.0));
        bounds.push((4, -spread, spread));
    }
    if spec.trend == TrendKind::DampedAdditive {
        bounds.push((2, PHI_MIN, PHI_MAX));
    }

    let objective = |p: &Point| -> f64 {
        filter(series, spec, &canonical(spec, p.params()))
            .map_or(f64::INFINITY, |r| -r.log_likelihood)
    };

    let mut starts = Vec::new();
    let phis: &[f64] = if spec.trend == TrendKind::DampedAdditive {
        &PHI_GRID
    } else {
        &[1.0]
    };
    let ratios: &[f64] = if spec.has_trend() {
        &BETA_RATIO_GRID
    } else {
        &[0.0]
    };
    for &alpha in &ALPHA_GRID {
        for &beta_ratio in ratios {
            for &phi in phis {
                starts.push(Point {
                    alpha,
                    beta_ratio,
                    phi,
                    level: level0,
                    trend: trend0,
                });
            }
        }
    }
    if spec.has_trend() {
        // The no-trend optimum is a point of this model (zero trend, no trend
        // smoothing), so starting there keeps the likelihood nested.
        if let Ok(base) = fit_ets(series, EtsSpec::new(spec.error, TrendKind::None)) {
            let phi = if spec.trend == TrendKind::DampedAdditive {
                PHI_MAX
            } else {
                1.0
            };
            starts.push(Point {
                alpha: base.alpha,
                beta_ratio: 0.0,
                phi,
                level: base.initial_level,
                trend: 0.0,
            });
        }
    }

    let mut best: Option<(Point, f64)> = None;
    for p in starts {
        let v = objective(&p);
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((p, v));
        }
    }
    let (mut point, mut value) = best.ok_or(EtsError::NoAdmissibleFit(spec))?;

    for _ in 0..SWEEPS {
        let before = value;
        for &(coord, lo, hi) in &bounds {
            let (x, v) = golden_section(|x| objective(&point.with(coord, x)), lo, hi);
            if v < value {
                point = point.with(coord, x);
                value = v;
            }
            // Bounds themselves are worth a look: golden section never
            // evaluates the endpoints.
            for edge in [lo, hi] {
                let cand = point.with(coord, edge);
                let v = objective(&cand);
                if v < value {
                    point = cand;
                    value = v;
                }
            }
            debug_assert!(point.get(coord) >= lo && point.get(coord) <= hi);
        }
        if before - value <= 1e-12 * value.abs().max(1.0) {
            break;
        }
    }

    EtsFit::from_params(spec, point.params(), series)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Fits every admissible specification, in enumeration order.
pub fn fit_all(series: &[f64]) -> Vec<(EtsSpec, Result<EtsFit, EtsError>)> {
    EtsSpec::ALL
        .iter()
        .map(|&spec| (spec, fit_ets(series, spec)))
        .collect()
}

/// The fit with minimal AIC. Ties go to fewer parameters, then to
/// enumeration order.
pub fn select_by_aic(series: &[f64]) -> Result<EtsFit, EtsError> {
    if series.len() < MIN_LENGTH {
        return Err(EtsError::TooShort { len: series.len() });
    }
    let mut best: Option<EtsFit> = None;
    let mut failures = Vec::new();
    for (spec, fit) in fit_all(series) {
        match fit {
            Ok(fit) => {
                let better = best.as_ref().is_none_or(|b| {
                    fit.aic < b.aic || (fit.aic == b.aic && fit.n_params < b.n_params)
                });
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => failures.push((spec, e.to_string())),
        }
    }
    best.ok_or(EtsError::AllFailed(failures))
}
