//! End-to-end forecasting: normalization, ETS forecasts of the yearly mean
//! and dispersion, the RD-LSTM ensemble on the normalized series, and
//! denormalization of the ensemble forecast.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Corpus, MonthlyDemandSeries, MONTHS_PER_YEAR};
use crate::ensemble::{run_ensemble, EnsembleConfig, EnsembleError, EnsembleForecast};
use crate::ets::{self, forecast_one, select_by_aic, EtsSpec};
use crate::metrics::{compute_metrics, EvalReport, MetricsError};
use crate::preprocess::{denormalize, normalize_series, NormalizedSeries, YearlyStats};
use crate::seasonal::{deseasonalize, unroll_seasonal, SeasonalState};
use crate::training::{TrainConfig, MIN_TRAINING_YEARS};

/// Relative floor for forecast dispersions: `max(sigma_hat, 1e-9 * mean_hat)`.
pub const DISPERSION_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("stage '{stage}' failed for series '{series}': {message}")]
    Stage {
        stage: &'static str,
        series: String,
        message: String,
    },
    #[error("stage 'ensemble' failed: {0}")]
    Ensemble(#[from] EnsembleError),
}

impl PipelineError {
    fn stage(stage: &'static str, series: &str, err: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            series: series.to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    /// Trailing whole years withheld from training; the first of them is
    /// forecast and scored.
    pub holdout_years: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            holdout_years: 1,
        }
    }
}

/// Where the next-year mean and dispersion come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsSource {
    /// ETS forecasts (the normal mode).
    Ets,
    /// The true statistics of the withheld year; needs `holdout_years >= 1`.
    /// Used to separate decomposition error from ETS error.
    Oracle,
}

/// How one of the two yearly statistics was forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StatModel {
    Ets {
        spec: EtsSpecLabel,
        aic: f64,
    },
    /// Last observed value; used when the yearly history is shorter than
    /// the ETS minimum.
    LastValue,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EtsSpecLabel(#[serde(serialize_with = "spec_label")] pub EtsSpec);

fn spec_label<S: serde::Serializer>(spec: &EtsSpec, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&spec.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesForecast {
    pub series_id: String,
    pub forecast_year: i32,
    /// Demand units.
    pub forecast: [f64; MONTHS_PER_YEAR],
    /// Ensemble forecast on the normalized scale.
    pub normalized: [f64; MONTHS_PER_YEAR],
    pub mean_hat: f64,
    pub dispersion_hat: f64,
    pub mean_model: StatModel,
    pub dispersion_model: StatModel,
    pub dispersion_clamped: bool,
    /// False when any forecast month is not strictly positive.
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub forecasts: Vec<SeriesForecast>,
    /// Scores against the first withheld year, when there is one.
    pub report: Option<EvalReport>,
    pub baseline_report: Option<EvalReport>,
    pub ensemble: EnsembleForecast,
}

/// Forecast equal to the last observed year.
pub fn seasonal_naive_baseline(series: &MonthlyDemandSeries) -> [f64; MONTHS_PER_YEAR] {
    let v = series.values();
    v[v.len() - MONTHS_PER_YEAR..]
        .try_into()
        .expect("whole years")
}

struct Prepared {
    history: MonthlyDemandSeries,
    actual: Option<[f64; MONTHS_PER_YEAR]>,
    normalized: NormalizedSeries,
    stats: YearlyStats,
}

fn prepare(series: &MonthlyDemandSeries, holdout: usize) -> Result<Prepared, PipelineError> {
    let id = &series.series_id;
    let history = series.drop_last_years(holdout).ok_or_else(|| {
        PipelineError::stage(
            "holdout",
            id,
            format!("{} years cannot hold out {holdout}", series.year_count()),
        )
    })?;
    if history.year_count() < MIN_TRAINING_YEARS {
        return Err(PipelineError::stage(
            "holdout",
            id,
            format!(
                "{} training years after holdout, need at least {MIN_TRAINING_YEARS}",
                history.year_count()
            ),
        ));
    }
    let actual = (holdout > 0).then(|| {
        series
            .year(history.year_count())
            .expect("withheld year exists")
            .values
    });
    let (normalized, stats) =
        normalize_series(&history).map_err(|e| PipelineError::stage("normalize", id, e))?;
    Ok(Prepared {
        history,
        actual,
        normalized,
        stats,
    })
}

fn forecast_stat(
    values: &[f64],
    stage: &'static str,
    id: &str,
) -> Result<(f64, StatModel), PipelineError> {
    if values.len() < ets::MIN_LENGTH {
        return Ok((*values.last().expect("non-empty"), StatModel::LastValue));
    }
    let fit = select_by_aic(values).map_err(|e| PipelineError::stage(stage, id, e))?;
    let value = forecast_one(&fit);
    if !value.is_finite() {
        return Err(PipelineError::stage(stage, id, "non-finite forecast"));
    }
    Ok((
        value,
        StatModel::Ets {
            spec: EtsSpecLabel(fit.spec),
            aic: fit.aic,
        },
    ))
}

pub fn run_pipeline(
    corpus: &Corpus,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    run_pipeline_with(corpus, config, StatsSource::Ets)
}

pub fn run_pipeline_with(
    corpus: &Corpus,
    config: &PipelineConfig,
    source: StatsSource,
) -> Result<PipelineOutput, PipelineError> {
    config
        .train
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    config
        .ensemble
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    if source == StatsSource::Oracle && config.holdout_years == 0 {
        return Err(PipelineError::Config(
            "oracle statistics need a holdout year".into(),
        ));
    }

    let prepared: Vec<Prepared> = corpus
        .series()
        .par_iter()
        .map(|s| prepare(s, config.holdout_years))
        .collect::<Result<_, _>>()?;

    let stats: Vec<((f64, StatModel), (f64, StatModel))> = prepared
        .par_iter()
        .map(|p| {
            let id = &p.history.series_id;
            match source {
                StatsSource::Ets => Ok((
                    forecast_stat(&p.stats.means, "ets-mean", id)?,
                    forecast_stat(&p.stats.dispersions, "ets-dispersion", id)?,
                )),
                StatsSource::Oracle => {
                    let actual = p.actual.expect("holdout checked");
                    let year = crate::dataset::YearlyVector {
                        year_index: p.history.year_count(),
                        values: actual,
                    };
                    let n = crate::preprocess::normalize(&year)
                        .map_err(|e| PipelineError::stage("oracle-stats", id, e))?;
                    Ok((
                        (n.mean, StatModel::Oracle),
                        (n.dispersion, StatModel::Oracle),
                    ))
                }
            }
        })
        .collect::<Result<_, PipelineError>>()?;

    let normalized: Vec<NormalizedSeries> = prepared.iter().map(|p| p.normalized.clone()).collect();
    let ensemble = run_ensemble(&normalized, &config.train, &config.ensemble)?;

    let mut forecasts = Vec::with_capacity(prepared.len());
    let mut rows = Vec::new();
    let mut baseline_rows = Vec::new();
    for ((p, ((mean_hat, mean_model), (disp_raw, dispersion_model))), member) in
        prepared.iter().zip(stats).zip(&ensemble.series)
    {
        let id = &p.history.series_id;
        let floor = DISPERSION_FLOOR * mean_hat.abs();
        let dispersion_clamped = disp_raw < floor;
        if dispersion_clamped {
            log::warn!("series '{id}': dispersion forecast {disp_raw} clamped to {floor}");
        }
        let dispersion_hat = disp_raw.max(floor);
        let values = denormalize(&member.aggregate, mean_hat, dispersion_hat);
        let forecast: [f64; MONTHS_PER_YEAR] = values.try_into().expect("12 values");
        let positive = forecast.iter().all(|v| *v > 0.0);
        if !positive {
            log::warn!("series '{id}': forecast has non-positive months");
        }
        if let Some(actual) = &p.actual {
            let score = |f: &[f64]| -> Result<_, PipelineError> {
                compute_metrics(actual, f)
                    .map_err(|e: MetricsError| PipelineError::stage("evaluate", id, e))
            };
            rows.push((id.clone(), score(&forecast)?));
            baseline_rows.push((id.clone(), score(&seasonal_naive_baseline(&p.history))?));
        }
        forecasts.push(SeriesForecast {
            series_id: id.clone(),
            forecast_year: p.history.end_year() + 1,
            forecast,
            normalized: member.aggregate,
            mean_hat,
            dispersion_hat,
            mean_model,
            dispersion_model,
            dispersion_clamped,
            positive,
        });
    }

    let report = (!rows.is_empty())
        .then(|| EvalReport::from_rows(rows))
        .transpose()
        .map_err(|e| PipelineError::stage("evaluate", "*", e))?;
    let baseline_report = (!baseline_rows.is_empty())
        .then(|| EvalReport::from_rows(baseline_rows))
        .transpose()
        .map_err(|e| PipelineError::stage("evaluate", "*", e))?;

    Ok(PipelineOutput {
        forecasts,
        report,
        baseline_report,
        ensemble,
    })
}

/// The six preprocessing stages of one series: raw demand, yearly means,
/// yearly dispersions, normalized series, seasonal components (initial
/// state, history plus one forecast year) and deseasonalized series.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub series: MonthlyDemandSeries,
    pub stats: YearlyStats,
    pub normalized: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub deseasonalized: Vec<f64>,
}

pub fn decompose(series: &MonthlyDemandSeries) -> Result<Decomposition, PipelineError> {
    let id = &series.series_id;
    let (normalized, stats) =
        normalize_series(series).map_err(|e| PipelineError::stage("normalize", id, e))?;
    let state = SeasonalState::warm_start(&normalized);
    let trace = unroll_seasonal(&state, &normalized.values)
        .map_err(|e| PipelineError::stage("seasonal", id, e))?;
    let deseasonalized = deseasonalize(
        &normalized.values,
        &trace.components[..normalized.values.len()],
    )
    .map_err(|e| PipelineError::stage("seasonal", id, e))?;
    Ok(Decomposition {
        series: series.clone(),
        stats,
        normalized: normalized.values,
        seasonal: trace.components,
        deseasonalized,
    })
}
