//! Per-year normalization: every calendar year is shifted to mean one and
//! scaled so that its deviation vector has unit Euclidean length.

use thiserror::Error;

use crate::dataset::{split_yearly, MonthlyDemandSeries, YearlyVector, MONTHS_PER_YEAR};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("year {year_index} has zero dispersion (constant demand)")]
    DegenerateDispersion { year_index: usize },
    #[error("series '{series}': {source}")]
    Series {
        series: String,
        #[source]
        source: Box<PreprocessError>,
    },
}

/// Yearly means and dispersions of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct YearlyStats {
    pub means: Vec<f64>,
    pub dispersions: Vec<f64>,
}

impl YearlyStats {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// A series after per-year normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub series_id: String,
    pub values: Vec<f64>,
}

impl NormalizedSeries {
    pub fn year_count(&self) -> usize {
        self.values.len() / MONTHS_PER_YEAR
    }

    pub fn year(&self, index: usize) -> &[f64] {
        &self.values[index * MONTHS_PER_YEAR..(index + 1) * MONTHS_PER_YEAR]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalized {
    pub values: [f64; MONTHS_PER_YEAR],
    pub mean: f64,
    /// Root of the sum of squared deviations (not divided by 12).
    pub dispersion: f64,
}

/// `y = (z - mean) / dispersion + 1`.
pub fn normalize(z: &YearlyVector) -> Result<Normalized, PreprocessError> {
    let mean = z.values.iter().sum::<f64>() / MONTHS_PER_YEAR as f64;
    let dispersion = z
        .values
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        .sqrt();
    if dispersion.is_nan() || dispersion <= 0.0 {
        return Err(PreprocessError::DegenerateDispersion {
            year_index: z.year_index,
        });
    }
    let values = z.values.map(|v| (v - mean) / dispersion + 1.0);
    Ok(Normalized {
        values,
        mean,
        dispersion,
    })
}

/// `z = (y - 1) * dispersion + mean`.
pub fn denormalize(y_hat: &[f64], mean_hat: f64, dispersion_hat: f64) -> Vec<f64> {
    y_hat
        .iter()
        .map(|y| (y - 1.0) * dispersion_hat + mean_hat)
        .collect()
}

pub fn build_yearly_stats(series: &MonthlyDemandSeries) -> Result<YearlyStats, PreprocessError> {
    Ok(normalize_series(series)?.1)
}

/// Normalizes every year of a series, returning the normalized sequence and
/// the statistics needed to invert it.
pub fn normalize_series(
    series: &MonthlyDemandSeries,
) -> Result<(NormalizedSeries, YearlyStats), PreprocessError> {
    let years = split_yearly(series);
    let mut values = Vec::with_capacity(series.len());
    let mut means = Vec::with_capacity(years.len());
    let mut dispersions = Vec::with_capacity(years.len());
    for year in &years {
        let n = normalize(year).map_err(|e| PreprocessError::Series {
            series: series.series_id.clone(),
            source: Box::new(e),
        })?;
        values.extend_from_slice(&n.values);
        means.push(n.mean);
        dispersions.push(n.dispersion);
    }
    Ok((
        NormalizedSeries {
            series_id: series.series_id.clone(),
            values,
        },
        YearlyStats { means, dispersions },
    ))
}
