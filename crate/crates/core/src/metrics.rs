//! Forecast accuracy metrics.
//!
//! `APE = 100 |a - f| / |a|` and `PE = 100 (a - f) / a`, so over-forecasts
//! give negative PE. Quantiles use linear interpolation between order
//! statistics (`h = (n - 1) p`, inclusive of the extremes).

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("actual and forecast lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("actual value at position {0} is zero; percentage errors are undefined")]
    ZeroActual(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub median_ape: f64,
    pub mape: f64,
    pub ape_iqr: f64,
    pub rmse: f64,
    pub mpe: f64,
}

impl MetricRow {
    pub const COLUMNS: [&'static str; 5] = ["median_ape", "mape", "ape_iqr", "rmse", "mpe"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.median_ape,
            self.mape,
            self.ape_iqr,
            self.rmse,
            self.mpe,
        ]
    }
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn compute_metrics(actual: &[f64], forecast: &[f64]) -> Result<MetricRow, MetricsError> {
    if actual.len() != forecast.len() {
        return Err(MetricsError::LengthMismatch(actual.len(), forecast.len()));
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = actual.iter().position(|a| *a == 0.0) {
        return Err(MetricsError::ZeroActual(i));
    }
    let n = actual.len() as f64;
    let pe: Vec<f64> = actual
        .iter()
        .zip(forecast)
        .map(|(a, f)| 100.0 * (a - f) / a)
        .collect();
    let mut ape: Vec<f64> = pe.iter().map(|p| p.abs()).collect();
    ape.sort_by(f64::total_cmp);
    let rmse = (actual
        .iter()
        .zip(forecast)
        .map(|(a, f)| (a - f).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(MetricRow {
        median_ape: quantile_sorted(&ape, 0.5),
        mape: ape.iter().sum::<f64>() / n,
        ape_iqr: quantile_sorted(&ape, 0.75) - quantile_sorted(&ape, 0.25),
        rmse,
        mpe: pe.iter().sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<(String, MetricRow)>,
    /// Equal-weight mean of the per-series rows.
    pub pooled: MetricRow,
}

pub const POOLED_LABEL: &str = "POOLED";

impl EvalReport {
    pub fn from_rows(rows: Vec<(String, MetricRow)>) -> Result<Self, MetricsError> {
        if rows.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = rows.len() as f64;
        let mut sums = [0.0; 5];
        for (_, r) in &rows {
            for (s, v) in sums.iter_mut().zip(r.values()) {
                *s += v;
            }
        }
        let [median_ape, mape, ape_iqr, rmse, mpe] = sums.map(|s| s / n);
        Ok(Self {
            rows,
            pooled: MetricRow {
                median_ape,
                mape,
                ape_iqr,
                rmse,
                mpe,
            },
        })
    }

    pub fn get(&self, series_id: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|(id, _)| id == series_id)
            .map(|(_, r)| r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("series_id,{}\n", MetricRow::COLUMNS.join(","));
        let rows = self.rows.iter().map(|(id, r)| (id.as_str(), r));
        for (id, row) in rows.chain(std::iter::once((POOLED_LABEL, &self.pooled))) {
            let cells: Vec<String> = row.values().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{id},{}", cells.join(","));
        }
        out
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let headers = ["series", "MedianAPE", "MAPE", "IQR", "RMSE", "MPE"];
        let width = self
            .rows
            .iter()
            .map(|(id, _)| id.len())
            .chain([POOLED_LABEL.len(), headers[0].len()])
            .max()
            .unwrap_or(6);
        let mut out = format!("{:<width$}", headers[0]);
        for h in &headers[1..] {
            let _ = write!(out, " {h:>10}");
        }
        out.push('\n');
        let rows = self.rows.iter().map(|(id, r)| (id.as_str(), r));
        for (id, row) in rows.chain(std::iter::once((POOLED_LABEL, &self.pooled))) {
            let _ = write!(out, "{id:<width$}");
            for v in row.values() {
                let _ = write!(out, " {v:>10.2}");
            }
            out.push('\n');
        }
        out
    }
}
