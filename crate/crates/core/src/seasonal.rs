//! Learnable multiplicative deseasonalization of normalized series.
//!
//! The seasonal component follows `s[t + 12] = beta * y[t] + (1 - beta) * s[t]`
//! starting from twelve learnable initial components. Deseasonalized values
//! are `x = ln(y / s)`, and forecasts are mapped back with `y = s * exp(x)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sigmoid, AutodiffError, Param, Tape, Var};
use crate::dataset::MONTHS_PER_YEAR;
use crate::preprocess::NormalizedSeries;

/// Floor applied to the initial components on the training path.
pub const COMPONENT_FLOOR: f64 = 0.05;
pub const INITIAL_BETA: f64 = 0.3;
/// Years averaged for the warm start of the initial components.
const WARM_START_YEARS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeasonalError {
    #[error("seasonal component s[{t}] = {value} is not positive")]
    NonPositiveComponent { t: usize, value: f64 },
    #[error("non-positive input at position {index}: y = {y}, s = {s}")]
    Domain { index: usize, y: f64, s: f64 },
    #[error("length mismatch: {0} values vs {1} components")]
    LengthMismatch(usize, usize),
    #[error("series of {0} values is too short (need whole years, at least 12 values)")]
    TooShort(usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Per-series deseasonalization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalState {
    pub series_id: String,
    /// Twelve initial components, one per calendar month.
    pub initial: Param,
    /// Unconstrained scalar; the smoothing coefficient is its logistic.
    pub beta_raw: Param,
}

impl SeasonalState {
    pub fn new(series_id: impl Into<String>, initial: [f64; MONTHS_PER_YEAR], beta: f64) -> Self {
        let series_id = series_id.into();
        Self {
            initial: Param::vector(format!("{series_id}.s0"), initial.to_vec()),
            beta_raw: Param::vector(format!("{series_id}.beta"), vec![logit(beta)]),
            series_id,
        }
    }

    /// Initial components from the per-month average of the first (up to
    /// three) years of `y`, floored at [`COMPONENT_FLOOR`].
    pub fn warm_start(y: &NormalizedSeries) -> Self {
        let years = y.year_count().clamp(1, WARM_START_YEARS);
        let mut initial = [0.0; MONTHS_PER_YEAR];
        for (j, slot) in initial.iter_mut().enumerate() {
            let avg = (0..years)
                .filter_map(|i| y.values.get(i * MONTHS_PER_YEAR + j))
                .sum::<f64>()
                / years as f64;
            *slot = avg.max(COMPONENT_FLOOR);
        }
        Self::new(y.series_id.clone(), initial, INITIAL_BETA)
    }

    pub fn beta(&self) -> f64 {
        sigmoid(self.beta_raw.value[0])
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.initial, &mut self.beta_raw]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.initial, &self.beta_raw]
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Seasonal components for the history plus one forecast year.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalTrace {
    pub components: Vec<f64>,
}

impl SeasonalTrace {
    /// Components of the year after the history.
    pub fn forecast_year(&self) -> &[f64] {
        &self.components[self.components.len() - MONTHS_PER_YEAR..]
    }
}

/// Runs the seasonal recursion over `y` in plain arithmetic.
pub fn unroll_seasonal(state: &SeasonalState, y: &[f64]) -> Result<SeasonalTrace, SeasonalError> {
    if y.len() < MONTHS_PER_YEAR {
        return Err(SeasonalError::TooShort(y.len()));
    }
    let beta = state.beta();
    let mut s = Vec::with_capacity(y.len() + MONTHS_PER_YEAR);
    s.extend_from_slice(&state.initial.value);
    for (t, &yt) in y.iter().enumerate() {
        let next = beta * yt + (1.0 - beta) * s[t];
        s.push(next);
    }
    if let Some((t, &value)) = s.iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
        return Err(SeasonalError::NonPositiveComponent { t, value });
    }
    Ok(SeasonalTrace { components: s })
}

/// `x = ln(y / s)` elementwise.
pub fn deseasonalize(y: &[f64], s: &[f64]) -> Result<Vec<f64>, SeasonalError> {
    if y.len() != s.len() {
        return Err(SeasonalError::LengthMismatch(y.len(), s.len()));
    }
    y.iter()
        .zip(s)
        .enumerate()
        .map(|(index, (&y, &s))| {
            if y > 0.0 && s > 0.0 {
                Ok((y / s).ln())
            } else {
                Err(SeasonalError::Domain { index, y, s })
            }
        })
        .collect()
}

/// `y = s * exp(x)` elementwise.
pub fn reseasonalize(x_hat: &[f64], s: &[f64]) -> Result<Vec<f64>, SeasonalError> {
    if x_hat.len() != s.len() {
        return Err(SeasonalError::LengthMismatch(x_hat.len(), s.len()));
    }
    Ok(x_hat.iter().zip(s).map(|(x, s)| s * x.exp()).collect())
}

/// Seasonal recursion recorded on a tape, one 12-vector per year.
///
/// Because the recursion has period twelve it can be applied a whole year at
/// a time: `S[i + 1] = beta * Y[i] + (1 - beta) * S[i]`. The returned vector
/// holds `year_count + 1` blocks, the last one for the forecast year. The
/// initial components are clamped at [`COMPONENT_FLOOR`] (identity in the
/// backward pass).
pub fn unroll_on_tape(
    tape: &mut Tape,
    initial: Var,
    beta_raw: Var,
    y: &[f64],
) -> Result<Vec<Var>, SeasonalError> {
    if y.len() < MONTHS_PER_YEAR || !y.len().is_multiple_of(MONTHS_PER_YEAR) {
        return Err(SeasonalError::TooShort(y.len()));
    }
    let beta = tape.sigmoid(beta_raw);
    let neg = tape.scale(beta, -1.0);
    let keep = tape.shift(neg, 1.0);
    let mut blocks = Vec::with_capacity(y.len() / MONTHS_PER_YEAR + 1);
    blocks.push(tape.clamp_min(initial, COMPONENT_FLOOR));
    for year in y.chunks_exact(MONTHS_PER_YEAR) {
        let prev = *blocks.last().expect("initial block");
        let yv = tape.constant(year.to_vec());
        let a = tape.mul(beta, yv)?;
        let b = tape.mul(keep, prev)?;
        blocks.push(tape.add(a, b)?);
    }
    Ok(blocks)
}

/// `ln(y / s)` for one year on a tape.
pub fn deseasonalize_on_tape(tape: &mut Tape, y: &[f64], s: Var) -> Result<Var, SeasonalError> {
    let yv = tape.constant(y.to_vec());
    let ratio = tape.div(yv, s)?;
    Ok(tape.log(ratio)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state(init: f64, beta: f64) -> SeasonalState {
        SeasonalState::new("t", [init; 12], beta)
    }

    #[test]
    fn zero_beta_freezes_components() {
        let y: Vec<f64> = (0..36).map(|t| 0.5 + (t % 7) as f64 * 0.1).collect();
        let trace = unroll_seasonal(&state(1.1, 0.0), &y).unwrap();
        assert_eq!(trace.components.len(), 48);
        assert!(trace.components.iter().all(|&s| s == 1.1));
    }

    #[test]
    fn unit_beta_copies_lagged_input() {
        let y: Vec<f64> = (0..24).map(|t| 0.5 + t as f64 * 0.03).collect();
        let trace = unroll_seasonal(&state(1.0, 1.0), &y).unwrap();
        assert_eq!(&trace.components[12..], y.as_slice());
    }

    #[test]
    fn half_beta_arithmetic() {
        let mut y = vec![1.0; 12];
        y[0] = 1.2;
        let trace = unroll_seasonal(&state(1.0, 0.5), &y).unwrap();
        assert_abs_diff_eq!(trace.components[12], 1.1, epsilon = 1e-15);
    }

    #[test]
    fn non_positive_component_rejected() {
        let mut st = state(1.0, 0.5);
        st.initial.value[3] = -0.2;
        assert!(matches!(
            unroll_seasonal(&st, &[1.0; 12]),
            Err(SeasonalError::NonPositiveComponent { t: 3, .. })
        ));
        assert_eq!(
            unroll_seasonal(&st, &[1.0; 5]),
            Err(SeasonalError::TooShort(5))
        );
    }

    #[test]
    fn deseasonalize_fixtures() {
        let s = [1.2, 0.8, 1.0];
        assert_eq!(deseasonalize(&s, &s).unwrap(), vec![0.0; 3]);
        let y: Vec<f64> = s.iter().map(|v| v * std::f64::consts::E).collect();
        for x in deseasonalize(&y, &s).unwrap() {
            assert_abs_diff_eq!(x, 1.0, epsilon = 1e-15);
        }
        assert!(matches!(
            deseasonalize(&[1.0, 0.0], &[1.0, 1.0]),
            Err(SeasonalError::Domain { index: 1, .. })
        ));
    }

    #[test]
    fn reseasonalize_fixtures() {
        assert_eq!(reseasonalize(&[0.0], &[1.2]).unwrap(), vec![1.2]);
        assert_eq!(
            reseasonalize(&[1.0], &[1.0]).unwrap(),
            vec![std::f64::consts::E]
        );
    }

    #[test]
    fn warm_start_averages_first_years() {
        let mut values = Vec::new();
        for i in 0..4 {
            for j in 0..12 {
                values.push(1.0 + (j as f64 - 5.5) * 0.05 + i as f64 * 0.01);
            }
        }
        values[1] = 0.02;
        values[13] = 0.02;
        values[25] = 0.02;
        let y = NormalizedSeries {
            series_id: "w".into(),
            values,
        };
        let st = SeasonalState::warm_start(&y);
        assert_abs_diff_eq!(
            st.initial.value[0],
            1.0 - 5.5 * 0.05 + 0.01,
            epsilon = 1e-12
        );
        assert_eq!(st.initial.value[1], COMPONENT_FLOOR);
        assert_abs_diff_eq!(st.beta(), INITIAL_BETA, epsilon = 1e-15);
    }

    #[test]
    fn tape_recursion_matches_plain() {
        let y: Vec<f64> = (0..36)
            .map(|t| 1.0 + 0.3 * ((t as f64) * 0.52).sin())
            .collect();
        let st = SeasonalState::new(
            "t",
            [0.9, 1.1, 1.0, 0.95, 1.05, 1.2, 0.8, 1.0, 1.0, 1.1, 0.9, 1.0],
            0.37,
        );
        let plain = unroll_seasonal(&st, &y).unwrap();
        let mut tape = Tape::new();
        let init = tape.param(&st.initial);
        let beta = tape.param(&st.beta_raw);
        let blocks = unroll_on_tape(&mut tape, init, beta, &y).unwrap();
        let flat: Vec<f64> = blocks
            .iter()
            .flat_map(|b| tape.value(*b).to_vec())
            .collect();
        assert_eq!(flat.len(), plain.components.len());
        for (a, b) in flat.iter().zip(&plain.components) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn round_trip(pairs in prop::collection::vec((0.05f64..3.0, 0.05f64..3.0), 1..40)) {
            let (y, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let back = reseasonalize(&deseasonalize(&y, &s).unwrap(), &s).unwrap();
            for (a, b) in back.iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn update_is_convex_combination(
            y in prop::collection::vec(0.05f64..2.0, 24),
            beta in 0.0f64..1.0,
            init in 0.1f64..2.0,
        ) {
            let trace = unroll_seasonal(&state(init, beta), &y).unwrap();
            for (t, &a) in y.iter().enumerate() {
                let (b, next) = (trace.components[t], trace.components[t + 12]);
                prop_assert!(next >= a.min(b) - 1e-15 && next <= a.max(b) + 1e-15);
            }
        }
    }
}
