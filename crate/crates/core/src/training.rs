//! Joint SGD training of the shared network and per-series seasonal
//! parameters.
//!
//! Each epoch visits the series of a subset in a seeded random order. For one
//! series the seasonal recursion, deseasonalization, every network step and
//! the pinball loss are recorded on a single tape, so one backward pass
//! yields gradients for the network weights and for that series' seasonal
//! parameters together. The training windows are therefore rebuilt from the
//! current seasonal parameters on every pass.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::autodiff::{self, Param, Tape, Var};
use crate::dataset::MONTHS_PER_YEAR;
use crate::preprocess::NormalizedSeries;
use crate::rdlstm::{
    init_network, network_step, RdLstmError, RdLstmNetwork, RecurrentState, WINDOW,
};
use crate::seasonal::{
    deseasonalize, deseasonalize_on_tape, reseasonalize, unroll_on_tape, unroll_seasonal,
    SeasonalError, SeasonalState,
};
use crate::seeds;

/// Minimum whole years per training series: enough for the warm-up steps
/// plus one scored window.
pub const MIN_TRAINING_YEARS: usize = 3;
/// Steps that only warm the recurrent state at the start of each series.
pub const WARMUP_STEPS: usize = 12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(
        "series '{series}' has {years} whole years, training needs at least {MIN_TRAINING_YEARS}"
    )]
    TooShort { series: String, years: usize },
    #[error("training subset is empty")]
    EmptySubset,
    #[error("non-finite value in '{tag}' at epoch {epoch}, series '{series}'")]
    NonFinite {
        epoch: usize,
        series: String,
        tag: String,
    },
    #[error("series '{0}' was not part of this replica's training subset")]
    UnknownSeries(String),
    #[error("series '{series}': {source}")]
    Seasonal {
        series: String,
        #[source]
        source: SeasonalError,
    },
    #[error(transparent)]
    Network(#[from] RdLstmError),
}

type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub state_size: usize,
    /// Number of final epochs whose models are kept and averaged.
    pub snapshots: usize,
    /// Global gradient-norm clipping threshold.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            tau: 0.4,
            state_size: 40,
            snapshots: 5,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.state_size == 0 {
            return fail("state size must be at least 1".into());
        }
        if self.snapshots == 0 || self.snapshots > self.epochs {
            return fail(format!(
                "snapshots must be in 1..={} (epochs), got {}",
                self.epochs, self.snapshots
            ));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return fail(format!(
                "gradient clip must be positive, got {}",
                self.grad_clip
            ));
        }
        Ok(())
    }
}

/// Pinball (quantile) loss of a forecast `x_hat` for actual `x`.
pub fn pinball_loss(x: f64, x_hat: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(TrainError::InvalidConfig(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    Ok(autodiff::pinball(x, x_hat, tau))
}

/// One input/output pair of deseasonalized windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub series_id: String,
    pub t: usize,
    pub x_in: [f64; WINDOW],
    pub x_out: [f64; WINDOW],
}

/// Deseasonalized windows of `y` under `state`: inputs `x[t..t+12]`, outputs
/// `x[t+12..t+24]`, for every `t` with a complete output window.
pub fn build_windows(state: &SeasonalState, y: &NormalizedSeries) -> Result<Vec<WindowPair>> {
    let seasonal = |source| TrainError::Seasonal {
        series: y.series_id.clone(),
        source,
    };
    let trace = unroll_seasonal(state, &y.values).map_err(seasonal)?;
    let x = deseasonalize(&y.values, &trace.components[..y.values.len()]).map_err(seasonal)?;
    let n = x.len();
    if n < 2 * WINDOW {
        return Ok(Vec::new());
    }
    Ok((0..=n - 2 * WINDOW)
        .map(|t| WindowPair {
            series_id: y.series_id.clone(),
            t,
            x_in: x[t..t + WINDOW].try_into().expect("12 values"),
            x_out: x[t + WINDOW..t + 2 * WINDOW].try_into().expect("12 values"),
        })
        .collect())
}

/// Network and seasonal parameters frozen at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub network: RdLstmNetwork,
    pub seasonal: BTreeMap<String, SeasonalState>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub series_loss: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedReplica {
    pub subset_id: usize,
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<EpochRecord>,
}

/// Records the seasonal recursion, deseasonalization and every network step
/// of one series on `tape`. Returns the window losses (after warm-up) and
/// the network output of the final step, whose input is the last observed
/// year.
struct SeriesPass {
    losses: Vec<Var>,
    forecast_x: Var,
    forecast_s: Var,
}

fn record_series(
    tape: &mut Tape,
    net: &RdLstmNetwork,
    state: &SeasonalState,
    y: &NormalizedSeries,
    tau: f64,
) -> Result<(SeriesPass, crate::rdlstm::NetworkVars, Var, Var)> {
    let seasonal = |source| TrainError::Seasonal {
        series: y.series_id.clone(),
        source,
    };
    let vars = net.register(tape);
    let init = tape.param(&state.initial);
    let beta = tape.param(&state.beta_raw);
    let blocks = unroll_on_tape(tape, init, beta, &y.values).map_err(seasonal)?;
    let years = y.year_count();
    let x_years = (0..years)
        .map(|i| deseasonalize_on_tape(tape, y.year(i), blocks[i]))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(seasonal)?;
    let x = tape.concat(&x_years);
    let n = years * MONTHS_PER_YEAR;

    let mut states = RecurrentState::zeros(tape, &vars);
    let mut losses = Vec::new();
    let mut last = None;
    for t in 0..=n - WINDOW {
        let x_in = tape.slice(x, t, WINDOW).map_err(RdLstmError::from)?;
        let out = network_step(tape, &vars, x_in, &mut states)?;
        if t + 2 * WINDOW <= n && t >= WARMUP_STEPS {
            let target = tape
                .slice(x, t + WINDOW, WINDOW)
                .map_err(RdLstmError::from)?;
            losses.push(tape.pinball(target, out, tau).map_err(RdLstmError::from)?);
        }
        last = Some(out);
    }
    let pass = SeriesPass {
        losses,
        forecast_x: last.expect("at least one step"),
        forecast_s: blocks[years],
    };
    Ok((pass, vars, init, beta))
}

fn check_length(y: &NormalizedSeries) -> Result<()> {
    if !y.values.len().is_multiple_of(MONTHS_PER_YEAR) || y.year_count() < MIN_TRAINING_YEARS {
        return Err(TrainError::TooShort {
            series: y.series_id.clone(),
            years: y.year_count(),
        });
    }
    Ok(())
}

/// Mean training loss of one series under fixed parameters.
pub fn series_loss(
    net: &RdLstmNetwork,
    state: &SeasonalState,
    y: &NormalizedSeries,
    tau: f64,
) -> Result<f64> {
    check_length(y)?;
    let mut tape = Tape::new();
    let (pass, ..) = record_series(&mut tape, net, state, y, tau)?;
    let total = tape.add_n(&pass.losses).map_err(RdLstmError::from)?;
    Ok(tape.scalar(total) / pass.losses.len() as f64)
}

/// Gradients of the mean series loss with respect to the network and the
/// series' seasonal parameters, written into the `grad` fields.
pub fn series_gradients(
    net: &mut RdLstmNetwork,
    state: &mut SeasonalState,
    y: &NormalizedSeries,
    tau: f64,
) -> Result<f64> {
    check_length(y)?;
    let mut tape = Tape::new();
    let (pass, vars, init, beta) = record_series(&mut tape, net, state, y, tau)?;
    let total = tape.add_n(&pass.losses).map_err(RdLstmError::from)?;
    let loss = tape.scale(total, 1.0 / pass.losses.len() as f64);
    let grads = tape.backward(loss).map_err(RdLstmError::from)?;
    for p in net.params_mut() {
        p.zero_grad();
    }
    for p in state.params_mut() {
        p.zero_grad();
    }
    vars.accumulate_into(&grads, net);
    grads.accumulate_into(init, &mut state.initial);
    grads.accumulate_into(beta, &mut state.beta_raw);
    Ok(tape.scalar(loss))
}

/// Clips the joint gradient to `max_norm` and takes one SGD step.
fn sgd_step(params: &mut [&mut Param], lr: f64, max_norm: f64) {
    let norm = params
        .iter()
        .flat_map(|p| p.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    let scale = if norm > max_norm {
        max_norm / norm
    } else {
        1.0
    };
    for p in params.iter_mut() {
        let Param { value, grad, .. } = &mut **p;
        for (v, g) in value.iter_mut().zip(grad.iter()) {
            *v -= lr * scale * g;
        }
    }
}

fn first_non_finite(params: &[&mut Param]) -> Option<String> {
    params
        .iter()
        .find(|p| p.value.iter().chain(&p.grad).any(|v| !v.is_finite()))
        .map(|p| p.tag.clone())
}

/// Trains one replica on `subset`. The result is a pure function of the
/// subset, the config and `seed`.
pub fn train_replica(
    subset: &[NormalizedSeries],
    config: &TrainConfig,
    subset_id: usize,
    seed: u64,
) -> Result<TrainedReplica> {
    config.validate()?;
    if subset.is_empty() {
        return Err(TrainError::EmptySubset);
    }
    subset.iter().try_for_each(check_length)?;

    let mut net = init_network(config.state_size, seeds::derive(seed, 0))?;
    let mut seasonal: BTreeMap<String, SeasonalState> = subset
        .iter()
        .map(|y| (y.series_id.clone(), SeasonalState::warm_start(y)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 1));
    let mut order: Vec<usize> = (0..subset.len()).collect();
    let mut snapshots = Vec::with_capacity(config.snapshots);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut series_loss = Vec::with_capacity(subset.len());
        for &idx in &order {
            let y = &subset[idx];
            let state = seasonal.get_mut(&y.series_id).expect("state per series");
            let loss = series_gradients(&mut net, state, y, config.tau)?;
            let mut params: Vec<&mut Param> = net.params_mut();
            params.extend(state.params_mut());
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    series: y.series_id.clone(),
                    tag: "loss".into(),
                });
            }
            if let Some(tag) = first_non_finite(&params) {
                return Err(TrainError::NonFinite {
                    epoch,
                    series: y.series_id.clone(),
                    tag,
                });
            }
            sgd_step(&mut params, config.learning_rate, config.grad_clip);
            if let Some(tag) = first_non_finite(&params) {
                return Err(TrainError::NonFinite {
                    epoch,
                    series: y.series_id.clone(),
                    tag,
                });
            }
            series_loss.push((y.series_id.clone(), loss));
        }
        series_loss.sort_by(|a, b| a.0.cmp(&b.0));
        let mean_loss = series_loss.iter().map(|(_, l)| l).sum::<f64>() / series_loss.len() as f64;
        log::debug!("replica {subset_id} epoch {epoch}: mean loss {mean_loss:.6}");
        log.push(EpochRecord {
            epoch,
            mean_loss,
            series_loss,
        });
        if epoch + config.snapshots > config.epochs {
            snapshots.push(Snapshot {
                epoch,
                network: net.clone(),
                seasonal: seasonal.clone(),
            });
        }
    }

    Ok(TrainedReplica {
        subset_id,
        seed,
        snapshots,
        log,
    })
}

/// Next-year forecast on the normalized scale from one network and seasonal
/// state: the history warms the recurrent state, the last observed year is
/// the final input, and the output is reseasonalized with the forecast-year
/// components.
pub fn forecast_with(
    net: &RdLstmNetwork,
    state: &SeasonalState,
    y: &NormalizedSeries,
) -> Result<[f64; WINDOW]> {
    if !y.values.len().is_multiple_of(MONTHS_PER_YEAR) || y.year_count() < 1 {
        return Err(TrainError::TooShort {
            series: y.series_id.clone(),
            years: y.year_count(),
        });
    }
    let mut tape = Tape::new();
    // tau only affects loss nodes, which are not used here.
    let (pass, ..) = record_series(&mut tape, net, state, y, 0.5)?;
    let x_hat = tape.value(pass.forecast_x).to_vec();
    let s = tape.value(pass.forecast_s).to_vec();
    let y_hat = reseasonalize(&x_hat, &s).map_err(|source| TrainError::Seasonal {
        series: y.series_id.clone(),
        source,
    })?;
    Ok(y_hat.try_into().expect("12 values"))
}

/// Forecast of each snapshot for `y`.
pub fn snapshot_forecasts(
    replica: &TrainedReplica,
    y: &NormalizedSeries,
) -> Result<Vec<[f64; WINDOW]>> {
    replica
        .snapshots
        .iter()
        .map(|snap| {
            let state = snap
                .seasonal
                .get(&y.series_id)
                .ok_or_else(|| TrainError::UnknownSeries(y.series_id.clone()))?;
            forecast_with(&snap.network, state, y)
        })
        .collect()
}

/// Average of the snapshot forecasts.
pub fn forecast_replica(replica: &TrainedReplica, y: &NormalizedSeries) -> Result<[f64; WINDOW]> {
    let per_snapshot = snapshot_forecasts(replica, y)?;
    let mut mean = [0.0; WINDOW];
    for f in &per_snapshot {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    let n = per_snapshot.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}
