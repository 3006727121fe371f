//! Three-level ensembling: epoch snapshots inside each replica, `K`
//! subset models per run, and `R` independent runs.
//!
//! In every run each series is assigned to `coverage` of the `K` subsets.
//! A series' forecast is the mean over all (run, subset) members whose
//! subset contains it, each member being its own snapshot average.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::preprocess::NormalizedSeries;
use crate::rdlstm::WINDOW;
use crate::seeds;
use crate::training::{forecast_replica, train_replica, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble config: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("run {run}, subset {subset}: {source}")]
    Replica {
        run: usize,
        subset: usize,
        #[source]
        source: TrainError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    /// Snapshots averaged per replica.
    pub snapshots: usize,
    /// Subset models per run.
    pub subsets: usize,
    pub runs: usize,
    /// Subsets each series belongs to.
    pub coverage: usize,
    pub master_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            snapshots: 5,
            subsets: 4,
            runs: 3,
            coverage: 2,
            master_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.snapshots == 0 || self.subsets == 0 || self.runs == 0 {
            return Err(EnsembleError::InvalidConfig(
                "snapshots, subsets and runs must all be at least 1".into(),
            ));
        }
        if self.coverage == 0 || self.coverage > self.subsets {
            return Err(EnsembleError::InvalidConfig(format!(
                "coverage must be in 1..={} (subsets), got {}",
                self.subsets, self.coverage
            )));
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        seeds::derive(self.master_seed, run as u64)
    }
}

/// Assigns each of `m` series (by index) to exactly `coverage` of `k`
/// subsets. The series are shuffled with `run_seed` and dealt round-robin,
/// so subset sizes differ by at most one.
pub fn make_subsets(
    m: usize,
    k: usize,
    coverage: usize,
    run_seed: u64,
) -> Result<Vec<Vec<usize>>, EnsembleError> {
    if m == 0 {
        return Err(EnsembleError::EmptyCorpus);
    }
    if k == 0 || coverage == 0 || coverage > k {
        return Err(EnsembleError::InvalidConfig(format!(
            "need 1 <= coverage <= subsets, got coverage {coverage}, subsets {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut subsets = vec![Vec::new(); k];
    for (pos, &series) in order.iter().enumerate() {
        for j in 0..coverage {
            subsets[(pos * coverage + j) % k].push(series);
        }
    }
    subsets.iter_mut().for_each(|s| s.sort_unstable());
    Ok(subsets)
}

/// One member forecast for one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    pub run: usize,
    pub subset: usize,
    pub forecast: [f64; WINDOW],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesEnsemble {
    pub series_id: String,
    pub members: Vec<Member>,
    pub aggregate: [f64; WINDOW],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleForecast {
    pub series: Vec<SeriesEnsemble>,
}

impl EnsembleForecast {
    pub fn get(&self, series_id: &str) -> Option<&SeriesEnsemble> {
        self.series.iter().find(|s| s.series_id == series_id)
    }
}

/// Elementwise mean of member forecasts. Each month's values are sorted
/// before summation, so the result does not depend on member order.
pub fn aggregate(members: &[[f64; WINDOW]]) -> [f64; WINDOW] {
    let mut out = [0.0; WINDOW];
    let mut column = Vec::with_capacity(members.len());
    for (j, slot) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(members.iter().map(|m| m[j]));
        column.sort_by(f64::total_cmp);
        *slot = column.iter().sum::<f64>() / column.len() as f64;
    }
    out
}

/// Trains all `runs x subsets` replicas (in parallel on the current rayon
/// pool) and aggregates their forecasts per series. Results do not depend on
/// the degree of parallelism.
pub fn run_ensemble(
    corpus: &[NormalizedSeries],
    train: &TrainConfig,
    config: &EnsembleConfig,
) -> Result<EnsembleForecast, EnsembleError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(EnsembleError::EmptyCorpus);
    }
    let train = TrainConfig {
        snapshots: config.snapshots,
        ..train.clone()
    };

    let mut jobs = Vec::with_capacity(config.runs * config.subsets);
    for run in 0..config.runs {
        let run_seed = config.run_seed(run);
        let subsets = make_subsets(corpus.len(), config.subsets, config.coverage, run_seed)?;
        for (subset, members) in subsets.into_iter().enumerate() {
            jobs.push((run, subset, seeds::derive(run_seed, subset as u64), members));
        }
    }

    let results: Vec<Result<Vec<(usize, Member)>, EnsembleError>> = jobs
        .into_par_iter()
        .map(|(run, subset, seed, members)| {
            let wrap = |source| EnsembleError::Replica {
                run,
                subset,
                source,
            };
            let data: Vec<NormalizedSeries> = members.iter().map(|&i| corpus[i].clone()).collect();
            let replica = train_replica(&data, &train, subset, seed).map_err(wrap)?;
            members
                .iter()
                .zip(&data)
                .map(|(&i, y)| {
                    let forecast = forecast_replica(&replica, y).map_err(wrap)?;
                    Ok((
                        i,
                        Member {
                            run,
                            subset,
                            forecast,
                        },
                    ))
                })
                .collect()
        })
        .collect();

    let mut by_series: BTreeMap<usize, Vec<Member>> = BTreeMap::new();
    for result in results {
        for (i, member) in result? {
            by_series.entry(i).or_default().push(member);
        }
    }
    let series = corpus
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let members = by_series.remove(&i).unwrap_or_default();
            let forecasts: Vec<[f64; WINDOW]> = members.iter().map(|m| m.forecast).collect();
            SeriesEnsemble {
                series_id: y.series_id.clone(),
                aggregate: aggregate(&forecasts),
                members,
            }
        })
        .collect();
    Ok(EnsembleForecast { series })
}
