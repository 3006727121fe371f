//! Synthetic monthly demand series for tests, benchmarks and demos:
//! `level(t) * profile(month) * (1 + noise)` with a linear level, a
//! sinusoidal yearly profile and Gaussian multiplicative noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Corpus, MonthlyDemandSeries, MONTHS_PER_YEAR};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub base_level: f64,
    /// Level growth per year as a fraction of `base_level`.
    pub yearly_growth: f64,
    /// Relative amplitude of the yearly sinusoid.
    pub amplitude: f64,
    /// Phase of the sinusoid in months.
    pub phase: f64,
    /// Standard deviation of the multiplicative noise.
    pub noise: f64,
    pub years: usize,
    pub start_year: i32,
}

impl SyntheticSpec {
    pub fn generate(&self, id: &str, rng: &mut impl Rng) -> MonthlyDemandSeries {
        let n = self.years * MONTHS_PER_YEAR;
        let values = (0..n)
            .map(|t| {
                let level = self.base_level * (1.0 + self.yearly_growth * t as f64 / 12.0);
                let angle = 2.0 * std::f64::consts::PI * (t as f64 + self.phase) / 12.0;
                let profile = 1.0 + self.amplitude * angle.cos();
                let eps = if self.noise > 0.0 {
                    self.noise * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                level * profile * (1.0 + eps)
            })
            .collect();
        MonthlyDemandSeries::new(id, self.start_year, values).expect("positive synthetic values")
    }
}

/// `count` series of `years` years with randomized level, growth (1-4 % per
/// year), amplitude (10-25 %) and phase, and multiplicative noise of
/// relative size `noise`.
pub fn trend_seasonal_corpus(count: usize, years: usize, noise: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = (0..count)
        .map(|i| {
            let spec = SyntheticSpec {
                base_level: rng.gen_range(1_000.0..10_000.0),
                yearly_growth: rng.gen_range(0.01..0.04),
                amplitude: rng.gen_range(0.10..0.25),
                phase: rng.gen_range(0.0..12.0),
                noise,
                years,
                start_year: 2000,
            };
            spec.generate(&format!("S{i:02}"), &mut rng)
        })
        .collect();
    Corpus::new(series).expect("unique ids")
}
