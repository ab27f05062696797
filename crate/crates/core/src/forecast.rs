//! Day-ahead flexibility forecasts driven by a per-LFE Gaussian error process.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seeds::{rng_for, Stream};
use crate::{Error, LfeId, Result};

/// Smallest uncertainty an LFE may report; CRPS is undefined at zero.
pub const MIN_REPORTED_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    Static,
    Dynamic,
}

/// Parameters shared by every LFE's error process in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorParams {
    pub drift_step: f64,
    /// Probability that a dynamic step moves towards the LFE's tendency.
    pub drift_bias: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    /// Multiplier applied to the true sigma when reporting it. 1 is truthful.
    pub misreport: f64,
}

impl Default for ErrorParams {
    fn default() -> Self {
        ErrorParams {
            drift_step: 0.001,
            drift_bias: 0.6,
            sigma_low: 0.01,
            sigma_high: 1.0,
            misreport: 1.0,
        }
    }
}

impl ErrorParams {
    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.sigma_low, self.sigma_high)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.sigma_low && self.sigma_low <= self.sigma_high && self.sigma_high <= 1.0) {
            return Err(Error::invalid_field(
                "forecast.sigma_low",
                "sigma bounds must satisfy 0 <= low <= high <= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.drift_bias) {
            return Err(Error::invalid_field("forecast.drift_bias", "must lie in [0, 1]"));
        }
        if !(self.drift_step >= 0.0) {
            return Err(Error::invalid_field("forecast.drift_step", "must be non-negative"));
        }
        if !(self.misreport > 0.0) {
            return Err(Error::invalid_field("forecast.misreport", "must be positive"));
        }
        Ok(())
    }

    /// Scenario-1 spread: sigma rises linearly from `sigma_low` for the best
    /// predictor to `sigma_high` for the worst.
    pub fn ranked_sigmas(&self, lfe_count: usize) -> Vec<f64> {
        if lfe_count == 1 {
            return vec![self.sigma_low];
        }
        (0..lfe_count)
            .map(|r| {
                self.sigma_low + (self.sigma_high - self.sigma_low) * r as f64 / (lfe_count - 1) as f64
            })
            .collect()
    }
}

/// Where an LFE stands in the initial accuracy ranking (0 = most accurate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorRank {
    pub rank: usize,
    pub population: usize,
}

impl PredictorRank {
    /// The better half of the population.
    pub fn is_good(&self) -> bool {
        2 * self.rank + 1 < self.population
    }
}

#[derive(Debug, Clone)]
pub struct ErrorProcess {
    sigma: f64,
    mode: AccuracyMode,
    params: ErrorParams,
    noise_rng: ChaCha8Rng,
    drift_rng: ChaCha8Rng,
}

impl ErrorProcess {
    pub fn new(sigma: f64, mode: AccuracyMode, params: ErrorParams, seed: u64, lfe: LfeId) -> Result<Self> {
        params.validate()?;
        if !(params.sigma_low..=params.sigma_high).contains(&sigma) {
            return Err(Error::Domain(format!(
                "initial sigma {sigma} outside [{}, {}]",
                params.sigma_low, params.sigma_high
            )));
        }
        Ok(ErrorProcess {
            sigma,
            mode,
            params,
            noise_rng: rng_for(seed, Stream::ForecastNoise, lfe.0 as u64),
            drift_rng: rng_for(seed, Stream::AccuracyDrift, lfe.0 as u64),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mode(&self) -> AccuracyMode {
        self.mode
    }

    pub fn params(&self) -> &ErrorParams {
        &self.params
    }

    /// The uncertainty the LFE attaches to its forecast.
    pub fn reported_sigma(&self) -> f64 {
        (self.sigma * self.params.misreport).max(MIN_REPORTED_SIGMA)
    }

    /// One relative forecast error `ε ~ N(0, σ²)`.
    pub fn draw_error(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.noise_rng);
        self.sigma * z
    }

    /// One timeslot of accuracy drift. Good predictors tend to degrade and
    /// bad ones to improve, so the population converges over a run. Static
    /// processes are left untouched.
    pub fn step_accuracy(&mut self, rank: PredictorRank) {
        if self.mode == AccuracyMode::Static {
            return;
        }
        let towards_tendency = self.drift_rng.random_bool(self.params.drift_bias);
        let tendency = if rank.is_good() { 1.0 } else { -1.0 };
        let dir = if towards_tendency { tendency } else { -tendency };
        self.sigma = (self.sigma + dir * self.params.drift_step)
            .clamp(self.params.sigma_low, self.params.sigma_high);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub lfe_id: LfeId,
    /// Predicted flexibility per slot, kW.
    pub predicted: Vec<f64>,
    pub reported_sigma: f64,
}

impl Forecast {
    pub fn total(&self) -> f64 {
        self.predicted.iter().sum()
    }
}

/// Noisy forecast of `actual`: `max(0, actual · (1 + ε))` per slot.
pub fn predict(lfe_id: LfeId, actual: &[f64], proc: &mut ErrorProcess) -> Forecast {
    let predicted = actual
        .iter()
        .map(|a| (a * (1.0 + proc.draw_error())).max(0.0))
        .collect();
    Forecast {
        lfe_id,
        predicted,
        reported_sigma: proc.reported_sigma(),
    }
}

/// `(actual - predicted) / predicted`, clamped to [-1, 1].
pub fn relative_error(actual: f64, predicted: f64) -> Result<f64> {
    if !(actual >= 0.0 && predicted >= 0.0) {
        return Err(Error::Domain(format!(
            "relative error needs non-negative inputs, got actual={actual} predicted={predicted}"
        )));
    }
    if predicted == 0.0 {
        return Ok(if actual == 0.0 { 0.0 } else { 1.0 });
    }
    Ok(((actual - predicted) / predicted).clamp(-1.0, 1.0))
}
