use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seeds::{rng_for, Stream};
use crate::{DayProfile, Error, Result, SLOTS_PER_DAY};

/// Prices never fall below this, €/MWh.
pub const PRICE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceParams {
    /// Mean day-ahead price, €/MWh.
    pub base: f64,
    /// Per-slot standard deviation of the mean-reverting deviation, €/MWh.
    pub noise_sigma: f64,
    /// Fraction of the deviation removed each slot.
    pub mean_reversion: f64,
    /// Standard deviation of delivery-time price noise, €/MWh.
    pub delivery_sigma: f64,
    /// Slots at which the daily shape peaks.
    pub peaks: Vec<usize>,
    /// Height of each peak above the flat part, before normalization.
    pub peak_height: f64,
    /// Half-width of each peak in slots.
    pub peak_width: f64,
}

impl Default for PriceParams {
    fn default() -> Self {
        PriceParams {
            base: 120.0,
            noise_sigma: 10.0,
            mean_reversion: 0.3,
            delivery_sigma: 10.0,
            peaks: vec![11, 19],
            peak_height: 0.4,
            peak_width: 4.0,
        }
    }
}

impl PriceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::invalid_field(format!("prices.{f}"), r));
        if !(self.base > 0.0) {
            return bad("base", "must be positive");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be non-negative");
        }
        if !(self.delivery_sigma >= 0.0) {
            return bad("delivery_sigma", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.mean_reversion) {
            return bad("mean_reversion", "must lie in [0, 1]");
        }
        if self.peaks.iter().any(|p| *p >= SLOTS_PER_DAY) {
            return bad("peaks", "peak slots must lie in [0, 24)");
        }
        if !(self.peak_height >= 0.0 && self.peak_width > 0.0) {
            return bad("peak_height", "peak height must be non-negative and width positive");
        }
        Ok(())
    }

    /// Raised-cosine bumps at the peak slots on a flat base, scaled to mean 1.
    pub fn daily_shape(&self) -> DayProfile {
        let mut shape = [1.0; SLOTS_PER_DAY];
        for (slot, v) in shape.iter_mut().enumerate() {
            for peak in &self.peaks {
                let d = (slot as f64 - *peak as f64).abs();
                let d = d.min(SLOTS_PER_DAY as f64 - d);
                if d < self.peak_width {
                    *v += self.peak_height * 0.5 * (1.0 + (PI * d / self.peak_width).cos());
                }
            }
        }
        let mean = shape.iter().sum::<f64>() / SLOTS_PER_DAY as f64;
        shape.map(|v| v / mean)
    }
}

/// Day-ahead prices `p` and delivery prices `p_c` for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPrices {
    pub day_ahead: Vec<f64>,
    pub delivery: Vec<f64>,
}

/// Seasonal price path with an Ornstein-Uhlenbeck style deviation that
/// carries over between days.
#[derive(Debug, Clone)]
pub struct PriceProcess {
    params: PriceParams,
    shape: DayProfile,
    deviation: f64,
    rng: ChaCha8Rng,
}

impl PriceProcess {
    pub fn new(params: PriceParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(PriceProcess {
            shape: params.daily_shape(),
            params,
            deviation: 0.0,
            rng: rng_for(seed, Stream::Prices, 0),
        })
    }

    pub fn params(&self) -> &PriceParams {
        &self.params
    }

    pub fn shape(&self) -> &DayProfile {
        &self.shape
    }

    pub fn next_prices(&mut self) -> DayPrices {
        let mut day_ahead = Vec::with_capacity(SLOTS_PER_DAY);
        let mut delivery = Vec::with_capacity(SLOTS_PER_DAY);
        for m in self.shape {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.deviation += -self.params.mean_reversion * self.deviation + self.params.noise_sigma * z;
            let p = (self.params.base * m + self.deviation).max(PRICE_FLOOR);
            let zc: f64 = StandardNormal.sample(&mut self.rng);
            day_ahead.push(p);
            delivery.push((p + self.params.delivery_sigma * zc).max(PRICE_FLOOR));
        }
        DayPrices { day_ahead, delivery }
    }
}
