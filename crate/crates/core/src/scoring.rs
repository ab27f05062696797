//! Accuracy scores the Aggregator keeps for every LFE.
//!
//! Two families are tracked side by side: the MAE-based *simple* score in
//! `[0, 1]` and the CRPS of the LFE's reported `N(0, σ²)` error distribution,
//! which is a non-positive number normalized to `[0, 1]` before use.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::forecast::relative_error;
use crate::{Error, LfeId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub lfe_id: LfeId,
    pub cycle_index: usize,
    pub mae: f64,
    pub avg_flex: f64,
    pub simple_score: f64,
    /// Mean per-slot CRPS, `<= 0`.
    pub crps_raw: f64,
    pub crps_norm: f64,
    pub window_avg_simple: f64,
    pub window_avg_crps: f64,
    /// The LFE had no actual flexibility all cycle, so its simple score is 0.
    pub zero_flex: bool,
}

/// Mean absolute error between two equally long sequences.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::Domain(format!(
            "mae needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let sum: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(sum / predicted.len() as f64)
}

pub fn avg_flex(actual: &[f64]) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    actual.iter().map(|a| a.abs()).sum::<f64>() / actual.len() as f64
}

/// `max(1 - mae / avg_flex, 0)`; an LFE with no flexibility scores 0.
pub fn simple_score(mae: f64, avg_flex: f64) -> f64 {
    if !(avg_flex > 0.0) {
        return 0.0;
    }
    (1.0 - mae / avg_flex).clamp(0.0, 1.0)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Negated CRPS of a `N(0, σ²)` forecast against the observed error `e`.
///
/// Zero is the best attainable value (a confident, exact forecast).
pub fn crps_raw(e: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("crps needs sigma > 0, got {sigma}")));
    }
    if !e.is_finite() {
        return Err(Error::Domain(format!("crps needs a finite error, got {e}")));
    }
    let z = e / sigma;
    let inner = 1.0 / PI.sqrt() - 2.0 * std_normal_pdf(z) - z * (2.0 * std_normal_cdf(z) - 1.0);
    // The bracket is analytically <= 0; round-off can push it just above.
    Ok((sigma * inner).min(0.0))
}

/// Affine map of raw CRPS values onto `[0, 1]`, anchored at the worst score
/// attainable over `e ∈ [-1, 1]` and the configured sigma bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrpsNormalizer {
    raw_min: f64,
}

impl CrpsNormalizer {
    const GRID_STEP: f64 = 1e-3;

    /// Finds the worst attainable raw score by grid search.
    pub fn from_bounds(sigma_bounds: (f64, f64)) -> Result<Self> {
        let (lo, hi) = sigma_bounds;
        let lo = lo.max(crate::forecast::MIN_REPORTED_SIGMA);
        if !(lo <= hi) {
            return Err(Error::Domain(format!("bad sigma bounds {sigma_bounds:?}")));
        }
        let e_steps = (2.0 / Self::GRID_STEP).round() as usize;
        let s_steps = ((hi - lo) / Self::GRID_STEP).round() as usize;
        let mut raw_min = 0.0_f64;
        for si in 0..=s_steps {
            let sigma = (lo + si as f64 * Self::GRID_STEP).min(hi);
            for ei in 0..=e_steps {
                let e = -1.0 + ei as f64 * Self::GRID_STEP;
                raw_min = raw_min.min(crps_raw(e, sigma)?);
            }
        }
        Ok(CrpsNormalizer { raw_min })
    }

    pub fn raw_min(&self) -> f64 {
        self.raw_min
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        if self.raw_min >= 0.0 {
            return 1.0;
        }
        ((raw - self.raw_min) / -self.raw_min).clamp(0.0, 1.0)
    }
}

/// Mean of the last `min(w, len)` entries; an empty history scores 0.
pub fn window_average(history: &[f64], w: usize) -> f64 {
    let w = w.max(1);
    let tail = &history[history.len().saturating_sub(w)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Rolling score history of one LFE.
#[derive(Debug, Clone, Default)]
pub struct ScoreBook {
    simple: Vec<f64>,
    crps: Vec<f64>,
}

impl ScoreBook {
    pub fn window_simple(&self, w: usize) -> f64 {
        window_average(&self.simple, w)
    }

    pub fn window_crps(&self, w: usize) -> f64 {
        window_average(&self.crps, w)
    }

    pub fn latest_crps(&self) -> Option<f64> {
        self.crps.last().copied()
    }

    pub fn len(&self) -> usize {
        self.simple.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simple.is_empty()
    }

    /// Scores one settled cycle and appends it to the history.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        lfe_id: LfeId,
        cycle_index: usize,
        predicted: &[f64],
        actual: &[f64],
        reported_sigma: f64,
        normalizer: &CrpsNormalizer,
        window: usize,
    ) -> Result<ScoreRecord> {
        let mae = mae(predicted, actual)?;
        let avg = avg_flex(actual);
        let simple = simple_score(mae, avg);
        let mut crps_sum = 0.0;
        for (p, a) in predicted.iter().zip(actual) {
            crps_sum += crps_raw(relative_error(*a, *p)?, reported_sigma)?;
        }
        let crps = crps_sum / predicted.len() as f64;
        let crps_norm = normalizer.normalize(crps);
        self.simple.push(simple);
        self.crps.push(crps_norm);
        Ok(ScoreRecord {
            lfe_id,
            cycle_index,
            mae,
            avg_flex: avg,
            simple_score: simple,
            crps_raw: crps,
            crps_norm,
            window_avg_simple: self.window_simple(window),
            window_avg_crps: self.window_crps(window),
            zero_flex: !(avg > 0.0),
        })
    }
}
