use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    /// Aggregator revenue over a normalization constant.
    R1,
    /// Aggregator revenue's share of everything the Grid paid out.
    R2,
}

/// Where the R1 normalization constant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardNorm {
    /// Mean `|V_Grid,Agg|` over the last `window` cycles, current one included.
    RunningMean { window: usize },
    Fixed(f64),
}

impl Default for RewardNorm {
    fn default() -> Self {
        RewardNorm::RunningMean { window: 50 }
    }
}

pub fn reward_r1(v_grid_agg: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Config(format!("reward normalization must be positive, got {z}")));
    }
    Ok(v_grid_agg / z)
}

/// `v_agg / (v_agg + Σ direct payments to unselected LFEs)`; 0 when nothing traded.
pub fn reward_r2(v_grid_agg: f64, v_grid_lfe_unselected: &[f64]) -> Result<f64> {
    if v_grid_agg < 0.0 || v_grid_lfe_unselected.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("reward inputs must be non-negative".into()));
    }
    let total = v_grid_agg + v_grid_lfe_unselected.iter().sum::<f64>();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(v_grid_agg / total)
}

/// Stateful reward evaluation for one training run.
#[derive(Debug, Clone)]
pub struct RewardTracker {
    kind: RewardKind,
    norm: RewardNorm,
    history: VecDeque<f64>,
}

impl RewardTracker {
    pub fn new(kind: RewardKind, norm: RewardNorm) -> Self {
        RewardTracker {
            kind,
            norm,
            history: VecDeque::new(),
        }
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    /// The normalization constant R1 would use after observing `v_grid_agg`.
    fn z_with(&mut self, v_grid_agg: f64) -> f64 {
        match self.norm {
            RewardNorm::Fixed(z) => z,
            RewardNorm::RunningMean { window } => {
                self.history.push_back(v_grid_agg.abs());
                while self.history.len() > window.max(1) {
                    self.history.pop_front();
                }
                self.history.iter().sum::<f64>() / self.history.len() as f64
            }
        }
    }

    pub fn reward(&mut self, v_grid_agg: f64, v_grid_lfe_unselected: &[f64]) -> Result<f64> {
        let z = self.z_with(v_grid_agg);
        match self.kind {
            RewardKind::R1 => match self.norm {
                // No revenue anywhere in the window yet: nothing to normalize against.
                RewardNorm::RunningMean { .. } if z == 0.0 => Ok(0.0),
                _ => reward_r1(v_grid_agg, z),
            },
            RewardKind::R2 => reward_r2(v_grid_agg, v_grid_lfe_unselected),
        }
    }
}
