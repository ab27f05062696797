//! Multiagent flexibility aggregation for distributed energy resources.
//!
//! Local Flexibility Estimators (LFEs) own coalitions of DER assets, forecast
//! their day-ahead flexibility and either sell it directly to the Grid or
//! through an Aggregator. The Aggregator picks members each trading cycle with
//! a pluggable [`selection::SelectionMechanism`] and divides its revenue with a
//! pluggable [`pricing::PricingScheme`].
//!
//! Module map:
//!
//! - [`der`]: asset models, flexibility rules and fleet generation
//! - [`forecast`]: Gaussian forecast-error processes and relative errors
//! - [`scoring`]: MAE-based score, CRPS and window averages
//! - [`selection`]: the selection strategy registry (thresholds, DQN, baselines)
//! - [`rl`]: a small deep Q-network (MLP, replay buffer, rewards)
//! - [`pricing`]: Grid payments and profit division
//! - [`market`]: price process and the trading-cycle engine
//! - [`harness`]: scenario configs, multi-seed runs, metrics and CSV output

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod der;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod market;
pub mod pricing;
pub mod rl;
pub mod scoring;
pub mod seeds;
pub mod selection;

pub use error::{Error, Result};

/// Number of hourly timeslots in one trading cycle.
pub const SLOTS_PER_DAY: usize = 24;

/// One value per hourly timeslot.
pub type DayProfile = [f64; SLOTS_PER_DAY];

/// Identifier of an LFE coalition. Ids are 1-based, matching `LFE_1 .. LFE_n`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct LfeId(pub u16);

impl LfeId {
    pub fn from_index(index: usize) -> Self {
        LfeId(index as u16 + 1)
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl std::fmt::Display for LfeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
