//! How the Aggregator picks its members each trading cycle.
//!
//! Every method implements [`SelectionMechanism`]. A [`Registry`] maps the
//! method names used in configs and on the command line to constructors.

mod baseline;
mod dqn;
mod threshold;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rl::{DqnAgent, DqnConfig, RewardNorm};
use crate::{Error, LfeId, Result};

pub use baseline::{select_all, select_none, AllLfes, Singleton};
pub use dqn::{decode_mask, encode_mask, DqnSelector, MAX_DQN_LFES};
pub use threshold::{select_threshold, ThresholdSelector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SelectionMethod {
    #[serde(rename = "simple")]
    SimpleThreshold,
    #[serde(rename = "crps")]
    CrpsThreshold,
    #[serde(rename = "dqn-r1")]
    DqnR1,
    #[serde(rename = "dqn-r2")]
    DqnR2,
    #[serde(rename = "all")]
    AllLfes,
    #[serde(rename = "singleton")]
    Singleton,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 6] = [
        SelectionMethod::SimpleThreshold,
        SelectionMethod::CrpsThreshold,
        SelectionMethod::DqnR1,
        SelectionMethod::DqnR2,
        SelectionMethod::AllLfes,
        SelectionMethod::Singleton,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::SimpleThreshold => "simple",
            SelectionMethod::CrpsThreshold => "crps",
            SelectionMethod::DqnR1 => "dqn-r1",
            SelectionMethod::DqnR2 => "dqn-r2",
            SelectionMethod::AllLfes => "all",
            SelectionMethod::Singleton => "singleton",
        }
    }

    pub fn is_dqn(self) -> bool {
        matches!(self, SelectionMethod::DqnR1 | SelectionMethod::DqnR2)
    }

    /// Name of the pricing scheme the Aggregator runs alongside this method.
    /// Simple Selection is paired with prediction-accuracy pricing, everything
    /// else with CRPS pricing.
    pub fn pricing_scheme(self) -> &'static str {
        match self {
            SelectionMethod::SimpleThreshold => "accuracy",
            _ => "crps",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SelectionMethod::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown selection method `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub cycle_index: usize,
    pub method: SelectionMethod,
    pub selected: BTreeSet<LfeId>,
    pub threshold_used: Option<f64>,
}

/// Threshold-method settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    pub tau_simple: f64,
    pub tau_crps: f64,
    /// Score window, in trading cycles.
    pub window: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            tau_simple: 0.7,
            tau_crps: 0.77,
            window: 3,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_simple", self.tau_simple), ("tau_crps", self.tau_crps)] {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::invalid_field(format!("selection.{name}"), "must lie in [0, 1]"));
            }
        }
        if self.window == 0 {
            return Err(Error::invalid_field("selection.window", "must be at least 1"));
        }
        Ok(())
    }
}

/// What the Aggregator knows about one LFE when it selects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfeView {
    pub id: LfeId,
    pub window_simple: f64,
    pub window_crps: f64,
    /// Total flexibility the LFE forecasts for the coming day, kWh.
    pub predicted_kwh: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub cycle_index: usize,
    /// Every LFE in id order.
    pub lfes: &'a [LfeView],
}

/// Settlement outcome of the cycle a decision was made for.
#[derive(Debug, Clone, Copy)]
pub struct CycleFeedback<'a> {
    pub cycle_index: usize,
    pub v_grid_agg: f64,
    /// Direct Grid payments of the LFEs left out.
    pub unselected_direct: &'a [f64],
}

pub trait SelectionMechanism: Send {
    fn method(&self) -> SelectionMethod;

    fn name(&self) -> &'static str {
        self.method().name()
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<SelectionDecision>;

    /// Learns from a settled cycle. Returns the reward when the mechanism
    /// computes one.
    fn observe(&mut self, _feedback: &CycleFeedback<'_>) -> Result<Option<f64>> {
        Ok(None)
    }

    fn agent(&self) -> Option<&DqnAgent> {
        None
    }

    fn agent_mut(&mut self) -> Option<&mut DqnAgent> {
        None
    }
}

/// Everything a constructor may need.
#[derive(Debug, Clone)]
pub struct MechanismSpec<'a> {
    pub lfe_ids: &'a [LfeId],
    pub params: &'a SelectionParams,
    pub dqn: &'a DqnConfig,
    pub reward_norm: RewardNorm,
    /// Run length in cycles, for epsilon annealing.
    pub horizon: usize,
    pub seed: u64,
}

pub type Factory = fn(&MechanismSpec<'_>) -> Result<Box<dyn SelectionMechanism>>;

/// Named constructors for selection mechanisms.
#[derive(Clone)]
pub struct Registry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register("simple", |s| {
            Ok(Box::new(ThresholdSelector::simple(s.params.tau_simple)))
        });
        r.register("crps", |s| Ok(Box::new(ThresholdSelector::crps(s.params.tau_crps))));
        r.register("dqn-r1", |s| Ok(Box::new(DqnSelector::from_spec(SelectionMethod::DqnR1, s)?)));
        r.register("dqn-r2", |s| Ok(Box::new(DqnSelector::from_spec(SelectionMethod::DqnR2, s)?)));
        r.register("all", |_| Ok(Box::new(AllLfes)));
        r.register("singleton", |_| Ok(Box::new(Singleton)));
        r
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            factories: BTreeMap::new(),
        }
    }

    /// Adds or replaces a constructor.
    pub fn register(&mut self, name: impl Into<String>, factory: Factory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, spec: &MechanismSpec<'_>) -> Result<Box<dyn SelectionMechanism>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let names: Vec<_> = self.names().collect();
            Error::Config(format!("no selection mechanism named `{name}` (registered: {})", names.join(", ")))
        })?;
        factory(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in SelectionMethod::ALL {
            assert_eq!(m.name().parse::<SelectionMethod>().unwrap(), m);
        }
        assert!("greedy".parse::<SelectionMethod>().unwrap_err().is_config());
    }

    #[test]
    fn registry_builds_every_method() {
        let ids: Vec<LfeId> = (1..=3).map(LfeId).collect();
        let params = SelectionParams::default();
        let dqn = DqnConfig {
            hidden: vec![8],
            dropout_stages: vec![],
            ..DqnConfig::default()
        };
        let spec = MechanismSpec {
            lfe_ids: &ids,
            params: &params,
            dqn: &dqn,
            reward_norm: RewardNorm::default(),
            horizon: 10,
            seed: 1,
        };
        let reg = Registry::default();
        for m in SelectionMethod::ALL {
            let mech = reg.build(m.name(), &spec).unwrap();
            assert_eq!(mech.method(), m);
        }
        assert!(reg.build("nope", &spec).err().unwrap().is_config());
    }

    #[test]
    fn params_validation_names_field() {
        let p = SelectionParams {
            window: 0,
            ..SelectionParams::default()
        };
        match p.validate().unwrap_err() {
            Error::InvalidField { field, .. } => assert_eq!(field, "selection.window"),
            e => panic!("{e}"),
        }
    }
}
