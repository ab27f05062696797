use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::der::FleetSpec;
use crate::forecast::{AccuracyMode, ErrorParams};
use crate::market::PriceParams;
use crate::pricing::{GridPayment, PricingParams};
use crate::rl::{DqnConfig, RewardNorm};
use crate::selection::{SelectionMethod, SelectionParams, MAX_DQN_LFES};
use crate::{Error, Result};

/// Market settings that are not prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    /// Standard deviation of the daily factor on generation and load.
    pub day_variability: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams { day_variability: 0.1 }
    }
}

/// One experiment: a scenario, a selection method, and everything
/// needed to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: u8,
    pub accuracy_mode: AccuracyMode,
    pub grid_payment: GridPayment,
    pub method: SelectionMethod,
    /// Trading cycles (days) per run.
    pub cycles: usize,
    pub seeds: Vec<u64>,
    /// Initial sigma per LFE; defaults to a linear spread over the bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_sigmas: Option<Vec<f64>>,
    pub fleet: FleetSpec,
    pub forecast: ErrorParams,
    pub selection: SelectionParams,
    pub pricing: PricingParams,
    pub prices: PriceParams,
    pub market: MarketParams,
    pub dqn: DqnConfig,
    pub reward_norm: RewardNorm,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario_id: 1,
            accuracy_mode: AccuracyMode::Static,
            grid_payment: GridPayment::Crps,
            method: SelectionMethod::CrpsThreshold,
            cycles: 80,
            seeds: vec![1, 2, 3, 4, 5],
            initial_sigmas: None,
            fleet: FleetSpec::default(),
            forecast: ErrorParams::default(),
            selection: SelectionParams::default(),
            pricing: PricingParams::default(),
            prices: PriceParams::default(),
            market: MarketParams::default(),
            dqn: DqnConfig::default(),
            reward_norm: RewardNorm::default(),
        }
    }
}

/// Accuracy regime and Grid payment of each scenario.
pub fn scenario_matrix(scenario_id: u8) -> Option<(AccuracyMode, GridPayment)> {
    match scenario_id {
        1 => Some((AccuracyMode::Static, GridPayment::Crps)),
        2 => Some((AccuracyMode::Dynamic, GridPayment::Crps)),
        3 => Some((AccuracyMode::Static, GridPayment::Simple)),
        4 => Some((AccuracyMode::Dynamic, GridPayment::Simple)),
        _ => None,
    }
}

impl ScenarioConfig {
    /// Desk-scale defaults for a scenario.
    pub fn scenario(scenario_id: u8, method: SelectionMethod) -> Result<Self> {
        let (accuracy_mode, grid_payment) = scenario_matrix(scenario_id)
            .ok_or_else(|| Error::invalid_field("scenario_id", format!("{scenario_id} is not one of 1, 2, 3, 4")))?;
        Ok(ScenarioConfig {
            scenario_id,
            accuracy_mode,
            grid_payment,
            method,
            ..ScenarioConfig::default()
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        ScenarioConfig::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `key=value` overrides with dotted keys
    /// (`selection.tau_crps=0.8`). Values are read as TOML, falling back to
    /// a bare string.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ScenarioConfig::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.initial_sigmas
            .clone()
            .unwrap_or_else(|| self.forecast.ranked_sigmas(self.fleet.lfe_count))
    }

    pub fn validate(&self) -> Result<()> {
        let (mode, payment) = scenario_matrix(self.scenario_id)
            .ok_or_else(|| Error::invalid_field("scenario_id", format!("{} is not one of 1, 2, 3, 4", self.scenario_id)))?;
        if self.accuracy_mode != mode {
            return Err(Error::invalid_field(
                "accuracy_mode",
                format!("scenario {} uses {mode:?} LFE accuracy", self.scenario_id).to_lowercase(),
            ));
        }
        if self.grid_payment != payment {
            return Err(Error::invalid_field(
                "grid_payment",
                format!("scenario {} uses the {payment:?} Grid payment", self.scenario_id).to_lowercase(),
            ));
        }
        if self.cycles == 0 {
            return Err(Error::invalid_field("cycles", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid_field("seeds", "needs at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::invalid_field("seeds", "contains duplicates"));
        }
        self.fleet.validate()?;
        self.forecast.validate()?;
        self.selection.validate()?;
        self.pricing.validate()?;
        self.prices.validate()?;
        if !(self.market.day_variability >= 0.0) {
            return Err(Error::invalid_field("market.day_variability", "must be non-negative"));
        }
        if let Some(s) = &self.initial_sigmas {
            if s.len() != self.fleet.lfe_count {
                return Err(Error::invalid_field(
                    "initial_sigmas",
                    format!("has {} entries for {} LFEs", s.len(), self.fleet.lfe_count),
                ));
            }
            let (lo, hi) = self.forecast.sigma_bounds();
            if s.iter().any(|v| !(lo..=hi).contains(v)) {
                return Err(Error::invalid_field("initial_sigmas", format!("values must lie in [{lo}, {hi}]")));
            }
        }
        if self.method.is_dqn() {
            self.dqn.validate()?;
            if self.fleet.lfe_count > MAX_DQN_LFES {
                return Err(Error::invalid_field(
                    "fleet.lfe_count",
                    format!("DQN methods support at most {MAX_DQN_LFES} LFEs; use a threshold method"),
                ));
            }
            match self.reward_norm {
                RewardNorm::Fixed(z) if !(z > 0.0) => {
                    return Err(Error::invalid_field("reward_norm", "fixed normalization must be positive"))
                }
                RewardNorm::RunningMean { window: 0 } => {
                    return Err(Error::invalid_field("reward_norm", "running-mean window must be at least 1"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
