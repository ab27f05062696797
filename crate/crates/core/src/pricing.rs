//! Grid payments and the Aggregator's profit division.
//!
//! Money is in euros, prices in €/MWh and flexibility in MWh per slot.
//! Two pricing schemes are available behind [`PricingScheme`]:
//!
//! - `accuracy`: bell-shaped penalty on the relative error, budget-balanced split
//! - `crps`: payment weighted by normalized CRPS, split by CRPS-weighted contribution
//!
//! Independently, a scenario may pay the Aggregator with the plain
//! volume-based settlement of [`grid_payment_simple`] (see [`GridPayment`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, LfeId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingParams {
    pub alpha: f64,
    pub beta: f64,
    /// Fraction of the accuracy-scheme payment the Aggregator keeps.
    pub aggregator_fee: f64,
}

impl Default for PricingParams {
    fn default() -> Self {
        PricingParams {
            alpha: 1.6,
            beta: 4.0,
            aggregator_fee: 0.0,
        }
    }
}

impl PricingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid_field("pricing.alpha", "must be non-negative"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid_field("pricing.beta", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.aggregator_fee) {
            return Err(Error::invalid_field("pricing.aggregator_fee", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `1 + α·|e|^β`. For even β this equals `1 + α·e^β`.
    pub fn bell_denominator(&self, e: f64) -> f64 {
        1.0 + self.alpha * e.abs().powf(self.beta)
    }
}

/// Lots at or below this size, in MWh, earn no volume term.
pub const LOG_FLOOR_MWH: f64 = 1.0;

/// How the Grid settles with the Aggregator (and with unselected LFEs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPayment {
    /// Accuracy-weighted payment of the method's pricing scheme.
    Crps,
    /// Volume-based settlement at day-ahead and delivery prices.
    Simple,
}

/// `ln(flex)·flex` with the log floored at 0 so lots of 1 MWh or less earn nothing.
pub fn volume_term(flex_mwh: f64) -> f64 {
    if flex_mwh <= LOG_FLOOR_MWH {
        0.0
    } else {
        flex_mwh.ln() * flex_mwh
    }
}

/// Bell-shaped accuracy payment.
pub fn grid_payment_accuracy(flex_mwh: f64, e: f64, price: f64, params: &PricingParams) -> f64 {
    volume_term(flex_mwh) / params.bell_denominator(e) * price
}

/// CRPS-weighted payment.
pub fn grid_payment_crps(flex_mwh: f64, crps_norm: f64, price: f64) -> f64 {
    crps_norm * volume_term(flex_mwh) * price
}

/// Volume settlement: shortfalls are paid at the day-ahead price for what was
/// delivered, surpluses at the delivery-time price.
pub fn grid_payment_simple(predicted_mwh: f64, delivered_mwh: f64, price: f64, delivery_price: f64) -> f64 {
    let diff = delivered_mwh - predicted_mwh;
    if diff <= 0.0 {
        delivered_mwh * price
    } else {
        predicted_mwh * price + diff * delivery_price
    }
}

/// Everything a pricing rule needs to know about one seller in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotTerms {
    pub predicted_mwh: f64,
    pub delivered_mwh: f64,
    /// Relative error of delivery against prediction, in [-1, 1].
    pub error: f64,
    pub sigma: f64,
    pub crps_norm: f64,
    pub price: f64,
    pub delivery_price: f64,
}

/// Result of dividing one payment among the Aggregator's members.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub shares: BTreeMap<LfeId, f64>,
    /// What the Aggregator keeps; negative when it pays out more than it got.
    pub retained: f64,
}

impl Split {
    pub fn paid_out(&self) -> f64 {
        self.shares.values().sum()
    }
}

/// Budget-balanced division by flexibility contribution and bell-shaped
/// accuracy weight. Members' shares sum to `(1 - fee)·v`.
pub fn split_accuracy(v: f64, contributions: &BTreeMap<LfeId, (f64, f64)>, params: &PricingParams) -> Split {
    let flex_agg: f64 = contributions.values().map(|(f, _)| f).sum();
    let weighted: f64 = contributions
        .values()
        .map(|(f, e)| f / params.bell_denominator(*e))
        .sum();
    if contributions.is_empty() || !(flex_agg > 0.0) || !(weighted > 0.0) {
        return Split {
            shares: contributions.keys().map(|id| (*id, 0.0)).collect(),
            retained: v,
        };
    }
    let z = flex_agg / weighted;
    let pass = v * (1.0 - params.aggregator_fee);
    let shares: BTreeMap<LfeId, f64> = contributions
        .iter()
        .map(|(id, (f, e))| (*id, z / params.bell_denominator(*e) * (f / flex_agg) * pass))
        .collect();
    let retained = v - shares.values().sum::<f64>();
    Split { shares, retained }
}

/// CRPS-weighted division, taken literally: member `i` receives
/// `crps_agg · flex_i · v / Σ_j crps_j·flex_j`. This is not budget-balanced;
/// the difference stays with (or is owed by) the Aggregator.
pub fn split_crps(v: f64, members: &BTreeMap<LfeId, (f64, f64)>, crps_agg: f64) -> Split {
    let denom: f64 = members.values().map(|(f, c)| f * c).sum();
    if !(denom > 0.0) {
        return Split {
            shares: members.keys().map(|id| (*id, 0.0)).collect(),
            retained: v,
        };
    }
    let shares: BTreeMap<LfeId, f64> = members
        .iter()
        .map(|(id, (f, _))| (*id, crps_agg * f * v / denom))
        .collect();
    let retained = v - shares.values().sum::<f64>();
    Split { shares, retained }
}

/// A pricing mechanism: how an accurate seller is paid and how the
/// Aggregator passes its revenue on.
pub trait PricingScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// Accuracy-aware Grid payment for one seller and slot.
    fn accuracy_payment(&self, terms: &SlotTerms) -> f64;

    fn split(&self, v: f64, members: &BTreeMap<LfeId, SlotTerms>, aggregate: &SlotTerms) -> Split;

    /// Grid payment under the scenario's settlement regime.
    fn grid_payment(&self, regime: GridPayment, terms: &SlotTerms) -> f64 {
        match regime {
            GridPayment::Crps => self.accuracy_payment(terms),
            GridPayment::Simple => grid_payment_simple(
                terms.predicted_mwh,
                terms.delivered_mwh,
                terms.price,
                terms.delivery_price,
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccuracyPricing {
    pub params: PricingParams,
}

impl PricingScheme for AccuracyPricing {
    fn name(&self) -> &'static str {
        "accuracy"
    }

    fn accuracy_payment(&self, t: &SlotTerms) -> f64 {
        grid_payment_accuracy(t.delivered_mwh, t.error, t.price, &self.params)
    }

    fn split(&self, v: f64, members: &BTreeMap<LfeId, SlotTerms>, _aggregate: &SlotTerms) -> Split {
        let contributions = members
            .iter()
            .map(|(id, t)| (*id, (t.delivered_mwh, t.error)))
            .collect();
        split_accuracy(v, &contributions, &self.params)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CrpsPricing;

impl PricingScheme for CrpsPricing {
    fn name(&self) -> &'static str {
        "crps"
    }

    fn accuracy_payment(&self, t: &SlotTerms) -> f64 {
        grid_payment_crps(t.delivered_mwh, t.crps_norm, t.price)
    }

    fn split(&self, v: f64, members: &BTreeMap<LfeId, SlotTerms>, aggregate: &SlotTerms) -> Split {
        let weights = members
            .iter()
            .map(|(id, t)| (*id, (t.delivered_mwh, t.crps_norm)))
            .collect();
        split_crps(v, &weights, aggregate.crps_norm)
    }
}

/// Looks up a pricing scheme by name.
pub fn scheme_by_name(name: &str, params: &PricingParams) -> Result<Box<dyn PricingScheme>> {
    match name {
        "accuracy" => Ok(Box::new(AccuracyPricing {
            params: params.clone(),
        })),
        "crps" => Ok(Box::new(CrpsPricing)),
        other => Err(Error::Config(format!(
            "unknown pricing scheme `{other}` (expected `accuracy` or `crps`)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u16) -> impl Iterator<Item = LfeId> {
        (1..=n).map(LfeId)
    }

    #[test]
    fn accuracy_payment_peaks_at_zero_error() {
        let p = PricingParams::default();
        let peak = grid_payment_accuracy(10.0, 0.0, 100.0, &p);
        assert!((peak - 2_302.585_093).abs() < 1e-3);
        let edge = grid_payment_accuracy(10.0, 1.0, 100.0, &p);
        assert!((edge - peak / 2.6).abs() < 1e-9);
        assert!((grid_payment_accuracy(10.0, -1.0, 100.0, &p) - edge).abs() < 1e-12);
        assert_eq!(grid_payment_accuracy(1.0, 0.0, 100.0, &p), 0.0);
        assert_eq!(grid_payment_accuracy(0.3, 0.0, 100.0, &p), 0.0);
    }

    #[test]
    fn crps_payment_examples() {
        let full = grid_payment_crps(10.0, 1.0, 100.0);
        assert!((full - 2_302.585_093).abs() < 1e-3);
        assert_eq!(grid_payment_crps(10.0, 0.0, 100.0), 0.0);
        assert!((grid_payment_crps(10.0, 0.5, 100.0) - full / 2.0).abs() < 1e-9);
    }

    #[test]
    fn simple_payment_branches() {
        assert_eq!(grid_payment_simple(10.0, 10.0, 50.0, 40.0), 500.0);
        assert_eq!(grid_payment_simple(10.0, 8.0, 50.0, 40.0), 400.0);
        assert_eq!(grid_payment_simple(10.0, 12.0, 50.0, 40.0), 580.0);
    }

    #[test]
    fn accuracy_split_single_member_takes_all() {
        let p = PricingParams::default();
        let c = BTreeMap::from([(LfeId(1), (3.0, 0.4))]);
        let s = split_accuracy(250.0, &c, &p);
        assert!((s.shares[&LfeId(1)] - 250.0).abs() < 1e-9);
        assert!(s.retained.abs() < 1e-9);
    }

    #[test]
    fn accuracy_split_weights_by_bell() {
        let p = PricingParams::default();
        let c = BTreeMap::from([(LfeId(1), (2.0, 0.0)), (LfeId(2), (2.0, 1.0))]);
        let s = split_accuracy(100.0, &c, &p);
        // Weights 1 : 1/2.6 → shares 100·2.6/3.6 and 100/3.6.
        assert!((s.shares[&LfeId(1)] - 100.0 * 2.6 / 3.6).abs() < 1e-9);
        assert!((s.shares[&LfeId(2)] - 100.0 / 3.6).abs() < 1e-9);
    }

    #[test]
    fn accuracy_split_withholds_fee() {
        let p = PricingParams {
            aggregator_fee: 0.1,
            ..PricingParams::default()
        };
        let c: BTreeMap<_, _> = ids(3).map(|id| (id, (1.0 + id.0 as f64, 0.1 * id.0 as f64))).collect();
        let s = split_accuracy(1000.0, &c, &p);
        assert!((s.paid_out() - 900.0).abs() < 1e-9);
        assert!((s.retained - 100.0).abs() < 1e-9);
    }

    #[test]
    fn accuracy_split_of_nothing_is_empty() {
        let s = split_accuracy(10.0, &BTreeMap::new(), &PricingParams::default());
        assert!(s.shares.is_empty());
        assert_eq!(s.retained, 10.0);
    }

    #[test]
    fn crps_split_examples() {
        let equal = BTreeMap::from([(LfeId(1), (1.0, 0.8)), (LfeId(2), (3.0, 0.8))]);
        let s = split_crps(400.0, &equal, 0.8);
        assert!((s.shares[&LfeId(1)] - 100.0).abs() < 1e-9);
        assert!((s.shares[&LfeId(2)] - 300.0).abs() < 1e-9);

        let uneven = BTreeMap::from([(LfeId(1), (1.0, 1.0)), (LfeId(2), (1.0, 0.5))]);
        let s = split_crps(1.0, &uneven, 0.75);
        assert!((s.shares[&LfeId(1)] - 0.5).abs() < 1e-12);
        assert!((s.shares[&LfeId(2)] - 0.5).abs() < 1e-12);
        assert!(s.retained.abs() < 1e-12);

        let s = split_crps(1.0, &uneven, 0.9);
        assert!((s.shares[&LfeId(1)] - 0.6).abs() < 1e-12);
        assert!((s.paid_out() - 1.2).abs() < 1e-12);
        assert!((s.retained + 0.2).abs() < 1e-12);

        let single = BTreeMap::from([(LfeId(4), (2.0, 0.6))]);
        assert!((split_crps(9.0, &single, 0.6).shares[&LfeId(4)] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn crps_split_zero_denominator_books_to_aggregator() {
        let zero = BTreeMap::from([(LfeId(1), (0.0, 0.9)), (LfeId(2), (2.0, 0.0))]);
        let s = split_crps(50.0, &zero, 0.5);
        assert_eq!(s.paid_out(), 0.0);
        assert_eq!(s.retained, 50.0);
    }

    #[test]
    fn registry_resolves_schemes() {
        let p = PricingParams::default();
        assert_eq!(scheme_by_name("accuracy", &p).unwrap().name(), "accuracy");
        assert_eq!(scheme_by_name("crps", &p).unwrap().name(), "crps");
        assert!(scheme_by_name("vcg", &p).err().unwrap().is_config());
    }

    #[test]
    fn simple_regime_ignores_scheme() {
        let t = SlotTerms {
            predicted_mwh: 10.0,
            delivered_mwh: 12.0,
            price: 50.0,
            delivery_price: 40.0,
            ..SlotTerms::default()
        };
        for scheme in [scheme_by_name("accuracy", &PricingParams::default()).unwrap(), Box::new(CrpsPricing)] {
            assert_eq!(scheme.grid_payment(GridPayment::Simple, &t), 580.0);
        }
    }
}
