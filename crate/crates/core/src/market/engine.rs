use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::prices::{DayPrices, PriceParams, PriceProcess};
use crate::der::{DerAsset, Fleet};
use crate::forecast::{predict, relative_error, AccuracyMode, ErrorParams, ErrorProcess, Forecast, PredictorRank};
use crate::pricing::{GridPayment, PricingParams, PricingScheme, SlotTerms};
use crate::scoring::{crps_raw, CrpsNormalizer, ScoreBook, ScoreRecord};
use crate::seeds::{rng_for, Stream};
use crate::selection::{CycleFeedback, LfeView, SelectionContext, SelectionDecision, SelectionMechanism};
use crate::{Error, LfeId, Result, SLOTS_PER_DAY};

const KWH_PER_MWH: f64 = 1000.0;

/// Everything that defines a simulated market apart from the Aggregator's
/// selection and pricing mechanisms.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub fleet: Fleet,
    /// Initial forecast sigma of each LFE, in fleet order.
    pub initial_sigmas: Vec<f64>,
    pub accuracy_mode: AccuracyMode,
    pub error_params: ErrorParams,
    pub grid_payment: GridPayment,
    pub pricing: PricingParams,
    pub prices: PriceParams,
    /// Score window in cycles.
    pub window: usize,
    /// Standard deviation of the daily weather/usage factor applied to
    /// generation and load.
    pub day_variability: f64,
    pub seed: u64,
}

/// One LFE coalition and the Aggregator's record of it.
#[derive(Debug, Clone)]
pub struct Lfe {
    pub id: LfeId,
    pub assets: Vec<DerAsset>,
    pub error: ErrorProcess,
    pub rank: PredictorRank,
    pub scores: ScoreBook,
    day_rng: ChaCha8Rng,
}

impl Lfe {
    /// Plays one day of the LFE's assets and returns its delivered
    /// flexibility per slot, kW.
    fn realize_day(&mut self, day_variability: f64) -> Result<Vec<f64>> {
        let scale = if day_variability > 0.0 {
            let n = Normal::new(1.0, day_variability).expect("positive std");
            n.sample(&mut self.day_rng).max(0.0)
        } else {
            1.0
        };
        let mut out = vec![0.0; SLOTS_PER_DAY];
        for (slot, v) in out.iter_mut().enumerate() {
            for asset in self.assets.iter_mut() {
                *v += asset.step_slot(slot, scale)?;
            }
        }
        Ok(out)
    }
}

/// Who paid whom in one trading cycle, summed over its slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaymentLedger {
    pub cycle_index: usize,
    /// Grid to Aggregator, €.
    pub v_grid_agg: f64,
    /// Aggregator to each member, €.
    pub v_agg_lfe: BTreeMap<LfeId, f64>,
    /// Grid to each unselected LFE, €.
    pub v_grid_lfe_direct: BTreeMap<LfeId, f64>,
    /// What the Aggregator kept; negative when its split paid out more.
    pub aggregator_retained: f64,
    /// Energy each LFE delivered, MWh.
    pub delivered_mwh: BTreeMap<LfeId, f64>,
    pub aggregator_mwh: f64,
    pub price_day_ahead: Vec<f64>,
    pub price_delivery: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl PaymentLedger {
    /// What LFE `id` received this cycle through either channel.
    pub fn received(&self, id: LfeId) -> f64 {
        self.v_agg_lfe.get(&id).or_else(|| self.v_grid_lfe_direct.get(&id)).copied().unwrap_or(0.0)
    }

    pub fn grid_outflow(&self) -> f64 {
        self.v_grid_agg + self.v_grid_lfe_direct.values().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradingCycle {
    pub day_index: usize,
    pub forecasts: BTreeMap<LfeId, Forecast>,
    pub decision: SelectionDecision,
    /// Realized flexibility per LFE and slot, kW.
    pub deliveries: BTreeMap<LfeId, Vec<f64>>,
    pub ledger: PaymentLedger,
    pub scores: BTreeMap<LfeId, ScoreRecord>,
    pub reward: Option<f64>,
}

impl TradingCycle {
    pub fn is_selected(&self, id: LfeId) -> bool {
        self.decision.selected.contains(&id)
    }
}

/// The day-by-day market: LFEs, the Aggregator's mechanisms, the price
/// process, and the record of every settled cycle.
pub struct Simulation {
    lfes: Vec<Lfe>,
    mechanism: Box<dyn SelectionMechanism>,
    scheme: Box<dyn PricingScheme>,
    grid_payment: GridPayment,
    pricing: PricingParams,
    prices: PriceProcess,
    normalizer: CrpsNormalizer,
    window: usize,
    day_variability: f64,
    cycles: Vec<TradingCycle>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("lfes", &self.lfes.len())
            .field("mechanism", &self.mechanism.name())
            .field("scheme", &self.scheme.name())
            .field("cycles", &self.cycles.len())
            .finish()
    }
}

impl Simulation {
    pub fn new(setup: SimSetup, mechanism: Box<dyn SelectionMechanism>, scheme: Box<dyn PricingScheme>) -> Result<Self> {
        let n = setup.fleet.len();
        if n == 0 {
            return Err(Error::Config("the fleet has no LFEs".into()));
        }
        if setup.initial_sigmas.len() != n {
            return Err(Error::Config(format!(
                "{} initial sigmas given for {n} LFEs",
                setup.initial_sigmas.len()
            )));
        }
        if setup.window == 0 {
            return Err(Error::invalid_field("selection.window", "must be at least 1"));
        }
        if !(setup.day_variability >= 0.0) {
            return Err(Error::invalid_field("market.day_variability", "must be non-negative"));
        }
        setup.pricing.validate()?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| setup.initial_sigmas[*a].total_cmp(&setup.initial_sigmas[*b]).then(a.cmp(b)));
        let mut rank_of = vec![0; n];
        for (rank, i) in order.into_iter().enumerate() {
            rank_of[i] = rank;
        }
        let mut lfes = Vec::with_capacity(n);
        for (i, (id, assets)) in setup.fleet.into_iter().enumerate() {
            if assets.is_empty() {
                return Err(Error::Config(format!("LFE {id} has no assets")));
            }
            for a in &assets {
                a.validate()?;
            }
            lfes.push(Lfe {
                id,
                assets,
                error: ErrorProcess::new(
                    setup.initial_sigmas[i],
                    setup.accuracy_mode,
                    setup.error_params.clone(),
                    setup.seed,
                    id,
                )?,
                rank: PredictorRank {
                    rank: rank_of[i],
                    population: n,
                },
                scores: ScoreBook::default(),
                day_rng: rng_for(setup.seed, Stream::Actuals, id.0 as u64),
            });
        }
        Ok(Simulation {
            lfes,
            mechanism,
            scheme,
            grid_payment: setup.grid_payment,
            pricing: setup.pricing,
            prices: PriceProcess::new(setup.prices, setup.seed)?,
            normalizer: CrpsNormalizer::from_bounds(setup.error_params.sigma_bounds())?,
            window: setup.window,
            day_variability: setup.day_variability,
            cycles: Vec::new(),
        })
    }

    pub fn lfes(&self) -> &[Lfe] {
        &self.lfes
    }

    pub fn lfe_ids(&self) -> Vec<LfeId> {
        self.lfes.iter().map(|l| l.id).collect()
    }

    pub fn mechanism(&self) -> &dyn SelectionMechanism {
        self.mechanism.as_ref()
    }

    pub fn mechanism_mut(&mut self) -> &mut dyn SelectionMechanism {
        self.mechanism.as_mut()
    }

    pub fn scheme(&self) -> &dyn PricingScheme {
        self.scheme.as_ref()
    }

    pub fn normalizer(&self) -> &CrpsNormalizer {
        &self.normalizer
    }

    pub fn cycles(&self) -> &[TradingCycle] {
        &self.cycles
    }

    pub fn into_cycles(self) -> Vec<TradingCycle> {
        self.cycles
    }

    pub fn run(&mut self, cycles: usize) -> Result<()> {
        for _ in 0..cycles {
            self.run_cycle()?;
        }
        Ok(())
    }

    fn slot_terms(&self, predicted_kwh: f64, delivered_kwh: f64, sigma: f64, price: f64, delivery_price: f64) -> Result<SlotTerms> {
        let error = relative_error(delivered_kwh, predicted_kwh)?;
        Ok(SlotTerms {
            predicted_mwh: predicted_kwh / KWH_PER_MWH,
            delivered_mwh: delivered_kwh / KWH_PER_MWH,
            error,
            sigma,
            crps_norm: self.normalizer.normalize(crps_raw(error, sigma)?),
            price,
            delivery_price,
        })
    }

    /// Plays one trading day and appends it to the record.
    pub fn run_cycle(&mut self) -> Result<&TradingCycle> {
        let day = self.cycles.len();
        let fail = |step: &str, e: Error| Error::Domain(format!("cycle {day}, {step}: {e}"));

        // Forecasts. The simulator knows the day's outcome up front and
        // LFEs report it with noise.
        let mut actuals = Vec::with_capacity(self.lfes.len());
        let mut forecasts = Vec::with_capacity(self.lfes.len());
        for lfe in self.lfes.iter_mut() {
            let actual = lfe.realize_day(self.day_variability).map_err(|e| fail("delivery", e))?;
            forecasts.push(predict(lfe.id, &actual, &mut lfe.error));
            actuals.push(actual);
        }

        // Selection, from scores of earlier cycles only.
        let views: Vec<LfeView> = self
            .lfes
            .iter()
            .zip(&forecasts)
            .map(|(lfe, f)| LfeView {
                id: lfe.id,
                window_simple: lfe.scores.window_simple(self.window),
                window_crps: lfe.scores.window_crps(self.window),
                predicted_kwh: f.total(),
            })
            .collect();
        let decision = self
            .mechanism
            .select(&SelectionContext {
                cycle_index: day,
                lfes: &views,
            })
            .map_err(|e| fail("selection", e))?;
        let known: BTreeSet<LfeId> = self.lfes.iter().map(|l| l.id).collect();
        if !decision.selected.is_subset(&known) {
            return Err(fail("selection", Error::Domain("selected an unknown LFE".into())));
        }

        // Settlement, slot by slot.
        let DayPrices { day_ahead, delivery } = self.prices.next_prices();
        let mut v_grid_agg = 0.0;
        let mut retained = 0.0;
        let mut v_agg_lfe: BTreeMap<LfeId, f64> = BTreeMap::new();
        let mut direct: BTreeMap<LfeId, f64> = BTreeMap::new();
        let mut delivered_mwh: BTreeMap<LfeId, f64> = BTreeMap::new();
        let mut aggregator_mwh = 0.0;
        for (i, lfe) in self.lfes.iter().enumerate() {
            if decision.selected.contains(&lfe.id) {
                v_agg_lfe.insert(lfe.id, 0.0);
            } else {
                direct.insert(lfe.id, 0.0);
            }
            delivered_mwh.insert(lfe.id, actuals[i].iter().sum::<f64>() / KWH_PER_MWH);
        }
        for slot in 0..SLOTS_PER_DAY {
            let (p, pc) = (day_ahead[slot], delivery[slot]);
            let mut members = BTreeMap::new();
            let (mut pred_sum, mut deliv_sum, mut sigma_weighted) = (0.0, 0.0, 0.0);
            for (i, lfe) in self.lfes.iter().enumerate() {
                let (pred, deliv) = (forecasts[i].predicted[slot], actuals[i][slot]);
                let sigma = forecasts[i].reported_sigma;
                let terms = self.slot_terms(pred, deliv, sigma, p, pc).map_err(|e| fail("pricing", e))?;
                if decision.selected.contains(&lfe.id) {
                    pred_sum += pred;
                    deliv_sum += deliv;
                    sigma_weighted += pred * sigma;
                    members.insert(lfe.id, terms);
                } else {
                    *direct.get_mut(&lfe.id).expect("inserted above") += self.scheme.grid_payment(self.grid_payment, &terms);
                }
            }
            if members.is_empty() {
                continue;
            }
            let sigma_agg = if pred_sum > 0.0 {
                sigma_weighted / pred_sum
            } else {
                members.values().map(|t| t.sigma).sum::<f64>() / members.len() as f64
            };
            let aggregate = self.slot_terms(pred_sum, deliv_sum, sigma_agg, p, pc).map_err(|e| fail("pricing", e))?;
            let v = self.scheme.grid_payment(self.grid_payment, &aggregate);
            let split = self.scheme.split(v, &members, &aggregate);
            for (id, share) in split.shares {
                *v_agg_lfe.get_mut(&id).expect("member") += share;
            }
            v_grid_agg += v;
            retained += split.retained;
            aggregator_mwh += aggregate.delivered_mwh;
        }
        let ledger = PaymentLedger {
            cycle_index: day,
            v_grid_agg,
            v_agg_lfe,
            v_grid_lfe_direct: direct,
            aggregator_retained: retained,
            delivered_mwh,
            aggregator_mwh,
            price_day_ahead: day_ahead,
            price_delivery: delivery,
            alpha: self.pricing.alpha,
            beta: self.pricing.beta,
        };

        // Re-score every LFE, selected or not.
        let mut scores = BTreeMap::new();
        for (i, lfe) in self.lfes.iter_mut().enumerate() {
            let rec = lfe
                .scores
                .record(
                    lfe.id,
                    day,
                    &forecasts[i].predicted,
                    &actuals[i],
                    forecasts[i].reported_sigma,
                    &self.normalizer,
                    self.window,
                )
                .map_err(|e| fail("scoring", e))?;
            scores.insert(lfe.id, rec);
        }

        let unselected: Vec<f64> = ledger.v_grid_lfe_direct.values().copied().collect();
        let reward = self
            .mechanism
            .observe(&CycleFeedback {
                cycle_index: day,
                v_grid_agg,
                unselected_direct: &unselected,
            })
            .map_err(|e| fail("learning", e))?;

        for lfe in self.lfes.iter_mut() {
            for _ in 0..SLOTS_PER_DAY {
                lfe.error.step_accuracy(lfe.rank);
            }
        }

        self.cycles.push(TradingCycle {
            day_index: day,
            forecasts: forecasts.into_iter().map(|f| (f.lfe_id, f)).collect(),
            decision,
            deliveries: self.lfes.iter().map(|l| l.id).zip(actuals).collect(),
            ledger,
            scores,
            reward,
        });
        Ok(self.cycles.last().expect("just pushed"))
    }
}
