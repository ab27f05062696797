use std::collections::BTreeSet;

use serde::Serialize;

use crate::market::TradingCycle;
use crate::selection::SelectionMethod;
use crate::LfeId;

/// One LFE's totals over a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfeMetrics {
    pub lfe_id: LfeId,
    pub initial_sigma: f64,
    pub mwh_total: f64,
    pub mwh_via_aggregator: f64,
    pub mwh_direct: f64,
    pub eur_via_aggregator: f64,
    pub eur_direct: f64,
    pub cycles_selected: usize,
    pub cycles: usize,
}

impl LfeMetrics {
    pub fn eur_total(&self) -> f64 {
        self.eur_via_aggregator + self.eur_direct
    }

    /// Average price received per MWh delivered; 0 if nothing was delivered.
    pub fn eur_per_mwh(&self) -> f64 {
        per_mwh(self.eur_total(), self.mwh_total)
    }

    pub fn selection_rate(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.cycles_selected as f64 / self.cycles as f64
        }
    }

    /// Fraction of delivered energy sold through the Aggregator.
    pub fn aggregator_share(&self) -> f64 {
        if self.mwh_total > 0.0 {
            self.mwh_via_aggregator / self.mwh_total
        } else {
            0.0
        }
    }
}

fn per_mwh(eur: f64, mwh: f64) -> f64 {
    if mwh > 0.0 {
        eur / mwh
    } else {
        0.0
    }
}

/// Per-cycle trace kept for the mask and reward outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleTrace {
    pub selected: BTreeSet<LfeId>,
    pub v_grid_agg: f64,
    pub reward: Option<f64>,
}

/// Everything reported about one (scenario, method, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scenario_id: u8,
    pub method: SelectionMethod,
    pub seed: u64,
    pub cycles: usize,
    pub lfes: Vec<LfeMetrics>,
    /// Grid to Aggregator, €.
    pub aggregator_eur: f64,
    pub aggregator_mwh: f64,
    /// Aggregator's margin after dividing its revenue.
    pub aggregator_retained: f64,
    pub grid_outflow_eur: f64,
    pub trace: Vec<CycleTrace>,
}

impl RunMetrics {
    pub fn from_cycles(scenario_id: u8, method: SelectionMethod, seed: u64, sigmas: &[f64], cycles: &[TradingCycle]) -> Self {
        let ids: Vec<LfeId> = cycles
            .first()
            .map(|c| c.deliveries.keys().copied().collect())
            .unwrap_or_default();
        let mut lfes: Vec<LfeMetrics> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| LfeMetrics {
                lfe_id: *id,
                initial_sigma: sigmas.get(i).copied().unwrap_or(f64::NAN),
                mwh_total: 0.0,
                mwh_via_aggregator: 0.0,
                mwh_direct: 0.0,
                eur_via_aggregator: 0.0,
                eur_direct: 0.0,
                cycles_selected: 0,
                cycles: cycles.len(),
            })
            .collect();
        let mut m = RunMetrics {
            scenario_id,
            method,
            seed,
            cycles: cycles.len(),
            lfes: Vec::new(),
            aggregator_eur: 0.0,
            aggregator_mwh: 0.0,
            aggregator_retained: 0.0,
            grid_outflow_eur: 0.0,
            trace: Vec::with_capacity(cycles.len()),
        };
        for c in cycles {
            let l = &c.ledger;
            for lfe in lfes.iter_mut() {
                let mwh = l.delivered_mwh[&lfe.lfe_id];
                lfe.mwh_total += mwh;
                if let Some(v) = l.v_agg_lfe.get(&lfe.lfe_id) {
                    lfe.cycles_selected += 1;
                    lfe.mwh_via_aggregator += mwh;
                    lfe.eur_via_aggregator += v;
                } else {
                    lfe.mwh_direct += mwh;
                    lfe.eur_direct += l.v_grid_lfe_direct[&lfe.lfe_id];
                }
            }
            m.aggregator_eur += l.v_grid_agg;
            m.aggregator_mwh += l.aggregator_mwh;
            m.aggregator_retained += l.aggregator_retained;
            m.grid_outflow_eur += l.grid_outflow();
            m.trace.push(CycleTrace {
                selected: c.decision.selected.clone(),
                v_grid_agg: l.v_grid_agg,
                reward: c.reward,
            });
        }
        m.lfes = lfes;
        m
    }

    pub fn aggregator_eur_per_mwh(&self) -> f64 {
        per_mwh(self.aggregator_eur, self.aggregator_mwh)
    }

    pub fn total_mwh(&self) -> f64 {
        self.lfes.iter().map(|l| l.mwh_total).sum()
    }

    pub fn mean_reward(&self) -> Option<f64> {
        let r: Vec<f64> = self.trace.iter().filter_map(|t| t.reward).collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfeAggregate {
    pub lfe_id: LfeId,
    pub eur_per_mwh: f64,
    pub eur_per_mwh_std: f64,
    pub mwh_total: f64,
    pub selection_rate: f64,
    pub aggregator_share: f64,
}

/// Seed means of one method's runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodAggregate {
    pub scenario_id: u8,
    pub method: SelectionMethod,
    pub seeds: usize,
    pub lfes: Vec<LfeAggregate>,
    pub aggregator_eur_per_mwh: f64,
    pub aggregator_eur_per_mwh_std: f64,
    pub aggregator_mwh: f64,
    pub total_mwh: f64,
    pub mean_reward: Option<f64>,
}

impl MethodAggregate {
    pub fn from_runs(scenario_id: u8, method: SelectionMethod, runs: &[&RunMetrics]) -> Self {
        let n_lfes = runs.first().map(|r| r.lfes.len()).unwrap_or(0);
        let lfes = (0..n_lfes)
            .map(|i| {
                let col = |f: &dyn Fn(&LfeMetrics) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r.lfes[i])).collect() };
                let (eur, eur_std) = mean_std(&col(&|l| l.eur_per_mwh()));
                LfeAggregate {
                    lfe_id: runs[0].lfes[i].lfe_id,
                    eur_per_mwh: eur,
                    eur_per_mwh_std: eur_std,
                    mwh_total: mean_std(&col(&|l| l.mwh_total)).0,
                    selection_rate: mean_std(&col(&|l| l.selection_rate())).0,
                    aggregator_share: mean_std(&col(&|l| l.aggregator_share())).0,
                }
            })
            .collect();
        let agg: Vec<f64> = runs.iter().map(|r| r.aggregator_eur_per_mwh()).collect();
        let (agg_mean, agg_std) = mean_std(&agg);
        let rewards: Vec<f64> = runs.iter().filter_map(|r| r.mean_reward()).collect();
        MethodAggregate {
            scenario_id,
            method,
            seeds: runs.len(),
            lfes,
            aggregator_eur_per_mwh: agg_mean,
            aggregator_eur_per_mwh_std: agg_std,
            aggregator_mwh: mean_std(&runs.iter().map(|r| r.aggregator_mwh).collect::<Vec<_>>()).0,
            total_mwh: mean_std(&runs.iter().map(|r| r.total_mwh()).collect::<Vec<_>>()).0,
            mean_reward: (!rewards.is_empty()).then(|| mean_std(&rewards).0),
        }
    }
}
