use std::collections::BTreeSet;

use super::{SelectionContext, SelectionDecision, SelectionMechanism, SelectionMethod};
use crate::{LfeId, Result};

/// LFEs whose window score is strictly above `tau`.
pub fn select_threshold<I>(window_scores: I, tau: f64) -> BTreeSet<LfeId>
where
    I: IntoIterator<Item = (LfeId, f64)>,
{
    window_scores
        .into_iter()
        .filter(|(_, s)| *s > tau)
        .map(|(id, _)| id)
        .collect()
}

/// Simple or CRPS selection: keep everyone whose recent average beats τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSelector {
    method: SelectionMethod,
    tau: f64,
}

impl ThresholdSelector {
    pub fn simple(tau: f64) -> Self {
        ThresholdSelector {
            method: SelectionMethod::SimpleThreshold,
            tau,
        }
    }

    pub fn crps(tau: f64) -> Self {
        ThresholdSelector {
            method: SelectionMethod::CrpsThreshold,
            tau,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl SelectionMechanism for ThresholdSelector {
    fn method(&self) -> SelectionMethod {
        self.method
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<SelectionDecision> {
        let crps = self.method == SelectionMethod::CrpsThreshold;
        let scores = ctx
            .lfes
            .iter()
            .map(|v| (v.id, if crps { v.window_crps } else { v.window_simple }));
        Ok(SelectionDecision {
            cycle_index: ctx.cycle_index,
            method: self.method,
            selected: select_threshold(scores, self.tau),
            threshold_used: Some(self.tau),
        })
    }
}
