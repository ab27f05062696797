use std::collections::BTreeSet;

use super::{SelectionContext, SelectionDecision, SelectionMechanism, SelectionMethod};
use crate::{LfeId, Result};

pub fn select_all(lfes: &[LfeId]) -> BTreeSet<LfeId> {
    lfes.iter().copied().collect()
}

/// Nobody joins; every LFE trades on its own.
pub fn select_none(_lfes: &[LfeId]) -> BTreeSet<LfeId> {
    BTreeSet::new()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AllLfes;

impl SelectionMechanism for AllLfes {
    fn method(&self) -> SelectionMethod {
        SelectionMethod::AllLfes
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<SelectionDecision> {
        let ids: Vec<LfeId> = ctx.lfes.iter().map(|v| v.id).collect();
        Ok(SelectionDecision {
            cycle_index: ctx.cycle_index,
            method: SelectionMethod::AllLfes,
            selected: select_all(&ids),
            threshold_used: None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Singleton;

impl SelectionMechanism for Singleton {
    fn method(&self) -> SelectionMethod {
        SelectionMethod::Singleton
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<SelectionDecision> {
        Ok(SelectionDecision {
            cycle_index: ctx.cycle_index,
            method: SelectionMethod::Singleton,
            selected: BTreeSet::new(),
            threshold_used: None,
        })
    }
}
