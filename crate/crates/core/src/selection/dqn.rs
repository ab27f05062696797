use std::collections::BTreeSet;

use super::{CycleFeedback, MechanismSpec, SelectionContext, SelectionDecision, SelectionMechanism, SelectionMethod};
use crate::rl::{DqnAgent, DqnConfig, RewardKind, RewardNorm, RewardTracker, Transition};
use crate::{Error, LfeId, Result};

/// Largest fleet a DQN selector accepts; the action space is `2^n`.
pub const MAX_DQN_LFES: usize = 14;

/// Membership mask of `selected` over `order`: bit `i` is `order[i]`.
pub fn encode_mask(selected: &BTreeSet<LfeId>, order: &[LfeId]) -> usize {
    order
        .iter()
        .enumerate()
        .filter(|(_, id)| selected.contains(id))
        .fold(0, |mask, (i, _)| mask | (1 << i))
}

pub fn decode_mask(action: usize, order: &[LfeId]) -> BTreeSet<LfeId> {
    order
        .iter()
        .enumerate()
        .filter(|(i, _)| action >> i & 1 == 1)
        .map(|(_, id)| *id)
        .collect()
}

/// Deep Q-learning selection over all `2^n` coalitions.
///
/// The state is every LFE's windowed CRPS score followed by its forecast
/// flexibility scaled by the largest forecast seen so far. A transition is
/// stored once the next state is known, at the following `select`.
#[derive(Debug, Clone)]
pub struct DqnSelector {
    method: SelectionMethod,
    order: Vec<LfeId>,
    agent: DqnAgent,
    tracker: RewardTracker,
    cfg: DqnConfig,
    horizon: usize,
    flex_max: f64,
    last: Option<(Vec<f64>, usize)>,
    pending: Option<(Vec<f64>, usize, f64)>,
}

impl DqnSelector {
    pub fn new(
        method: SelectionMethod,
        order: &[LfeId],
        cfg: &DqnConfig,
        norm: RewardNorm,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let kind = match method {
            SelectionMethod::DqnR1 => RewardKind::R1,
            SelectionMethod::DqnR2 => RewardKind::R2,
            other => return Err(Error::Config(format!("`{other}` is not a DQN method"))),
        };
        let n = order.len();
        if n > MAX_DQN_LFES {
            return Err(Error::Config(format!(
                "DQN selection over {n} LFEs needs 2^{n} actions; at most {MAX_DQN_LFES} LFEs are supported, use a threshold method instead"
            )));
        }
        if n == 0 {
            return Err(Error::Config("DQN selection needs at least one LFE".into()));
        }
        Ok(DqnSelector {
            method,
            order: order.to_vec(),
            agent: DqnAgent::new(2 * n, 1 << n, cfg, seed)?,
            tracker: RewardTracker::new(kind, norm),
            cfg: cfg.clone(),
            horizon,
            flex_max: 0.0,
            last: None,
            pending: None,
        })
    }

    pub fn from_spec(method: SelectionMethod, spec: &MechanismSpec<'_>) -> Result<Self> {
        DqnSelector::new(method, spec.lfe_ids, spec.dqn, spec.reward_norm, spec.horizon, spec.seed)
    }

    pub fn action_count(&self) -> usize {
        1 << self.order.len()
    }

    fn state(&mut self, ctx: &SelectionContext<'_>) -> Result<Vec<f64>> {
        if ctx.lfes.len() != self.order.len() || ctx.lfes.iter().zip(&self.order).any(|(v, id)| v.id != *id) {
            return Err(Error::Domain("selection context does not match the DQN's LFE order".into()));
        }
        for v in ctx.lfes {
            self.flex_max = self.flex_max.max(v.predicted_kwh);
        }
        let scale = if self.flex_max > 0.0 { 1.0 / self.flex_max } else { 0.0 };
        Ok(ctx
            .lfes
            .iter()
            .map(|v| v.window_crps)
            .chain(ctx.lfes.iter().map(|v| v.predicted_kwh * scale))
            .collect())
    }
}

impl SelectionMechanism for DqnSelector {
    fn method(&self) -> SelectionMethod {
        self.method
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<SelectionDecision> {
        let state = self.state(ctx)?;
        if let Some((prev, action, reward)) = self.pending.take() {
            self.agent.remember(Transition {
                state: prev,
                action,
                reward,
                next_state: state.clone(),
            });
        }
        let epsilon = self.cfg.epsilon_at(ctx.cycle_index, self.horizon);
        let action = self.agent.act(&state, epsilon)?;
        self.last = Some((state, action));
        Ok(SelectionDecision {
            cycle_index: ctx.cycle_index,
            method: self.method,
            selected: decode_mask(action, &self.order),
            threshold_used: None,
        })
    }

    fn observe(&mut self, fb: &CycleFeedback<'_>) -> Result<Option<f64>> {
        let reward = self.tracker.reward(fb.v_grid_agg, fb.unselected_direct)?;
        if let Some((state, action)) = self.last.take() {
            self.pending = Some((state, action, reward));
        }
        self.agent.learn()?;
        Ok(Some(reward))
    }

    fn agent(&self) -> Option<&DqnAgent> {
        Some(&self.agent)
    }

    fn agent_mut(&mut self) -> Option<&mut DqnAgent> {
        Some(&mut self.agent)
    }
}
