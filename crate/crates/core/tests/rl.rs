mod common;

use common::rl::{net, replay_to_convergence};
use flexagg::rl::{train_step, Adam, DqnAgent, DqnConfig, ReplayBuffer, Transition};
use flexagg::selection::decode_mask;
use flexagg::LfeId;

#[test]
fn bandit_converges_to_reward() {
    let q = common::rl::bandit_q();
    assert!((q - 0.7).abs() < 1e-3, "Q = {q}");
}

#[test]
fn symmetric_rewards_give_equal_values() {
    let s = vec![0.3, 0.9];
    let ts: Vec<Transition> = (0..2)
        .map(|a| Transition {
            state: s.clone(),
            action: a,
            reward: 1.0,
            next_state: s.clone(),
        })
        .collect();
    let online = replay_to_convergence(&ts, 6000);
    let q = online.evaluate(&s).unwrap();
    assert!((q[0] - q[1]).abs() < 1e-2, "Q = {q:?}");
}

#[test]
fn empty_buffer_does_nothing() {
    let mut online = net(&[2, 4, 2], 1);
    let before = online.clone();
    let target = online.clone();
    let mut opt = Adam::new(&online, 1e-3);
    let mut buffer = ReplayBuffer::new(8, 0);
    assert_eq!(train_step(&mut online, &mut opt, &mut buffer, &target, 4, 0.9).unwrap(), None);
    assert_eq!(online.layers(), before.layers());
}

#[test]
fn gradients_match_central_differences() {
    let worst = common::rl::worst_gradient_error();
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn replay_sampling_is_uniform() {
    // Few entries keep the family-wise false-alarm rate of per-entry
    // 3-sigma checks near 5%.
    let n = 20;
    let mut buffer = ReplayBuffer::new(n, 21);
    for i in 0..n {
        buffer.push(Transition {
            state: vec![i as f64],
            action: 0,
            reward: 0.0,
            next_state: vec![],
        });
    }
    let (batches, k) = (20_000, 5);
    let mut counts = vec![0usize; n];
    for _ in 0..batches {
        let idx = buffer.sample_indices(k);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), k, "sampled with replacement");
        for i in idx {
            counts[i] += 1;
        }
    }
    let p = k as f64 / n as f64;
    let expected = batches as f64 * p;
    let sd = (batches as f64 * p * (1.0 - p)).sqrt();
    for (i, c) in counts.iter().enumerate() {
        assert!((*c as f64 - expected).abs() < 3.0 * sd, "entry {i}: {c} vs {expected}");
    }
}

#[test]
fn replay_evicts_oldest() {
    let mut buffer = ReplayBuffer::new(3, 0);
    for i in 0..5 {
        buffer.push(Transition {
            state: vec![i as f64],
            action: i,
            reward: 0.0,
            next_state: vec![],
        });
    }
    assert_eq!(buffer.len(), 3);
    let kept: Vec<usize> = (0..3).map(|i| buffer.get(i).unwrap().action).collect();
    assert_eq!(kept, vec![2, 3, 4]);
}

fn small_cfg() -> DqnConfig {
    DqnConfig {
        hidden: vec![16, 16],
        dropout_stages: vec![1],
        ..DqnConfig::default()
    }
}

#[test]
fn full_exploration_is_uniform_over_masks() {
    let mut agent = DqnAgent::new(6, 8, &small_cfg(), 5).unwrap();
    let draws = 10_000;
    let mut counts = [0usize; 8];
    for _ in 0..draws {
        counts[agent.act(&[0.5; 6], 1.0).unwrap()] += 1;
    }
    let expected = draws as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 7 degrees of freedom.
    assert!(chi2 < 24.32, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn greedy_action_decodes_hand_set_mask() {
    let cfg = DqnConfig {
        hidden: vec![2],
        dropout_stages: vec![],
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::new(6, 8, &cfg, 0).unwrap();
    let mut table = agent.online().clone();
    for l in table.layers_mut() {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    table.layers_mut().last_mut().unwrap().bias[0b101] = 1.0;
    agent.load_weights(&table).unwrap();
    let a = agent.act(&[0.1, 0.9, 0.4, 0.2, 0.3, 0.8], 0.0).unwrap();
    assert_eq!(a, 0b101);
    let ids: Vec<LfeId> = (1..=3).map(LfeId).collect();
    assert_eq!(decode_mask(a, &ids), [LfeId(1), LfeId(3)].into_iter().collect());
}

#[test]
fn evaluation_is_pure_and_training_forward_is_seeded() {
    assert!(common::rl::dropout_is_seeded());
}

#[test]
fn checkpoint_restores_agent() {
    let mut agent = DqnAgent::new(4, 4, &small_cfg(), 9).unwrap();
    let mut buf = Vec::new();
    flexagg::rl::checkpoint::write_checkpoint(agent.online(), &mut buf).unwrap();
    let restored = flexagg::rl::checkpoint::read_checkpoint(buf.as_slice()).unwrap();
    let mut other = DqnAgent::new(4, 4, &small_cfg(), 10).unwrap();
    other.load_weights(&restored).unwrap();
    let s = [0.1, 0.2, 0.3, 0.4];
    assert_eq!(other.online().evaluate(&s).unwrap(), agent.online_mut().evaluate(&s).unwrap());
    let wrong = DqnAgent::new(2, 4, &small_cfg(), 0).unwrap();
    assert!(other.load_weights(wrong.online()).unwrap_err().is_config());
}
