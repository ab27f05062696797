#![allow(dead_code)]

use flexagg::scoring::crps_raw;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const REPORT_MULTIPLIERS: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];

/// Outcome of comparing one misreport against the truthful report.
#[derive(Debug, Clone, Copy)]
pub struct ReportGap {
    pub multiplier: f64,
    /// Mean of `crps(truthful) - crps(misreport)` over the draws.
    pub mean: f64,
    pub std_err: f64,
}

impl ReportGap {
    pub fn significant(&self) -> bool {
        self.mean > 3.0 * self.std_err
    }
}

/// Paired Monte-Carlo: errors drawn from `N(0, sigma_true²)`, each scored
/// under every report in `REPORT_MULTIPLIERS · sigma_true`.
pub fn properness_gaps(sigma_true: f64, draws: usize, seed: u64) -> Vec<ReportGap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..draws)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma_true * z
        })
        .collect();
    let truthful: Vec<f64> = errors.iter().map(|e| crps_raw(*e, sigma_true).unwrap()).collect();
    REPORT_MULTIPLIERS
        .iter()
        .filter(|m| **m != 1.0)
        .map(|m| {
            let d: Vec<f64> = errors
                .iter()
                .zip(&truthful)
                .map(|(e, t)| t - crps_raw(*e, m * sigma_true).unwrap())
                .collect();
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            ReportGap {
                multiplier: *m,
                mean,
                std_err: (var / n).sqrt(),
            }
        })
        .collect()
}

pub mod rl {
    use flexagg::rl::{train_step, Adam, QNetwork, ReplayBuffer, Transition};
    use ndarray::{array, Array2};

    pub fn net(dims: &[usize], seed: u64) -> QNetwork {
        QNetwork::new(dims, &vec![0.0; dims.len() - 2], seed, seed + 1).unwrap()
    }

    /// Trains on a fixed replay set with `gamma = 0`.
    pub fn replay_to_convergence(transitions: &[Transition], steps: usize) -> QNetwork {
        let mut online = net(&[2, 16, 2], 3);
        let target = online.clone();
        let mut opt = Adam::new(&online, 1e-3);
        let mut buffer = ReplayBuffer::new(16, 0);
        for t in transitions {
            buffer.push(t.clone());
        }
        for _ in 0..steps {
            train_step(&mut online, &mut opt, &mut buffer, &target, 64, 0.0).unwrap();
        }
        online
    }

    /// Q(s, a) after training on the one-step bandit `r(s, 1) = 0.7`.
    pub fn bandit_q() -> f64 {
        let s = vec![0.5, 0.25];
        let t = Transition {
            state: s.clone(),
            action: 1,
            reward: 0.7,
            next_state: s.clone(),
        };
        replay_to_convergence(&[t], 6000).evaluate(&s).unwrap()[1]
    }

    fn loss_at(net: &mut QNetwork, states: &Array2<f64>, actions: &[usize], targets: &[f64]) -> f64 {
        net.td_loss_and_gradients(states.view(), actions, targets, false).unwrap().0
    }

    /// Worst relative gap between backprop and central differences over
    /// every weight and bias of a two-LFE network.
    pub fn worst_gradient_error() -> f64 {
        let mut net = net(&[4, 8, 8, 4], 11);
        let states = array![[0.9, 0.2, 0.5, 0.7], [0.1, 0.8, 0.3, 0.6], [0.4, 0.4, 0.9, 0.2]];
        let actions = [0, 3, 2];
        let targets = [1.0, -0.5, 0.25];
        let (_, grads) = net.td_loss_and_gradients(states.view(), &actions, &targets, false).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut check = |net: &mut QNetwork, analytic: f64, set: &dyn Fn(&mut QNetwork, f64), orig: f64| {
            set(net, orig + h);
            let up = loss_at(net, &states, &actions, &targets);
            set(net, orig - h);
            let down = loss_at(net, &states, &actions, &targets);
            set(net, orig);
            let numeric = (up - down) / (2.0 * h);
            let denom = (numeric.abs() + analytic.abs()).max(1e-7);
            worst = worst.max((numeric - analytic).abs() / denom);
        };
        for li in 0..net.layers().len() {
            let (rows, cols) = net.layers()[li].weights.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let orig = net.layers()[li].weights[[r, c]];
                    let set = move |n: &mut QNetwork, v: f64| n.layers_mut()[li].weights[[r, c]] = v;
                    check(&mut net, grads.layers[li].weights[[r, c]], &set, orig);
                }
                let orig = net.layers()[li].bias[r];
                let set = move |n: &mut QNetwork, v: f64| n.layers_mut()[li].bias[r] = v;
                check(&mut net, grads.layers[li].bias[r], &set, orig);
            }
        }
        worst
    }

    /// Two identically seeded networks draw the same dropout masks, and
    /// evaluation ignores dropout.
    pub fn dropout_is_seeded() -> bool {
        let dims = [4, 32, 32, 32, 4];
        let dropout = [0.0, 0.2, 0.2];
        let mut a = QNetwork::new(&dims, &dropout, 1, 2).unwrap();
        let mut b = QNetwork::new(&dims, &dropout, 1, 2).unwrap();
        let s = [0.2, 0.4, 0.6, 0.8];
        let mut ok = a.evaluate(&s).unwrap() == a.evaluate(&s).unwrap();
        ok &= a.forward(&s, false).unwrap() == a.evaluate(&s).unwrap();
        for _ in 0..2 {
            let (x, y) = (a.forward(&s, true).unwrap(), b.forward(&s, true).unwrap());
            ok &= x == y && x != a.evaluate(&s).unwrap();
        }
        ok && a.evaluate(&s).unwrap().iter().all(|q| q.is_finite())
    }
}
