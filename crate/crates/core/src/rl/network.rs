use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One fully-connected layer, `y = W·x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weights.t());
        y += &self.bias;
        y
    }
}

/// Gradients with the same shapes as the network's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

/// Rectifier MLP mapping a state to one Q-value per action.
///
/// Hidden stages are `Dense → [Dropout] → ReLU`; the output head is linear.
/// Dropout is inverted (kept units scaled by `1/(1-p)`) and only active when
/// `training` is set, drawing masks from the network's own seeded stream.
#[derive(Debug, Clone)]
pub struct QNetwork {
    layers: Vec<Dense>,
    dropout: Vec<f64>,
    dropout_rng: ChaCha8Rng,
}

/// `inputs[i]` feeds layer `i`, so `inputs[i + 1]` is hidden stage `i`'s
/// rectified output and the last entry feeds the head.
struct HiddenCache {
    inputs: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl QNetwork {
    /// He-initialized network. `dropout[i]` is the drop probability after
    /// hidden stage `i` (0 disables it); it must have one entry per hidden layer.
    pub fn new(dims: &[usize], dropout: &[f64], init_seed: u64, dropout_seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("bad network dimensions {dims:?}")));
        }
        if dropout.len() != dims.len() - 2 {
            return Err(Error::Config(format!(
                "expected {} dropout probabilities, got {}",
                dims.len() - 2,
                dropout.len()
            )));
        }
        if dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Config("dropout probabilities must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = if i == last {
                    (1.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                Dense {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(QNetwork {
            layers,
            dropout: dropout.to_vec(),
            dropout_rng: ChaCha8Rng::seed_from_u64(dropout_seed),
        })
    }

    /// Builds a network from explicit layers, without dropout.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Config("consecutive layer shapes do not chain".into()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::Config("bias length does not match layer outputs".into()));
            }
        }
        let hidden = layers.len() - 1;
        Ok(QNetwork {
            layers,
            dropout: vec![0.0; hidden],
            dropout_rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn set_dropout(&mut self, dropout: &[f64]) -> Result<()> {
        if dropout.len() != self.dropout.len() || dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Config("bad dropout configuration".into()));
        }
        self.dropout = dropout.to_vec();
        Ok(())
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Copies weights from `other`, which must share this network's shape.
    pub fn copy_weights_from(&mut self, other: &QNetwork) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.assign(&src.weights);
            dst.bias.assign(&src.bias);
        }
    }

    fn check_batch(&self, states: ArrayView2<f64>) -> Result<()> {
        if states.ncols() != self.input_dim() {
            return Err(Error::Domain(format!(
                "state has {} features, network expects {}",
                states.ncols(),
                self.input_dim()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("state contains non-finite values".into()));
        }
        Ok(())
    }

    fn hidden_forward(&mut self, states: ArrayView2<f64>, training: bool) -> HiddenCache {
        let hidden = self.layers.len() - 1;
        let mut cache = HiddenCache {
            inputs: Vec::with_capacity(hidden + 1),
            masks: Vec::with_capacity(hidden),
        };
        cache.inputs.push(states.to_owned());
        for i in 0..hidden {
            let mut z = self.layers[i].apply(cache.inputs[i].view());
            let p = self.dropout[i];
            let mask = if training && p > 0.0 {
                let keep = 1.0 / (1.0 - p);
                let rng = &mut self.dropout_rng;
                let m = Array2::from_shape_fn(z.raw_dim(), |_| if rng.random_bool(p) { 0.0 } else { keep });
                z *= &m;
                Some(m)
            } else {
                None
            };
            z.mapv_inplace(|v| v.max(0.0));
            cache.masks.push(mask);
            cache.inputs.push(z);
        }
        cache
    }

    /// Q-values for a batch of states, one row per state.
    pub fn forward_batch(&mut self, states: ArrayView2<f64>, training: bool) -> Result<Array2<f64>> {
        self.check_batch(states)?;
        let cache = self.hidden_forward(states, training);
        let head = self.layers.last().expect("non-empty");
        Ok(head.apply(cache.inputs.last().expect("input").view()))
    }

    /// Q-values for one state.
    pub fn forward(&mut self, state: &[f64], training: bool) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| Error::Domain(e.to_string()))?;
        Ok(self.forward_batch(view, training)?.row(0).to_vec())
    }

    /// Evaluation-mode Q-values for a batch; never touches the dropout stream.
    pub fn evaluate_batch(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(states)?;
        let hidden = self.layers.len() - 1;
        let mut x = states.to_owned();
        for layer in &self.layers[..hidden] {
            x = layer.apply(x.view());
            x.mapv_inplace(|v| v.max(0.0));
        }
        Ok(self.layers[hidden].apply(x.view()))
    }

    pub fn evaluate(&self, state: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| Error::Domain(e.to_string()))?;
        Ok(self.evaluate_batch(view)?.row(0).to_vec())
    }

    /// Squared TD loss on the chosen actions and its gradient with respect to
    /// every parameter: `mean_b (Q(s_b, a_b) - y_b)²`.
    pub fn td_loss_and_gradients(
        &mut self,
        states: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
        training: bool,
    ) -> Result<(f64, Gradients)> {
        self.check_batch(states)?;
        let batch = states.nrows();
        if actions.len() != batch || targets.len() != batch || batch == 0 {
            return Err(Error::Domain("batch, action and target lengths differ".into()));
        }
        if let Some(a) = actions.iter().find(|a| **a >= self.output_dim()) {
            return Err(Error::Domain(format!("action {a} outside the action space")));
        }
        let cache = self.hidden_forward(states, training);
        let head_idx = self.layers.len() - 1;
        let head = &self.layers[head_idx];
        let features = cache.inputs.last().expect("input");

        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs(), l.outputs()))
            .collect();

        // Only the chosen action's output carries error, so the head is
        // handled row by row instead of through a dense product.
        let mut loss = 0.0;
        let mut d_features = Array2::<f64>::zeros(features.raw_dim());
        for b in 0..batch {
            let a = actions[b];
            let w = head.weights.row(a);
            let h = features.row(b);
            let q = w.dot(&h) + head.bias[a];
            let err = q - targets[b];
            loss += err * err;
            let delta = 2.0 * err / batch as f64;
            grads[head_idx].weights.row_mut(a).scaled_add(delta, &h);
            grads[head_idx].bias[a] += delta;
            d_features.row_mut(b).scaled_add(delta, &w);
        }
        loss /= batch as f64;

        let mut upstream = d_features;
        for i in (0..head_idx).rev() {
            let act = &cache.inputs[i + 1];
            Zip::from(&mut upstream).and(act).for_each(|g, a| {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            });
            if let Some(mask) = &cache.masks[i] {
                upstream *= mask;
            }
            let x = &cache.inputs[i];
            grads[i].weights = upstream.t().dot(x);
            grads[i].bias = upstream.sum_axis(Axis(0));
            if i > 0 {
                upstream = upstream.dot(&self.layers[i].weights);
            }
        }
        Ok((loss, Gradients { layers: grads }))
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &QNetwork, lr: f64) -> Self {
        let zeros = |net: &QNetwork| {
            net.layers()
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect()
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(net),
            v: zeros(net),
        }
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let step = self.lr * (1.0 - b2.powi(self.t)).sqrt() / (1.0 - b1.powi(self.t));
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / (v.sqrt() + eps);
            };
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weights_give_zero_q() {
        let layers = vec![Dense::zeros(4, 3), Dense::zeros(3, 2)];
        let net = QNetwork::from_layers(layers).unwrap();
        assert_eq!(net.evaluate(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_network_forward() {
        // x = (1, 2): hidden = relu(0.5·1 - 0.25·2 + 0.1) = 0.1,
        // output = (2·0.1 + 1, -3·0.1) = (1.2, -0.3).
        let hidden = Dense {
            weights: array![[0.5, -0.25]],
            bias: array![0.1],
        };
        let head = Dense {
            weights: array![[2.0], [-3.0]],
            bias: array![1.0, 0.0],
        };
        let mut net = QNetwork::from_layers(vec![hidden, head]).unwrap();
        let q = net.forward(&[1.0, 2.0], false).unwrap();
        assert!((q[0] - 1.2).abs() < 1e-12 && (q[1] + 0.3).abs() < 1e-12);
        // Negative pre-activation is rectified to zero.
        let q = net.forward(&[0.0, 4.0], false).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1].abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_a_domain_error() {
        let mut net = QNetwork::new(&[4, 8, 3], &[0.0], 1, 2).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0], false), Err(Error::Domain(_))));
        assert!(net.forward(&[1.0, f64::NAN, 0.0, 0.0], false).is_err());
    }

    #[test]
    fn seeded_dropout_is_reproducible() {
        let state = [0.3, 0.7, 0.1, 0.9];
        let mut a = QNetwork::new(&[4, 16, 32, 5], &[0.0, 0.5], 7, 99).unwrap();
        let mut b = a.clone();
        let qa = a.forward(&state, true).unwrap();
        let qb = b.forward(&state, true).unwrap();
        assert_eq!(qa, qb);
        a.reseed_dropout(99);
        assert_eq!(a.forward(&state, true).unwrap(), qa);
        // Evaluation ignores dropout entirely.
        assert_eq!(a.evaluate(&state).unwrap(), a.forward(&state, false).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(QNetwork::new(&[4], &[], 0, 0).is_err());
        assert!(QNetwork::new(&[4, 3, 2], &[], 0, 0).is_err());
        assert!(QNetwork::new(&[4, 3, 2], &[1.0], 0, 0).is_err());
        assert!(QNetwork::from_layers(vec![Dense::zeros(4, 3), Dense::zeros(2, 2)]).is_err());
    }

    #[test]
    fn adam_reduces_loss_on_fixed_batch() {
        let mut net = QNetwork::new(&[2, 8, 3], &[0.0], 3, 4).unwrap();
        let mut opt = Adam::new(&net, 1e-2);
        let states = array![[0.2, 0.4], [0.9, 0.1]];
        let (first, _) = net.td_loss_and_gradients(states.view(), &[0, 2], &[1.0, -1.0], false).unwrap();
        for _ in 0..200 {
            let (_, g) = net.td_loss_and_gradients(states.view(), &[0, 2], &[1.0, -1.0], false).unwrap();
            opt.step(&mut net, &g);
        }
        let (last, _) = net.td_loss_and_gradients(states.view(), &[0, 2], &[1.0, -1.0], false).unwrap();
        assert!(last < first * 0.01, "{first} -> {last}");
    }
}
