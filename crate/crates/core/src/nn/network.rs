use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::NormStats;
use super::{Layer, Real, Tensor};

/// Serializable description of a network: its layer stack and the per-sample
/// input dimensions `(C, H, W)` it accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: (usize, usize, usize),
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// Per-sample output dims, or `None` if the stack is inconsistent.
    pub fn output_dims(&self) -> Option<(usize, usize, usize)> {
        self.layers.iter().try_fold(self.input, |dims, l| l.output_dims(dims))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn state_count(&self) -> usize {
        self.layers.iter().map(Layer::state_count).sum()
    }
}

/// A feed-forward stack with all trainable parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    offsets: Vec<(usize, usize)>,
    params: Vec<T>,
    state: Vec<T>,
}

/// Activations recorded during a training-mode forward pass.
pub struct Trace<T> {
    activations: Vec<Tensor<T>>,
    stats: Vec<Option<NormStats<T>>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn input(&self) -> &Tensor<T> {
        &self.activations[0]
    }

    /// Input followed by every layer's output.
    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }
}

impl<T: Real> Network<T> {
    /// Builds the network with fan-in scaled uniform weights
    /// (`U(-sqrt(3/fan_in), sqrt(3/fan_in))`), zero biases, unit batch-norm scale.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let mut net = Self::zeroed(spec);
        for (layer, &(p_off, s_off)) in net.spec.layers.iter().zip(&net.offsets) {
            match *layer {
                Layer::Conv { .. } | Layer::Dense { .. } => {
                    let (rows, cols) = layer.weight_matrix_dims().unwrap();
                    let bound = (3.0 / cols as f64).sqrt();
                    for v in &mut net.params[p_off..p_off + rows * cols] {
                        *v = T::from_f64_lossy(rng.random_range(-bound..bound));
                    }
                }
                Layer::BatchNorm { channels } => {
                    net.params[p_off..p_off + channels].fill(T::one());
                    net.state[s_off + channels..s_off + 2 * channels].fill(T::one());
                }
                _ => {}
            }
        }
        net
    }

    /// All parameters zero; batch-norm running variance one.
    pub fn zeroed(spec: NetworkSpec) -> Self {
        assert!(spec.output_dims().is_some(), "inconsistent network spec: {spec:?}");
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let (mut p, mut s) = (0, 0);
        for l in &spec.layers {
            offsets.push((p, s));
            p += l.param_count();
            s += l.state_count();
        }
        let mut state = vec![T::zero(); s];
        for (l, &(_, s_off)) in spec.layers.iter().zip(&offsets) {
            if let Layer::BatchNorm { channels } = *l {
                state[s_off + channels..s_off + 2 * channels].fill(T::one());
            }
        }
        Self { spec, offsets, params: vec![T::zero(); p], state }
    }

    pub fn from_parts(spec: NetworkSpec, params: Vec<T>, state: Vec<T>) -> Option<Self> {
        let mut net = Self::zeroed(spec);
        if params.len() != net.params.len() || state.len() != net.state.len() {
            return None;
        }
        net.params = params;
        net.state = state;
        Some(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn state(&self) -> &[T] {
        &self.state
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter slice of layer `i`.
    pub fn layer_params(&self, i: usize) -> &[T] {
        let off = self.offsets[i].0;
        &self.params[off..off + self.spec.layers[i].param_count()]
    }

    fn check_input(&self, x: &Tensor<T>) {
        let (c, h, w) = self.spec.input;
        assert_eq!(
            (x.channels(), x.height(), x.width()),
            (c, h, w),
            "network input shape mismatch"
        );
    }

    /// Inference-mode forward pass (batch norm uses running statistics).
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.check_input(x);
        let mut state = self.state.clone();
        let mut cur: Option<Tensor<T>> = None;
        for (layer, &(p_off, s_off)) in self.spec.layers.iter().zip(&self.offsets) {
            let input = cur.as_ref().unwrap_or(x);
            let params = &self.params[p_off..p_off + layer.param_count()];
            let st = &mut state[s_off..s_off + layer.state_count()];
            cur = Some(layer.forward(input, params, st, false, &mut None));
        }
        cur.unwrap_or_else(|| x.clone())
    }

    /// Training-mode forward pass that records what backward needs.
    /// Batch-norm layers use batch statistics and update running averages.
    pub fn forward_train(&mut self, x: Tensor<T>) -> Trace<T> {
        self.check_input(&x);
        let mut activations = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut stats = Vec::with_capacity(self.spec.layers.len());
        activations.push(x);
        for (layer, &(p_off, s_off)) in self.spec.layers.iter().zip(&self.offsets) {
            let params = &self.params[p_off..p_off + layer.param_count()];
            let st = &mut self.state[s_off..s_off + layer.state_count()];
            let mut rec = None;
            let out = layer.forward(activations.last().unwrap(), params, st, true, &mut rec);
            activations.push(out);
            stats.push(rec);
        }
        Trace { activations, stats }
    }

    /// Backpropagates `grad_out` through a recorded trace, accumulating into
    /// `grads` (same layout as the parameters). Returns the input gradient
    /// when `need_input_grad` is set.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_out: Tensor<T>,
        grads: &mut [T],
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        assert_eq!(grad_out.shape, trace.output().shape, "output gradient shape");
        let mut g = grad_out;
        for i in (0..self.spec.layers.len()).rev() {
            let layer = &self.spec.layers[i];
            let (p_off, _) = self.offsets[i];
            let n_p = layer.param_count();
            let need = i > 0 || need_input_grad;
            let next = layer.backward(
                &trace.activations[i],
                &trace.activations[i + 1],
                &g,
                &self.params[p_off..p_off + n_p],
                trace.stats[i].as_ref(),
                &mut grads[p_off..p_off + n_p],
                need,
            );
            match next {
                Some(t) => g = t,
                None => return None,
            }
        }
        Some(g)
    }

    /// Copies parameters and running statistics from a network with an
    /// identical spec.
    pub fn copy_from(&mut self, other: &Network<T>) {
        assert_eq!(self.spec, other.spec, "copy between different network specs");
        self.params.copy_from_slice(&other.params);
        self.state.copy_from_slice(&other.state);
    }

    /// Converts to another scalar type (used by gradient checks).
    pub fn cast<U: Real>(&self) -> Network<U> {
        let conv = |v: &T| U::from_f64_lossy(v.as_f64());
        Network {
            spec: self.spec.clone(),
            offsets: self.offsets.clone(),
            params: self.params.iter().map(conv).collect(),
            state: self.state.iter().map(conv).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input: (2, 4, 4),
            layers: vec![
                Layer::Conv { cin: 2, cout: 3, stride: 2 },
                Layer::BatchNorm { channels: 3 },
                Layer::Relu,
                Layer::Upsample,
                Layer::Conv { cin: 3, cout: 2, stride: 1 },
                Layer::Tanh,
                Layer::Flatten,
                Layer::Dense { fin: 32, fout: 5 },
                Layer::Sigmoid,
            ],
        }
    }

    /// Finite-difference check of every parameter for a scalar loss
    /// `sum(out * weights)` through every layer kind.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net: Network<f64> = Network::new(small_spec(), &mut rng);
        let x = Tensor::from_vec([2, 3, 4, 4], (0..96).map(|_| rng.random_range(-1.0..1.0)).collect());
        let wts: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |net: &mut Network<f64>| -> f64 {
            let tr = net.forward_train(x.clone());
            tr.output().data.iter().zip(&wts).map(|(a, b)| a * b).sum()
        };
        let trace = net.forward_train(x.clone());
        let mut grads = vec![0.0; net.param_count()];
        let gx = net.backward(&trace, Tensor::from_vec([5, 3, 1, 1], wts.clone()), &mut grads, true).unwrap();
        let h = 1e-6;
        for i in 0..net.param_count() {
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = loss(&mut net);
            net.params[i] = orig - h;
            let down = loss(&mut net);
            net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grads[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", grads[i]);
        }
        // input gradient
        for i in [0usize, 17, 50, 95] {
            let mut xp = x.clone();
            xp.data[i] += h;
            let up: f64 = net.forward_train(xp).output().data.iter().zip(&wts).map(|(a, b)| a * b).sum();
            let mut xm = x.clone();
            xm.data[i] -= h;
            let down: f64 = net.forward_train(xm).output().data.iter().zip(&wts).map(|(a, b)| a * b).sum();
            let fd = (up - down) / (2.0 * h);
            assert!((fd - gx.data[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn infer_is_batch_composition_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = NetworkSpec {
            input: (3, 8, 8),
            layers: vec![
                Layer::Conv { cin: 3, cout: 4, stride: 2 },
                Layer::Tanh,
                Layer::Upsample,
                Layer::Conv { cin: 4, cout: 3, stride: 1 },
                Layer::Sigmoid,
            ],
        };
        let net: Network<f32> = Network::new(spec, &mut rng);
        let x = Tensor::from_vec([3, 5, 8, 8], (0..960).map(|_| rng.random::<f32>()).collect());
        let full = net.infer(&x);
        for i in 0..5 {
            let single = net.infer(&x.slice_batch(i, i + 1));
            assert_eq!(single, full.slice_batch(i, i + 1));
        }
    }
}
