//! Fully-connected ReLU backbone with explicit forward/backward passes and Adam.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("layer dimensions must be nonzero and at least input+output, got {0:?}")]
    Dims(Vec<usize>),
    #[error("input has {got} features, model expects {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("upstream gradient is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    GradShape { got_rows: usize, got_cols: usize, rows: usize, cols: usize },
    #[error("forward cache is stale (cache version {cache}, model version {model})")]
    StaleCache { cache: u64, model: u64 },
    #[error("parameter vector has {got} entries, model needs {expected}")]
    ParamCount { got: usize, expected: usize },
}

/// Dense row-major matrix; rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }
}

/// One affine layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn forward_into(&self, input: &Matrix, out: &mut Matrix) {
        for n in 0..input.rows {
            let x = input.row(n);
            let y = out.row_mut(n);
            for (o, yo) in y.iter_mut().enumerate() {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                *yo = self.bias[o] + dot(w, x);
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multilayer perceptron: ReLU on every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
    version: u64,
}

/// Activations saved by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// `inputs[l]` is the input of layer `l` (post-ReLU for l > 0).
    inputs: Vec<Matrix>,
    logits: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }
}

/// Gradients (or any parameter-shaped buffer) per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self { layers: model.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).map(|v| v * v).sum();
        math::sqrt(sq)
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
    }
    out
}

/// Kaiming-uniform bound for a ReLU layer with the given fan-in.
pub fn init_bound(fan_in: usize) -> f64 {
    math::sqrt(6.0 / fan_in as f64)
}

impl MlpModel {
    /// `dims = [input, hidden..., output]`. Weights ~ U(-b, b) with
    /// `b = sqrt(6 / fan_in)`; biases zero.
    pub fn init(dims: &[usize], rng: &mut RngStream) -> Result<Self, NetError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NetError::Dims(dims.to_vec()));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = init_bound(inputs);
                let weights = (0..inputs * outputs).map(|_| rng.uniform(-bound, bound)).collect();
                Dense { inputs, outputs, weights, bias: vec![0.0; outputs] }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    /// Builds a model from explicit layers. Panics if the shapes do not chain.
    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty());
        for l in &layers {
            assert_eq!(l.weights.len(), l.inputs * l.outputs);
            assert_eq!(l.bias.len(), l.outputs);
        }
        for w in layers.windows(2) {
            assert_eq!(w[0].outputs, w[1].inputs, "layer shapes do not chain");
        }
        Self { layers, version: 0 }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Bumped on every parameter change; caches from older versions are rejected.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(NetError::ParamCount { got: params.len(), expected: self.param_count() });
        }
        let mut it = params.iter().copied();
        for l in self.layers.iter_mut() {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        self.version += 1;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Per-layer L2 norms of (weights, bias).
    pub fn layer_norms(&self) -> Vec<(f64, f64)> {
        let n = |v: &[f64]| math::sqrt(v.iter().map(|x| x * x).sum());
        self.layers.iter().map(|l| (n(&l.weights), n(&l.bias))).collect()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardCache, NetError> {
        if batch.cols != self.input_dim() {
            return Err(NetError::InputDim { got: batch.cols, expected: self.input_dim() });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Matrix::zeros(batch.rows, layer.outputs);
            layer.forward_into(&current, &mut out);
            if i < last {
                for v in out.data.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            inputs.push(core::mem::replace(&mut current, out));
        }
        Ok(ForwardCache { version: self.version, inputs, logits: current })
    }

    /// Logits only.
    pub fn infer(&self, batch: &Matrix) -> Result<Matrix, NetError> {
        Ok(self.forward(batch)?.logits)
    }

    /// Parameter gradients of `sum_n <upstream_n, logits_n>`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients, NetError> {
        if cache.version != self.version {
            return Err(NetError::StaleCache { cache: cache.version, model: self.version });
        }
        let (rows, cols) = (cache.logits.rows, cache.logits.cols);
        if upstream.rows != rows || upstream.cols != cols {
            return Err(NetError::GradShape { got_rows: upstream.rows, got_cols: upstream.cols, rows, cols });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            let g = &mut grads.layers[l];
            for n in 0..rows {
                let d = delta.row(n);
                let x = input.row(n);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    g.bias[o] += dv;
                    let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gwi, xi) in gw.iter_mut().zip(x) {
                        *gwi += dv * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through W^T, then through the ReLU that produced `input`.
            let mut next = Matrix::zeros(rows, layer.inputs);
            for n in 0..rows {
                let d = delta.row(n);
                let x = input.row(n);
                let nd = next.row_mut(n);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (ndi, wi) in nd.iter_mut().zip(w) {
                        *ndi += dv * wi;
                    }
                }
                for (ndi, &xi) in nd.iter_mut().zip(x) {
                    if xi <= 0.0 {
                        *ndi = 0.0;
                    }
                }
            }
            delta = next;
        }
        Ok(grads)
    }
}

/// Adam hyperparameters and moment state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment buffers, shaped like the model.
    pub fn moments(&self) -> (&Gradients, &Gradients) {
        (&self.first, &self.second)
    }

    pub fn update(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - math::powf(self.beta1, t);
        let c2 = 1.0 - math::powf(self.beta2, t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first.layers.iter_mut())
            .zip(self.second.layers.iter_mut())
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        model.version += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_default_arch() {
        let m = MlpModel::init(&[80, 64, 64, 2], &mut RngStream::new(1)).unwrap();
        assert_eq!(m.param_count(), 80 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert_eq!(m.param_count(), 9474);
        assert_eq!(m.dims(), vec![80, 64, 64, 2]);
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpModel::init(&[5, 4, 2], &mut RngStream::new(11)).unwrap();
        let b = MlpModel::init(&[5, 4, 2], &mut RngStream::new(11)).unwrap();
        let c = MlpModel::init(&[5, 4, 2], &mut RngStream::new(12)).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn bad_dims() {
        let mut r = RngStream::new(0);
        assert!(matches!(MlpModel::init(&[4, 0, 2], &mut r), Err(NetError::Dims(_))));
        assert!(MlpModel::init(&[4], &mut r).is_err());
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut l1 = Dense::zeros(3, 2);
        l1.bias = vec![0.5, -1.0];
        let mut l2 = Dense::zeros(2, 2);
        l2.bias = vec![0.25, 4.0];
        let m = MlpModel::from_layers(vec![l1, l2]);
        let out = m.infer(&Matrix::from_rows(&[[1.0, 2.0, 3.0], [-7.0, 0.0, 1.0]])).unwrap();
        assert_eq!(out.row(0), &[0.25, 4.0]);
        assert_eq!(out.row(1), &[0.25, 4.0]);
    }

    #[test]
    fn identity_selection() {
        // Single linear layer picking inputs 2 and 0.
        let mut l = Dense::zeros(3, 2);
        l.weights = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let m = MlpModel::from_layers(vec![l]);
        let out = m.infer(&Matrix::from_rows(&[[1.5, -2.0, 3.25]])).unwrap();
        assert_eq!(out.row(0), &[3.25, 1.5]);
    }

    #[test]
    fn wrong_input_dim() {
        let m = MlpModel::init(&[3, 2], &mut RngStream::new(0)).unwrap();
        assert!(matches!(m.forward(&Matrix::zeros(1, 4)), Err(NetError::InputDim { got: 4, expected: 3 })));
    }

    #[test]
    fn stale_cache_and_bad_upstream() {
        let mut m = MlpModel::init(&[3, 4, 2], &mut RngStream::new(0)).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3]]);
        let cache = m.forward(&x).unwrap();
        assert!(matches!(m.backward(&cache, &Matrix::zeros(2, 2)), Err(NetError::GradShape { .. })));
        let p = m.params();
        m.set_params(&p).unwrap();
        assert!(matches!(m.backward(&cache, &Matrix::zeros(1, 2)), Err(NetError::StaleCache { .. })));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let m = MlpModel::init(&[4, 6, 3], &mut RngStream::new(2)).unwrap();
        let x = Matrix::from_rows(&[[1.0, -1.0, 0.5, 2.0], [0.0, 0.3, -0.7, 1.1]]);
        let cache = m.forward(&x).unwrap();
        let g = m.backward(&cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hidden_unit_by_hand() {
        // x -> h = relu(a x + b) -> z = c h + d, upstream g.
        let (a, b, c, d) = (0.7, 0.2, -1.3, 0.4);
        let x = 1.5;
        let g = 2.0;
        let m = MlpModel::from_layers(vec![
            Dense { inputs: 1, outputs: 1, weights: vec![a], bias: vec![b] },
            Dense { inputs: 1, outputs: 1, weights: vec![c], bias: vec![d] },
        ]);
        let cache = m.forward(&Matrix::from_rows(&[[x]])).unwrap();
        let h = a * x + b;
        assert!((cache.logits().row(0)[0] - (c * h + d)).abs() < 1e-15);
        let grads = m.backward(&cache, &Matrix::from_rows(&[[g]])).unwrap();
        // dz/da = c x, dz/db = c, dz/dc = h, dz/dd = 1 (h > 0).
        let expect = [g * c * x, g * c, g * h, g];
        for (got, want) in grads.flatten().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn adam_zero_lr_leaves_params() {
        let mut m = MlpModel::init(&[3, 4, 2], &mut RngStream::new(0)).unwrap();
        let before = m.params();
        let mut opt = Adam::new(&m, 0.0);
        let cache = m.forward(&Matrix::from_rows(&[[0.1, 0.2, 0.3]])).unwrap();
        let g = m.backward(&cache, &Matrix::from_rows(&[[1.0, -1.0]])).unwrap();
        opt.update(&mut m, &g);
        assert_eq!(m.params(), before);
        assert_eq!(opt.step_count(), 1);
        let (first, second) = opt.moments();
        assert_eq!(first.layers.len(), m.layers().len());
        assert_eq!(second.flatten().len(), m.param_count());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction the first step is lr * sign(g) (up to eps).
        let mut m = MlpModel::from_layers(vec![Dense { inputs: 1, outputs: 1, weights: vec![1.0], bias: vec![0.0] }]);
        let mut opt = Adam::new(&m, 0.01);
        let g = Gradients { layers: vec![Dense { inputs: 1, outputs: 1, weights: vec![3.0], bias: vec![-0.5] }] };
        opt.update(&mut m, &g);
        assert!((m.params()[0] - 0.99).abs() < 1e-9);
        assert!((m.params()[1] - 0.01).abs() < 1e-9);
    }
}
