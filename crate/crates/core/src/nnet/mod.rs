//! Minimal dense feed-forward network engine.
//!
//! Everything here is plain `f64` on `ndarray` types: a network is a list of
//! dense layers `y = activation(W x + b)` with per-layer activations. The
//! engine covers what the rest of the crate needs — Glorot init, batched
//! forward passes with a cache, backprop gradients of the squared-norm
//! reconstruction loss, and a deterministic mini-batch training loop with
//! early stopping. Largest network in this project is 200 neurons wide, so
//! there is no point in anything fancier.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

mod io;
mod train;

pub use train::{train, Optimizer, Samples, TrainConfig, TrainReport};

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// `f(x) = x`, unbounded. Used on bottleneck layers so reduced
    /// coordinates are not squashed.
    Identity,
    /// `f(x) = tanh(x)` in (-1, 1). Default hidden activation.
    Tanh,
    /// `f(x) = 1/(1+e^-x)` in (0, 1). Used on layers that emit reflectance.
    Logistic,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Logistic => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::Tanh => 1.0 - y * y,
            ActivationKind::Logistic => y * (1.0 - y),
        }
    }
}

/// Dense feed-forward network.
///
/// Layer `l` maps `layer_sizes[l]` inputs to `layer_sizes[l+1]` outputs
/// through a row-major weight matrix of shape `(out, in)` plus a bias
/// vector, followed by `activations[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activations: Vec<ActivationKind>,
}

/// Pre- and post-activation values of one forward pass, kept for backprop.
///
/// `post[0]` is the input batch itself; `pre[l]` / `post[l + 1]` belong to
/// layer `l`. All arrays have one row per batch sample.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
}

/// Loss gradients mirroring the network's weight and bias shapes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// Builds a network with Glorot-uniform weights and zero biases.
    ///
    /// Weights of layer `l` are drawn uniformly from
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]` in row-major
    /// order from a ChaCha stream, so an identical seed reproduces a
    /// bit-identical network.
    pub fn init(layer_sizes: &[usize], activations: &[ActivationKind], seed: u64) -> Result<Mlp> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!("layer {pos} has size 0")));
        }
        let n_layers = layer_sizes.len() - 1;
        if activations.len() != n_layers {
            return Err(Error::shape(
                format!("{n_layers} activations"),
                format!("{}", activations.len()),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(&mut rng));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }

        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activations: activations.to_vec(),
        })
    }

    /// Builds a network from explicit parameters, validating shapes.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activations: Vec<ActivationKind>,
    ) -> Result<Mlp> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig(
                "layer_sizes must have length >= 2 with positive entries".into(),
            ));
        }
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers || activations.len() != n_layers {
            return Err(Error::shape(
                format!("{n_layers} weight/bias/activation entries"),
                format!(
                    "{}/{}/{}",
                    weights.len(),
                    biases.len(),
                    activations.len()
                ),
            ));
        }
        for l in 0..n_layers {
            let want = (layer_sizes[l + 1], layer_sizes[l]);
            if weights[l].dim() != want {
                return Err(Error::shape(
                    format!("weight {l} of shape {want:?}"),
                    format!("{:?}", weights[l].dim()),
                ));
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::shape(
                    format!("bias {l} of length {}", layer_sizes[l + 1]),
                    format!("{}", biases[l].len()),
                ));
            }
            if weights[l].iter().chain(biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter in layer {l}")));
            }
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
            activations,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn activations(&self) -> &[ActivationKind] {
        &self.activations
    }

    /// Clones layers `range` into a standalone network.
    ///
    /// Parameters are copied bit-for-bit; the new input/output dims are the
    /// boundary sizes of the range.
    pub fn sub_network(&self, range: Range<usize>) -> Result<Mlp> {
        if range.start >= range.end || range.end > self.num_layers() {
            return Err(Error::InvalidConfig(format!(
                "layer range {range:?} invalid for a {}-layer network",
                self.num_layers()
            )));
        }
        Ok(Mlp {
            layer_sizes: self.layer_sizes[range.start..=range.end].to_vec(),
            weights: self.weights[range.clone()].to_vec(),
            biases: self.biases[range.clone()].to_vec(),
            activations: self.activations[range].to_vec(),
        })
    }

    /// Forward pass for a batch (one row per sample), keeping the cache.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("input width {}", self.input_dim()),
                format!("{}", inputs.ncols()),
            ));
        }
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut post = Vec::with_capacity(self.num_layers() + 1);
        post.push(inputs.to_owned());
        for l in 0..self.num_layers() {
            let z = affine(post.last().unwrap().view(), &self.weights[l], &self.biases[l]);
            let a = z.mapv(|v| self.activations[l].apply(v));
            pre.push(z);
            post.push(a);
        }
        let output = post.last().unwrap().clone();
        Ok((output, ForwardCache { pre, post }))
    }

    /// Forward pass for a single sample.
    pub fn forward(&self, input: ArrayView1<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        let row = input
            .to_shape((1, input.len()))
            .expect("1-row reshape cannot fail");
        let (out, cache) = self.forward_batch(row.view())?;
        Ok((out.row(0).to_owned(), cache))
    }

    /// Runs only layers `range` of the network on `inputs`.
    ///
    /// `inputs` must be `layer_sizes[range.start]` wide; the result is
    /// `layer_sizes[range.end]` wide. This is how encoder/decoder halves are
    /// evaluated without copying parameters.
    pub fn forward_range(&self, inputs: ArrayView2<f64>, range: Range<usize>) -> Result<Array2<f64>> {
        if range.start >= range.end || range.end > self.num_layers() {
            return Err(Error::InvalidConfig(format!(
                "layer range {range:?} invalid for a {}-layer network",
                self.num_layers()
            )));
        }
        if inputs.ncols() != self.layer_sizes[range.start] {
            return Err(Error::shape(
                format!("input width {}", self.layer_sizes[range.start]),
                format!("{}", inputs.ncols()),
            ));
        }
        let mut a = inputs.to_owned();
        for l in range {
            let z = affine(a.view(), &self.weights[l], &self.biases[l]);
            a = z.mapv(|v| self.activations[l].apply(v));
        }
        Ok(a)
    }

    /// Row-by-row forward pass through layers `range` using plain loops.
    ///
    /// Unlike [`Mlp::forward_range`] (which uses blocked matrix products),
    /// the result for a given row never depends on how many rows share the
    /// batch — required where two code paths must agree bit for bit, e.g.
    /// search scoring versus its brute-force oracle.
    pub fn forward_rows_stable(
        &self,
        inputs: ArrayView2<f64>,
        range: Range<usize>,
    ) -> Result<Array2<f64>> {
        if range.start >= range.end || range.end > self.num_layers() {
            return Err(Error::InvalidConfig(format!(
                "layer range {range:?} invalid for a {}-layer network",
                self.num_layers()
            )));
        }
        if inputs.ncols() != self.layer_sizes[range.start] {
            return Err(Error::shape(
                format!("input width {}", self.layer_sizes[range.start]),
                format!("{}", inputs.ncols()),
            ));
        }
        let out_dim = self.layer_sizes[range.end];
        let mut out = Array2::zeros((inputs.nrows(), out_dim));
        let mut current: Vec<f64> = Vec::new();
        let mut next: Vec<f64> = Vec::new();
        for (r, row) in inputs.rows().into_iter().enumerate() {
            current.clear();
            current.extend(row.iter());
            for l in range.clone() {
                let w = &self.weights[l];
                let b = &self.biases[l];
                let act = self.activations[l];
                next.clear();
                for i in 0..w.nrows() {
                    let mut z = b[i];
                    for (j, &x) in current.iter().enumerate() {
                        z += w[[i, j]] * x;
                    }
                    next.push(act.apply(z));
                }
                std::mem::swap(&mut current, &mut next);
            }
            for (c, &v) in current.iter().enumerate() {
                out[[r, c]] = v;
            }
        }
        Ok(out)
    }

    /// Gradients of the reconstruction loss `(1/n) Σ_i ‖y_i − t_i‖²` over the
    /// batch with respect to every weight and bias.
    pub fn backprop_grad(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<Gradients> {
        if inputs.nrows() == 0 {
            return Err(Error::Empty("backprop batch".into()));
        }
        if targets.dim() != (inputs.nrows(), self.output_dim()) {
            return Err(Error::shape(
                format!("targets of shape ({}, {})", inputs.nrows(), self.output_dim()),
                format!("{:?}", targets.dim()),
            ));
        }
        let (output, cache) = self.forward_batch(inputs)?;
        let grads = self.backprop_from_cache(&cache, &output, targets)?;
        Ok(grads)
    }

    /// Backprop using an existing forward cache; shared by `backprop_grad`
    /// and the training loop (which wants the prediction for loss tracking).
    fn backprop_from_cache(
        &self,
        cache: &ForwardCache,
        output: &Array2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<Gradients> {
        let batch = output.nrows() as f64;
        // d/dy of (1/n) Σ ‖y − t‖²
        let mut delta = (output - &targets) * (2.0 / batch);
        let mut d_weights = vec![Array2::zeros((0, 0)); self.num_layers()];
        let mut d_biases = vec![Array1::zeros(0); self.num_layers()];
        for l in (0..self.num_layers()).rev() {
            let act = self.activations[l];
            delta.zip_mut_with(&cache.post[l + 1], |d, &y| {
                *d *= act.derivative_from_output(y);
            });
            d_weights[l] = delta.t().dot(&cache.post[l]);
            d_biases[l] = delta.sum_axis(Axis(0));
            if d_weights[l].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of layer {l} (training diverged)"
                )));
            }
            if l > 0 {
                delta = delta.dot(&self.weights[l]);
            }
        }
        Ok(Gradients { d_weights, d_biases })
    }

    pub(crate) fn apply_update(&mut self, step: &Gradients) {
        for l in 0..self.num_layers() {
            self.weights[l] -= &step.d_weights[l];
            self.biases[l] -= &step.d_biases[l];
        }
    }
}

#[inline]
fn affine(a: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut z = a.dot(&w.t());
    z += b;
    z
}

/// Reconstruction mean-squared error over a set of instances:
/// the squared Euclidean norm of each error vector, averaged over instances
/// (not over vector elements).
pub fn mse(predictions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    if predictions.nrows() == 0 {
        return Err(Error::Empty("mse over zero instances".into()));
    }
    if predictions.dim() != targets.dim() {
        return Err(Error::shape(
            format!("{:?}", predictions.dim()),
            format!("{:?}", targets.dim()),
        ));
    }
    let mut sum = 0.0;
    for (p, t) in predictions.iter().zip(targets.iter()) {
        let d = p - t;
        sum += d * d;
    }
    Ok(sum / predictions.nrows() as f64)
}

/// `mse` for a pair of single vectors (one instance).
pub fn mse_single(prediction: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if prediction.len() != target.len() {
        return Err(Error::shape(
            format!("{}", prediction.len()),
            format!("{}", target.len()),
        ));
    }
    if prediction.is_empty() {
        return Err(Error::Empty("mse over zero-length vectors".into()));
    }
    Ok(prediction
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{arr1, arr2, array};

    #[test]
    fn init_shapes_match_layer_sizes() {
        let mlp = Mlp::init(
            &[2, 3, 1],
            &[ActivationKind::Tanh, ActivationKind::Identity],
            7,
        )
        .unwrap();
        assert_eq!(mlp.weights()[0].dim(), (3, 2));
        assert_eq!(mlp.weights()[1].dim(), (1, 3));
        assert_eq!(mlp.biases()[0].len(), 3);
        assert_eq!(mlp.biases()[1].len(), 1);
        assert!(mlp.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_same_seed_identical() {
        let acts = [ActivationKind::Tanh, ActivationKind::Logistic];
        let a = Mlp::init(&[4, 5, 2], &acts, 42).unwrap();
        let b = Mlp::init(&[4, 5, 2], &acts, 42).unwrap();
        assert_eq!(a, b);
        let c = Mlp::init(&[4, 5, 2], &acts, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_glorot_bound() {
        // half-width for fan_in 200, fan_out 50: sqrt(6/250)
        let bound = (6.0f64 / 250.0).sqrt();
        assert_relative_eq!(bound, 0.15491933384829668, max_relative = 1e-12);
        let mlp = Mlp::init(&[200, 50], &[ActivationKind::Tanh], 9).unwrap();
        assert!(mlp.weights()[0].iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(Mlp::init(&[], &[], 0).is_err());
        assert!(Mlp::init(&[3], &[], 0).is_err());
        assert!(Mlp::init(&[3, 0], &[ActivationKind::Tanh], 0).is_err());
        // activation count must match layer count
        assert!(Mlp::init(&[3, 2], &[], 0).is_err());
    }

    #[test]
    fn forward_zero_network_outputs_zero() {
        let mlp = Mlp::from_parts(
            vec![3, 2],
            vec![Array2::zeros((2, 3))],
            vec![Array1::zeros(2)],
            vec![ActivationKind::Identity],
        )
        .unwrap();
        let (y, _) = mlp.forward(arr1(&[1.0, -2.0, 0.5]).view()).unwrap();
        assert_eq!(y, arr1(&[0.0, 0.0]));
    }

    #[test]
    fn forward_identity_layer_passes_input_through() {
        let mlp = Mlp::from_parts(
            vec![3, 3],
            vec![Array2::eye(3)],
            vec![Array1::zeros(3)],
            vec![ActivationKind::Identity],
        )
        .unwrap();
        let x = arr1(&[0.25, -1.5, 3.0]);
        let (y, _) = mlp.forward(x.view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_single_tanh_neuron() {
        let mlp = Mlp::from_parts(
            vec![1, 1],
            vec![arr2(&[[2.0]])],
            vec![arr1(&[1.0])],
            vec![ActivationKind::Tanh],
        )
        .unwrap();
        let (y, _) = mlp.forward(arr1(&[0.5]).view()).unwrap();
        // tanh(2*0.5 + 1) = tanh(2)
        assert_relative_eq!(y[0], 2.0f64.tanh(), max_relative = 1e-15);
        assert_relative_eq!(y[0], 0.9640275800758169, max_relative = 1e-12);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let mlp = Mlp::init(&[3, 2], &[ActivationKind::Tanh], 0).unwrap();
        assert!(mlp.forward(arr1(&[1.0, 2.0]).view()).is_err());
    }

    #[test]
    fn forward_cache_holds_pre_and_post_activations() {
        let mlp = Mlp::from_parts(
            vec![1, 1],
            vec![arr2(&[[3.0]])],
            vec![arr1(&[0.5])],
            vec![ActivationKind::Tanh],
        )
        .unwrap();
        let (_, cache) = mlp.forward(arr1(&[1.0]).view()).unwrap();
        assert_relative_eq!(cache.pre[0][[0, 0]], 3.5, max_relative = 1e-15);
        assert_relative_eq!(cache.post[1][[0, 0]], 3.5f64.tanh(), max_relative = 1e-15);
        assert_eq!(cache.post[0][[0, 0]], 1.0);
    }

    #[test]
    fn mse_identical_sets_is_zero() {
        let a = array![[0.1, 0.2], [0.3, 0.4]];
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn mse_single_instance_is_squared_norm() {
        let p = array![[1.0, 0.0]];
        let t = array![[0.0, 0.0]];
        assert_eq!(mse(p.view(), t.view()).unwrap(), 1.0);
    }

    #[test]
    fn mse_averages_over_instances_not_elements() {
        // per-instance squared norms 0.5 and 1.5, arithmetic mean 1.0
        let p = array![[0.5, 0.5], [1.5f64.sqrt(), 0.0]];
        let t = array![[0.0, 0.0], [0.0, 0.0]];
        let got = mse(p.view(), t.view()).unwrap();
        assert_relative_eq!(got, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn mse_rejects_empty_and_mismatched() {
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(mse(empty.view(), empty.view()).is_err());
        let a = array![[1.0, 2.0]];
        let b = array![[1.0, 2.0, 3.0]];
        assert!(mse(a.view(), b.view()).is_err());
    }

    #[test]
    fn backprop_zero_at_exact_fit() {
        // zero weights/biases with zero targets: network already exact
        let mlp = Mlp::from_parts(
            vec![2, 2],
            vec![Array2::zeros((2, 2))],
            vec![Array1::zeros(2)],
            vec![ActivationKind::Identity],
        )
        .unwrap();
        let x = array![[1.0, -1.0], [0.5, 2.0]];
        let t = Array2::zeros((2, 2));
        let g = mlp.backprop_grad(x.view(), t.view()).unwrap();
        assert!(g.d_weights[0].iter().all(|&v| v == 0.0));
        assert!(g.d_biases[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backprop_matches_linear_least_squares_gradient() {
        // single linear layer, one sample: dL/dW = 2 (Wx + b − t) xᵀ
        let w = arr2(&[[0.5, -1.0], [2.0, 0.25]]);
        let b = arr1(&[0.1, -0.2]);
        let mlp = Mlp::from_parts(
            vec![2, 2],
            vec![w.clone()],
            vec![b.clone()],
            vec![ActivationKind::Identity],
        )
        .unwrap();
        let x = arr1(&[0.3, -0.7]);
        let t = arr1(&[1.0, 0.0]);
        let resid = w.dot(&x) + &b - &t;
        let g = mlp
            .backprop_grad(
                x.view().to_shape((1, 2)).unwrap().view(),
                t.view().to_shape((1, 2)).unwrap().view(),
            )
            .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(
                    g.d_weights[0][[i, j]],
                    2.0 * resid[i] * x[j],
                    max_relative = 1e-12
                );
            }
            assert_relative_eq!(g.d_biases[0][i], 2.0 * resid[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn sub_network_is_bit_identical_slice() {
        let mlp = Mlp::init(
            &[4, 3, 2, 3],
            &[ActivationKind::Tanh, ActivationKind::Identity, ActivationKind::Tanh],
            11,
        )
        .unwrap();
        let tail = mlp.sub_network(1..3).unwrap();
        assert_eq!(tail.layer_sizes(), &[3, 2, 3]);
        assert_eq!(tail.weights()[0], mlp.weights()[1]);
        assert_eq!(tail.weights()[1], mlp.weights()[2]);
        // composition equals full forward
        let x = arr1(&[0.1, 0.2, 0.3, 0.4]);
        let (full, _) = mlp.forward(x.view()).unwrap();
        let mid = mlp
            .forward_range(x.to_shape((1, 4)).unwrap().view(), 0..1)
            .unwrap();
        let out = mlp.forward_range(mid.view(), 1..3).unwrap();
        let tail_out = tail.forward_batch(mid.view()).unwrap().0;
        assert_eq!(out.row(0), full.view());
        assert_eq!(tail_out, out);
    }
}
