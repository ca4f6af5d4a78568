//! Reverse-mode differentiation for dense coordinate MLPs.
//!
//! A network is a chain of affine layers `z = a Wᵀ + b` each followed by a
//! pointwise activation. [`forward`] records the layer inputs and the
//! activation derivatives on a [`Tape`]; [`Tape::backward`] replays the pass in
//! reverse to produce exact parameter gradients for a given output cotangent.
//!
//! Batches are row-major: one row per coordinate, one column per feature.

mod adam;
pub mod weights;

pub use adam::{adam_step, sgd_step, AdamState};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelConfig;

/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// One affine layer. `weight` has shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Layer {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// The trainable parameters of one MLP, also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layers: Vec<Layer>,
}

impl ParamSet {
    /// Builds a parameter set, checking that consecutive layer shapes chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Config(format!(
                    "layer {i}: bias length {} does not match output dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(ParamSet { layers })
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            layers: other
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// All entries in storage order: per layer, row-major weights then bias.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable reference to the `index`-th entry in [`ParamSet::iter`] order.
    pub fn entry_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.len();
            if index < nw {
                let cols = layer.weight.ncols();
                return &mut layer.weight[[index / cols, index % cols]];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Pointwise activation applied after an affine layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `sin(omega * z)`
    Sine { omega: f64 },
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Sine { omega } => z.mapv_inplace(|v| (omega * v).sin()),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }

    /// Applies the activation in place and returns its derivative at the
    /// pre-activation, or `None` when the derivative is identically one.
    fn apply_with_derivative(self, z: &mut Array2<f64>) -> Option<Array2<f64>> {
        match self {
            Activation::Sine { omega } => {
                let mut deriv = Array2::zeros(z.raw_dim());
                Zip::from(&mut *z).and(&mut deriv).for_each(|v, d| {
                    let (s, c) = (omega * *v).sin_cos();
                    *v = s;
                    *d = omega * c;
                });
                Some(deriv)
            }
            Activation::Relu => {
                let deriv = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                z.mapv_inplace(|v| v.max(0.0));
                Some(deriv)
            }
            Activation::Identity => None,
        }
    }
}

/// Record of one forward pass, sufficient to compute exact gradients.
///
/// The tape borrows the network it was recorded against, so the parameters
/// cannot change between the forward and backward pass.
#[derive(Debug)]
pub struct Tape<'a> {
    net: &'a ParamSet,
    inputs: Vec<Array2<f64>>,
    derivs: Vec<Option<Array2<f64>>>,
    batch: usize,
    consumed: bool,
}

impl Tape<'_> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Gradients of `Σ loss_grad ⊙ output` with respect to every parameter.
    ///
    /// Contributions from different batch rows are summed. A tape supports a
    /// single backward pass; its caches are released afterwards.
    pub fn backward(&mut self, loss_grad: ArrayView2<f64>) -> Result<ParamSet> {
        if self.consumed {
            return Err(Error::TapeReused);
        }
        if loss_grad.dim() != (self.batch, self.net.output_dim()) {
            return Err(Error::Input(format!(
                "loss gradient has shape {:?}, expected ({}, {})",
                loss_grad.dim(),
                self.batch,
                self.net.output_dim()
            )));
        }
        if !loss_grad.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("loss gradient contains non-finite values".into()));
        }
        self.consumed = true;
        let inputs = std::mem::take(&mut self.inputs);
        let derivs = std::mem::take(&mut self.derivs);

        let layers = self.net.layers();
        let mut grads = Vec::with_capacity(layers.len());
        let mut upstream = loss_grad.to_owned();
        for (i, ((layer, input), deriv)) in layers.iter().zip(inputs).zip(derivs).enumerate().rev() {
            let dz = match deriv {
                Some(mut d) => {
                    d *= &upstream;
                    d
                }
                None => upstream,
            };
            let dw = dz.t().dot(&input);
            let db = dz.sum_axis(Axis(0));
            upstream = if i > 0 { dz.dot(&layer.weight) } else { Array2::zeros((0, 0)) };
            grads.push(Layer { weight: dw, bias: db });
        }
        grads.reverse();
        Ok(ParamSet { layers: grads })
    }
}

fn check_input(net: &ParamSet, activations: &[Activation], input: ArrayView2<f64>) -> Result<()> {
    if activations.len() != net.layers().len() {
        return Err(Error::Config(format!(
            "{} activations given for {} layers",
            activations.len(),
            net.layers().len()
        )));
    }
    if input.ncols() != net.input_dim() {
        return Err(Error::Config(format!(
            "network expects {} input features, got {}",
            net.input_dim(),
            input.ncols()
        )));
    }
    if !input.iter().all(|v| v.is_finite()) {
        return Err(Error::Input("coordinates contain non-finite values".into()));
    }
    Ok(())
}

fn affine(layer: &Layer, input: ArrayView2<f64>) -> Array2<f64> {
    let mut z = input.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

/// Forward pass over already-embedded features with explicit per-layer
/// activations, recording a tape.
pub fn forward_layers<'a>(
    net: &'a ParamSet,
    activations: &[Activation],
    input: ArrayView2<f64>,
) -> Result<(Array2<f64>, Tape<'a>)> {
    check_input(net, activations, input)?;
    let mut inputs = Vec::with_capacity(activations.len());
    let mut derivs = Vec::with_capacity(activations.len());
    let mut current = input.to_owned();
    for (layer, act) in net.layers().iter().zip(activations) {
        let mut z = affine(layer, current.view());
        derivs.push(act.apply_with_derivative(&mut z));
        inputs.push(std::mem::replace(&mut current, z));
    }
    let tape = Tape {
        net,
        inputs,
        derivs,
        batch: input.nrows(),
        consumed: false,
    };
    Ok((current, tape))
}

/// Evaluation-only forward pass over already-embedded features.
pub fn predict_layers(net: &ParamSet, activations: &[Activation], input: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(net, activations, input)?;
    let mut current = input.to_owned();
    for (layer, act) in net.layers().iter().zip(activations) {
        let mut z = affine(layer, current.view());
        act.apply(&mut z);
        current = z;
    }
    Ok(current)
}

/// Runs the network described by `config` on raw coordinates, recording a tape.
pub fn forward<'a>(
    net: &'a ParamSet,
    config: &ModelConfig,
    coords: ArrayView2<f64>,
) -> Result<(Array2<f64>, Tape<'a>)> {
    let features = prepare_input(config, coords)?;
    forward_layers(net, &config.layer_activations(), features.view())
}

/// Runs the network without recording a tape.
pub fn predict(net: &ParamSet, config: &ModelConfig, coords: ArrayView2<f64>) -> Result<Array2<f64>> {
    let features = prepare_input(config, coords)?;
    predict_layers(net, &config.layer_activations(), features.view())
}

fn prepare_input(config: &ModelConfig, coords: ArrayView2<f64>) -> Result<Array2<f64>> {
    if coords.ncols() != config.input_dim {
        return Err(Error::Config(format!(
            "model expects {}-d coordinates, got {}",
            config.input_dim,
            coords.ncols()
        )));
    }
    if !coords.iter().all(|v| v.is_finite()) {
        return Err(Error::Input("coordinates contain non-finite values".into()));
    }
    Ok(config.embed(coords))
}

/// How squared errors are reduced to a scalar loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Mean over all batch rows and output channels.
    #[default]
    Mean,
    Sum,
}

/// Squared-error loss and its gradient with respect to `pred`.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>, reduction: Reduction) -> (f64, Array2<f64>) {
    let diff = &pred - &target;
    let sse: f64 = diff.iter().map(|d| d * d).sum();
    let norm = match reduction {
        Reduction::Mean => diff.len().max(1) as f64,
        Reduction::Sum => 1.0,
    };
    let grad = diff.mapv(|d| 2.0 * d / norm);
    (sse / norm, grad)
}

/// Central finite differences of `Σ loss_grad ⊙ output` for every parameter.
pub fn finite_difference_gradients(
    net: &ParamSet,
    config: &ModelConfig,
    coords: ArrayView2<f64>,
    loss_grad: ArrayView2<f64>,
    step: f64,
) -> Result<ParamSet> {
    let mut probe = net.clone();
    let mut grads = ParamSet::zeros_like(net);
    let objective = |p: &ParamSet| -> Result<f64> {
        let out = predict(p, config, coords)?;
        Ok((&out * &loss_grad).sum())
    };
    for (i, g) in grads.iter_mut().enumerate() {
        let original = *probe.entry_mut(i);
        *probe.entry_mut(i) = original + step;
        let plus = objective(&probe)?;
        *probe.entry_mut(i) = original - step;
        let minus = objective(&probe)?;
        *probe.entry_mut(i) = original;
        *g = (plus - minus) / (2.0 * step);
    }
    Ok(grads)
}

/// Largest entrywise `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn max_relative_error(a: &ParamSet, b: &ParamSet) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Central differences at `step` and `2·step` combined by one Richardson
/// extrapolation, `(4·D(h) − D(2h)) / 3`, which cancels the `h²` truncation term.
///
/// Sine layers with ω around 30 have third derivatives large enough that the
/// plain central difference at `h = 1e-5` is only good to about 1e-4 relative.
pub fn extrapolated_fd_gradients(
    net: &ParamSet,
    config: &ModelConfig,
    coords: ArrayView2<f64>,
    loss_grad: ArrayView2<f64>,
    step: f64,
) -> Result<ParamSet> {
    let mut fine = finite_difference_gradients(net, config, coords, loss_grad, step)?;
    let coarse = finite_difference_gradients(net, config, coords, loss_grad, 2.0 * step)?;
    fine.scale(4.0 / 3.0);
    fine.add_scaled(&coarse, -1.0 / 3.0);
    Ok(fine)
}

/// Compares reverse-mode gradients of the mean squared error against
/// extrapolated central differences with base step [`FD_STEP`].
///
/// The loss cotangent `dL/dy = 2 (y - t) / n` is exact, so the differences are
/// taken through the network output: both routes differentiate
/// `Σ dL/dy ⊙ y(θ)`. Returns the maximum relative error over all parameters.
pub fn grad_check(
    net: &ParamSet,
    config: &ModelConfig,
    coords: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<f64> {
    let (out, mut tape) = forward(net, config, coords)?;
    let (_, loss_grad) = mse(out.view(), targets, Reduction::Mean);
    let analytic = tape.backward(loss_grad.view())?;
    let numeric = extrapolated_fd_gradients(net, config, coords, loss_grad.view(), FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, Arch, ModelConfig};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coords(rows: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0))
    }

    fn sine_config(hidden: usize, hidden_layers: usize) -> ModelConfig {
        ModelConfig {
            hidden_features: hidden,
            hidden_layers,
            omega0_first: 30.0,
            omega0_hidden: 30.0,
            ..ModelConfig::sine(2, 1)
        }
    }

    /// Plain loops, no ndarray products, no tape.
    fn straight_line_forward(net: &ParamSet, acts: &[Activation], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (layer, act) in net.layers().iter().zip(acts) {
            let mut next = vec![0.0; layer.out_dim()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut z = layer.bias[o];
                for (i, ai) in a.iter().enumerate() {
                    z += layer.weight[[o, i]] * ai;
                }
                *slot = match *act {
                    Activation::Sine { omega } => (omega * z).sin(),
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                };
            }
            a = next;
        }
        a
    }

    #[test]
    fn zero_weights_give_final_bias() {
        let cfg = sine_config(8, 2);
        let mut net = build(&cfg, 3);
        let n = net.layers().len();
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            layer.weight.fill(0.0);
            if i + 1 < n {
                layer.bias.fill(0.0);
            } else {
                layer.bias.fill(0.25);
            }
        }
        let (out, _) = forward(&net, &cfg, random_coords(7, 2, 1).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn identity_layer_passes_coords_through() {
        let net = ParamSet::new(vec![Layer {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
        }])
        .unwrap();
        let coords = random_coords(5, 2, 9);
        let (out, _) = forward_layers(&net, &[Activation::Identity], coords.view()).unwrap();
        assert_eq!(out, coords);
    }

    #[test]
    fn forward_matches_straight_line_evaluator() {
        let cfg = ModelConfig {
            hidden_features: 32,
            hidden_layers: 2,
            ..ModelConfig::sine(2, 1)
        };
        let net = build(&cfg, 11);
        let coords = random_coords(5, 2, 12);
        let (out, _) = forward(&net, &cfg, coords.view()).unwrap();
        let acts = cfg.layer_activations();
        for (r, row) in coords.rows().into_iter().enumerate() {
            let expect = straight_line_forward(&net, &acts, row.as_slice().unwrap());
            assert!((out[[r, 0]] - expect[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_and_input_errors() {
        let cfg = sine_config(8, 1);
        let net = build(&cfg, 0);
        let bad = random_coords(3, 3, 0);
        assert!(matches!(forward(&net, &cfg, bad.view()), Err(Error::Config(_))));
        let mut nan = random_coords(3, 2, 0);
        nan[[1, 0]] = f64::NAN;
        assert!(matches!(forward(&net, &cfg, nan.view()), Err(Error::Input(_))));
        let broken = ParamSet::new(vec![Layer::zeros(2, 4), Layer::zeros(3, 1)]);
        assert!(matches!(broken, Err(Error::Config(_))));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let cfg = sine_config(8, 2);
        let net = build(&cfg, 5);
        let coords = random_coords(6, 2, 5);
        let (_, mut tape) = forward(&net, &cfg, coords.view()).unwrap();
        let g = tape.backward(Array2::zeros((6, 1)).view()).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn tape_reuse_is_an_error() {
        let cfg = sine_config(4, 1);
        let net = build(&cfg, 5);
        let coords = random_coords(3, 2, 5);
        let (_, mut tape) = forward(&net, &cfg, coords.view()).unwrap();
        let lg = Array2::ones((3, 1));
        tape.backward(lg.view()).unwrap();
        assert!(matches!(tape.backward(lg.view()), Err(Error::TapeReused)));
    }

    #[test]
    fn linear_regression_gradient_closed_form() {
        let w = array![[0.5, -1.5]];
        let b = array![0.25];
        let net = ParamSet::new(vec![Layer { weight: w.clone(), bias: b.clone() }]).unwrap();
        let x = array![[0.1, 0.2], [-0.3, 0.4], [0.9, -0.7]];
        let y = array![[1.0], [0.0], [-2.0]];
        let (out, mut tape) = forward_layers(&net, &[Activation::Identity], x.view()).unwrap();
        let (_, lg) = mse(out.view(), y.view(), Reduction::Mean);
        let g = tape.backward(lg.view()).unwrap();
        let bsz = x.nrows() as f64;
        let mut expect_w = [0.0; 2];
        let mut expect_b = 0.0;
        for r in 0..x.nrows() {
            let resid = w[[0, 0]] * x[[r, 0]] + w[[0, 1]] * x[[r, 1]] + b[0] - y[[r, 0]];
            expect_w[0] += 2.0 / bsz * resid * x[[r, 0]];
            expect_w[1] += 2.0 / bsz * resid * x[[r, 1]];
            expect_b += 2.0 / bsz * resid;
        }
        let gl = &g.layers()[0];
        assert!((gl.weight[[0, 0]] - expect_w[0]).abs() < 1e-14);
        assert!((gl.weight[[0, 1]] - expect_w[1]).abs() < 1e-14);
        assert!((gl.bias[0] - expect_b).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences_three_hidden_layers() {
        let cfg = sine_config(16, 3);
        let net = build(&cfg, 21);
        let coords = random_coords(16, 2, 22);
        let targets = random_coords(16, 1, 23);
        let err = grad_check(&net, &cfg, coords.view(), targets.view()).unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn grad_check_at_zero_loss() {
        let cfg = sine_config(8, 2);
        let net = build(&cfg, 2);
        let coords = random_coords(10, 2, 3);
        let targets = predict(&net, &cfg, coords.view()).unwrap();
        let err = grad_check(&net, &cfg, coords.view(), targets.view()).unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let cfg = sine_config(8, 2);
        let net = build(&cfg, 4);
        let coords = random_coords(16, 2, 5);
        let targets = random_coords(16, 1, 6);
        let (out, mut tape) = forward(&net, &cfg, coords.view()).unwrap();
        let (_, lg) = mse(out.view(), targets.view(), Reduction::Mean);
        let mut analytic = tape.backward(lg.view()).unwrap();
        let numeric = finite_difference_gradients(&net, &cfg, coords.view(), lg.view(), FD_STEP).unwrap();
        let idx = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        *analytic.entry_mut(idx) *= -1.0;
        assert!(max_relative_error(&analytic, &numeric) > 0.1);
    }

    #[test]
    fn relu_pe_gradients() {
        let cfg = ModelConfig {
            hidden_features: 12,
            hidden_layers: 2,
            n_harmonics: 4,
            ..ModelConfig::relu_pe(2, 1)
        };
        let net = build(&cfg, 8);
        let coords = random_coords(16, 2, 9);
        let targets = random_coords(16, 1, 10);
        let err = grad_check(&net, &cfg, coords.view(), targets.view()).unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn gradients_are_additive_over_batches() {
        let cfg = sine_config(8, 2);
        let net = build(&cfg, 30);
        let a = random_coords(5, 2, 31);
        let b = random_coords(7, 2, 32);
        let both = ndarray::concatenate![Axis(0), a, b];
        let grad_for = |x: &Array2<f64>| {
            let (out, mut tape) = forward(&net, &cfg, x.view()).unwrap();
            tape.backward(out.view()).unwrap()
        };
        let mut sum = grad_for(&a);
        sum.add_scaled(&grad_for(&b), 1.0);
        let joint = grad_for(&both);
        assert!(sum.max_abs_diff(&joint) < 1e-12);
    }

    #[test]
    fn architecture_tags() {
        assert_eq!(ModelConfig::sine(2, 3).arch, Arch::Sine);
    }
}
