//! Coordinate-MLP architectures: SIREN and ReLU with harmonic embedding.
//!
//! Layer layout for `hidden_layers = L`: one input layer `d → h`, `L` hidden
//! layers `h → h`, and a linear output layer `h → c`, so `L + 2` affine
//! layers in total.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Layer, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Sinusoidal activations (SIREN).
    Sine,
    /// ReLU activations on a harmonic embedding of the coordinates.
    ReluPe,
}

/// Frequency ladder for the harmonic embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicSchedule {
    /// `i·π` for `i = 1..=n`.
    #[default]
    Linear,
    /// `2^(i-1)·π` for `i = 1..=n`.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_features: usize,
    /// Number of `h → h` layers.
    pub hidden_layers: usize,
    pub omega0_first: f64,
    pub omega0_hidden: f64,
    /// Harmonics per coordinate component (ReLU only).
    pub n_harmonics: usize,
    pub harmonic_schedule: HarmonicSchedule,
}

impl Default for ModelConfig {
    /// RGB SIREN on 2-D coordinates.
    fn default() -> Self {
        Self::sine(2, 3)
    }
}

impl ModelConfig {
    /// SIREN with 512 features, 3 hidden layers, ω0 = 60 / 30.
    pub fn sine(input_dim: usize, output_dim: usize) -> Self {
        ModelConfig {
            arch: Arch::Sine,
            input_dim,
            output_dim,
            hidden_features: 512,
            hidden_layers: 3,
            omega0_first: 60.0,
            omega0_hidden: 30.0,
            n_harmonics: 60,
            harmonic_schedule: HarmonicSchedule::Linear,
        }
    }

    /// ReLU MLP with 60 linear harmonics, 512 features, 3 hidden layers.
    pub fn relu_pe(input_dim: usize, output_dim: usize) -> Self {
        ModelConfig {
            arch: Arch::ReluPe,
            ..Self::sine(input_dim, output_dim)
        }
    }

    pub fn with_hidden(mut self, hidden_features: usize) -> Self {
        self.hidden_features = hidden_features;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.input_dim == 0 || self.output_dim == 0 {
            return fail("input and output dims must be positive");
        }
        if self.hidden_features == 0 {
            return fail("hidden_features must be positive");
        }
        if self.hidden_layers == 0 {
            return fail("hidden_layers must be at least 1");
        }
        match self.arch {
            Arch::Sine => {
                if !(self.omega0_first > 0.0 && self.omega0_hidden > 0.0) {
                    return fail("omega0 values must be positive");
                }
            }
            Arch::ReluPe => {
                if self.n_harmonics == 0 {
                    return fail("n_harmonics must be positive for relu_pe");
                }
            }
        }
        Ok(())
    }

    /// Width of the first layer's input after embedding.
    pub fn embedded_dim(&self) -> usize {
        match self.arch {
            Arch::Sine => self.input_dim,
            Arch::ReluPe => self.input_dim * 2 * self.n_harmonics,
        }
    }

    /// `(in, out)` of every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let h = self.hidden_features;
        let mut dims = vec![(self.embedded_dim(), h)];
        dims.extend(std::iter::repeat_n((h, h), self.hidden_layers));
        dims.push((h, self.output_dim));
        dims
    }

    pub fn layer_activations(&self) -> Vec<Activation> {
        let n = self.hidden_layers + 2;
        (0..n)
            .map(|i| match (self.arch, i) {
                (_, i) if i + 1 == n => Activation::Identity,
                (Arch::Sine, 0) => Activation::Sine { omega: self.omega0_first },
                (Arch::Sine, _) => Activation::Sine { omega: self.omega0_hidden },
                (Arch::ReluPe, _) => Activation::Relu,
            })
            .collect()
    }

    /// Maps raw coordinates to the first layer's input.
    pub fn embed(&self, coords: ArrayView2<f64>) -> Array2<f64> {
        match self.arch {
            Arch::Sine => coords.to_owned(),
            Arch::ReluPe => embed_harmonic(coords, self.n_harmonics, self.harmonic_schedule),
        }
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }
}

/// `(d+1)·h + L·(h+1)·h + (h+1)·c` with `d` the embedded input width.
pub fn param_count(config: &ModelConfig) -> usize {
    config.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
}

/// Initializes a network for `config`, deterministic in `seed`.
///
/// SIREN: first layer `U(-1/fan_in, 1/fan_in)`, later layers
/// `U(-√(6/fan_in)/ω_hidden, √(6/fan_in)/ω_hidden)`. ReLU: `U(-√(6/fan_in), √(6/fan_in))`.
/// Biases: `U(-1/√fan_in, 1/√fan_in)`.
pub fn build(config: &ModelConfig, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layer_dims()
        .into_iter()
        .enumerate()
        .map(|(i, (fan_in, fan_out))| {
            let fan = fan_in as f64;
            let bound = match (config.arch, i) {
                (Arch::Sine, 0) => 1.0 / fan,
                (Arch::Sine, _) => (6.0 / fan).sqrt() / config.omega0_hidden,
                (Arch::ReluPe, _) => (6.0 / fan).sqrt(),
            };
            let w = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let b = Uniform::new_inclusive(-1.0 / fan.sqrt(), 1.0 / fan.sqrt()).expect("finite bound");
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || w.sample(&mut rng));
            let bias = Array1::from_shape_simple_fn(fan_out, || b.sample(&mut rng));
            Layer { weight, bias }
        })
        .collect();
    ParamSet::new(layers).expect("layer dims chain by construction")
}

/// Harmonic features `sin(f_i x), cos(f_i x)` for every coordinate component.
///
/// Output columns are component-major, frequency-minor, sine before cosine.
pub fn embed_harmonic(coords: ArrayView2<f64>, n_harmonics: usize, schedule: HarmonicSchedule) -> Array2<f64> {
    let d = coords.ncols();
    let freqs: Vec<f64> = (1..=n_harmonics)
        .map(|i| match schedule {
            HarmonicSchedule::Linear => i as f64 * PI,
            HarmonicSchedule::Geometric => 2f64.powi(i as i32 - 1) * PI,
        })
        .collect();
    let mut out = Array2::zeros((coords.nrows(), 2 * d * n_harmonics));
    for (src, mut dst) in coords.rows().into_iter().zip(out.rows_mut()) {
        for (c, &x) in src.iter().enumerate() {
            for (i, f) in freqs.iter().enumerate() {
                let (s, co) = (f * x).sin_cos();
                let base = 2 * (c * n_harmonics + i);
                dst[base] = s;
                dst[base + 1] = co;
            }
        }
    }
    out
}

/// Hidden widths per head count (1..=12): `(sine, relu_pe)`, three hidden
/// layers, single output channel.
pub const CAPACITY_TABLE: [(usize, usize); 12] = [
    (512, 512),
    (360, 352),
    (296, 282),
    (256, 240),
    (228, 210),
    (208, 188),
    (192, 172),
    (180, 158),
    (170, 148),
    (162, 140),
    (154, 130),
    (146, 124),
];

/// Tabulated hidden width for `heads` heads.
pub fn capacity_for(arch: Arch, heads: usize) -> Result<usize> {
    if !(1..=CAPACITY_TABLE.len()).contains(&heads) {
        return Err(Error::Config(format!(
            "no tabulated capacity for {heads} heads (table covers 1..=12); set hidden_features explicitly"
        )));
    }
    let (sine, relu) = CAPACITY_TABLE[heads - 1];
    Ok(match arch {
        Arch::Sine => sine,
        Arch::ReluPe => relu,
    })
}

/// Hidden width for one of `heads` heads whose combined parameter count is
/// closest to that of `base` (ties go to the smaller width).
pub fn matched_hidden_dim(base: &ModelConfig, heads: usize) -> usize {
    let target = param_count(base) as i64;
    (1..=base.hidden_features)
        .min_by_key(|&h| {
            let total = heads as i64 * param_count(&base.clone().with_hidden(h)) as i64;
            ((total - target).abs(), h)
        })
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::predict;
    use ndarray::array;

    #[test]
    fn siren_parameter_counts_match_table() {
        let base = ModelConfig::sine(2, 1);
        assert_eq!(param_count(&base), 790017);
        assert_eq!(4 * param_count(&base.clone().with_hidden(256)), 793604);
    }

    #[test]
    fn tabulated_totals_reproduce() {
        let sine = [
            790017, 782642, 794763, 793604, 787745, 787494, 783559, 787688, 791019, 798670, 794497, 779652,
        ];
        let relu = [
            911873, 915906, 922989, 926404, 918755, 912558, 916251, 908824, 917757, 931010, 908061, 918108,
        ];
        for heads in 1..=12 {
            let s = ModelConfig::sine(2, 1).with_hidden(capacity_for(Arch::Sine, heads).unwrap());
            let r = ModelConfig::relu_pe(2, 1).with_hidden(capacity_for(Arch::ReluPe, heads).unwrap());
            assert_eq!(heads * param_count(&s), sine[heads - 1], "sine, {heads} heads");
            assert_eq!(heads * param_count(&r), relu[heads - 1], "relu, {heads} heads");
            let rel = |x: usize, base: usize| (x as f64 - base as f64).abs() / base as f64;
            assert!(rel(sine[heads - 1], sine[0]) <= 0.03);
            assert!(rel(relu[heads - 1], relu[0]) <= 0.03);
        }
        for w in CAPACITY_TABLE.windows(2) {
            assert!(w[1].0 <= w[0].0 && w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn capacity_lookup() {
        assert_eq!(capacity_for(Arch::Sine, 4).unwrap(), 256);
        assert_eq!(capacity_for(Arch::ReluPe, 9).unwrap(), 148);
        assert_eq!(capacity_for(Arch::Sine, 1).unwrap(), 512);
        assert!(matches!(capacity_for(Arch::Sine, 13), Err(Error::Config(_))));
        assert!(matches!(capacity_for(Arch::Sine, 0), Err(Error::Config(_))));
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = ModelConfig::sine(2, 3).with_hidden(16);
        assert_eq!(build(&cfg, 7), build(&cfg, 7));
        assert_ne!(build(&cfg, 7), build(&cfg, 8));
        let relu = ModelConfig::relu_pe(2, 3).with_hidden(16);
        assert_eq!(build(&relu, 7), build(&relu, 7));
        assert_eq!(build(&relu, 7).input_dim(), 240);
    }

    #[test]
    fn siren_init_ranges() {
        let cfg = ModelConfig::sine(2, 1).with_hidden(64);
        let net = build(&cfg, 1);
        let first = &net.layers()[0];
        assert!(first.weight.iter().all(|w| w.abs() <= 0.5));
        let hidden_bound = (6.0f64 / 64.0).sqrt() / 30.0;
        assert!(net.layers()[1].weight.iter().all(|w| w.abs() <= hidden_bound));
    }

    #[test]
    fn harmonic_values() {
        let zero = embed_harmonic(array![[0.0]].view(), 4, HarmonicSchedule::Linear);
        for i in 0..4 {
            assert_eq!(zero[[0, 2 * i]], 0.0);
            assert_eq!(zero[[0, 2 * i + 1]], 1.0);
        }
        let one = embed_harmonic(array![[1.0]].view(), 2, HarmonicSchedule::Linear);
        assert!(one[[0, 2]].abs() < 1e-15);
        assert!((one[[0, 3]] - 1.0).abs() < 1e-15);
        let half = embed_harmonic(array![[0.5]].view(), 3, HarmonicSchedule::Linear);
        let expect = [1.0, 0.0, 0.0, -1.0, -1.0, 0.0];
        for (got, want) in half.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn harmonic_layout_is_component_major() {
        let e = embed_harmonic(array![[0.5, 0.0]].view(), 2, HarmonicSchedule::Linear);
        assert_eq!(e.ncols(), 8);
        assert!((e[[0, 0]] - 1.0).abs() < 1e-15);
        assert_eq!(e[[0, 4]], 0.0);
        assert_eq!(e[[0, 5]], 1.0);
        let g = embed_harmonic(array![[0.25]].view(), 3, HarmonicSchedule::Geometric);
        assert!((g[[0, 2]] - 1.0).abs() < 1e-15); // sin(2π·0.25)
    }

    #[test]
    fn fresh_siren_output_is_bounded() {
        let cfg = ModelConfig::sine(2, 1).with_hidden(32);
        let net = build(&cfg, 3);
        let coords = Array2::from_shape_fn((121, 2), |(r, c)| {
            let idx = if c == 0 { r % 11 } else { r / 11 };
            -1.0 + 0.2 * idx as f64
        });
        let out = predict(&net, &cfg, coords.view()).unwrap();
        let last = net.layers().last().unwrap();
        let bound = last.weight.iter().map(|w| w.abs()).sum::<f64>() + last.bias[0].abs();
        assert!(out.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn matched_width_is_close_in_parameters() {
        let base = ModelConfig::sine(2, 3).with_hidden(64);
        let h = matched_hidden_dim(&base, 4);
        let total = 4 * param_count(&base.clone().with_hidden(h));
        let rel = (total as f64 - param_count(&base) as f64).abs() / param_count(&base) as f64;
        assert!(rel < 0.05, "h={h} rel={rel}");
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::sine(2, 1);
        c.hidden_layers = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::sine(2, 1);
        c.omega0_first = 0.0;
        assert!(c.validate().is_err());
    }
}
