//! Self-checks run by the `check` subcommand: gradient agreement on random
//! networks and randomized sweeps of the partition inequalities.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, Activation, ParamSet};
use crate::error::Result;
use crate::hypothesis::{
    random_instance, random_smaller_instance, smaller_networks_sufficient, verify_proposition, verify_smaller_networks,
    verify_smaller_networks_sufficient,
};
use crate::models::{build, Arch, ModelConfig};

/// Tolerance on the gradient check's max relative error.
pub const GRAD_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub arch: Arch,
    pub nets: usize,
    pub worst: f64,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.worst < GRAD_TOLERANCE
    }
}

/// Random architecture of the given family: 1–3 input dims, 8–32 features,
/// 1–3 hidden layers, 1 or 3 outputs; 6 random coordinates and targets.
pub fn random_grad_case(arch: Arch, rng: &mut ChaCha8Rng) -> (ModelConfig, Array2<f64>, Array2<f64>) {
    let input = rng.random_range(1..=3);
    let output = if rng.random_bool(0.5) { 1 } else { 3 };
    let mut model = match arch {
        Arch::Sine => ModelConfig::sine(input, output),
        Arch::ReluPe => ModelConfig::relu_pe(input, output),
    };
    model.hidden_features = rng.random_range(8..=32);
    model.hidden_layers = rng.random_range(1..=3);
    model.omega0_first = 30.0;
    model.n_harmonics = rng.random_range(2..=8);
    let coords = Array2::from_shape_fn((6, input), |_| rng.random_range(-1.0..1.0));
    let targets = Array2::from_shape_fn((6, output), |_| rng.random_range(-1.0..1.0));
    (model, coords, targets)
}

/// Smallest `|z|` over all ReLU pre-activations of `net` on `coords`.
pub fn relu_kink_margin(net: &ParamSet, model: &ModelConfig, coords: ArrayView2<f64>) -> f64 {
    let mut a = model.embed(coords);
    let mut margin = f64::INFINITY;
    for (layer, act) in net.layers().iter().zip(model.layer_activations()) {
        let mut z = a.dot(&layer.weight.t()) + &layer.bias;
        if matches!(act, Activation::Relu) {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        act.apply(&mut z);
        a = z;
    }
    margin
}

/// Pre-activation distance from a ReLU kink below which a random case is
/// redrawn; central differences straddling a kink do not estimate a derivative.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn grad_check_suite(arch: Arch, nets: usize, seed: u64) -> Result<GradCheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..nets {
        let (model, net, coords, targets) = loop {
            let (model, coords, targets) = random_grad_case(arch, &mut rng);
            let net = build(&model, rng.random());
            if relu_kink_margin(&net, &model, coords.view()) > KINK_MARGIN {
                break (model, net, coords, targets);
            }
        };
        worst = worst.max(grad_check(&net, &model, coords.view(), targets.view())?);
    }
    Ok(GradCheckSummary { arch, nets, worst })
}

/// Counts from a randomized inequality sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InequalitySummary {
    pub instances: usize,
    pub held: usize,
    pub failed: usize,
    pub inapplicable: usize,
}

impl InequalitySummary {
    pub fn all_hold(&self) -> bool {
        self.failed == 0 && self.inapplicable == 0 && self.held == self.instances
    }
}

fn tally(verdicts: impl Iterator<Item = Option<bool>>) -> InequalitySummary {
    let mut s = InequalitySummary {
        instances: 0,
        held: 0,
        failed: 0,
        inapplicable: 0,
    };
    for v in verdicts {
        s.instances += 1;
        match v {
            Some(true) => s.held += 1,
            Some(false) => s.failed += 1,
            None => s.inapplicable += 1,
        }
    }
    s
}

/// `Σ p^{N_i} < p^N` on random precondition-satisfying instances.
pub fn proposition_sweep(instances: usize, seed: u64) -> InequalitySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tally((0..instances).map(|_| {
        let (p, counts) = random_instance(&mut rng);
        verify_proposition(p, &counts).holds()
    }))
}

/// Smaller-network variant on random instances meeting `(p/p̂)·2^{k−1} > k`.
pub fn smaller_networks_sweep(instances: usize, seed: u64) -> InequalitySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tally((0..instances).map(|_| {
        let (p, part_p, counts) = random_smaller_instance(&mut rng);
        verify_smaller_networks(p, &part_p, &counts).holds()
    }))
}

/// Smaller-network variant on random instances meeting `(p/p̂)^{N̂}·2^{k−1} > k`.
pub fn smaller_networks_sufficient_sweep(instances: usize, seed: u64) -> InequalitySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tally((0..instances).map(|_| loop {
        let (p, counts) = random_instance(&mut rng);
        let spread = rng.random_range(1e-6..0.05);
        let part_p: Vec<f64> = counts.iter().map(|_| p * (1.0 + rng.random_range(1e-9..=spread))).collect();
        if smaller_networks_sufficient(p, &part_p, &counts) {
            break verify_smaller_networks_sufficient(p, &part_p, &counts).holds();
        }
    }))
}
