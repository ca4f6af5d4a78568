//! Convergence cost of fitting piecewise ±1 signals as a function of the
//! number of boundaries, and arithmetic checks of the partition inequality.

use std::fs::File;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, forward, mse, predict, AdamState, Reduction};
use crate::error::{Error, Result};
use crate::models::{build, ModelConfig};
use crate::trainer::csv_err;

/// Points per 1-D sample set.
pub const SAMPLES_1D: usize = 5000;
/// Side of the 2-D evaluation grid.
pub const GRID_2D: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "dim")]
pub enum SignalShape {
    /// `n` random boundaries on `[-1, 1]`.
    OneD { n: usize },
    /// `n1` vertical and `n2` horizontal boundary lines on `[-1, 1]²`,
    /// checkerboard labels.
    TwoD { n1: usize, n2: usize },
}

impl SignalShape {
    pub fn dim(&self) -> usize {
        match self {
            SignalShape::OneD { .. } => 1,
            SignalShape::TwoD { .. } => 2,
        }
    }

    /// Boundary count; in 2-D each line segment between crossings counts once.
    pub fn boundary_count(&self) -> usize {
        match *self {
            SignalShape::OneD { n } => n,
            SignalShape::TwoD { n1, n2 } => 2 * n1 * n2 + n1 + n2,
        }
    }

    /// 2-D shape whose per-axis counts are the factor pair of `m` closest to each other.
    pub fn two_d_from_product(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("factor target must be positive".into()));
        }
        let mut n1 = (m as f64).sqrt() as usize;
        while n1 * n1 > m {
            n1 -= 1;
        }
        while (n1 + 1) * (n1 + 1) <= m {
            n1 += 1;
        }
        while !m.is_multiple_of(n1) {
            n1 -= 1;
        }
        Ok(SignalShape::TwoD { n1, n2: m / n1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub shape: SignalShape,
    pub seed: u64,
}

/// Sampled boundaries, sorted and strictly inside `(-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundaries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Coordinates and ±1 labels, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub coords: Array2<f64>,
    pub labels: Array2<f64>,
}

/// `+1` left of the first boundary, flipping at each boundary `b ≤ t`.
pub fn label_1d(boundaries: &[f64], t: f64) -> f64 {
    let crossed = boundaries.partition_point(|&b| b <= t);
    if crossed % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn sample_boundaries(rng: &mut ChaCha8Rng, n: usize, spacing: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let b = rng.random_range(-1.0..1.0);
        let clear = b + 1.0 > spacing && 1.0 - b > spacing && out.iter().all(|o| (o - b).abs() > spacing);
        if clear {
            out.push(b);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn linspace(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
}

impl SignalSpec {
    /// Boundaries are kept farther apart (and from the domain ends) than the
    /// spacing of the uniform sample grid, so every flip is visible on it.
    pub fn boundaries(&self) -> Result<Boundaries> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (nx, ny, grid) = match self.shape {
            SignalShape::OneD { n } => (n, 0, SAMPLES_1D),
            SignalShape::TwoD { n1, n2 } => (n1, n2, GRID_2D),
        };
        let spacing = 2.0 / (grid - 1) as f64;
        if nx.max(ny) + 1 >= grid / 2 {
            return Err(Error::Config(format!("{} boundaries cannot be resolved on the sample grid", nx.max(ny))));
        }
        let x = sample_boundaries(&mut rng, nx, spacing);
        let y = sample_boundaries(&mut rng, ny, spacing);
        Ok(Boundaries { x, y })
    }

    /// Label at a coordinate row.
    pub fn label(b: &Boundaries, point: &[f64]) -> f64 {
        match point {
            [t] => label_1d(&b.x, *t),
            [x, y, ..] => label_1d(&b.x, *x) * label_1d(&b.y, *y),
            [] => 1.0,
        }
    }
}

/// Training and test sets. 1-D: random training points and a uniform test
/// grid, 5000 each. 2-D: the same 256×256 grid serves as both.
pub fn gen_signal(spec: &SignalSpec) -> Result<(SampleSet, SampleSet)> {
    let b = spec.boundaries()?;
    let labelled = |coords: Array2<f64>| {
        let labels = Array2::from_shape_fn((coords.nrows(), 1), |(r, _)| {
            SignalSpec::label(&b, coords.row(r).as_slice().expect("standard layout"))
        });
        SampleSet { coords, labels }
    };
    match spec.shape {
        SignalShape::OneD { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1);
            let train = Array2::from_shape_fn((SAMPLES_1D, 1), |_| rng.random_range(-1.0..=1.0));
            let test = Array2::from_shape_vec((SAMPLES_1D, 1), linspace(SAMPLES_1D).collect()).expect("shape");
            Ok((labelled(train), labelled(test)))
        }
        SignalShape::TwoD { .. } => {
            let axis: Vec<f64> = linspace(GRID_2D).collect();
            let grid = Array2::from_shape_fn((GRID_2D * GRID_2D, 2), |(r, c)| {
                if c == 0 {
                    axis[r % GRID_2D]
                } else {
                    axis[r / GRID_2D]
                }
            });
            let set = labelled(grid);
            Ok((set.clone(), set))
        }
    }
}

/// Number of sign changes along consecutive rows of `labels`.
pub fn sign_changes(labels: ArrayView2<f64>) -> usize {
    labels.column(0).windows(2).into_iter().filter(|w| w[0] != w[1]).count()
}

/// Outcome of one convergence run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// First epoch after which test MSE fell below the threshold, or the cap.
    pub steps: usize,
    pub censored: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub threshold: f64,
    pub cap: usize,
}

impl ConvergenceConfig {
    /// 32 features, 3 hidden layers, lr 1e-3, MSE < 0.05, 50 000 epoch cap.
    /// First-layer ω is 10 in 1-D and 30 in 2-D.
    pub fn standard(dim: usize) -> Self {
        let mut model = ModelConfig::sine(dim, 1).with_hidden(32);
        model.hidden_layers = 3;
        model.omega0_first = if dim == 1 { 10.0 } else { 30.0 };
        model.omega0_hidden = 30.0;
        ConvergenceConfig {
            model,
            lr: 1e-3,
            threshold: 0.05,
            cap: 50_000,
        }
    }
}

/// Full-batch Adam epochs on the training set until the test MSE drops below
/// `threshold`. The network is initialized from `model_seed`.
pub fn measure_convergence(spec: &SignalSpec, config: &ConvergenceConfig, model_seed: u64) -> Result<Convergence> {
    if !(config.threshold > 0.0) || config.cap == 0 {
        return Err(Error::Config("threshold must be positive and cap at least 1".into()));
    }
    if config.model.input_dim != spec.shape.dim() || config.model.output_dim != 1 {
        return Err(Error::Config("model must map signal coordinates to one value".into()));
    }
    config.model.validate()?;
    let (train, test) = gen_signal(spec)?;
    let mut net = build(&config.model, model_seed);
    let mut adam = AdamState::new(&net, config.lr);
    for epoch in 1..=config.cap {
        let (out, mut tape) = forward(&net, &config.model, train.coords.view())?;
        let (loss, grad) = mse(out.view(), train.labels.view(), Reduction::Mean);
        if !loss.is_finite() {
            return Ok(Convergence {
                steps: epoch,
                censored: true,
                diverged: true,
            });
        }
        let grads = tape.backward(grad.view())?;
        if adam_step(&mut net, &grads, &mut adam).is_err() {
            return Ok(Convergence {
                steps: epoch,
                censored: true,
                diverged: true,
            });
        }
        let test_out = predict(&net, &config.model, test.coords.view())?;
        let (test_loss, _) = mse(test_out.view(), test.labels.view(), Reduction::Mean);
        if test_loss < config.threshold {
            return Ok(Convergence {
                steps: epoch,
                censored: false,
                diverged: false,
            });
        }
    }
    Ok(Convergence {
        steps: config.cap,
        censored: true,
        diverged: false,
    })
}

/// Log-linear least squares fit `ln steps = a + N·ln p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub p: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Needs at least three points at distinct `N` with positive steps.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.iter().any(|&(_, s)| !(s > 0.0)) {
        return Err(Error::Input("step counts must be positive".into()));
    }
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::Precondition("need at least three distinct boundary counts".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1.ln() - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ExponentFit {
        p: slope.exp(),
        intercept,
        r_squared,
    })
}

/// Fractional ranks, ties share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `NaN` if either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dim: usize,
    /// 1-D: boundary counts. 2-D: products `M` split into close factor pairs.
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub convergence: ConvergenceConfig,
}

impl SweepConfig {
    /// N ∈ {1, 5, 10, 20, 30, 40}, three seeds.
    pub fn desk_1d() -> Self {
        SweepConfig {
            dim: 1,
            counts: vec![1, 5, 10, 20, 30, 40],
            seeds: vec![0, 1, 2],
            convergence: ConvergenceConfig::standard(1),
        }
    }

    /// N from 1 to 70, five seeds.
    pub fn full_1d() -> Self {
        SweepConfig {
            counts: (1..=70).collect(),
            seeds: (0..5).collect(),
            ..Self::desk_1d()
        }
    }

    pub fn desk_2d() -> Self {
        SweepConfig {
            dim: 2,
            counts: vec![1, 2, 4, 6, 9],
            seeds: vec![0, 1, 2],
            convergence: ConvergenceConfig::standard(2),
        }
    }

    /// `M` from 10 to 250, five seeds.
    pub fn full_2d() -> Self {
        SweepConfig {
            counts: (10..=250).step_by(20).collect(),
            seeds: (0..5).collect(),
            ..Self::desk_2d()
        }
    }

    fn shape(&self, count: usize) -> Result<SignalShape> {
        match self.dim {
            1 => Ok(SignalShape::OneD { n: count }),
            2 => SignalShape::two_d_from_product(count),
            d => Err(Error::Config(format!("signal dimension must be 1 or 2, got {d}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub steps: usize,
    pub censored: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub converged: usize,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub cells: Vec<SweepCell>,
    pub summary: Vec<CountSummary>,
    /// Fit of mean steps against N over fully uncensored counts.
    pub fit: Option<ExponentFit>,
    pub spearman: f64,
}

/// Runs every `(count, seed)` cell in parallel. The signal and the network
/// both derive from the cell's seed.
pub fn run_sweep(config: &SweepConfig) -> Result<HypothesisReport> {
    let jobs: Vec<(SignalShape, u64)> = config
        .counts
        .iter()
        .map(|&c| config.shape(c))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(shape, seed)| {
            let spec = SignalSpec { shape, seed };
            let c = measure_convergence(&spec, &config.convergence, seed)?;
            Ok(SweepCell {
                dim: config.dim,
                n: shape.boundary_count(),
                seed,
                steps: c.steps,
                censored: c.censored,
                diverged: c.diverged,
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarize(cells))
}

pub fn summarize(cells: Vec<SweepCell>) -> HypothesisReport {
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let summary: Vec<CountSummary> = ns
        .iter()
        .map(|&n| {
            let steps: Vec<f64> = cells
                .iter()
                .filter(|c| c.n == n && !c.censored)
                .map(|c| c.steps as f64)
                .collect();
            let censored = cells.iter().filter(|c| c.n == n && c.censored).count();
            let k = steps.len() as f64;
            let mean = steps.iter().sum::<f64>() / k;
            let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k;
            CountSummary {
                n,
                mean_steps: mean,
                std_steps: var.sqrt(),
                converged: steps.len(),
                censored,
            }
        })
        .collect();
    let usable: Vec<&CountSummary> = summary.iter().filter(|s| s.censored == 0 && s.converged > 0).collect();
    let points: Vec<(f64, f64)> = usable.iter().map(|s| (s.n as f64, s.mean_steps)).collect();
    let fit = fit_exponent(&points).ok();
    let spearman = spearman(
        &points.iter().map(|p| p.0).collect::<Vec<_>>(),
        &points.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    HypothesisReport {
        cells,
        summary,
        fit,
        spearman,
    }
}

impl HypothesisReport {
    /// Columns `dim, N, seed, steps, censored`.
    pub fn write_cells_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["dim", "N", "seed", "steps", "censored"]).map_err(csv_err)?;
        for c in &self.cells {
            w.write_record([
                c.dim.to_string(),
                c.n.to_string(),
                c.seed.to_string(),
                c.steps.to_string(),
                c.censored.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        for s in &self.summary {
            w.serialize(s).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        match self.fit {
            Some(f) => format!("p = {:.5}  R² = {:.4}  spearman = {:.4}", f.p, f.r_squared, self.spearman),
            None => format!("no exponent fit (too few uncensored counts)  spearman = {:.4}", self.spearman),
        }
    }
}

/// Result of an inequality check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// `lhs < rhs` was evaluated; values are natural logs of both sides.
    Evaluated { log_lhs: f64, log_rhs: f64, holds: bool },
    Inapplicable(String),
}

impl Verdict {
    pub fn holds(&self) -> Option<bool> {
        match self {
            Verdict::Evaluated { holds, .. } => Some(*holds),
            Verdict::Inapplicable(_) => None,
        }
    }

    pub fn lhs(&self) -> Option<f64> {
        match self {
            Verdict::Evaluated { log_lhs, .. } => Some(log_lhs.exp()),
            Verdict::Inapplicable(_) => None,
        }
    }

    pub fn rhs(&self) -> Option<f64> {
        match self {
            Verdict::Evaluated { log_rhs, .. } => Some(log_rhs.exp()),
            Verdict::Inapplicable(_) => None,
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn common_preconditions(p: f64, counts: &[usize]) -> Option<String> {
    if !(p > 1.0) || !p.is_finite() {
        return Some(format!("p = {p} must exceed 1"));
    }
    if counts.len() < 3 {
        return Some(format!("k = {} but at least 3 parts are required", counts.len()));
    }
    if let Some(n) = counts.iter().find(|&&n| (n as f64) * p.ln() < 2f64.ln()) {
        return Some(format!("p^{n} < 2"));
    }
    None
}

/// `Σ p^{N_i} < p^{ΣN_i}` for `k ≥ 3` parts with every `p^{N_i} ≥ 2`.
/// Compared in log space so large exponents do not overflow.
pub fn verify_proposition(p: f64, counts: &[usize]) -> Verdict {
    if let Some(reason) = common_preconditions(p, counts) {
        return Verdict::Inapplicable(reason);
    }
    let lp = p.ln();
    let terms: Vec<f64> = counts.iter().map(|&n| n as f64 * lp).collect();
    let log_lhs = log_sum_exp(&terms);
    let log_rhs = counts.iter().sum::<usize>() as f64 * lp;
    Verdict::Evaluated {
        log_lhs,
        log_rhs,
        holds: log_lhs < log_rhs,
    }
}

/// Condition under which smaller per-part networks (per-boundary cost
/// `p_i > p`) are claimed to keep the partitioned sum below `p^N`:
/// `(p / p̂)·2^{k−1} > k` with `p̂ = max p_i`.
pub fn smaller_networks_condition(p: f64, part_p: &[f64]) -> bool {
    let p_hat = part_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = part_p.len() as i32;
    p / p_hat * 2f64.powi(k - 1) > k as f64
}

/// Exponent-aware sufficient condition `(p / p̂)^{N̂}·2^{k−1} > k`, with
/// `N̂ = max N_i`.
pub fn smaller_networks_sufficient(p: f64, part_p: &[f64], counts: &[usize]) -> bool {
    let p_hat = part_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_hat = counts.iter().copied().max().unwrap_or(0) as f64;
    let k = part_p.len() as f64;
    n_hat * (p / p_hat).ln() + (k - 1.0) * 2f64.ln() > k.ln()
}

fn check_smaller(p: f64, part_p: &[f64], counts: &[usize], condition: bool, name: &str) -> Verdict {
    if let Some(reason) = common_preconditions(p, counts) {
        return Verdict::Inapplicable(reason);
    }
    if part_p.len() != counts.len() {
        return Verdict::Inapplicable("one per-part rate is needed per part".into());
    }
    if part_p.iter().any(|&q| !(q > p) || !q.is_finite()) {
        return Verdict::Inapplicable("every per-part rate must exceed p".into());
    }
    if !condition {
        return Verdict::Inapplicable(format!("{name} not met"));
    }
    let terms: Vec<f64> = part_p.iter().zip(counts).map(|(q, &n)| n as f64 * q.ln()).collect();
    let log_lhs = log_sum_exp(&terms);
    let log_rhs = counts.iter().sum::<usize>() as f64 * p.ln();
    Verdict::Evaluated {
        log_lhs,
        log_rhs,
        holds: log_lhs < log_rhs,
    }
}

/// `Σ p_i^{N_i} < p^N` checked whenever [`smaller_networks_condition`] holds.
pub fn verify_smaller_networks(p: f64, part_p: &[f64], counts: &[usize]) -> Verdict {
    let cond = part_p.len() == counts.len() && smaller_networks_condition(p, part_p);
    check_smaller(p, part_p, counts, cond, "(p/p̂)·2^(k−1) > k")
}

/// `Σ p_i^{N_i} < p^N` checked whenever [`smaller_networks_sufficient`] holds.
pub fn verify_smaller_networks_sufficient(p: f64, part_p: &[f64], counts: &[usize]) -> Verdict {
    let cond = part_p.len() == counts.len() && smaller_networks_sufficient(p, part_p, counts);
    check_smaller(p, part_p, counts, cond, "(p/p̂)^N̂·2^(k−1) > k")
}

/// Random instance satisfying the partition inequality's preconditions.
pub fn random_instance(rng: &mut impl Rng) -> (f64, Vec<usize>) {
    let p: f64 = 1.0 + rng.random_range(0.001..1.0);
    let k = rng.random_range(3..=10);
    let min_n = (2f64.ln() / p.ln()).ceil() as usize;
    let counts = (0..k).map(|_| min_n + rng.random_range(0..=40)).collect();
    (p, counts)
}

/// Random instance with per-part rates in `(p, 1.5p]` satisfying
/// [`smaller_networks_condition`].
pub fn random_smaller_instance(rng: &mut impl Rng) -> (f64, Vec<f64>, Vec<usize>) {
    loop {
        let (p, counts) = random_instance(rng);
        let part_p: Vec<f64> = counts.iter().map(|_| p * (1.0 + rng.random_range(1e-6..=0.5))).collect();
        if smaller_networks_condition(p, &part_p) {
            return (p, part_p, counts);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_d_count_formula() {
        assert_eq!(SignalShape::TwoD { n1: 1, n2: 1 }.boundary_count(), 4);
        assert_eq!(SignalShape::TwoD { n1: 2, n2: 3 }.boundary_count(), 17);
    }

    #[test]
    fn close_factor_pairs() {
        assert_eq!(SignalShape::two_d_from_product(12).unwrap(), SignalShape::TwoD { n1: 3, n2: 4 });
        assert_eq!(SignalShape::two_d_from_product(16).unwrap(), SignalShape::TwoD { n1: 4, n2: 4 });
        assert_eq!(SignalShape::two_d_from_product(13).unwrap(), SignalShape::TwoD { n1: 1, n2: 13 });
        assert_eq!(SignalShape::two_d_from_product(250).unwrap(), SignalShape::TwoD { n1: 10, n2: 25 });
    }

    #[test]
    fn single_boundary_at_zero() {
        let b = [0.0];
        let test: Vec<f64> = linspace(5000).collect();
        let labels: Vec<f64> = test.iter().map(|&t| label_1d(&b, t)).collect();
        let flips = labels.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
        assert_eq!(labels[0], 1.0);
        assert_eq!(labels[4999], -1.0);
    }

    #[test]
    fn test_grid_resolves_every_boundary() {
        for (n, seed) in [(1, 0), (17, 3), (70, 9)] {
            let spec = SignalSpec {
                shape: SignalShape::OneD { n },
                seed,
            };
            let (train, test) = gen_signal(&spec).unwrap();
            assert_eq!(train.coords.nrows(), 5000);
            assert_eq!(sign_changes(test.labels.view()), n);
            assert!(train.labels.iter().all(|v| v.abs() == 1.0));
        }
    }

    #[test]
    fn two_d_rows_and_cols_flip() {
        let spec = SignalSpec {
            shape: SignalShape::TwoD { n1: 2, n2: 3 },
            seed: 4,
        };
        let (train, test) = gen_signal(&spec).unwrap();
        assert_eq!(train, test);
        assert_eq!(train.coords.nrows(), 256 * 256);
        let row0 = train.labels.slice(ndarray::s![0..256, ..]);
        assert_eq!(sign_changes(row0), 2);
        let col0 = train.labels.slice(ndarray::s![..;256, ..]);
        assert_eq!(sign_changes(col0), 3);
    }

    #[test]
    fn exact_exponentials_recovered() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|n| (n as f64, 2f64.powi(n))).collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.p - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (1..=4).map(|n| (n as f64, 7.0)).collect();
        assert!((fit_exponent(&flat).unwrap().p - 1.0).abs() < 1e-15);
        assert!(fit_exponent(&pts[..2]).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn reference_split() {
        let v = verify_proposition(1.0656, &[20, 20, 20]);
        let lhs = 3.0 * 1.0656f64.powi(20);
        let rhs = 1.0656f64.powi(60);
        assert!((v.lhs().unwrap() - lhs).abs() < 1e-9 * lhs);
        assert!((v.rhs().unwrap() - rhs).abs() < 1e-9 * rhs);
        assert!((lhs - 10.69).abs() < 0.005);
        assert!((rhs - 45.3).abs() < 0.1);
        assert_eq!(v.holds(), Some(true));
    }

    #[test]
    fn preconditions_make_inapplicable() {
        assert!(matches!(verify_proposition(1.5, &[5, 5]), Verdict::Inapplicable(_)));
        assert!(matches!(verify_proposition(1.0, &[5, 5, 5]), Verdict::Inapplicable(_)));
        assert!(matches!(verify_proposition(1.1, &[1, 20, 20]), Verdict::Inapplicable(_)));
    }

    #[test]
    fn stated_smaller_network_condition_admits_counterexample() {
        let (p, part_p, counts) = (1.1, [1.1, 1.1, 1.1, 1.1, 1.2], [8, 8, 8, 8, 100]);
        let part_p: Vec<f64> = part_p.iter().map(|q: &f64| q + 1e-9).collect();
        assert!(smaller_networks_condition(p, &part_p));
        assert_eq!(verify_smaller_networks(p, &part_p, &counts).holds(), Some(false));
        assert!(matches!(
            verify_smaller_networks_sufficient(p, &part_p, &counts),
            Verdict::Inapplicable(_)
        ));
    }

    #[test]
    fn constant_signal_converges_quickly() {
        let spec = SignalSpec {
            shape: SignalShape::OneD { n: 0 },
            seed: 0,
        };
        let c = measure_convergence(&spec, &ConvergenceConfig::standard(1), 0).unwrap();
        assert!(!c.censored && c.steps <= 50, "{c:?}");
    }

    #[test]
    fn cap_of_one_censors_hard_signal() {
        let spec = SignalSpec {
            shape: SignalShape::OneD { n: 30 },
            seed: 0,
        };
        let cfg = ConvergenceConfig {
            cap: 1,
            ..ConvergenceConfig::standard(1)
        };
        let c = measure_convergence(&spec, &cfg, 0).unwrap();
        assert_eq!(c, Convergence { steps: 1, censored: true, diverged: false });
    }
}
