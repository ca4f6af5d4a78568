//! Fitting a single network or a partitioned ensemble of heads to an image.
//!
//! Targets are the pixel values mapped to `[-1, 1]`. Each head sees only the
//! pixels its mask label selects and trains independently of the others; the
//! composed prediction routes every pixel through exactly one head.

pub mod metrics;

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, forward, mse, predict, AdamState, ParamSet, Reduction};
use crate::error::{Error, Result};
use crate::image::ImageField;
use crate::models::{build, ModelConfig};
use crate::partition::PartitionMask;

pub use metrics::{cap_psnr, psnr, psnr_from_mse, ssim};

/// Pixels used per optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    #[default]
    Full,
    /// Uniformly sampled pixels per step (without replacement), per head.
    Random { pixels: usize },
}

/// Stop a head once its PSNR has not improved by `min_delta_db` for `patience` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Architecture of the single model, or of every head.
    pub model: ModelConfig,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub sampler: Sampler,
    pub reduction: Reduction,
    /// Renormalize each head's coordinates to `[-1, 1]` over its bounding box
    /// instead of using global image coordinates.
    pub local_coords: bool,
    pub early_stop: Option<EarlyStop>,
}

impl FitConfig {
    pub fn new(model: ModelConfig, steps: usize, lr: f64, seed: u64) -> Self {
        FitConfig {
            model,
            steps,
            lr,
            seed,
            sampler: Sampler::Full,
            reduction: Reduction::Mean,
            local_coords: false,
            early_stop: None,
        }
    }
}

/// Training trace and final quality of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean squared error on `[-1, 1]` targets before each step.
    pub loss: Vec<f64>,
    /// PSNR in dB on `[0, 1]` values before each step (derived from `loss`).
    pub psnr: Vec<f64>,
    pub steps_run: usize,
    pub wall_seconds: f64,
    pub final_psnr: f64,
    /// `None` when the image is smaller than the SSIM window.
    pub final_ssim: Option<f64>,
    pub head_steps: Vec<usize>,
    /// Total rows pushed through a forward pass during training.
    pub pixel_evaluations: u64,
}

impl FitReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["step", "loss", "psnr"]).map_err(csv_err)?;
        for (step, (loss, db)) in self.loss.iter().zip(&self.psnr).enumerate() {
            w.write_record([step.to_string(), loss.to_string(), cap_psnr(*db).to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Seed of head `index`; head 0 uses the run seed itself.
pub fn head_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn sampling_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Result of training one network on one set of rows.
#[derive(Debug, Clone)]
pub struct HeadRun {
    pub params: ParamSet,
    /// Estimated sum of squared errors over all of the head's rows, per step.
    pub sse: Vec<f64>,
    pub steps_run: usize,
    pub evaluations: u64,
}

/// Adam on the squared error between `net(coords)` and `targets`.
pub fn train_network(
    mut params: ParamSet,
    model: &ModelConfig,
    coords: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    config: &FitConfig,
    seed: u64,
) -> Result<HeadRun> {
    let rows = coords.nrows();
    let channels = targets.ncols() as f64;
    let mut adam = AdamState::new(&params, config.lr);
    let mut rng = sampling_rng(seed);
    let mut sse = Vec::with_capacity(config.steps);
    let mut evaluations = 0u64;
    let mut best_db = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    for step in 0..config.steps {
        let batch = match config.sampler {
            Sampler::Random { pixels } if pixels < rows => {
                let idx = index::sample(&mut rng, rows, pixels).into_vec();
                Some((coords.select(Axis(0), &idx), targets.select(Axis(0), &idx)))
            }
            _ => None,
        };
        let (bx, by) = match &batch {
            Some((x, y)) => (x.view(), y.view()),
            None => (coords, targets),
        };
        let (out, mut tape) = forward(&params, model, bx)?;
        let (_, mut grad) = mse(out.view(), by, Reduction::Sum);
        let batch_sse: f64 = out.iter().zip(by.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if !batch_sse.is_finite() {
            return Err(Error::Diverged {
                step,
                reason: "loss is not finite".into(),
            });
        }
        if config.reduction == Reduction::Mean {
            grad /= (bx.nrows() as f64) * channels;
        }
        let est = batch_sse * rows as f64 / bx.nrows() as f64;
        sse.push(est);
        evaluations += bx.nrows() as u64;
        let grads = tape.backward(grad.view())?;
        adam_step(&mut params, &grads, &mut adam).map_err(|e| match e {
            Error::Diverged { reason, .. } => Error::Diverged { step, reason },
            other => other,
        })?;
        if let Some(stop) = config.early_stop {
            let db = psnr_from_mse(est / (rows as f64 * channels) / 4.0);
            if db > best_db + stop.min_delta_db {
                best_db = db;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= stop.patience {
                    break;
                }
            }
        }
    }
    let steps_run = sse.len();
    Ok(HeadRun {
        params,
        sse,
        steps_run,
        evaluations,
    })
}

fn check_steps(config: &FitConfig) -> Result<()> {
    if config.steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    if !(config.lr > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    config.model.validate()
}

fn check_model(image: &ImageField, model: &ModelConfig) -> Result<()> {
    if model.input_dim != 2 || model.output_dim != image.channels() {
        return Err(Error::Config(format!(
            "model maps {}-d coords to {} channels but the image has {} channels",
            model.input_dim,
            model.output_dim,
            image.channels()
        )));
    }
    Ok(())
}

/// Fits one network to the whole image.
pub fn fit_single(image: &ImageField, config: &FitConfig) -> Result<(ParamSet, FitReport)> {
    check_steps(config)?;
    check_model(image, &config.model)?;
    let start = Instant::now();
    let coords = image.coords();
    let targets = image.targets();
    let init = build(&config.model, config.seed);
    let run = train_network(init, &config.model, coords.view(), targets.view(), config, config.seed)?;
    let pred = predict(&run.params, &config.model, coords.view())?;
    let pred = ImageField::from_signed(image.height(), image.width(), &pred)?;
    let report = assemble_report(image, &pred, &[run.sse.as_slice()], &[run.steps_run], run.evaluations, start)?;
    Ok((run.params, report))
}

/// Coordinates for the rows of one head.
pub fn region_coords(image: &ImageField, pixels: &[usize], local: bool) -> Array2<f64> {
    let w = image.width();
    if !local {
        let all = image.coords();
        return all.select(Axis(0), pixels);
    }
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    for &p in pixels {
        let (y, x) = (p / w, p % w);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let norm = |v: usize, lo: usize, hi: usize| {
        if hi == lo {
            0.0
        } else {
            -1.0 + 2.0 * (v - lo) as f64 / (hi - lo) as f64
        }
    };
    Array2::from_shape_fn((pixels.len(), 2), |(r, c)| {
        let p = pixels[r];
        if c == 0 {
            norm(p % w, x0, x1)
        } else {
            norm(p / w, y0, y1)
        }
    })
}

/// A trained partitioned representation.
#[derive(Debug, Clone)]
pub struct PartitionedInr {
    pub model: ModelConfig,
    pub heads: Vec<ParamSet>,
    pub mask: PartitionMask,
    pub local_coords: bool,
}

impl PartitionedInr {
    /// Evaluates each pixel with the head its mask label selects.
    pub fn render(&self, image_like: &ImageField) -> Result<ImageField> {
        let values = compose_prediction(image_like, &self.mask, &self.heads, &self.model, self.local_coords)?;
        ImageField::from_signed(image_like.height(), image_like.width(), &values)
    }
}

/// Composed `[-1, 1]` prediction for every pixel in raster order.
pub fn compose_prediction(
    image: &ImageField,
    mask: &PartitionMask,
    heads: &[ParamSet],
    model: &ModelConfig,
    local: bool,
) -> Result<Array2<f64>> {
    if heads.len() != mask.k() {
        return Err(Error::Config(format!("{} heads for a {}-head mask", heads.len(), mask.k())));
    }
    let mut out = Array2::zeros((image.num_pixels(), model.output_dim));
    for (pixels, head) in mask.regions().iter().zip(heads) {
        let coords = region_coords(image, pixels, local);
        let values = predict(head, model, coords.view())?;
        for (row, &p) in values.rows().into_iter().zip(pixels) {
            out.row_mut(p).assign(&row);
        }
    }
    Ok(out)
}

/// Fits one head per mask region, each on its own pixels only. Heads run in
/// parallel; head `n` is initialized from `head_seed(seed, n)`.
pub fn fit_partitioned(
    image: &ImageField,
    mask: &PartitionMask,
    config: &FitConfig,
) -> Result<(PartitionedInr, FitReport)> {
    check_steps(config)?;
    check_model(image, &config.model)?;
    if !mask.matches(image) {
        return Err(Error::Config(format!(
            "mask is {}×{} but the image is {}×{}",
            mask.height(),
            mask.width(),
            image.height(),
            image.width()
        )));
    }
    let start = Instant::now();
    let targets = image.targets();
    let regions = mask.regions();
    if let Some(empty) = regions.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("head {empty} has an empty region")));
    }
    let runs: Vec<HeadRun> = regions
        .par_iter()
        .enumerate()
        .map(|(n, pixels)| {
            let seed = head_seed(config.seed, n);
            let coords = region_coords(image, pixels, config.local_coords);
            let head_targets = targets.select(Axis(0), pixels);
            let init = build(&config.model, seed);
            train_network(init, &config.model, coords.view(), head_targets.view(), config, seed)
        })
        .collect::<Result<_>>()?;
    let heads: Vec<ParamSet> = runs.iter().map(|r| r.params.clone()).collect();
    let inr = PartitionedInr {
        model: config.model.clone(),
        heads,
        mask: mask.clone(),
        local_coords: config.local_coords,
    };
    let pred = inr.render(image)?;
    let series: Vec<&[f64]> = runs.iter().map(|r| r.sse.as_slice()).collect();
    let steps: Vec<usize> = runs.iter().map(|r| r.steps_run).collect();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let report = assemble_report(image, &pred, &series, &steps, evaluations, start)?;
    Ok((inr, report))
}

pub(crate) fn assemble_report(
    image: &ImageField,
    pred: &ImageField,
    head_sse: &[&[f64]],
    head_steps: &[usize],
    pixel_evaluations: u64,
    start: Instant,
) -> Result<FitReport> {
    let steps_run = head_steps.iter().copied().max().unwrap_or(0);
    let denom = (image.num_pixels() * image.channels()) as f64;
    let loss: Vec<f64> = (0..steps_run)
        .map(|t| {
            head_sse
                .iter()
                .map(|s| s.get(t).or(s.last()).copied().unwrap_or(0.0))
                .sum::<f64>()
                / denom
        })
        .collect();
    let psnr_series = loss.iter().map(|l| psnr_from_mse(l / 4.0)).collect();
    let final_ssim = if image.height() >= metrics::SSIM_WINDOW && image.width() >= metrics::SSIM_WINDOW {
        Some(ssim(pred, image)?)
    } else {
        None
    };
    Ok(FitReport {
        loss,
        psnr: psnr_series,
        steps_run,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_psnr: psnr(pred, image)?,
        final_ssim,
        head_steps: head_steps.to_vec(),
        pixel_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{pog, GridSpec};

    fn small_sine(channels: usize) -> ModelConfig {
        ModelConfig {
            hidden_features: 16,
            hidden_layers: 2,
            omega0_first: 30.0,
            ..ModelConfig::sine(2, channels)
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let img = ImageField::constant(4, 4, 1, 0.5).unwrap();
        let cfg = FitConfig::new(small_sine(1), 0, 1e-3, 0);
        assert!(matches!(fit_single(&img, &cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let img = ImageField::constant(4, 4, 3, 0.5).unwrap();
        let cfg = FitConfig::new(small_sine(1), 1, 1e-3, 0);
        assert!(matches!(fit_single(&img, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn seed_repeat_is_identical() {
        let img = ImageField::from_fn(8, 8, 1, |y, x, _| ((x * y) % 7) as f64 / 7.0).unwrap();
        let cfg = FitConfig::new(small_sine(1), 20, 1e-3, 5);
        let (a, ra) = fit_single(&img, &cfg).unwrap();
        let (b, rb) = fit_single(&img, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.loss, rb.loss);
        assert_eq!(ra.loss.len(), 20);
        assert_eq!(ra.psnr.len(), 20);
    }

    #[test]
    fn trivial_mask_matches_single_fit() {
        let img = ImageField::from_fn(8, 6, 3, |y, x, c| ((x + 2 * y + c) % 5) as f64 / 5.0).unwrap();
        let cfg = FitConfig::new(small_sine(3), 15, 1e-3, 9);
        let (single, rs) = fit_single(&img, &cfg).unwrap();
        let (inr, rp) = fit_partitioned(&img, &PartitionMask::trivial(8, 6), &cfg).unwrap();
        assert_eq!(inr.heads[0], single);
        assert_eq!(rs.loss, rp.loss);
        assert_eq!(rs.final_psnr, rp.final_psnr);
    }

    #[test]
    fn composition_routes_each_pixel_through_its_head() {
        let img = ImageField::from_fn(6, 6, 1, |y, x, _| ((x + y) % 3) as f64 / 3.0).unwrap();
        let mask = pog(6, 6, GridSpec { rx: 3, ry: 3 }).unwrap();
        let model = small_sine(1);
        let heads: Vec<ParamSet> = (0..4).map(|i| build(&model, i)).collect();
        let composed = compose_prediction(&img, &mask, &heads, &model, false).unwrap();
        let coords = img.coords();
        for (n, head) in heads.iter().enumerate() {
            let full = predict(head, &model, coords.view()).unwrap();
            for p in 0..img.num_pixels() {
                if mask.labels()[p] as usize == n {
                    assert_eq!(composed[[p, 0]], full[[p, 0]]);
                }
            }
        }
    }

    #[test]
    fn partitioned_work_matches_single() {
        let img = ImageField::from_fn(8, 8, 1, |y, x, _| ((x ^ y) % 4) as f64 / 4.0).unwrap();
        let mask = pog(8, 8, GridSpec { rx: 4, ry: 4 }).unwrap();
        let cfg = FitConfig::new(small_sine(1), 5, 1e-3, 1);
        let (_, rs) = fit_single(&img, &cfg).unwrap();
        let (_, rp) = fit_partitioned(&img, &mask, &cfg).unwrap();
        assert_eq!(rs.pixel_evaluations, 64 * 5);
        assert!(rp.pixel_evaluations <= rs.pixel_evaluations);
        assert_eq!(rp.head_steps, vec![5; 4]);
    }

    #[test]
    fn sampled_batches_count_evaluations() {
        let img = ImageField::from_fn(8, 8, 1, |y, x, _| ((x + y) % 4) as f64 / 4.0).unwrap();
        let mut cfg = FitConfig::new(small_sine(1), 4, 1e-3, 1);
        cfg.sampler = Sampler::Random { pixels: 10 };
        let (_, r) = fit_single(&img, &cfg).unwrap();
        assert_eq!(r.pixel_evaluations, 40);
        let (_, r2) = fit_single(&img, &cfg).unwrap();
        assert_eq!(r.loss, r2.loss);
    }

    #[test]
    fn early_stop_halts_heads() {
        let img = ImageField::constant(6, 6, 1, 0.5).unwrap();
        let mut cfg = FitConfig::new(small_sine(1), 400, 1e-3, 1);
        cfg.early_stop = Some(EarlyStop {
            patience: 5,
            min_delta_db: 100.0,
        });
        let (_, r) = fit_single(&img, &cfg).unwrap();
        assert!(r.steps_run < 400);
        assert_eq!(r.loss.len(), r.steps_run);
    }

    #[test]
    fn local_coords_span_bounding_box() {
        let img = ImageField::constant(4, 4, 1, 0.5).unwrap();
        let pixels = vec![5, 6, 9, 10];
        let c = region_coords(&img, &pixels, true);
        assert_eq!(c.row(0).to_vec(), vec![-1.0, -1.0]);
        assert_eq!(c.row(3).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn constant_gray_is_fit() {
        let img = ImageField::constant(16, 16, 1, 0.5).unwrap();
        let cfg = FitConfig::new(ModelConfig::sine(2, 1).with_hidden(32), 200, 1e-3, 0);
        let (_, r) = fit_single(&img, &cfg).unwrap();
        assert!(r.final_psnr > 40.0, "{}", r.final_psnr);
    }

    #[test]
    fn two_halves_each_head_fits_a_constant() {
        let img = ImageField::from_fn(16, 16, 1, |_, x, _| if x < 8 { 0.2 } else { 0.9 }).unwrap();
        let mask = pog(16, 16, GridSpec::for_cells(16, 16, 2, 1)).unwrap();
        let cfg = FitConfig::new(ModelConfig::sine(2, 1).with_hidden(32), 200, 1e-3, 0);
        let (_, r) = fit_partitioned(&img, &mask, &cfg).unwrap();
        assert!(r.final_psnr > 40.0, "{}", r.final_psnr);
    }
}
