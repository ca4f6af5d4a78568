//! Learning a shared initialization that adapts to new images in a few
//! gradient steps, with or without a partition mask.
//!
//! The inner loop copies θ₀ into every head and takes `m` plain gradient
//! steps per head on that head's pixels. The outer update is first-order:
//! the meta-gradient of a task is the sum over heads of the loss gradient at
//! the adapted weights, and θ₀ moves by Adam on the mean over tasks.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Axis;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::weights::{load_weights, save_weights};
use crate::autodiff::{adam_step, forward, mse, AdamState, ParamSet, Reduction};
use crate::error::{Error, Result};
use crate::image::ImageField;
use crate::models::{build, ModelConfig};
use crate::partition::{PartitionMask, PartitionRule};
use crate::trainer::{assemble_report, compose_prediction, FitReport, PartitionedInr};

/// One image with the mask its heads adapt on.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub image: ImageField,
    pub mask: PartitionMask,
}

impl Task {
    pub fn new(image: ImageField, mask: PartitionMask) -> Result<Self> {
        if !mask.matches(&image) {
            return Err(Error::Config("task mask does not match its image".into()));
        }
        Ok(Task { image, mask })
    }
}

/// Images paired with masks precomputed by one rule.
pub fn build_corpus(images: &[ImageField], rule: &PartitionRule) -> Result<Vec<Task>> {
    images
        .par_iter()
        .map(|img| Task::new(img.clone(), rule.apply(img)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub model: ModelConfig,
    /// Inner learning rate of each of the `m` inner steps.
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub batch_size: usize,
    pub outer_steps: usize,
    pub seed: u64,
    /// Save θ₀ every this many outer steps when a checkpoint directory is given.
    pub checkpoint_every: Option<usize>,
}

impl MetaConfig {
    pub fn inner_steps(&self) -> usize {
        self.alpha.len()
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.alpha.is_empty() {
            return Err(Error::Config("at least one inner step is required".into()));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config("inner learning rates must be finite and non-negative".into()));
        }
        if !(self.beta > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("outer rate and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Shared initialization and the optimizer state that moves it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaState {
    pub theta0: ParamSet,
    pub model: ModelConfig,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub outer_step: u64,
    pub adam: AdamState,
    /// Rule of the masks θ₀ was trained with.
    pub train_rule: String,
}

impl MetaState {
    pub fn new(config: &MetaConfig, train_rule: &str) -> Result<Self> {
        config.validate()?;
        let theta0 = build(&config.model, config.seed);
        let adam = AdamState::new(&theta0, config.beta);
        Ok(MetaState {
            theta0,
            model: config.model.clone(),
            alpha: config.alpha.clone(),
            beta: config.beta,
            outer_step: 0,
            adam,
            train_rule: train_rule.to_string(),
        })
    }
}

/// Adapted weights of every head and their losses after the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapted {
    pub heads: Vec<ParamSet>,
    pub losses: Vec<f64>,
    /// Gradient of each head's loss at its adapted weights.
    pub final_grads: Vec<ParamSet>,
}

fn region_loss_grad(
    net: &ParamSet,
    model: &ModelConfig,
    coords: ndarray::ArrayView2<f64>,
    targets: ndarray::ArrayView2<f64>,
    step: usize,
) -> Result<(f64, ParamSet)> {
    let (out, mut tape) = forward(net, model, coords)?;
    let (loss, grad) = mse(out.view(), targets, Reduction::Mean);
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step,
            reason: "inner loss is not finite".into(),
        });
    }
    Ok((loss, tape.backward(grad.view())?))
}

fn adapt_region(
    theta0: &ParamSet,
    model: &ModelConfig,
    coords: ndarray::ArrayView2<f64>,
    targets: ndarray::ArrayView2<f64>,
    alpha: &[f64],
) -> Result<(ParamSet, f64, ParamSet)> {
    let mut theta = theta0.clone();
    for (step, &a) in alpha.iter().enumerate() {
        let (_, g) = region_loss_grad(&theta, model, coords, targets, step)?;
        if a != 0.0 {
            theta.add_scaled(&g, -a);
        }
    }
    let (loss, g) = region_loss_grad(&theta, model, coords, targets, alpha.len())?;
    Ok((theta, loss, g))
}

/// `m = alpha.len()` gradient steps from θ₀ for each head on its own pixels.
pub fn inner_adapt(theta0: &ParamSet, model: &ModelConfig, task: &Task, alpha: &[f64]) -> Result<Adapted> {
    let coords = task.image.coords();
    let targets = task.image.targets();
    let mut out = Adapted {
        heads: Vec::with_capacity(task.mask.k()),
        losses: Vec::with_capacity(task.mask.k()),
        final_grads: Vec::with_capacity(task.mask.k()),
    };
    for pixels in task.mask.regions() {
        let c = coords.select(Axis(0), &pixels);
        let t = targets.select(Axis(0), &pixels);
        let (theta, loss, g) = adapt_region(theta0, model, c.view(), t.view(), alpha)?;
        out.heads.push(theta);
        out.losses.push(loss);
        out.final_grads.push(g);
    }
    Ok(out)
}

/// Unpartitioned inner loop on the whole image.
pub fn inner_adapt_plain(theta0: &ParamSet, model: &ModelConfig, image: &ImageField, alpha: &[f64]) -> Result<Adapted> {
    let (theta, loss, g) = adapt_region(theta0, model, image.coords().view(), image.targets().view(), alpha)?;
    Ok(Adapted {
        heads: vec![theta],
        losses: vec![loss],
        final_grads: vec![g],
    })
}

/// First-order meta-gradient of one task: the sum over heads of the loss
/// gradient at the adapted weights.
pub fn task_meta_gradient(adapted: &Adapted) -> ParamSet {
    let mut total = ParamSet::zeros_like(&adapted.final_grads[0]);
    for g in &adapted.final_grads {
        total.add_scaled(g, 1.0);
    }
    total
}

/// Mean of the per-task meta-gradients over tasks that adapted without a
/// numerical failure, together with their indices.
pub fn batch_meta_gradient(theta0: &ParamSet, model: &ModelConfig, batch: &[Task], alpha: &[f64]) -> Result<(ParamSet, Vec<usize>)> {
    if batch.is_empty() {
        return Err(Error::Precondition("task batch is empty".into()));
    }
    let per_task: Vec<Result<ParamSet>> = batch
        .par_iter()
        .map(|task| inner_adapt(theta0, model, task, alpha).map(|a| task_meta_gradient(&a)))
        .collect();
    let mut total = ParamSet::zeros_like(theta0);
    let mut used = Vec::new();
    for (i, r) in per_task.into_iter().enumerate() {
        match r {
            Ok(g) => {
                total.add_scaled(&g, 1.0);
                used.push(i);
            }
            Err(e @ Error::Diverged { .. }) => log::warn!("task {i} skipped: {e}"),
            Err(e) => return Err(e),
        }
    }
    if used.is_empty() {
        return Err(Error::Diverged {
            step: 0,
            reason: "every task in the batch diverged during adaptation".into(),
        });
    }
    total.scale(1.0 / used.len() as f64);
    Ok((total, used))
}

/// One Adam update of θ₀ at rate β on the batch meta-gradient.
pub fn outer_step(state: &mut MetaState, batch: &[Task]) -> Result<()> {
    let (grad, _) = batch_meta_gradient(&state.theta0, &state.model, batch, &state.alpha)?;
    let step = state.outer_step as usize;
    adam_step(&mut state.theta0, &grad, &mut state.adam).map_err(|e| match e {
        Error::Diverged { reason, .. } => Error::Diverged { step, reason },
        other => other,
    })?;
    state.outer_step += 1;
    Ok(())
}

/// Outer loop over batches drawn without replacement within each batch.
/// Checkpoints go to `checkpoint_dir` every `checkpoint_every` steps.
pub fn meta_train(corpus: &[Task], config: &MetaConfig, train_rule: &str, checkpoint_dir: Option<&Path>) -> Result<MetaState> {
    let mut state = MetaState::new(config, train_rule)?;
    if corpus.len() < config.batch_size {
        return Err(Error::Config(format!(
            "corpus of {} images is smaller than the batch size {}",
            corpus.len(),
            config.batch_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    for _ in 0..config.outer_steps {
        let picks = index::sample(&mut rng, corpus.len(), config.batch_size).into_vec();
        let batch: Vec<Task> = picks.iter().map(|&i| corpus[i].clone()).collect();
        outer_step(&mut state, &batch)?;
        if let (Some(dir), Some(every)) = (checkpoint_dir, config.checkpoint_every) {
            if every > 0 && state.outer_step % every as u64 == 0 {
                save_checkpoint(dir.join(format!("theta0_{:06}.bin", state.outer_step)), &state)?;
            }
        }
    }
    Ok(state)
}

/// Adapts θ₀ with `views` full-image steps per head using the state's inner
/// rates (the last rate repeats past the schedule). The report's series hold
/// the loss and PSNR before each view; `final_psnr` is after the last one.
pub fn meta_finetune(state: &MetaState, image: &ImageField, mask: &PartitionMask, views: usize) -> Result<(PartitionedInr, FitReport)> {
    let start = Instant::now();
    let task = Task::new(image.clone(), mask.clone())?;
    let coords = image.coords();
    let targets = image.targets();
    let regions = mask.regions();
    let alpha_at = |i: usize| state.alpha[i.min(state.alpha.len() - 1)];
    let mut heads = vec![state.theta0.clone(); mask.k()];
    let mut sse = vec![Vec::with_capacity(views); mask.k()];
    let mut evaluations = 0u64;
    for (n, pixels) in regions.iter().enumerate() {
        let c = coords.select(Axis(0), pixels);
        let t = targets.select(Axis(0), pixels);
        for view in 0..views {
            let (loss, g) = region_loss_grad(&heads[n], &state.model, c.view(), t.view(), view)?;
            sse[n].push(loss * (pixels.len() * t.ncols()) as f64);
            evaluations += pixels.len() as u64;
            heads[n].add_scaled(&g, -alpha_at(view));
        }
    }
    let inr = PartitionedInr {
        model: state.model.clone(),
        heads,
        mask: task.mask,
        local_coords: false,
    };
    let values = compose_prediction(image, &inr.mask, &inr.heads, &inr.model, false)?;
    let pred = ImageField::from_signed(image.height(), image.width(), &values)?;
    let series: Vec<&[f64]> = sse.iter().map(Vec::as_slice).collect();
    let report = assemble_report(image, &pred, &series, &vec![views; mask.k()], evaluations, start)?;
    Ok((inr, report))
}

/// Text sidecar of a θ₀ checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    m: usize,
    alpha: Vec<f64>,
    beta: f64,
    outer_step: u64,
    train_rule: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// θ₀ in the weight format plus `<path>.toml` with the inner schedule,
/// outer rate, outer step and training rule.
pub fn save_checkpoint(path: impl AsRef<Path>, state: &MetaState) -> Result<()> {
    let path = path.as_ref();
    save_weights(path, &state.theta0, &state.model)?;
    let side = Sidecar {
        m: state.alpha.len(),
        alpha: state.alpha.clone(),
        beta: state.beta,
        outer_step: state.outer_step,
        train_rule: state.train_rule.clone(),
    };
    let text = toml::to_string(&side).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

/// Restores θ₀ and its schedule; the Adam moments start fresh.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MetaState> {
    let path = path.as_ref();
    let (theta0, model) = load_weights(path)?;
    let text = fs::read_to_string(sidecar_path(path))?;
    let side: Sidecar = toml::from_str(&text).map_err(|e| Error::Format(format!("checkpoint sidecar: {e}")))?;
    if side.m != side.alpha.len() {
        return Err(Error::Format("sidecar m disagrees with its alpha schedule".into()));
    }
    let adam = AdamState::new(&theta0, side.beta);
    Ok(MetaState {
        theta0,
        model,
        alpha: side.alpha,
        beta: side.beta,
        outer_step: side.outer_step,
        adam,
        train_rule: side.train_rule,
    })
}
