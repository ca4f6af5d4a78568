//! Command-line front end.
//!
//! Each subcommand resolves its settings (defaults, then `--config`, then
//! flags), writes them to `<out-dir>/config.toml`, runs, and writes its
//! results next to the snapshot.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autodiff::weights::save_weights;
use crate::check::{grad_check_suite, proposition_sweep, smaller_networks_sufficient_sweep, smaller_networks_sweep};
use crate::config::{
    load_settings, require_path, write_snapshot, CheckSettings, FitSettings, HypothesisSettings, MaskFormat,
    MetaFinetuneSettings, MetaTrainSettings, SegmentSettings, SpectraSettings,
};
use crate::error::{Error, Result};
use crate::hypothesis::{run_sweep, SignalShape, SweepConfig};
use crate::image::{load_png, save_png, ImageField};
use crate::meta::{build_corpus, load_checkpoint, meta_finetune, meta_train, save_checkpoint};
use crate::models::{matched_hidden_dim, Arch};
use crate::partition::io::{save_mask_png, save_mask_raw};
use crate::partition::{PartitionMask, PartitionRule, SegmentParams};
use crate::spectra::{amplitude_slice, compare_subparts, dft2, write_comparison_csv, write_slice_csv, Axis};
use crate::trainer::{fit_partitioned, fit_single, FitConfig, FitReport, PartitionedInr};

#[derive(Debug, Parser)]
#[command(name = "inrpart", version, about = "Partitioned implicit neural representations")]
pub struct Cli {
    /// Overrides the seed of the settings.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML settings file for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one network or a partitioned ensemble to an image.
    Fit(FitArgs),
    /// Export a grid or segmentation mask.
    Segment(SegmentArgs),
    /// Convergence sweep over boundary counts and exponent fit.
    Hypothesis(HypothesisArgs),
    /// Amplitude spectra of an image and its grid sub-parts.
    Spectra(SpectraArgs),
    /// Meta-learn a shared initialization on a directory of images.
    MetaTrain(MetaTrainArgs),
    /// Adapt a meta-learned initialization to one image.
    MetaFinetune(MetaFinetuneArgs),
    /// Gradient checks and inequality sweeps.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    None,
    Pog,
    Pos,
}

/// Partition flags shared by several subcommands.
#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Head count (grid: closest factor pair, cols ≥ rows).
    #[arg(long)]
    pub heads: Option<usize>,
    /// Grid cell width in pixels.
    #[arg(long)]
    pub rx: Option<usize>,
    /// Grid cell height in pixels.
    #[arg(long)]
    pub ry: Option<usize>,
}

impl PartitionArgs {
    fn resolve(&self, current: &PartitionRule) -> Result<PartitionRule> {
        let Some(rule) = self.rule else {
            if self.heads.is_some() || self.rx.is_some() || self.ry.is_some() {
                return Err(Error::Config("--heads/--rx/--ry need --rule".into()));
            }
            return Ok(current.clone());
        };
        Ok(match rule {
            RuleArg::None => PartitionRule::None,
            RuleArg::Pog => match (self.heads, self.rx, self.ry) {
                (None, Some(rx), Some(ry)) => PartitionRule::GridStride { rx, ry },
                (Some(k), None, None) => grid_for_heads(k)?,
                _ => return Err(Error::Config("pog needs either --heads or both --rx and --ry".into())),
            },
            RuleArg::Pos => {
                let k = self.heads.ok_or_else(|| Error::Config("pos needs --heads".into()))?;
                let params = match current {
                    PartitionRule::Segmentation { params, .. } => params.clone(),
                    _ => SegmentParams::default(),
                };
                PartitionRule::Segmentation { k, params }
            }
        })
    }
}

/// `cols × rows = k` with the factors as close as possible, `cols ≥ rows`.
pub fn grid_for_heads(k: usize) -> Result<PartitionRule> {
    match SignalShape::two_d_from_product(k)? {
        SignalShape::TwoD { n1, n2 } => Ok(PartitionRule::Grid { cols: n2, rows: n1 }),
        SignalShape::OneD { .. } => unreachable!(),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub gray: bool,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden width of the single-network baseline.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    /// Give every head the full baseline width instead of matching capacity.
    #[arg(long)]
    pub full_width_heads: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Sine,
    ReluPe,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub gray: bool,
    #[command(flatten)]
    pub partition: PartitionArgs,
    /// Write the raw 16-bit mask format instead of PNG.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct HypothesisArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Epoch cap per run.
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetaTrainArgs {
    /// Directory of PNG images.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub gray: bool,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long)]
    pub outer_steps: Option<usize>,
    /// Inner steps; the first inner rate is repeated.
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetaFinetuneArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub gray: bool,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long)]
    pub views: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub nets: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
}

/// Parses `argv`, runs the subcommand, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    fs::create_dir_all(&cli.out_dir)?;
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a, load_settings(config)?),
        Command::Segment(a) => cmd_segment(cli, a, load_settings(config)?),
        Command::Hypothesis(a) => cmd_hypothesis(cli, a, config),
        Command::Spectra(a) => cmd_spectra(cli, a, load_settings(config)?),
        Command::MetaTrain(a) => cmd_meta_train(cli, a, load_settings(config)?),
        Command::MetaFinetune(a) => cmd_meta_finetune(cli, a, load_settings(config)?),
        Command::Check(a) => cmd_check(cli, a, load_settings(config)?),
    }
}

fn load_image(path: &Path, gray: bool) -> Result<ImageField> {
    require_path(path, "an image path")?;
    load_png(path, gray)
}

/// Partition, head configuration and fit for `settings`.
pub fn run_fit(settings: &FitSettings) -> Result<(ImageField, PartitionedInr, FitReport)> {
    let image = load_image(&settings.image, settings.gray)?;
    let mask = settings.partition.apply(&image)?;
    let mut base = settings.model.clone();
    base.output_dim = image.channels();
    let mut head = base.clone();
    if settings.match_capacity && mask.k() > 1 {
        head.hidden_features = matched_hidden_dim(&base, mask.k());
    }
    let config = FitConfig {
        model: head.clone(),
        steps: settings.steps,
        lr: settings.lr,
        seed: settings.seed,
        sampler: settings.sampler,
        reduction: settings.reduction,
        local_coords: settings.local_coords,
        early_stop: settings.early_stop,
    };
    if mask.k() == 1 {
        let (net, report) = fit_single(&image, &config)?;
        let inr = PartitionedInr {
            model: head,
            heads: vec![net],
            mask,
            local_coords: settings.local_coords,
        };
        Ok((image, inr, report))
    } else {
        let (inr, report) = fit_partitioned(&image, &mask, &config)?;
        Ok((image, inr, report))
    }
}

fn write_heads(dir: &Path, inr: &PartitionedInr) -> Result<()> {
    let mut manifest = fs::File::create(dir.join("manifest.txt"))?;
    writeln!(manifest, "heads = {}", inr.heads.len())?;
    writeln!(manifest, "hidden_features = {}", inr.model.hidden_features)?;
    writeln!(manifest, "local_coords = {}", inr.local_coords)?;
    writeln!(manifest, "mask = mask.png")?;
    for (n, head) in inr.heads.iter().enumerate() {
        let name = format!("head_{n:03}.bin");
        save_weights(dir.join(&name), head, &inr.model)?;
        writeln!(manifest, "{name}")?;
    }
    if inr.mask.k() <= 256 {
        save_mask_png(dir.join("mask.png"), &inr.mask)?;
    } else {
        save_mask_raw(dir.join("mask.bin"), &inr.mask)?;
    }
    Ok(())
}

fn write_summary(dir: &Path, report: &FitReport) -> Result<()> {
    let ssim = report.final_ssim.map_or("n/a".to_string(), |s| format!("{s:.6}"));
    let text = format!(
        "final_psnr = {:.6}\nfinal_ssim = {ssim}\nsteps_run = {}\nhead_steps = {:?}\npixel_evaluations = {}\nwall_seconds = {:.3}\n",
        report.final_psnr, report.steps_run, report.head_steps, report.pixel_evaluations, report.wall_seconds
    );
    fs::write(dir.join("summary.txt"), text)?;
    Ok(())
}

fn cmd_fit(cli: &Cli, a: &FitArgs, mut s: FitSettings) -> Result<()> {
    if let Some(p) = &a.image {
        s.image = p.clone();
    }
    s.gray |= a.gray;
    s.partition = a.partition.resolve(&s.partition)?;
    if let Some(v) = a.steps {
        s.steps = v;
    }
    if let Some(v) = a.lr {
        s.lr = v;
    }
    if let Some(v) = a.hidden {
        s.model.hidden_features = v;
    }
    if let Some(arch) = a.arch {
        s.model.arch = match arch {
            ArchArg::Sine => Arch::Sine,
            ArchArg::ReluPe => Arch::ReluPe,
        };
    }
    if a.full_width_heads {
        s.match_capacity = false;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    write_snapshot(&cli.out_dir, &s)?;
    let (image, inr, report) = run_fit(&s)?;
    report.write_csv(cli.out_dir.join("metrics.csv"))?;
    write_summary(&cli.out_dir, &report)?;
    save_png(cli.out_dir.join("reconstruction.png"), &inr.render(&image)?)?;
    write_heads(&cli.out_dir, &inr)?;
    println!(
        "{} head(s), {} steps: PSNR {:.3} dB",
        inr.heads.len(),
        report.steps_run,
        report.final_psnr
    );
    Ok(())
}

fn cmd_segment(cli: &Cli, a: &SegmentArgs, mut s: SegmentSettings) -> Result<()> {
    if let Some(p) = &a.image {
        s.image = p.clone();
    }
    s.gray |= a.gray;
    s.partition = a.partition.resolve(&s.partition)?;
    if a.raw {
        s.format = MaskFormat::Raw;
    }
    write_snapshot(&cli.out_dir, &s)?;
    let image = load_image(&s.image, s.gray)?;
    let mask = s.partition.apply(&image)?;
    let path = match s.format {
        MaskFormat::Png => {
            let p = cli.out_dir.join("mask.png");
            save_mask_png(&p, &mask)?;
            p
        }
        MaskFormat::Raw => {
            let p = cli.out_dir.join("mask.bin");
            save_mask_raw(&p, &mask)?;
            p
        }
    };
    println!("k = {} ({}) -> {}", mask.k(), mask.provenance(), path.display());
    Ok(())
}

fn cmd_hypothesis(cli: &Cli, a: &HypothesisArgs, config: Option<&Path>) -> Result<()> {
    let mut s: HypothesisSettings = match config {
        Some(_) => load_settings(config)?,
        None => HypothesisSettings {
            sweep: match (a.dim, a.preset.unwrap_or(Preset::Desk)) {
                (1, Preset::Desk) => SweepConfig::desk_1d(),
                (1, Preset::Full) => SweepConfig::full_1d(),
                (2, Preset::Desk) => SweepConfig::desk_2d(),
                (2, Preset::Full) => SweepConfig::full_2d(),
                (d, _) => return Err(Error::Config(format!("--dim must be 1 or 2, got {d}"))),
            },
        },
    };
    if let Some(cap) = a.cap {
        s.sweep.convergence.cap = cap;
    }
    if let Some(seed) = cli.seed {
        s.sweep.seeds = s.sweep.seeds.iter().map(|x| x.wrapping_add(seed)).collect();
    }
    write_snapshot(&cli.out_dir, &s)?;
    let report = run_sweep(&s.sweep)?;
    report.write_cells_csv(cli.out_dir.join("sweep.csv"))?;
    report.write_summary_csv(cli.out_dir.join("summary.csv"))?;
    let line = report.summary_line();
    fs::write(cli.out_dir.join("fit.txt"), format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}

fn cmd_spectra(cli: &Cli, a: &SpectraArgs, mut s: SpectraSettings) -> Result<()> {
    if let Some(p) = &a.image {
        s.image = p.clone();
    }
    if let Some(c) = a.cols {
        s.cols = c;
    }
    if let Some(r) = a.rows {
        s.rows = r;
    }
    write_snapshot(&cli.out_dir, &s)?;
    let image = load_image(&s.image, true)?;
    let mask = PartitionRule::Grid { cols: s.cols, rows: s.rows }.apply(&image)?;
    let rows = compare_subparts(&image, &mask)?;
    write_comparison_csv(cli.out_dir.join("comparison.csv"), &rows)?;
    let whole = dft2(&image)?;
    write_slice_csv(cli.out_dir.join("slice_x.csv"), &amplitude_slice(&whole, Axis::X))?;
    write_slice_csv(cli.out_dir.join("slice_y.csv"), &amplitude_slice(&whole, Axis::Y))?;
    for r in &rows {
        let name = r.part.map_or("whole".to_string(), |n| format!("part {n}"));
        println!(
            "{name:>8}  dc {:>12.3}  high_x {:>10.4}  high_y {:>10.4}",
            r.dc, r.high_x, r.high_y
        );
    }
    Ok(())
}

/// PNG files of `dir` in file-name order.
pub fn load_corpus_dir(dir: &Path, gray: bool) -> Result<Vec<ImageField>> {
    require_path(dir, "a corpus directory")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no PNG files in {}", dir.display())));
    }
    paths.iter().map(|p| load_png(p, gray)).collect()
}

fn cmd_meta_train(cli: &Cli, a: &MetaTrainArgs, mut s: MetaTrainSettings) -> Result<()> {
    if let Some(p) = &a.corpus {
        s.corpus = p.clone();
    }
    s.gray |= a.gray;
    s.partition = a.partition.resolve(&s.partition)?;
    if let Some(v) = a.outer_steps {
        s.meta.outer_steps = v;
    }
    if a.inner_steps.is_some() || a.alpha.is_some() {
        let m = a.inner_steps.unwrap_or(s.meta.alpha.len());
        let rate = a.alpha.unwrap_or(s.meta.alpha[0]);
        s.meta.alpha = vec![rate; m];
    }
    if let Some(v) = a.beta {
        s.meta.beta = v;
    }
    if let Some(v) = a.batch_size {
        s.meta.batch_size = v;
    }
    if let Some(seed) = cli.seed {
        s.meta.seed = seed;
    }
    let images = load_corpus_dir(&s.corpus, s.gray)?;
    s.meta.model.output_dim = images[0].channels();
    write_snapshot(&cli.out_dir, &s)?;
    let corpus = build_corpus(&images, &s.partition)?;
    let state = meta_train(&corpus, &s.meta, s.partition.tag(), Some(&cli.out_dir))?;
    let path = cli.out_dir.join("theta0.bin");
    save_checkpoint(&path, &state)?;
    println!("{} outer steps on {} images -> {}", state.outer_step, corpus.len(), path.display());
    Ok(())
}

fn cmd_meta_finetune(cli: &Cli, a: &MetaFinetuneArgs, mut s: MetaFinetuneSettings) -> Result<()> {
    if let Some(p) = &a.checkpoint {
        s.checkpoint = p.clone();
    }
    if let Some(p) = &a.image {
        s.image = p.clone();
    }
    s.gray |= a.gray;
    s.partition = a.partition.resolve(&s.partition)?;
    if let Some(v) = a.views {
        s.views = v;
    }
    write_snapshot(&cli.out_dir, &s)?;
    require_path(&s.checkpoint, "a checkpoint path")?;
    let state = load_checkpoint(&s.checkpoint)?;
    let image = load_image(&s.image, s.gray)?;
    let mask: PartitionMask = s.partition.apply(&image)?;
    let (inr, report) = meta_finetune(&state, &image, &mask, s.views)?;
    report.write_csv(cli.out_dir.join("metrics.csv"))?;
    write_summary(&cli.out_dir, &report)?;
    save_png(cli.out_dir.join("reconstruction.png"), &inr.render(&image)?)?;
    println!(
        "{} view(s), trained with {}, adapted with {}: PSNR {:.3} dB",
        s.views,
        state.train_rule,
        s.partition.tag(),
        report.final_psnr
    );
    Ok(())
}

fn cmd_check(cli: &Cli, a: &CheckArgs, mut s: CheckSettings) -> Result<()> {
    if let Some(v) = a.nets {
        s.nets_per_arch = v;
    }
    if let Some(v) = a.instances {
        s.proposition_instances = v;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    write_snapshot(&cli.out_dir, &s)?;
    let mut lines = Vec::new();
    let mut failed = false;
    for arch in [Arch::Sine, Arch::ReluPe] {
        let g = grad_check_suite(arch, s.nets_per_arch, s.seed)?;
        failed |= !g.passed();
        lines.push(format!(
            "{} grad_check {:?}: {} nets, max relative error {:.3e}",
            verdict(g.passed()),
            arch,
            g.nets,
            g.worst
        ));
    }
    let n = s.proposition_instances;
    let prop = proposition_sweep(n, s.seed);
    failed |= !prop.all_hold();
    lines.push(format!("{} partition inequality: {}/{} hold", verdict(prop.all_hold()), prop.held, n));
    let corrected = smaller_networks_sufficient_sweep(n, s.seed);
    failed |= !corrected.all_hold();
    lines.push(format!(
        "{} smaller networks, (p/p̂)^N̂·2^(k−1) > k: {}/{} hold",
        verdict(corrected.all_hold()),
        corrected.held,
        n
    ));
    let stated = smaller_networks_sweep(n, s.seed);
    lines.push(format!(
        "info smaller networks, (p/p̂)·2^(k−1) > k: {}/{} hold, {} counterexamples",
        stated.held, n, stated.failed
    ));
    let text = lines.join("\n") + "\n";
    fs::write(cli.out_dir.join("check.txt"), &text)?;
    print!("{text}");
    if failed {
        return Err(Error::Diverged {
            step: 0,
            reason: "self-check failed".into(),
        });
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_heads_factor() {
        assert_eq!(grid_for_heads(4).unwrap(), PartitionRule::Grid { cols: 2, rows: 2 });
        assert_eq!(grid_for_heads(2).unwrap(), PartitionRule::Grid { cols: 2, rows: 1 });
        assert_eq!(grid_for_heads(6).unwrap(), PartitionRule::Grid { cols: 3, rows: 2 });
    }

    #[test]
    fn bad_flags_are_config_errors() {
        assert_eq!(run(["inrpart", "fit", "--bogus"]), 1);
        let dir = std::env::temp_dir().join(format!("inrp-cli-{}", std::process::id()));
        let out = dir.to_str().unwrap();
        assert_eq!(run(["inrpart", "--out-dir", out, "fit"]), 1);
        assert_eq!(run(["inrpart", "--out-dir", out, "segment", "--rule", "pog", "--heads", "4", "--rx", "3"]), 1);
        fs::remove_dir_all(dir).ok();
    }
}
