//! Meta-learned initializations on the bundled 32×32 corpus, fine-tuned for
//! three views on held-out crops under each training/fine-tuning rule pair.
//!
//! cargo run --release --example meta_learning [outer steps] [hidden] [alpha]

use std::time::Instant;

use inr_partition::cli::load_corpus_dir;
use inr_partition::config::desk_meta_config;
use inr_partition::meta::{build_corpus, meta_finetune, meta_train, MetaState};
use inr_partition::partition::{PartitionRule, SegmentParams};
use inr_partition::image::ImageField;

const ASSETS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/meta");

fn mean_psnr(state: &MetaState, images: &[ImageField], rule: &PartitionRule) -> inr_partition::Result<f64> {
    let mut total = 0.0;
    for image in images {
        let mask = rule.apply(image)?;
        total += meta_finetune(state, image, &mask, 3)?.1.final_psnr;
    }
    Ok(total / images.len() as f64)
}

fn main() -> inr_partition::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut config = desk_meta_config();
    if let Some(s) = args.get(1) {
        config.outer_steps = s.parse().unwrap();
    }
    if let Some(s) = args.get(2) {
        config.model.hidden_features = s.parse().unwrap();
    }
    if let Some(s) = args.get(3) {
        config.alpha = vec![s.parse().unwrap(); 3];
    }
    let train = load_corpus_dir(format!("{ASSETS}/train").as_ref(), false)?;
    let heldout = load_corpus_dir(format!("{ASSETS}/heldout").as_ref(), false)?;

    let rules = [
        ("siren", PartitionRule::None),
        ("pog", PartitionRule::Grid { cols: 2, rows: 2 }),
        (
            "pos",
            PartitionRule::Segmentation {
                k: 4,
                params: SegmentParams::default(),
            },
        ),
    ];
    let start = Instant::now();
    let random = MetaState::new(&config, "none")?;
    println!("random init      -> siren {:6.2} dB", mean_psnr(&random, &heldout, &rules[0].1)?);
    for (train_tag, train_rule) in &rules {
        let corpus = build_corpus(&train, train_rule)?;
        let state = meta_train(&corpus, &config, train_rule.tag(), None)?;
        let mut line = format!("meta {train_tag:>5}       ->");
        for (tag, rule) in &rules {
            line += &format!(" {tag} {:6.2} dB", mean_psnr(&state, &heldout, rule)?);
        }
        println!("{line}");
    }
    println!("{:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
