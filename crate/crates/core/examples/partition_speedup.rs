//! Baseline SIREN vs 4-head PoG and PoS at matched capacity on the bundled photos.
//!
//! cargo run --release --example partition_speedup [assets dir] [hidden] [steps] [lr] [local]

use std::path::PathBuf;
use std::time::Instant;

use inr_partition::cli::run_fit;
use inr_partition::config::FitSettings;
use inr_partition::partition::PartitionRule;

fn main() -> inr_partition::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).map_or(concat!(env!("CARGO_MANIFEST_DIR"), "/assets"), |s| s.as_str()));
    let defaults = FitSettings::default();
    let hidden: usize = args.get(2).map_or(defaults.model.hidden_features, |s| s.parse().expect("hidden"));
    let steps: usize = args.get(3).map_or(defaults.steps, |s| s.parse().expect("steps"));
    let lr: f64 = args.get(4).map_or(defaults.lr, |s| s.parse().expect("lr"));
    let local = args.get(5).is_some_and(|s| s == "local");

    let rules = [
        ("siren", PartitionRule::None),
        ("pog", PartitionRule::Grid { cols: 2, rows: 2 }),
        (
            "pos",
            PartitionRule::Segmentation {
                k: 4,
                params: Default::default(),
            },
        ),
    ];
    let start = Instant::now();
    for name in ["astronaut", "coffee", "chelsea"] {
        let mut line = format!("{name:>10}");
        for (tag, rule) in &rules {
            let mut settings = FitSettings::default();
            settings.image = dir.join(format!("{name}.png"));
            settings.partition = rule.clone();
            settings.model.hidden_features = hidden;
            settings.steps = steps;
            settings.lr = lr;
            settings.local_coords = local;
            let (_, _, report) = run_fit(&settings)?;
            line += &format!("  {tag} {:6.2} dB", report.final_psnr);
        }
        println!("{line}");
    }
    println!("{:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
