//! Grid and segmentation masks for the bundled photos, with region areas.
//!
//! cargo run --release --example segment [heads] [out dir]

use std::path::PathBuf;

use inr_partition::cli::grid_for_heads;
use inr_partition::image::load_png;
use inr_partition::partition::io::save_mask_png;
use inr_partition::partition::{overseg, PartitionRule, SegmentParams};

fn main() -> inr_partition::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).map_or(4, |s| s.parse().expect("heads"));
    let out = PathBuf::from(args.get(2).map_or("segment_out", |s| s.as_str()));
    std::fs::create_dir_all(&out)?;

    for name in ["astronaut", "coffee", "chelsea"] {
        let image = load_png(format!("{}/assets/{name}.png", env!("CARGO_MANIFEST_DIR")), false)?;
        let params = SegmentParams::default();
        let over = overseg(&image, &params)?;
        println!("{name}: over-segmentation gives {} regions", over.map.region_count());
        for (tag, rule) in [
            ("pog", grid_for_heads(k)?),
            ("pos", PartitionRule::Segmentation { k, params: params.clone() }),
        ] {
            let mask = rule.apply(&image)?;
            println!("  {tag}: areas {:?}, balance {:.2}", mask.areas(), mask.balance_ratio());
            save_mask_png(out.join(format!("{name}_{tag}.png")), &mask)?;
        }
    }
    Ok(())
}
