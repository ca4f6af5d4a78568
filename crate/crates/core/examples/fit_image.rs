//! Fits the bundled astronaut with one SIREN and with four grid heads of
//! matched total capacity, then writes both reconstructions.
//!
//! cargo run --release --example fit_image [steps] [out dir]

use std::path::PathBuf;

use inr_partition::cli::run_fit;
use inr_partition::config::FitSettings;
use inr_partition::image::save_png;
use inr_partition::partition::PartitionRule;

fn main() -> inr_partition::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps = args.get(1).map_or(100, |s| s.parse().expect("steps"));
    let out = PathBuf::from(args.get(2).map_or("fit_image_out", |s| s.as_str()));
    std::fs::create_dir_all(&out)?;

    for (tag, rule) in [("siren", PartitionRule::None), ("pog", PartitionRule::Grid { cols: 2, rows: 2 })] {
        let settings = FitSettings {
            image: concat!(env!("CARGO_MANIFEST_DIR"), "/assets/astronaut.png").into(),
            partition: rule,
            steps,
            ..FitSettings::default()
        };
        let (image, inr, report) = run_fit(&settings)?;
        println!(
            "{tag:>5}: {} head(s) of width {}, PSNR {:.2} dB, SSIM {:.4}, {:.1} s",
            inr.heads.len(),
            inr.model.hidden_features,
            report.final_psnr,
            report.final_ssim.unwrap_or(f64::NAN),
            report.wall_seconds
        );
        save_png(out.join(format!("{tag}.png")), &inr.render(&image)?)?;
        report.write_csv(out.join(format!("{tag}.csv")))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
