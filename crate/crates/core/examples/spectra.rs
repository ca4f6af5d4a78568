//! Zero-frequency and high-band amplitudes of each bundled photo against its
//! 2×2 grid sub-parts.
//!
//! cargo run --release --example spectra

use inr_partition::image::load_png;
use inr_partition::partition::PartitionRule;

fn main() -> inr_partition::Result<()> {
    for name in ["astronaut", "coffee", "chelsea"] {
        let image = load_png(format!("{}/assets/{name}.png", env!("CARGO_MANIFEST_DIR")), false)?;
        let mask = PartitionRule::Grid { cols: 2, rows: 2 }.apply(&image)?;
        println!("{name}");
        println!("  part       size        dc   high_x   high_y  high_x/px  high_y/px");
        for row in inr_partition::spectra::compare_subparts(&image, &mask)? {
            let part = row.part.map_or("whole".to_string(), |p| p.to_string());
            println!(
                "  {part:>5} {:>4}x{:<4} {:>9.2} {:>8.3} {:>8.3} {:>10.6} {:>10.6}",
                row.height, row.width, row.dc, row.high_x, row.high_y, row.high_x_per_pixel, row.high_y_per_pixel
            );
        }
    }
    Ok(())
}
