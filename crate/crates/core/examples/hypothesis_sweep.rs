//! Convergence epochs versus boundary count on 1-D step signals, with the
//! fitted exponential rate.
//!
//! cargo run --release --example hypothesis_sweep [out.csv]

use inr_partition::hypothesis::{run_sweep, SweepConfig};

fn main() -> inr_partition::Result<()> {
    let config = SweepConfig::desk_1d();
    let start = std::time::Instant::now();
    let report = run_sweep(&config)?;
    for s in &report.summary {
        println!(
            "N = {:>3}  mean {:>8.1} ± {:>7.1} epochs  ({} censored)",
            s.n, s.mean_steps, s.std_steps, s.censored
        );
    }
    println!("{}", report.summary_line());
    println!("{:.1} s", start.elapsed().as_secs_f64());
    if let Some(path) = std::env::args().nth(1) {
        report.write_cells_csv(path)?;
    }
    Ok(())
}
