//! Gradient checks on random networks and randomized sweeps of the partition
//! inequalities.
//!
//! cargo run --release --example check

use inr_partition::check::{
    grad_check_suite, proposition_sweep, smaller_networks_sufficient_sweep, smaller_networks_sweep, GRAD_TOLERANCE,
};
use inr_partition::models::Arch;

fn main() -> inr_partition::Result<()> {
    for arch in [Arch::Sine, Arch::ReluPe] {
        let s = grad_check_suite(arch, 20, 0)?;
        println!("{arch:?}: worst relative error {:.2e} over {} nets (gate {GRAD_TOLERANCE:.0e})", s.worst, s.nets);
    }
    let sweeps = [
        ("equal rates", proposition_sweep(1000, 0)),
        ("smaller nets, stated condition", smaller_networks_sweep(1000, 0)),
        ("smaller nets, exponent-corrected condition", smaller_networks_sufficient_sweep(1000, 0)),
    ];
    for (name, s) in sweeps {
        println!("{name}: {} of {} held, {} failed", s.held, s.instances, s.failed);
    }
    Ok(())
}
