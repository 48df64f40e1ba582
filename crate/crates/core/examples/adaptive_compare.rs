//! Fixed NLM weights against weights recomputed from every iterate.
//! Recomputing W each iteration is slow, so this runs 300 iterations.
//!
//!     cargo run --release --example adaptive_compare [OUT_DIR]

use pnp_ista::experiment::{cmd_adaptive_compare, ExperimentConfig};

fn main() -> pnp_ista::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/adaptive".into());
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.run.max_iters = 300;
    let res = cmd_adaptive_compare(&cfg, out.as_ref())?;
    for (name, arm) in [("fixed", &res.fixed), ("adaptive", &res.adaptive)] {
        let last = arm.trace.records.last().expect("at least one iteration");
        println!(
            "{name:>8}: {} after {} iterations, residual {:.2e}, PSNR {:.2} dB",
            arm.trace.termination,
            last.iter,
            last.residual,
            last.psnr_db.unwrap_or(f64::NAN)
        );
    }
    println!("plot: {out}/plot.svg");
    Ok(())
}
