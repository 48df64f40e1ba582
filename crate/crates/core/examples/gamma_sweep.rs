//! Residual and PSNR curves for several step sizes on the inpainting preset.
//! Below γ = 2 the residuals die out; at 2.1 the divergence guard stops the run.
//!
//!     cargo run --release --example gamma_sweep [OUT_DIR]

use pnp_ista::experiment::{cmd_sweep, ExperimentConfig};

fn main() -> pnp_ista::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/sweep".into());
    let cfg = ExperimentConfig::inpainting_preset();
    let gammas = [0.5, 0.9, 1.0, 2.0, 2.1];
    let res = cmd_sweep(&cfg, &gammas, out.as_ref())?;
    println!("{:>6} {:>18} {:>6} {:>12} {:>9}", "gamma", "termination", "iters", "residual", "PSNR");
    for (g, run) in res.gammas.iter().zip(&res.runs) {
        let last = run.trace.records.last().expect("at least one iteration");
        println!(
            "{g:>6} {:>18} {:>6} {:>12.3e} {:>9.2}",
            run.trace.termination.to_string(),
            last.iter,
            last.residual,
            last.psnr_db.unwrap_or(f64::NAN)
        );
    }
    println!("plot: {out}/plot.svg");
    Ok(())
}
