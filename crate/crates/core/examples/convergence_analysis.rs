//! Assumption check, Gershgorin disks, spectrum and certified step size for
//! the inpainting preset, downscaled to 32x32 so P fits in memory densely.
//!
//!     cargo run --release --example convergence_analysis [OUT_DIR]

use pnp_ista::experiment::{cmd_analyze, ExperimentConfig};

fn main() -> pnp_ista::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/analysis".into());
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.analysis_size = Some(32);
    for gamma in [0.9, 1.5, 2.05] {
        let dir = format!("{out}/gamma_{gamma}");
        let res = cmd_analyze(&cfg, gamma, dir.as_ref())?;
        let g = &res.report.gershgorin;
        println!(
            "gamma {gamma}: disks span [{:.4}, {:.4}], certified {}, rho(P) = {:.6}",
            g.min_left, g.max_right, g.certified, res.report.rho
        );
    }
    let res = cmd_analyze(&cfg, 0.9, format!("{out}/gamma_0.9").as_ref())?;
    match res.report.delta_estimate {
        Some(d) => println!("certified for every gamma in (0, {d:.4}]"),
        None => println!("no certified step size"),
    }
    println!("reports under {out}/");
    Ok(())
}
