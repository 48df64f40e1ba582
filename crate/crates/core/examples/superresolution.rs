//! 2x superresolution: 3x3 blur, keep every second pixel, restore at full size.
//!
//!     cargo run --release --example superresolution [OUT_DIR]

use pnp_ista::experiment::{cmd_run, ExperimentConfig, Instance, Problem};
use pnp_ista::image_io::psnr;

fn main() -> pnp_ista::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/superresolution".into());
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.problem = Problem::Superresolution {
        psf: None,
        blur_size: 3,
        factor: 2,
    };
    cfg.noise_sigma = 2.0 / 255.0;
    cfg.nlm.h = 0.1;
    cfg.run.gamma = 1.5;
    cfg.run.max_iters = 500;

    let inst = Instance::prepare(&cfg)?;
    println!(
        "observed {}x{}, nearest-neighbor start PSNR {:.2} dB",
        inst.op.width() / 2,
        inst.op.height() / 2,
        psnr(&inst.clean, &inst.x0)?
    );
    let res = cmd_run(&cfg, out.as_ref())?;
    println!(
        "{} after {} iterations, PSNR {:.2} dB",
        res.trace.termination,
        res.trace.records.len(),
        psnr(&inst.clean, &res.output)?
    );
    Ok(())
}
