//! Restore a 64x64 scene with 80% of its pixels missing and Gaussian noise.
//!
//!     cargo run --release --example inpainting [OUT_DIR]

use pnp_ista::experiment::{cmd_run, ExperimentConfig, Instance};
use pnp_ista::image_io::psnr;

fn main() -> pnp_ista::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/inpainting".into());
    let cfg = ExperimentConfig::inpainting_preset();
    let inst = Instance::prepare(&cfg)?;
    println!(
        "{} of {} pixels observed, start PSNR {:.2} dB",
        inst.op.output_dim(),
        inst.op.input_dim(),
        psnr(&inst.clean, &inst.x0)?
    );

    let res = cmd_run(&cfg, out.as_ref())?;
    let last = res.trace.records.last().expect("at least one iteration");
    println!(
        "{} after {} iterations: residual {:.2e}, PSNR {:.2} dB",
        res.trace.termination,
        last.iter,
        last.residual,
        last.psnr_db.unwrap_or(f64::NAN)
    );
    println!("wrote {}/{{trace.csv,output.pgm,observed.pgm,init.pgm,meta.txt}}", out);
    Ok(())
}
