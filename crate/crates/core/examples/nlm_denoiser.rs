//! Build the NLM matrix W = D⁻¹K for a noisy image and look at its structure.
//!
//!     cargo run --release --example nlm_denoiser [OUT_DIR]

use std::fs::File;
use std::io::BufWriter;

use pnp_ista::image_io::{add_gaussian_noise, psnr, test_pattern, write_pgm};
use pnp_ista::{build_nlm, NlmParams};

fn main() -> pnp_ista::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/nlm".into());
    std::fs::create_dir_all(&out).map_err(|e| pnp_ista::Error::InvalidArgument(e.to_string()))?;

    let clean = test_pattern(48, 48)?;
    let sigma = 20.0 / 255.0;
    let noisy = add_gaussian_noise(&clean, sigma, 3)?;
    let params = NlmParams {
        patch_radius: 1,
        window_radius: 5,
        h: 1.5 * sigma,
    };
    let w = build_nlm(&noisy, &params)?;
    println!(
        "n = {}, nnz = {} (window {}x{}, patch {}x{}, h = {:.3})",
        w.len(),
        w.nnz(),
        2 * params.window_radius + 1,
        2 * params.window_radius + 1,
        2 * params.patch_radius + 1,
        2 * params.patch_radius + 1,
        params.h
    );

    // the corner row has a clipped window
    for i in [0, 24 * 48 + 24] {
        let row_sum: f64 = w.row(i).map(|(_, v)| v).sum();
        let peak = w.row(i).map(|(_, v)| v).fold(0.0, f64::max);
        println!(
            "row {i}: |Ω| = {}, W_ii = {:.4}, max W_ij = {:.4}, sum = {row_sum:.15}",
            w.window(i)?.len(),
            w.weight(i, i),
            peak
        );
    }

    let denoised = noisy.with_data(w.apply(noisy.data())?)?;
    println!(
        "PSNR noisy {:.2} dB, one pass of W {:.2} dB",
        psnr(&clean, &noisy)?,
        psnr(&clean, &denoised)?
    );
    // the config default h = 10σ is tuned for the restoration loop, not one pass
    let smooth = build_nlm(&noisy, &NlmParams::for_noise(sigma))?;
    let over = noisy.with_data(smooth.apply(noisy.data())?)?;
    println!("with h = 10 sigma and a 21x21 window: {:.2} dB", psnr(&clean, &over)?);

    write_pgm(&noisy, format!("{out}/noisy.pgm"))?;
    write_pgm(&denoised, format!("{out}/denoised.pgm"))?;
    let path = format!("{out}/weights.txt");
    let f = File::create(&path).map_err(|e| pnp_ista::Error::InvalidArgument(e.to_string()))?;
    w.write_triplets(BufWriter::new(f))
        .map_err(|e| pnp_ista::Error::InvalidArgument(e.to_string()))?;
    println!("wrote {path} (1-based i j W_ij)");
    Ok(())
}
