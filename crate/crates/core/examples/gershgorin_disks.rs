//! Disk geometry of P(γ) row by row on a small deblurring problem, and how
//! conservative the disk certificate is against the true spectral radius.
//!
//!     cargo run --release --example gershgorin_disks

use pnp_ista::image_io::test_pattern;
use pnp_ista::spectral_analysis::{
    build_p_dense, check_assumptions, delta_search, gershgorin, proof_identities, spectral_radius,
};
use pnp_ista::{build_nlm, LinearOperator, NlmParams, Psf};

fn main() -> pnp_ista::Result<()> {
    let img = test_pattern(16, 16)?;
    let op = LinearOperator::deblurring(Psf::uniform(3)?, 16, 16)?;
    let guide = img.with_data(op.apply(img.data())?)?;
    let w = build_nlm(
        &guide,
        &NlmParams {
            patch_radius: 1,
            window_radius: 3,
            h: 0.1,
        },
    )?;

    let report = check_assumptions(&w, &op)?;
    let worst = report
        .rows
        .iter()
        .map(|r| r.slack())
        .fold(f64::INFINITY, f64::min);
    println!("assumptions hold: {} (smallest inside - outside = {worst:.4})", report.overall);

    let table = proof_identities(&w, &op, &[0.0, 0.05, 0.1, 0.2])?;
    println!(
        "R_i - P_ii at gamma 0 vs 1 - 2 W_ii: max error {:.1e}",
        table.max_zero_identity_error()
    );
    println!("P_ii + R_i affine in gamma below beta_i: max error {:.1e}", table.max_affine_error());
    for (i, row) in table.rows.iter().enumerate().take(3) {
        println!(
            "  row {i}: W_ii {:.4}, beta {:.2e}, slope {:+.4}",
            row.w_ii, row.beta, row.predicted_slope
        );
    }

    let delta = delta_search(&w, &op, 1e-4)?;
    println!("\n{:>6} {:>10} {:>10} {:>10} {:>9}", "gamma", "min_left", "max_right", "certified", "rho");
    for gamma in [0.5 * delta, delta, 1.0, 1.5, 2.0, 2.5] {
        let p = build_p_dense(&w, &op, gamma)?;
        let g = gershgorin(&p)?;
        println!(
            "{gamma:>6.3} {:>10.4} {:>10.4} {:>10} {:>9.5}",
            g.min_left,
            g.max_right,
            g.certified,
            spectral_radius(&p)?
        );
    }
    println!("\ncertified step size: {delta:.4}");
    Ok(())
}
