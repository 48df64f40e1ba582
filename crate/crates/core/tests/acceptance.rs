//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fails.

mod common;

use std::time::Instant;

use common::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use pnp_ista::experiment::{solve, ExperimentConfig, Instance};
use pnp_ista::pnp_engine::{run_frozen, solve_affine_fixed_point, step};
use pnp_ista::spectral_analysis::{
    build_p_dense, build_q, build_q_dense, check_assumptions, delta_search, eigenvalues,
    gershgorin, lipschitz_gram, proof_identities, spectral_norm, spectral_radius,
};
use pnp_ista::{
    build_nlm, Image, LinearOperator, Mask, NlmParams, Psf, RunConfig, Termination,
};

const THEOREM_GAMMAS: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 0.99];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let cases = theorem_cases();
    let criteria: Vec<Criterion> = vec![
        ("step-size theorem on inpainting", Box::new(|| criterion_1(&cases))),
        ("disk identities", Box::new(|| criterion_2(&cases))),
        ("Gershgorin soundness", Box::new(criterion_3)),
        ("gamma threshold at desk scale", Box::new(criterion_4)),
        ("non-contraction facts", Box::new(criterion_5)),
        ("oracle equivalences", Box::new(criterion_6)),
        ("certified step-size search", Box::new(|| criterion_7(&cases))),
        ("Lipschitz constant of the gram operator", Box::new(|| criterion_8(&cases))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {}: {} ({:.1} s)",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn criterion_1(cases: &[Case]) -> Outcome {
    let per_case: Vec<(f64, f64, Vec<String>)> = cases
        .par_iter()
        .enumerate()
        .map(|(c_idx, c)| check_theorem_case(c_idx, c))
        .collect();
    let worst_rho = per_case.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_fp = per_case.iter().map(|r| r.1).fold(0.0, f64::max);
    let problems: Vec<String> = per_case.into_iter().flat_map(|r| r.2).collect();
    outcome(
        problems.is_empty(),
        format!(
            "{} instances x {} step sizes x 5 starts, max rho {worst_rho:.6}, max distance to fixed point {worst_fp:.1e}{}",
            cases.len(),
            THEOREM_GAMMAS.len(),
            summarize(&problems)
        ),
    )
}

/// Largest spectral radius, largest distance to the fixed point, and failures.
fn check_theorem_case(c_idx: usize, c: &Case) -> (f64, f64, Vec<String>) {
    let mut worst_rho: f64 = 0.0;
    let mut worst_fp: f64 = 0.0;
    let mut problems = Vec::new();
    let report = check_assumptions(&c.w, &c.op).unwrap();
    if !report.overall || report.rows.iter().any(|r| r.outside_sum != 0.0) {
        problems.push(format!("{}: assumptions", c.label));
        return (worst_rho, worst_fp, problems);
    }
    let wd = c.w.dense().unwrap();
    let q = build_q_dense(&c.w, &c.op).unwrap();
    for &gamma in &THEOREM_GAMMAS {
        let p = &wd - &q * gamma;
        let g = gershgorin(&p).unwrap();
        let rho = spectral_radius(&p).unwrap();
        worst_rho = worst_rho.max(rho);
        if !g.certified || rho.is_nan() || rho >= 1.0 - 1e-8 {
            problems.push(format!("{} gamma {gamma}: certified {} rho {rho}", c.label, g.certified));
            continue;
        }
        let qv = build_q(&c.w, &c.op, gamma, &c.y).unwrap();
        let x_star = solve_affine_fixed_point(&p, &qv).unwrap();
        let cfg = RunConfig {
            gamma,
            max_iters: 100_000,
            residual_tol: 1e-11,
            adapt_iters: 0,
            snapshot_every: 0,
        };
        for init in 0..5u64 {
            let x0: Vec<f64> = random_vec(c.w.len(), 31 * c_idx as u64 + init)
                .iter()
                .map(|v| 5.0 * v)
                .collect();
            let t = run_frozen(&cfg, &c.y, &c.op, &c.w, &x0, None).unwrap();
            let d = l2_dist(&t.final_iterate, &x_star);
            worst_fp = worst_fp.max(d);
            if t.termination != Termination::ToleranceReached || d > 1e-6 {
                problems.push(format!(
                    "{} gamma {gamma} init {init}: {} distance {d:e}",
                    c.label, t.termination
                ));
            }
        }
    }
    (worst_rho, worst_fp, problems)
}

fn criterion_2(cases: &[Case]) -> Outcome {
    let mut grid = vec![0.0];
    grid.extend(THEOREM_GAMMAS);
    let (mut zero, mut affine, mut slope) = (0.0f64, 0.0f64, 0.0f64);
    let mut slopes_measured = 0;
    for c in cases {
        let t = proof_identities(&c.w, &c.op, &grid).unwrap();
        zero = zero.max(t.max_zero_identity_error());
        affine = affine.max(t.max_affine_error());
        slope = slope.max(t.max_slope_error());
        slopes_measured += t.rows.iter().filter(|r| r.measured_slope.is_some()).count();
    }
    outcome(
        zero <= 1e-12 && affine <= 1e-10 && slope <= 1e-9 && slopes_measured > 0,
        format!(
            "zero-step error {zero:.1e}, affine error {affine:.1e}, slope error {slope:.1e} over {slopes_measured} rows with a measured slope"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let n = 4 + (k as usize * 7) % 61;
        let m = stochastic_times_perturbation(n, 900 + k);
        let g = gershgorin(&m).unwrap();
        for z in eigenvalues(&m).unwrap() {
            worst = worst.max(g.distance_to_union(z));
        }
    }
    outcome(
        worst <= 1e-8,
        format!("50 matrices, n from 4 to 64, largest distance outside the disks {worst:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut cfg = ExperimentConfig::inpainting_preset();
    let inst = Instance::prepare(&cfg).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for &gamma in &[0.5, 0.9, 1.0, 2.0, 2.1] {
        cfg.run.gamma = gamma;
        cfg.run.max_iters = if gamma > 2.0 { 20_000 } else { 2000 };
        let t = solve(&cfg, &inst).unwrap();
        let r = t.residuals();
        let last = *r.last().unwrap();
        let ok = match gamma {
            g if g < 1.0 => t.termination == Termination::ToleranceReached && last < 1e-5,
            g if g <= 2.0 => t.termination != Termination::DivergenceGuard,
            _ => {
                t.termination == Termination::DivergenceGuard
                    && r.len() >= 20
                    && r[r.len() - 20..].windows(2).all(|w| w[1] > w[0])
            }
        };
        pass &= ok;
        lines.push(format!("{gamma}: {} at {} ({last:.1e})", t.termination, r.len()));
    }
    outcome(pass, lines.join(", "))
}

fn criterion_5() -> Outcome {
    let c = inpainting_case(16, 0.8, 7, SMALL_NLM);
    let gamma = 0.9;
    let n = c.w.len();
    let m = DMatrix::identity(n, n) - c.op.dense_gram().unwrap() * gamma;
    let one = Complex64::new(1.0, 0.0);
    let near_one = eigenvalues(&m)
        .unwrap()
        .iter()
        .map(|z| (z - one).norm())
        .fold(f64::INFINITY, f64::min);
    let wd = c.w.dense().unwrap();
    let dominant = eigenvalues(&wd)
        .unwrap()
        .into_iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();
    let norm_w = spectral_norm(&wd).unwrap();
    let rho_p = spectral_radius(&build_p_dense(&c.w, &c.op, gamma).unwrap()).unwrap();
    outcome(
        near_one <= 1e-10 && (dominant - one).norm() <= 1e-8 && norm_w >= 1.0 - 1e-10 && rho_p < 1.0,
        format!(
            "|lambda - 1| for I - gamma AtA: {near_one:.1e}; dominant eigenvalue of W {:.12}; ||W||_2 {norm_w:.6}; rho(P) {rho_p:.6}",
            dominant.re
        ),
    )
}

/// Kernel entries straight from the definition, for every pixel pair.
fn brute_force_kernel(guide: &Image, p: &NlmParams) -> DMatrix<f64> {
    let (w, h) = (guide.width() as i64, guide.height() as i64);
    let n = (w * h) as usize;
    let r = p.patch_radius as i64;
    let s = p.window_radius as i64;
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
    DMatrix::from_fn(n, n, |i, j| {
        let (ix, iy) = ((i as i64) % w, (i as i64) / w);
        let (jx, jy) = ((j as i64) % w, (j as i64) / w);
        if (ix - jx).abs() > s || (iy - jy).abs() > s {
            return 0.0;
        }
        let (mut sum, mut count) = (0.0, 0);
        for dy in -r..=r {
            for dx in -r..=r {
                if inside(ix + dx, iy + dy) && inside(jx + dx, jy + dy) {
                    let a = guide.get((ix + dx) as usize, (iy + dy) as usize);
                    let b = guide.get((jx + dx) as usize, (jy + dy) as usize);
                    sum += (a - b) * (a - b);
                    count += 1;
                }
            }
        }
        (-(sum / count as f64) / (p.h * p.h)).exp()
    })
}

fn criterion_6() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // kernel against the quadratic loop, n = 64
    let guide = random_image(8, 8, 5);
    let params = NlmParams {
        patch_radius: 1,
        window_radius: 2,
        h: 0.4,
    };
    let w = build_nlm(&guide, &params).unwrap();
    let k_err = (w.dense_kernel().unwrap() - brute_force_kernel(&guide, &params)).amax();
    pass &= k_err <= 1e-12;
    notes.push(format!("kernel {k_err:.1e}"));

    // operator step against dense P x + q
    let mut step_err: f64 = 0.0;
    let mut apply_err: f64 = 0.0;
    for c in [
        inpainting_case(10, 0.7, 3, SMALL_NLM),
        deblurring_case(10, 3, 4, SMALL_NLM),
    ] {
        let gamma = 0.9;
        let x = random_vec(c.w.len(), 77);
        let p = build_p_dense(&c.w, &c.op, gamma).unwrap();
        let q = build_q(&c.w, &c.op, gamma, &c.y).unwrap();
        let dense = &p * nalgebra::DVector::from_column_slice(&x);
        let op_form = step(&c.w, &c.op, gamma, &x, &c.y).unwrap();
        for i in 0..x.len() {
            step_err = step_err.max((op_form[i] - dense[i] - q[i]).abs());
        }
        let wd = c.w.dense().unwrap();
        let wx = &wd * nalgebra::DVector::from_column_slice(&x);
        let sparse = c.w.apply(&x).unwrap();
        for i in 0..x.len() {
            apply_err = apply_err.max((sparse[i] - wx[i]).abs());
        }
    }
    pass &= step_err <= 1e-10 && apply_err <= 1e-12;
    notes.push(format!("step {step_err:.1e}"));
    notes.push(format!("W apply {apply_err:.1e}"));

    // adjoint identity, relative
    let mask = Mask::random(12, 12, 0.6, 9).unwrap();
    let ops = [
        LinearOperator::inpainting(&mask).unwrap(),
        LinearOperator::deblurring(Psf::uniform(5).unwrap(), 12, 12).unwrap(),
        LinearOperator::superresolution(Psf::uniform(3).unwrap(), 3, 12, 12).unwrap(),
    ];
    let mut adj_err: f64 = 0.0;
    for (k, op) in ops.iter().enumerate() {
        let x = random_vec(op.input_dim(), 10 + k as u64);
        let z = random_vec(op.output_dim(), 20 + k as u64);
        let lhs = dot(&op.apply(&x).unwrap(), &z);
        let rhs = dot(&x, &op.apply_adjoint(&z).unwrap());
        let scale = l2(&op.apply(&x).unwrap()) * l2(&z);
        adj_err = adj_err.max((lhs - rhs).abs() / scale);
    }
    pass &= adj_err <= 1e-12;
    notes.push(format!("adjoint {adj_err:.1e}"));
    outcome(pass, notes.join(", "))
}

/// Smallest step size on a grid (refined by bisection) where `ρ(P) >= 1`.
fn eigen_threshold(c: &Case) -> f64 {
    let unstable = |g: f64| spectral_radius(&build_p_dense(&c.w, &c.op, g).unwrap()).unwrap() >= 1.0;
    let mut g = 0.0;
    while !unstable(g + 0.05) {
        g += 0.05;
        assert!(g < 10.0, "no instability found");
    }
    let (mut lo, mut hi) = (g, g + 0.05);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn criterion_7(cases: &[Case]) -> Outcome {
    let tol = 1e-3;
    let min_delta = cases
        .iter()
        .map(|c| delta_search(&c.w, &c.op, tol).unwrap())
        .fold(f64::INFINITY, f64::min);
    let deblur = deblurring_case(12, 3, 21, NlmParams {
        patch_radius: 1,
        window_radius: 3,
        h: 0.3,
    });
    let (delta, threshold) = match delta_search(&deblur.w, &deblur.op, tol) {
        Ok(d) => (d, eigen_threshold(&deblur)),
        Err(e) => return outcome(false, format!("deblurring search failed: {e}")),
    };
    outcome(
        min_delta >= 1.0 - 2.0 * tol && delta <= threshold,
        format!(
            "smallest inpainting delta {min_delta:.4}; deblurring delta {delta:.4} vs eigenvalue threshold {threshold:.4}"
        ),
    )
}

fn criterion_8(cases: &[Case]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for c in cases {
        worst = worst.max((lipschitz_gram(&c.op).unwrap() - 1.0).abs());
        count += 1;
    }
    let psfs = [
        Psf::delta(),
        Psf::uniform(3).unwrap(),
        Psf::uniform(9).unwrap(),
        Psf::new(3, 5, (1..=15).map(|k| ((k * 37) % 11) as f64 + 0.5).collect()).unwrap(),
    ];
    for psf in psfs {
        for size in [16, 32] {
            let op = LinearOperator::deblurring(psf.clone(), size, size).unwrap();
            worst = worst.max((lipschitz_gram(&op).unwrap() - 1.0).abs());
            count += 1;
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{count} operators, largest |L - 1| {worst:.1e}"),
    )
}

fn summarize(problems: &[String]) -> String {
    match problems.first() {
        None => String::new(),
        Some(p) => format!("; {} problems, first: {p}", problems.len()),
    }
}
