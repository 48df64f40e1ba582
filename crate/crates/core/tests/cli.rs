//! The experiment commands and the `pnp-ista` binary.

use std::path::Path;
use std::process::Command;

use pnp_ista::experiment::{
    cmd_adaptive_compare, cmd_adaptive_compare_with, cmd_analyze, cmd_run, cmd_sweep,
    gamma_dir_name, read_metadata, solve, Arms, ExperimentConfig, InputSource, Instance, Problem,
};
use pnp_ista::image_io::psnr;
use pnp_ista::Termination;

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .filter_map(|l| l.split(',').nth(k).filter(|v| !v.is_empty()).map(|v| v.parse().unwrap()))
        .collect()
}

#[test]
fn preset_converges_at_point_nine() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_run(&ExperimentConfig::inpainting_preset(), dir.path()).unwrap();
    assert_eq!(out.trace.termination, Termination::ToleranceReached);
    assert!(out.trace.last_residual().unwrap() < 1e-5);
    let meta = read_metadata(dir.path().join("meta.txt")).unwrap();
    assert_eq!(meta.get("result", "termination"), Some("tol-reached"));
    assert_eq!(meta.get("nlm", "h"), Some("0.085"));
    assert_eq!(meta.get("hashes", "output"), Some(out.output.content_hash().as_str()));
}

#[test]
fn preset_diverges_past_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.run.gamma = 2.1;
    let out = cmd_run(&cfg, dir.path()).unwrap();
    assert_eq!(out.trace.termination, Termination::DivergenceGuard);
    assert_eq!(pnp_ista::experiment::run_exit_code(&out.trace), 2);
}

#[test]
fn noiseless_fully_observed_run_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.problem = Problem::Inpainting {
        missing_fraction: 0.0,
        mask_seed: 1,
    };
    cfg.noise_sigma = 0.0;
    cfg.run.gamma = 0.5;
    let out = cmd_run(&cfg, dir.path()).unwrap();
    assert_eq!(out.trace.termination, Termination::ToleranceReached);
    let csv = read(dir.path().join("trace.csv"));
    let iters = column(&csv, "iter");
    assert_eq!(iters, (1..=iters.len()).map(|k| k as f64).collect::<Vec<_>>());
    assert_eq!(column(&csv, "psnr_db").len(), iters.len());

    // with y equal to the clean image the limit is a smoothed copy of it
    let got = psnr(&Instance::prepare(&cfg).unwrap().clean, &out.output).unwrap();
    assert!(got.is_finite() && got > 25.0, "{got}");
}

#[test]
fn sweep_separates_stable_and_unstable_step_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let gammas = [0.5, 0.9, 1.0, 2.0, 2.1];
    let out = cmd_sweep(&ExperimentConfig::inpainting_preset(), &gammas, dir.path()).unwrap();
    let csv = read(dir.path().join("trace.csv"));
    for g in gammas {
        let r = column(&csv, &format!("residual_g{g}"));
        let tail = &r[r.len() - 50..];
        if g <= 2.0 {
            assert!(tail[49] < tail[0], "gamma {g}");
        } else {
            assert!(tail.windows(2).all(|w| w[1] > w[0]), "gamma {g}");
        }
        assert!(dir.path().join(gamma_dir_name(g)).join("output.pgm").exists());
    }
    assert_eq!(out.runs.len(), 5);
    let svg = read(dir.path().join("plot.svg"));
    assert!(svg.contains("gamma = 2.1") && svg.contains("Residual"));
}

#[test]
fn singleton_sweep_reproduces_run_and_sweeps_are_deterministic() {
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.input = InputSource::Synthetic {
        width: 32,
        height: 32,
    };
    cfg.run.max_iters = 200;
    let run_dir = tempfile::tempdir().unwrap();
    cmd_run(&cfg, run_dir.path()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_sweep(&cfg, &[0.9], a.path()).unwrap();
    cmd_sweep(&cfg, &[0.9], b.path()).unwrap();
    let single = std::fs::read(run_dir.path().join("trace.csv")).unwrap();
    let swept = std::fs::read(a.path().join("gamma_0.9/trace.csv")).unwrap();
    assert_eq!(single, swept);
    assert_eq!(
        std::fs::read(a.path().join("trace.csv")).unwrap(),
        std::fs::read(b.path().join("trace.csv")).unwrap()
    );
}

fn analysis_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.analysis_size = Some(32);
    cfg.nlm.window_radius = 5;
    cfg.nlm.patch_radius = 2;
    cfg
}

#[test]
fn analysis_certifies_small_inpainting_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_analyze(&analysis_cfg(), 0.9, dir.path()).unwrap();
    assert_eq!((out.width, out.height), (32, 32));
    assert!(out.report.assumptions.overall);
    assert!(out.certified() && out.report.rho < 1.0);
    assert_eq!(out.exit_code(), 0);
    let delta = out.report.delta_estimate.unwrap();
    assert!(delta >= 1.0 - 2e-3, "{delta}");
    let report = read(dir.path().join("report.txt"));
    for key in ["[assumptions]", "[gershgorin]", "spectral_radius", "certified_delta", "[proof_identities]"] {
        assert!(report.contains(key), "{key} missing");
    }
    assert_eq!(read(dir.path().join("rows.csv")).lines().count(), 1025);
}

#[test]
fn analysis_reports_certificate_and_radius_separately() {
    // inpainting keeps its certificate up to γ = 2; past it the disks leave
    // the unit circle while the spectral radius is reported on its own
    let dir = tempfile::tempdir().unwrap();
    let cfg = analysis_cfg();
    let mid = cmd_analyze(&cfg, 1.5, dir.path()).unwrap();
    assert!(mid.certified());
    let past = cmd_analyze(&cfg, 2.05, dir.path()).unwrap();
    assert!(!past.certified());
    assert_eq!(past.exit_code(), 3);
    let report = read(dir.path().join("report.txt"));
    assert!(report.contains("certified = false"));
    assert!(report.contains(&format!("spectral_radius = {}", past.report.rho)));
}

#[test]
fn adaptive_compare_runs_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.run.max_iters = 60;
    let out = cmd_adaptive_compare(&cfg, dir.path()).unwrap();
    assert_ne!(out.fixed.trace.termination, Termination::DivergenceGuard);
    assert_ne!(out.adaptive.trace.termination, Termination::DivergenceGuard);
    assert_ne!(out.fixed.trace.final_iterate, out.adaptive.trace.final_iterate);
    let meta = read_metadata(dir.path().join("meta.txt")).unwrap();
    assert_eq!(meta.get("arm.fixed", "adapt_iters"), Some("0"));
    assert_eq!(meta.get("arm.adaptive", "adapt_iters"), Some("60"));
    let fixed_meta = read_metadata(dir.path().join("fixed/meta.txt")).unwrap();
    assert_eq!(fixed_meta.get("arm", "name"), Some("fixed"));
    assert_eq!(fixed_meta.get("run", "adapt_iters"), Some("0"));
    assert!(dir.path().join("adaptive/output.pgm").exists());
    let csv = read(dir.path().join("trace.csv"));
    assert!(csv.starts_with("iter,residual_fixed,psnr_fixed,residual_adaptive,psnr_adaptive"));
}

#[test]
fn adaptive_compare_with_equal_arms_gives_equal_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::inpainting_preset();
    cfg.input = InputSource::Synthetic {
        width: 24,
        height: 24,
    };
    cfg.run.max_iters = 40;
    let out = cmd_adaptive_compare_with(
        &cfg,
        Arms {
            fixed: 0,
            adaptive: 0,
        },
        dir.path(),
    )
    .unwrap();
    assert_eq!(
        out.fixed.trace.to_csv_string(),
        out.adaptive.trace.to_csv_string()
    );
}

#[test]
fn metadata_reruns_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::deblurring_preset();
    cfg.input = InputSource::Synthetic {
        width: 24,
        height: 24,
    };
    cfg.run.max_iters = 30;
    let first = cmd_run(&cfg, dir.path()).unwrap();
    let again = ExperimentConfig::load(dir.path().join("meta.txt")).unwrap();
    let inst = Instance::prepare(&again).unwrap();
    let second = solve(&again, &inst).unwrap();
    assert_eq!(first.trace.to_csv_string(), second.to_csv_string());
    let meta = read_metadata(dir.path().join("meta.txt")).unwrap();
    assert_eq!(meta.get("instance", "psf_size"), Some("9x9"));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pnp-ista"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.cfg");
    std::fs::write(
        &cfg_path,
        "[problem]\nkind = inpainting\nmissing_fraction = 0.7\n\n[noise]\nsigma = 10/255\n\n\
         [nlm]\npatch_radius = 1\nwindow_radius = 3\nh = 0.2\n\n[run]\nmax_iters = 300\n\
         residual_tol = 1e-6\n\n[io]\ninput = synthetic:16x16\noutput = out\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let out = dir.path().join("a");
    let out = out.to_str().unwrap();

    let status = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["run", "--config", cfg, "--out", out, "--seed", "4"]), 0);
    assert!(Path::new(out).join("trace.csv").exists());
    assert_eq!(read(Path::new(out).join("meta.txt")).lines().find(|l| l.starts_with("mask_seed")), Some("mask_seed = 4"));
    assert_eq!(
        status(&["sweep", "--config", cfg, "--out", out, "--gamma", "0.5", "--gamma", "1.2"]),
        0
    );
    assert!(Path::new(out).join("gamma_1.2/output.pgm").exists());
    assert_eq!(status(&["analyze", "--config", cfg, "--out", out, "--gamma", "0.9"]), 0);
    assert_eq!(status(&["analyze", "--config", cfg, "--out", out, "--gamma", "2.5"]), 3);
    assert_eq!(status(&["run", "--config", cfg, "--out", out, "--gamma", "40"]), 2);
    assert_eq!(status(&["run", "--config", "/no/such.cfg"]), 1);
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["run", "--config", cfg, "--gamma", "0.5", "--gamma", "0.9"]), 1);

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[problem]\nkind = inpainting\nmissing_fraction = 1.5\n").unwrap();
    let o = bin().args(["run", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("problem.missing_fraction"), "{err}");
}

#[test]
fn binary_analyze_suggests_downscaling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("big.cfg");
    std::fs::write(&cfg_path, "[problem]\nkind = inpainting\n[io]\ninput = synthetic:80x80\n").unwrap();
    let o = bin()
        .args(["analyze", "--config", cfg_path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--analysis-size"));
}
