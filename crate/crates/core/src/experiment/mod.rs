//! Experiment harness: builds a degraded instance from a config, runs it, and
//! writes traces, images, reports, plots and re-runnable metadata.
//!
//! Every command writes into its own output directory. Sweeps give each step
//! size a subdirectory so parallel jobs never share a file.

pub mod config;
pub mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{Document, Entry, ExperimentConfig, InputSource, Problem, DEFAULT_BLUR_SIZE};
pub use plot::{Panel, Series};

use crate::error::{Error, Result};
use crate::forward_model::{LinearOperator, OperatorKind, Psf, DEFAULT_DENSE_CAP};
use crate::image_io::{
    gaussian_noise, median_filter_init, sha256_hex, test_pattern, write_pgm, Image,
    Mask,
};
use crate::kernel_denoiser::build_nlm;
use crate::pnp_engine::{self, IterationTrace, RunConfig, Termination};
use crate::spectral_analysis::{analyze, proof_identities, ConvergenceReport, ProofIdentityTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_UNCERTIFIED: i32 = 3;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. }
        | Error::EigenNoConvergence { .. }
        | Error::NotConvergent { .. }
        | Error::NoCertifiedStep { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// A degraded problem ready to solve.
#[derive(Debug, Clone)]
pub struct Instance {
    pub clean: Image,
    pub op: LinearOperator,
    /// Noisy measurements, in the operator's output space.
    pub y: Vec<f64>,
    pub x0: Image,
    /// SHA-256 of the input file, or of the synthetic scene.
    pub input_hash: String,
}

impl Instance {
    /// Build the instance described by `cfg` at the input's native size.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let (clean, input_hash) = load_input(&cfg.input)?;
        Self::from_clean(cfg, clean, input_hash)
    }

    /// Build the instance from an already loaded clean image.
    pub fn from_clean(cfg: &ExperimentConfig, clean: Image, input_hash: String) -> Result<Self> {
        let (w, h) = (clean.width(), clean.height());
        let op = match &cfg.problem {
            Problem::Inpainting {
                missing_fraction,
                mask_seed,
            } => LinearOperator::inpainting(&Mask::random(w, h, *missing_fraction, *mask_seed)?)?,
            Problem::Deblurring { psf, blur_size } => {
                LinearOperator::deblurring(load_psf(psf, *blur_size)?, w, h)?
            }
            Problem::Superresolution {
                psf,
                blur_size,
                factor,
            } => LinearOperator::superresolution(load_psf(psf, *blur_size)?, *factor, w, h)?,
        };
        let mut y = op.apply(clean.data())?;
        let noise = gaussian_noise(y.len(), cfg.noise_sigma, cfg.noise_seed)?;
        for (v, e) in y.iter_mut().zip(noise) {
            *v += e;
        }
        let x0 = initial_estimate(&op, &y)?;
        Ok(Instance {
            clean,
            op,
            y,
            x0,
            input_hash,
        })
    }

    /// The measurements as an image, when they have one: zero-filled for
    /// inpainting, the decimated grid for superresolution.
    pub fn observed_image(&self) -> Result<Image> {
        let (w, h) = (self.op.width(), self.op.height());
        match self.op.kind() {
            OperatorKind::Inpainting => Image::new(w, h, self.op.apply_adjoint(&self.y)?),
            OperatorKind::Deblurring => Image::new(w, h, self.y.clone()),
            OperatorKind::Superresolution => {
                let f = self.op.decimation_factor().unwrap_or(1);
                Image::new(w / f, h / f, self.y.clone())
            }
        }
    }
}

/// Median fill for inpainting, the observation itself for deblurring, and a
/// nearest-neighbor upsampling for superresolution.
pub fn initial_estimate(op: &LinearOperator, y: &[f64]) -> Result<Image> {
    let (w, h) = (op.width(), op.height());
    match op.kind() {
        OperatorKind::Inpainting => {
            let mask = op.mask().expect("inpainting operator has a mask");
            median_filter_init(&Image::new(w, h, op.apply_adjoint(y)?)?, mask)
        }
        OperatorKind::Deblurring => Image::new(w, h, y.to_vec()),
        OperatorKind::Superresolution => {
            let f = op.decimation_factor().expect("superresolution has a factor");
            Error::check_len(op.output_dim(), y.len())?;
            let lw = w / f;
            let data = (0..h)
                .flat_map(|py| (0..w).map(move |px| (py / f) * lw + px / f))
                .map(|k| y[k])
                .collect();
            Image::new(w, h, data)
        }
    }
}

fn load_input(input: &InputSource) -> Result<(Image, String)> {
    match input {
        InputSource::Synthetic { width, height } => {
            let img = test_pattern(*width, *height)?;
            let hash = img.content_hash();
            Ok((img, hash))
        }
        InputSource::Pgm(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            Ok((crate::image_io::parse_pgm(&bytes)?, sha256_hex(&bytes)))
        }
    }
}

fn load_psf(path: &Option<PathBuf>, blur_size: usize) -> Result<Psf> {
    match path {
        Some(p) => Psf::load(p),
        None => Psf::uniform(blur_size),
    }
}

fn hash_values(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Solve one instance with the config's run settings. The NLM matrix is
/// built from `x0` and rebuilt from the iterate for `adapt_iters` iterations.
pub fn solve(cfg: &ExperimentConfig, inst: &Instance) -> Result<IterationTrace> {
    pnp_engine::run(
        &cfg.run,
        &inst.y,
        &inst.op,
        &inst.x0,
        &cfg.nlm,
        inst.x0.data(),
        Some(&inst.clean),
    )
}

/// Artifacts of a single run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: IterationTrace,
    pub output: Image,
    pub dir: PathBuf,
}

/// Degrade, solve, and write `trace.csv`, `output.pgm`, `observed.pgm`,
/// `init.pgm` and `meta.txt` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let inst = Instance::prepare(cfg)?;
    run_into(cfg, &inst, out, "")
}

fn run_into(cfg: &ExperimentConfig, inst: &Instance, out: &Path, extra_meta: &str) -> Result<RunOutcome> {
    let trace = solve(cfg, inst)?;
    create_dir(out)?;
    let output = inst.x0.with_data(trace.final_iterate.clone())?;
    let csv = trace.to_csv_string();
    write_file(&out.join("trace.csv"), &csv)?;
    write_pgm(&output, out.join("output.pgm"))?;
    write_pgm(&inst.observed_image()?, out.join("observed.pgm"))?;
    write_pgm(&inst.x0, out.join("init.pgm"))?;
    let mut meta = run_metadata(cfg, inst, out);
    let _ = writeln!(meta, "\n[result]");
    let _ = writeln!(meta, "termination = {}", trace.termination);
    let _ = writeln!(meta, "iterations = {}", trace.records.len());
    if let Some(r) = trace.records.last() {
        let _ = writeln!(meta, "final_residual = {}", r.residual);
        if let Some(p) = r.psnr_db {
            let _ = writeln!(meta, "final_psnr_db = {p}");
        }
    }
    let _ = writeln!(meta, "\n[hashes]");
    write_instance_hashes(&mut meta, inst);
    let _ = writeln!(meta, "output = {}", output.content_hash());
    let _ = writeln!(meta, "trace_csv = {}", sha256_hex(csv.as_bytes()));
    meta.push_str(extra_meta);
    write_file(&out.join("meta.txt"), meta)?;
    Ok(RunOutcome {
        trace,
        output,
        dir: out.to_path_buf(),
    })
}

/// Config sections with the output directory pointed at `out`.
fn run_metadata(cfg: &ExperimentConfig, inst: &Instance, out: &Path) -> String {
    let mut c = cfg.clone();
    c.output = absolute(out);
    if let InputSource::Pgm(p) = &c.input {
        c.input = InputSource::Pgm(absolute(p));
    }
    let mut s = c.to_text();
    let _ = writeln!(s, "\n[instance]");
    let _ = writeln!(s, "width = {}", inst.clean.width());
    let _ = writeln!(s, "height = {}", inst.clean.height());
    let _ = writeln!(s, "operator = {}", inst.op.kind());
    if let Some(psf) = inst.op.psf() {
        let _ = writeln!(s, "psf_size = {}x{}", psf.height(), psf.width());
    }
    s
}

fn write_instance_hashes(s: &mut String, inst: &Instance) {
    let _ = writeln!(s, "input = {}", inst.input_hash);
    let _ = writeln!(s, "clean = {}", inst.clean.content_hash());
    let _ = writeln!(s, "measurements = {}", hash_values(&inst.y));
    let _ = writeln!(s, "init = {}", inst.x0.content_hash());
    if let Some(psf) = inst.op.psf() {
        let _ = writeln!(s, "psf = {}", sha256_hex(psf.to_text().as_bytes()));
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Parse a `meta.txt`.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<Document> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Document::parse(&text)
}

/// Subdirectory name used by sweeps for step size `gamma`.
pub fn gamma_dir_name(gamma: f64) -> String {
    format!("gamma_{gamma}")
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub gammas: Vec<f64>,
    pub runs: Vec<RunOutcome>,
}

/// One run per step size on a shared instance, in parallel. Writes each run
/// under `gamma_<γ>/`, plus a combined `trace.csv`, `plot.svg` and `meta.txt`.
pub fn cmd_sweep(cfg: &ExperimentConfig, gammas: &[f64], out: &Path) -> Result<SweepOutcome> {
    if gammas.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one step size".into()));
    }
    for (k, g) in gammas.iter().enumerate() {
        RunConfig {
            gamma: *g,
            ..cfg.run
        }
        .validate()?;
        if gammas[..k].contains(g) {
            return Err(Error::InvalidArgument(format!("step size {g} listed twice")));
        }
    }
    let inst = Instance::prepare(cfg)?;
    create_dir(out)?;
    let runs = gammas
        .par_iter()
        .map(|&gamma| {
            let mut c = cfg.clone();
            c.run.gamma = gamma;
            run_into(&c, &inst, &out.join(gamma_dir_name(gamma)), "")
        })
        .collect::<Result<Vec<_>>>()?;

    let labels: Vec<String> = gammas.iter().map(|g| format!("g{g}")).collect();
    let traces: Vec<&IterationTrace> = runs.iter().map(|r| &r.trace).collect();
    let csv = combined_csv(&labels, &traces);
    write_file(&out.join("trace.csv"), &csv)?;
    let series_labels: Vec<String> = gammas.iter().map(|g| format!("gamma = {g}")).collect();
    write_file(&out.join("plot.svg"), trace_plot(&series_labels, &traces))?;

    let mut meta = run_metadata(cfg, &inst, out);
    let _ = writeln!(meta, "\n[sweep]");
    let list: Vec<String> = gammas.iter().map(|g| g.to_string()).collect();
    let _ = writeln!(meta, "gammas = {}", list.join(","));
    for (g, r) in gammas.iter().zip(&runs) {
        let _ = writeln!(
            meta,
            "{} = {} after {} iterations",
            gamma_dir_name(*g),
            r.trace.termination,
            r.trace.records.len()
        );
    }
    let _ = writeln!(meta, "\n[hashes]");
    write_instance_hashes(&mut meta, &inst);
    let _ = writeln!(meta, "trace_csv = {}", sha256_hex(csv.as_bytes()));
    write_file(&out.join("meta.txt"), meta)?;
    Ok(SweepOutcome {
        gammas: gammas.to_vec(),
        runs,
    })
}

/// `iter`, then `residual_<label>,psnr_<label>` per trace; rows run to the
/// longest trace and shorter traces leave their cells empty.
pub fn combined_csv(labels: &[String], traces: &[&IterationTrace]) -> String {
    let mut s = String::from("iter");
    for l in labels {
        let _ = write!(s, ",residual_{l},psnr_{l}");
    }
    s.push('\n');
    let rows = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    for k in 0..rows {
        let _ = write!(s, "{}", k + 1);
        for t in traces {
            match t.records.get(k) {
                Some(r) => {
                    let _ = write!(s, ",{},", r.residual);
                    if let Some(p) = r.psnr_db {
                        let _ = write!(s, "{p}");
                    }
                }
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}

/// PSNR and log-scale residual panels.
pub fn trace_plot(labels: &[String], traces: &[&IterationTrace]) -> String {
    let series = |f: &dyn Fn(&pnp_engine::IterationRecord) -> Option<f64>| -> Vec<Series> {
        labels
            .iter()
            .zip(traces)
            .map(|(l, t)| Series {
                label: l.clone(),
                points: t
                    .records
                    .iter()
                    .filter_map(|r| f(r).map(|v| (r.iter as f64, v)))
                    .collect(),
            })
            .collect()
    };
    plot::render(&[
        Panel {
            title: "PSNR".into(),
            x_label: "iteration".into(),
            y_label: "PSNR (dB)".into(),
            log_y: false,
            series: series(&|r| r.psnr_db),
        },
        Panel {
            title: "Residual".into(),
            x_label: "iteration".into(),
            y_label: "||x_k - x_{k-1}||".into(),
            log_y: true,
            series: series(&|r| Some(r.residual)),
        },
    ])
}

/// Default step-size grid for the disk identity table.
pub fn proof_grid(gamma: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=20).map(|k| k as f64 / 10.0).collect();
    grid.push(gamma);
    grid
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub report: ConvergenceReport,
    pub identities: ProofIdentityTable,
    pub width: usize,
    pub height: usize,
}

impl AnalysisOutcome {
    pub fn certified(&self) -> bool {
        self.report.gershgorin.certified
    }

    pub fn exit_code(&self) -> i32 {
        if self.certified() {
            EXIT_OK
        } else {
            EXIT_UNCERTIFIED
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = self.report.to_text();
        let t = &self.identities;
        let _ = writeln!(s, "[proof_identities]");
        let _ = writeln!(s, "max_zero_gamma_error = {:e}", t.max_zero_identity_error());
        let _ = writeln!(s, "max_affine_error = {:e}", t.max_affine_error());
        let _ = writeln!(s, "max_slope_error = {:e}", t.max_slope_error());
        let sloped = t.rows.iter().filter(|r| r.measured_slope.is_some()).count();
        let _ = writeln!(s, "rows_with_measured_slope = {sloped}");
        let min_beta = t.rows.iter().map(|r| r.beta).fold(f64::INFINITY, f64::min);
        let _ = writeln!(s, "min_beta = {min_beta}");
        for g in &t.grid {
            let _ = writeln!(
                s,
                "grid gamma = {}: max_right = {}, min_left = {}, certified = {}",
                g.gamma, g.max_right, g.min_left, g.certified
            );
        }
        s
    }
}

/// Stability analysis of `P(gamma)` on the config's instance, downscaled to
/// `analysis_size`² when set. Writes `report.txt`, `rows.csv` and `meta.txt`.
pub fn cmd_analyze(cfg: &ExperimentConfig, gamma: f64, out: &Path) -> Result<AnalysisOutcome> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step size must be >= 0, got {gamma}"
        )));
    }
    let (mut clean, input_hash) = load_input(&cfg.input)?;
    if let Some(n) = cfg.analysis_size {
        clean = clean.resize_to(n, n)?;
    }
    let n = clean.len();
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::InvalidArgument(format!(
            "analysis instance has {}x{} = {n} pixels, above the dense cap of {DEFAULT_DENSE_CAP}; \
             downscale it with --analysis-size (for example 32)",
            clean.width(),
            clean.height()
        )));
    }
    let inst = Instance::from_clean(cfg, clean, input_hash)?;
    let w = build_nlm(&inst.x0, &cfg.nlm)?;
    let report = analyze(&w, &inst.op, gamma, cfg.analysis_tol)?;
    let identities = proof_identities(&w, &inst.op, &proof_grid(gamma))?;
    let outcome = AnalysisOutcome {
        report,
        identities,
        width: inst.clean.width(),
        height: inst.clean.height(),
    };

    create_dir(out)?;
    let text = outcome.to_text();
    write_file(&out.join("report.txt"), &text)?;
    let mut rows = Vec::new();
    outcome
        .report
        .write_rows_csv(&mut rows)
        .map_err(|e| Error::io(out.join("rows.csv"), e))?;
    write_file(&out.join("rows.csv"), &rows)?;
    let mut meta = run_metadata(cfg, &inst, out);
    let _ = writeln!(meta, "\n[result]");
    let _ = writeln!(meta, "gamma = {gamma}");
    let _ = writeln!(meta, "certified = {}", outcome.certified());
    let _ = writeln!(meta, "spectral_radius = {}", outcome.report.rho);
    let _ = writeln!(meta, "\n[hashes]");
    write_instance_hashes(&mut meta, &inst);
    let _ = writeln!(meta, "denoiser_guide = {}", w.guide_hash());
    let _ = writeln!(meta, "report = {}", sha256_hex(text.as_bytes()));
    write_file(&out.join("meta.txt"), meta)?;
    Ok(outcome)
}

/// Adaptation lengths of the two arms of [`cmd_adaptive_compare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arms {
    pub fixed: usize,
    pub adaptive: usize,
}

impl Arms {
    /// `W` frozen from the start against `W` rebuilt every iteration.
    pub fn standard(max_iters: usize) -> Self {
        Arms {
            fixed: 0,
            adaptive: max_iters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub fixed: RunOutcome,
    pub adaptive: RunOutcome,
}

/// Fixed against iteration-adaptive NLM on the same instance. Each arm goes
/// to its own subdirectory (`fixed/`, `adaptive/`); the combined CSV, plot and
/// metadata go to `out`.
pub fn cmd_adaptive_compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareOutcome> {
    cmd_adaptive_compare_with(cfg, Arms::standard(cfg.run.max_iters), out)
}

pub fn cmd_adaptive_compare_with(
    cfg: &ExperimentConfig,
    arms: Arms,
    out: &Path,
) -> Result<CompareOutcome> {
    cfg.run.validate()?;
    let inst = Instance::prepare(cfg)?;
    create_dir(out)?;
    let arm = |name: &str, adapt_iters: usize| {
        let mut c = cfg.clone();
        c.run.adapt_iters = adapt_iters;
        let extra = format!("\n[arm]\nname = {name}\n");
        run_into(&c, &inst, &out.join(name), &extra)
    };
    let (fixed, adaptive) = rayon::join(|| arm("fixed", arms.fixed), || arm("adaptive", arms.adaptive));
    let (fixed, adaptive) = (fixed?, adaptive?);

    let labels = vec!["fixed".to_string(), "adaptive".to_string()];
    let traces = [&fixed.trace, &adaptive.trace];
    let csv = combined_csv(&labels, &traces);
    write_file(&out.join("trace.csv"), &csv)?;
    write_file(&out.join("plot.svg"), trace_plot(&labels, &traces))?;

    let mut meta = run_metadata(cfg, &inst, out);
    for (name, adapt, o) in [
        ("fixed", arms.fixed, &fixed),
        ("adaptive", arms.adaptive, &adaptive),
    ] {
        let _ = writeln!(meta, "\n[arm.{name}]");
        let _ = writeln!(meta, "adapt_iters = {adapt}");
        let _ = writeln!(meta, "dir = {}", absolute(&o.dir).display());
        let _ = writeln!(meta, "termination = {}", o.trace.termination);
        let _ = writeln!(meta, "iterations = {}", o.trace.records.len());
    }
    let _ = writeln!(meta, "\n[hashes]");
    write_instance_hashes(&mut meta, &inst);
    let _ = writeln!(meta, "trace_csv = {}", sha256_hex(csv.as_bytes()));
    write_file(&out.join("meta.txt"), meta)?;
    Ok(CompareOutcome { fixed, adaptive })
}

/// Exit status for a finished run: divergence counts as a numerical failure.
pub fn run_exit_code(trace: &IterationTrace) -> i32 {
    match trace.termination {
        Termination::DivergenceGuard => EXIT_NUMERICAL,
        _ => EXIT_OK,
    }
}
