//! PnP-ISTA: a gradient step on `½‖Ax - y‖²` followed by the kernel denoiser,
//!
//! ```text
//! x_{k+1} = W (x_k - γ Aᵀ(A x_k - y)) = P x_k + q
//! ```
//!
//! The denoiser may be rebuilt from the current iterate for the first
//! `adapt_iters` iterations; after that it is frozen and the iteration is a
//! fixed affine map. Iterates are never clipped.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward_model::LinearOperator;
use crate::image_io::{psnr_slices, Image};
use crate::kernel_denoiser::{build_nlm, DenoiserMatrix, NlmParams};
use crate::spectral_analysis::{build_p_dense, build_q, spectral_radius};

/// Residual above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once `‖x_{k+1} - x_k‖₂` is at or below this.
    pub residual_tol: f64,
    /// Iterations that rebuild `W` from the current iterate before it is frozen.
    pub adapt_iters: usize,
    /// Keep a copy of the iterate every this many iterations (0 disables).
    pub snapshot_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 0.9,
            max_iters: 500,
            residual_tol: 1e-6,
            adapt_iters: 4,
            snapshot_every: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.gamma
            )));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "residual tolerance must be >= 0, got {}",
                self.residual_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ToleranceReached,
    MaxIters,
    DivergenceGuard,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::ToleranceReached => "tol-reached",
            Termination::MaxIters => "max-iters",
            Termination::DivergenceGuard => "divergence-guard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based: record `k` describes the step producing `x_k`.
    pub iter: usize,
    pub residual: f64,
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub final_iterate: Vec<f64>,
    pub termination: Termination,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl IterationTrace {
    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual)
    }

    /// CSV with header `iter,residual,psnr_db`; missing PSNR is an empty field.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iter,residual,psnr_db")?;
        for r in &self.records {
            match r.psnr_db {
                Some(p) => writeln!(out, "{},{},{}", r.iter, r.residual, p)?,
                None => writeln!(out, "{},{},", r.iter, r.residual)?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// `W (x - γ Aᵀ(Ax - y))`, given `aty = Aᵀy`.
fn step_with_aty(
    w: &DenoiserMatrix,
    op: &LinearOperator,
    gamma: f64,
    x: &[f64],
    aty: &[f64],
) -> Result<Vec<f64>> {
    let gx = op.apply_gram(x)?;
    let pre: Vec<f64> = x
        .iter()
        .zip(&gx)
        .zip(aty)
        .map(|((&xi, &gi), &bi)| xi - gamma * (gi - bi))
        .collect();
    w.apply(&pre)
}

/// One PnP-ISTA step in operator form. `gamma = 0` is a pure denoising step.
pub fn step(
    w: &DenoiserMatrix,
    op: &LinearOperator,
    gamma: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    Error::check_len(op.input_dim(), w.len())?;
    Error::check_len(op.input_dim(), x.len())?;
    let aty = op.apply_adjoint(y)?;
    step_with_aty(w, op, gamma, x, &aty)
}

/// Where `W` comes from during a run.
enum DenoiserSource<'a> {
    Frozen(&'a DenoiserMatrix),
    Adaptive {
        initial: DenoiserMatrix,
        params: NlmParams,
        width: usize,
        height: usize,
    },
}

/// Run PnP-ISTA with an NLM denoiser built from `guide`, rebuilt from the
/// iterate during the first `cfg.adapt_iters` iterations.
pub fn run(
    cfg: &RunConfig,
    y: &[f64],
    op: &LinearOperator,
    guide: &Image,
    params: &NlmParams,
    x0: &[f64],
    ground_truth: Option<&Image>,
) -> Result<IterationTrace> {
    cfg.validate()?;
    Error::check_len(op.input_dim(), guide.len())?;
    let initial = build_nlm(guide, params)?;
    let source = DenoiserSource::Adaptive {
        initial,
        params: *params,
        width: guide.width(),
        height: guide.height(),
    };
    iterate(cfg, y, op, source, x0, ground_truth)
}

/// Run PnP-ISTA with a fixed denoiser; `cfg.adapt_iters` is ignored.
pub fn run_frozen(
    cfg: &RunConfig,
    y: &[f64],
    op: &LinearOperator,
    w: &DenoiserMatrix,
    x0: &[f64],
    ground_truth: Option<&Image>,
) -> Result<IterationTrace> {
    cfg.validate()?;
    iterate(cfg, y, op, DenoiserSource::Frozen(w), x0, ground_truth)
}

fn iterate(
    cfg: &RunConfig,
    y: &[f64],
    op: &LinearOperator,
    source: DenoiserSource<'_>,
    x0: &[f64],
    ground_truth: Option<&Image>,
) -> Result<IterationTrace> {
    let n = op.input_dim();
    Error::check_len(n, x0.len())?;
    Error::check_len(op.output_dim(), y.len())?;
    if let Some(gt) = ground_truth {
        Error::check_len(n, gt.len())?;
    }
    let aty = op.apply_adjoint(y)?;

    let (mut current, adaptive) = match source {
        DenoiserSource::Frozen(w) => {
            Error::check_len(n, w.len())?;
            (std::borrow::Cow::Borrowed(w), None)
        }
        DenoiserSource::Adaptive {
            initial,
            params,
            width,
            height,
        } => {
            Error::check_len(n, initial.len())?;
            (std::borrow::Cow::Owned(initial), Some((params, width, height)))
        }
    };

    let mut x = x0.to_vec();
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut termination = Termination::MaxIters;
    for k in 0..cfg.max_iters {
        if let Some((params, width, height)) = adaptive {
            if k < cfg.adapt_iters {
                let guide = Image::new(width, height, x.clone())?;
                current = std::borrow::Cow::Owned(build_nlm(&guide, &params)?);
            }
        }
        let next = step_with_aty(&current, op, cfg.gamma, &x, &aty)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k + 1 });
        }
        let residual = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let psnr_db = match ground_truth {
            Some(gt) => Some(psnr_slices(gt.data(), &next)?),
            None => None,
        };
        x = next;
        records.push(IterationRecord {
            iter: k + 1,
            residual,
            psnr_db,
        });
        if cfg.snapshot_every > 0 && (k + 1) % cfg.snapshot_every == 0 {
            snapshots.push((k + 1, x.clone()));
        }
        if residual > DIVERGENCE_THRESHOLD {
            termination = Termination::DivergenceGuard;
            break;
        }
        if residual <= cfg.residual_tol {
            termination = Termination::ToleranceReached;
            break;
        }
    }
    Ok(IterationTrace {
        records,
        final_iterate: x,
        termination,
        snapshots,
    })
}

/// Solve `(I - P) x* = q` densely. Refuses when `ρ(P) >= 1`.
pub fn fixed_point(
    w: &DenoiserMatrix,
    op: &LinearOperator,
    gamma: f64,
    y: &[f64],
) -> Result<Vec<f64>> {
    let p = build_p_dense(w, op, gamma)?;
    let rho = spectral_radius(&p)?;
    if !(rho < 1.0) {
        return Err(Error::NotConvergent { rho });
    }
    solve_affine_fixed_point(&p, &build_q(w, op, gamma, y)?)
}

/// LU solve of `(I - P) x = q` with one step of iterative refinement. The
/// caller is responsible for `ρ(P) < 1`; a singular system is reported as
/// [`Error::NotConvergent`] with `rho = 1`.
pub fn solve_affine_fixed_point(p: &DMatrix<f64>, q: &[f64]) -> Result<Vec<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.ncols(),
        });
    }
    Error::check_len(n, q.len())?;
    let q = DVector::from_column_slice(q);
    let system = DMatrix::identity(n, n) - p;
    let lu = system.clone().lu();
    let mut x = lu.solve(&q).ok_or(Error::NotConvergent { rho: 1.0 })?;
    let r = &q - &system * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(x.as_slice().to_vec())
}
