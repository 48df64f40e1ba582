//! Linear forward models `A` for inpainting, deblurring and superresolution.
//!
//! Every operator works on row-major `width`x`height` rasters and exposes
//! `A x`, `Aᵀ z` and `AᵀA x`, plus dense materializations for small instances.
//! Blur is a periodic (circulant) convolution.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image_io::Mask;

/// Largest `n` for which dense matrices are built unless a caller raises it.
pub const DEFAULT_DENSE_CAP: usize = 4096;

pub(crate) fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::OverDenseCap { n, cap })
    } else {
        Ok(())
    }
}

/// Point spread function, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    height: usize,
    width: usize,
    taps: Vec<f64>,
}

impl Psf {
    /// Validates nonnegativity and rescales the taps to sum to one.
    pub fn new(height: usize, width: usize, taps: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("PSF dimensions must be positive".into()));
        }
        Error::check_len(height * width, taps.len())?;
        if let Some(t) = taps.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "PSF taps must be finite and nonnegative, found {t}"
            )));
        }
        let sum: f64 = taps.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument("PSF taps sum to zero".into()));
        }
        let taps = taps.into_iter().map(|t| t / sum).collect();
        Ok(Psf {
            height,
            width,
            taps,
        })
    }

    pub fn delta() -> Self {
        Psf {
            height: 1,
            width: 1,
            taps: vec![1.0],
        }
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Psf::new(size, size, vec![1.0; size * size])
    }

    /// Plain text: first line `h w`, then `h*w` whitespace-separated taps, row-major.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .by_ref()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::InvalidArgument("empty PSF file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad PSF header {header:?}: {e}")))?;
        if dims.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "PSF header must be `h w`, got {header:?}"
            )));
        }
        let taps: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad PSF tap {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Psf::new(dims[0], dims[1], taps)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Psf::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.height, self.width);
        for row in self.taps.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|t| t.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Offsets `(dy, dx, tap)` relative to the PSF center `(h/2, w/2)`.
    fn offsets(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        let (cy, cx) = ((self.height / 2) as isize, (self.width / 2) as isize);
        self.taps.iter().enumerate().filter(|(_, &t)| t != 0.0).map(move |(k, &t)| {
            let a = (k / self.width) as isize;
            let b = (k % self.width) as isize;
            (a - cy, b - cx, t)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Inpainting,
    Deblurring,
    Superresolution,
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OperatorKind::Inpainting => "inpainting",
            OperatorKind::Deblurring => "deblurring",
            OperatorKind::Superresolution => "superresolution",
        })
    }
}

#[derive(Debug, Clone)]
enum Model {
    Inpainting { mask: Mask, observed: Vec<usize> },
    Blur { psf: Psf },
    Superresolution { psf: Psf, factor: usize },
}

/// The forward operator `A: R^n -> R^m`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    width: usize,
    height: usize,
    model: Model,
}

impl LinearOperator {
    /// Keeps the observed pixels in raster order.
    pub fn inpainting(mask: &Mask) -> Result<Self> {
        let observed: Vec<usize> = (0..mask.len()).filter(|&i| mask.is_observed(i)).collect();
        if observed.is_empty() {
            return Err(Error::InvalidArgument(
                "inpainting mask has no observed pixels".into(),
            ));
        }
        Ok(LinearOperator {
            width: mask.width(),
            height: mask.height(),
            model: Model::Inpainting {
                mask: mask.clone(),
                observed,
            },
        })
    }

    /// Periodic convolution with `psf` on a `width`x`height` grid.
    pub fn deblurring(psf: Psf, width: usize, height: usize) -> Result<Self> {
        check_psf_fits(&psf, width, height)?;
        Ok(LinearOperator {
            width,
            height,
            model: Model::Blur { psf },
        })
    }

    /// Blur, then keep every `factor`-th pixel in each direction starting at the top-left.
    pub fn superresolution(psf: Psf, factor: usize, width: usize, height: usize) -> Result<Self> {
        if factor == 0 || !width.is_multiple_of(factor) || !height.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "decimation factor {factor} must divide {width}x{height}"
            )));
        }
        check_psf_fits(&psf, width, height)?;
        Ok(LinearOperator {
            width,
            height,
            model: Model::Superresolution { psf, factor },
        })
    }

    pub fn kind(&self) -> OperatorKind {
        match self.model {
            Model::Inpainting { .. } => OperatorKind::Inpainting,
            Model::Blur { .. } => OperatorKind::Deblurring,
            Model::Superresolution { .. } => OperatorKind::Superresolution,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn input_dim(&self) -> usize {
        self.width * self.height
    }

    pub fn output_dim(&self) -> usize {
        match &self.model {
            Model::Inpainting { observed, .. } => observed.len(),
            Model::Blur { .. } => self.input_dim(),
            Model::Superresolution { factor, .. } => self.input_dim() / (factor * factor),
        }
    }

    /// Observation mask, for inpainting operators.
    pub fn mask(&self) -> Option<&Mask> {
        match &self.model {
            Model::Inpainting { mask, .. } => Some(mask),
            _ => None,
        }
    }

    pub fn psf(&self) -> Option<&Psf> {
        match &self.model {
            Model::Inpainting { .. } => None,
            Model::Blur { psf } | Model::Superresolution { psf, .. } => Some(psf),
        }
    }

    pub fn decimation_factor(&self) -> Option<usize> {
        match &self.model {
            Model::Superresolution { factor, .. } => Some(*factor),
            _ => None,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim(), x.len())?;
        Ok(match &self.model {
            Model::Inpainting { observed, .. } => observed.iter().map(|&i| x[i]).collect(),
            Model::Blur { psf } => self.convolve(psf, x, false),
            Model::Superresolution { psf, factor } => {
                let blurred = self.convolve(psf, x, false);
                self.decimate(&blurred, *factor)
            }
        })
    }

    pub fn apply_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.output_dim(), z.len())?;
        Ok(match &self.model {
            Model::Inpainting { observed, .. } => {
                let mut out = vec![0.0; self.input_dim()];
                for (&i, &v) in observed.iter().zip(z) {
                    out[i] = v;
                }
                out
            }
            Model::Blur { psf } => self.convolve(psf, z, true),
            Model::Superresolution { psf, factor } => {
                let up = self.zero_fill(z, *factor);
                self.convolve(psf, &up, true)
            }
        })
    }

    /// `AᵀA x`. Inpainting zeroes the unobserved coordinates directly.
    pub fn apply_gram(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim(), x.len())?;
        match &self.model {
            Model::Inpainting { mask, .. } => Ok(x
                .iter()
                .zip(mask.as_slice())
                .map(|(&v, &o)| if o { v } else { 0.0 })
                .collect()),
            _ => self.apply_adjoint(&self.apply(x)?),
        }
    }

    /// `out[p] = Σ_k psf[k] x[p - off_k]`, or the correlation (adjoint) when `adjoint`.
    fn convolve(&self, psf: &Psf, x: &[f64], adjoint: bool) -> Vec<f64> {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![0.0; x.len()];
        for (dy, dx, t) in psf.offsets() {
            let (dy, dx) = if adjoint { (dy, dx) } else { (-dy, -dx) };
            for py in 0..h {
                let sy = (py + dy).rem_euclid(h);
                let src = &x[(sy * w) as usize..((sy + 1) * w) as usize];
                let dst = &mut out[(py * w) as usize..((py + 1) * w) as usize];
                for px in 0..w {
                    let sx = (px + dx).rem_euclid(w) as usize;
                    dst[px as usize] += t * src[sx];
                }
            }
        }
        out
    }

    fn decimate(&self, x: &[f64], factor: usize) -> Vec<f64> {
        let (ow, oh) = (self.width / factor, self.height / factor);
        let mut out = Vec::with_capacity(ow * oh);
        for oy in 0..oh {
            for ox in 0..ow {
                out.push(x[oy * factor * self.width + ox * factor]);
            }
        }
        out
    }

    fn zero_fill(&self, z: &[f64], factor: usize) -> Vec<f64> {
        let ow = self.width / factor;
        let mut out = vec![0.0; self.input_dim()];
        for (k, &v) in z.iter().enumerate() {
            let (oy, ox) = (k / ow, k % ow);
            out[oy * factor * self.width + ox * factor] = v;
        }
        out
    }

    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        self.dense_matrix_capped(DEFAULT_DENSE_CAP)
    }

    /// `m x n` matrix whose column `j` is `A e_j`.
    pub fn dense_matrix_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.input_dim();
        check_cap(n, cap)?;
        let mut a = DMatrix::zeros(self.output_dim(), n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e)?;
            a.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(a)
    }

    pub fn dense_gram(&self) -> Result<DMatrix<f64>> {
        self.dense_gram_capped(DEFAULT_DENSE_CAP)
    }

    /// `n x n` matrix `AᵀA`, built column by column from [`Self::apply_gram`]
    /// and then symmetrized by averaging with its transpose.
    pub fn dense_gram_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.input_dim();
        check_cap(n, cap)?;
        let mut g = DMatrix::zeros(n, n);
        if let Model::Inpainting { observed, .. } = &self.model {
            for &i in observed {
                g[(i, i)] = 1.0;
            }
            return Ok(g);
        }
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply_gram(&e)?;
            g.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok((&g + g.transpose()) * 0.5)
    }
}

fn check_psf_fits(psf: &Psf, width: usize, height: usize) -> Result<()> {
    if psf.height > height || psf.width > width {
        return Err(Error::InvalidArgument(format!(
            "PSF {}x{} larger than image {width}x{height}",
            psf.height, psf.width
        )));
    }
    Ok(())
}
