//! Non-local means as an explicit sparse row-stochastic matrix `W = D⁻¹K`.
//!
//! Row `i` of `W` is supported on the square search window `Ω_i` (Chebyshev
//! radius `window_radius`, clipped at the border). The affinity is
//! `K_ij = exp(-d²(i,j) / h²)` where `d²` is the mean squared difference of the
//! patches around `i` and `j`, taken over the patch offsets that are valid for
//! both centers. That offset set is symmetric in `(i, j)`, so `K` is symmetric
//! bit-for-bit.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward_model::{check_cap, DEFAULT_DENSE_CAP};
use crate::image_io::{hex_digest, Image};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmParams {
    /// Patches are `(2r+1)²`.
    pub patch_radius: usize,
    /// Search windows are `(2S+1)²` before clipping.
    pub window_radius: usize,
    /// Kernel bandwidth in peak-1 intensity units.
    pub h: f64,
}

impl Default for NlmParams {
    fn default() -> Self {
        NlmParams {
            patch_radius: 3,
            window_radius: 10,
            h: 0.05,
        }
    }
}

impl NlmParams {
    /// Default geometry with `h = max(10 sigma, 0.05)`.
    pub fn for_noise(sigma: f64) -> Self {
        NlmParams {
            h: (10.0 * sigma).max(0.05),
            ..NlmParams::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "NLM bandwidth h must be positive, got {}",
                self.h
            )));
        }
        if self.window_radius < 1 {
            return Err(Error::InvalidArgument(
                "NLM window radius must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Sparse row-stochastic denoising matrix.
///
/// Stored in CSR layout: row `i` owns `indices[row_ptr[i]..row_ptr[i+1]]`, which
/// is exactly `Ω_i` in increasing order, with matching kernel values and weights.
#[derive(Debug, Clone)]
pub struct DenoiserMatrix {
    width: usize,
    height: usize,
    row_ptr: Vec<usize>,
    indices: Vec<usize>,
    kernel: Vec<f64>,
    weights: Vec<f64>,
    guide_hash: String,
}

impl DenoiserMatrix {
    /// Window of one: `W = I`.
    pub fn identity(width: usize, height: usize) -> Self {
        let n = width * height;
        DenoiserMatrix {
            width,
            height,
            row_ptr: (0..=n).collect(),
            indices: (0..n).collect(),
            kernel: vec![1.0; n],
            weights: vec![1.0; n],
            guide_hash: String::new(),
        }
    }

    /// Build from explicit symmetric kernel rows; each row is normalized to sum 1.
    ///
    /// `rows[i]` lists `(j, K_ij)` pairs. Entries must be positive, contain the
    /// diagonal, and satisfy `K_ij = K_ji` with matching supports.
    pub fn from_kernel_rows(
        width: usize,
        height: usize,
        mut rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let n = width * height;
        Error::check_len(n, rows.len())?;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let (mut indices, mut kernel) = (Vec::new(), Vec::new());
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if !row.iter().any(|&(j, _)| j == i) {
                return Err(Error::InvalidArgument(format!("row {i} misses its diagonal")));
            }
            for &(j, k) in row.iter() {
                if j >= n || !(k > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "invalid kernel entry ({i}, {j}) = {k}"
                    )));
                }
                indices.push(j);
                kernel.push(k);
            }
            row_ptr.push(indices.len());
        }
        let mut w = DenoiserMatrix {
            width,
            height,
            row_ptr,
            indices,
            kernel,
            weights: Vec::new(),
            guide_hash: String::new(),
        };
        for i in 0..n {
            for (j, k) in w.kernel_row(i) {
                if w.kernel_entry(j, i) != Some(k) {
                    return Err(Error::InvalidArgument(format!(
                        "kernel not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        w.normalize();
        Ok(w)
    }

    fn normalize(&mut self) {
        let n = self.len();
        let mut weights = vec![0.0; self.kernel.len()];
        for i in 0..n {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            let d: f64 = self.kernel[span.clone()].iter().sum();
            for k in span {
                weights[k] = self.kernel[k] / d;
            }
        }
        self.weights = weights;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `n`, the number of pixels.
    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of stored (in-window) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Hex SHA-256 of the guide image (empty for hand-built matrices).
    pub fn guide_hash(&self) -> &str {
        &self.guide_hash
    }

    /// `Ω_i` as a sorted index list (0-based).
    pub fn window(&self, i: usize) -> Result<&[usize]> {
        if i >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "pixel index {i} out of range 0..{}",
                self.len()
            )));
        }
        Ok(&self.indices[self.row_ptr[i]..self.row_ptr[i + 1]])
    }

    /// `(j, W_ij)` over `Ω_i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// `(j, K_ij)` over `Ω_i`.
    pub fn kernel_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.kernel[span].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.indices[span.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| span.start + k)
    }

    /// `W_ij`, zero outside the window.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.weights[k])
    }

    /// `K_ij` if `j ∈ Ω_i`.
    pub fn kernel_entry(&self, i: usize, j: usize) -> Option<f64> {
        self.position(i, j).map(|k| self.kernel[k])
    }

    /// Row sum `D_ii` of the kernel.
    pub fn degree(&self, i: usize) -> f64 {
        self.kernel[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum()
    }

    /// Sparse `W x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.len(), x.len())?;
        let out = (0..self.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                let span = self.row_ptr[i]..self.row_ptr[i + 1];
                self.indices[span.clone()]
                    .iter()
                    .zip(&self.weights[span])
                    .map(|(&j, &w)| w * x[j])
                    .sum()
            })
            .collect();
        Ok(out)
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        self.dense_capped(DEFAULT_DENSE_CAP)
    }

    pub fn dense_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.len();
        check_cap(n, cap)?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, w) in self.row(i) {
                m[(i, j)] = w;
            }
        }
        Ok(m)
    }

    /// Dense kernel `K` (zero outside windows).
    pub fn dense_kernel(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        check_cap(n, DEFAULT_DENSE_CAP)?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, k) in self.kernel_row(i) {
                m[(i, j)] = k;
            }
        }
        Ok(m)
    }

    /// Sparse triplets `i j w`, 1-based, one per line.
    pub fn write_triplets(&self, mut out: impl Write) -> std::io::Result<()> {
        for i in 0..self.len() {
            for (j, w) in self.row(i) {
                writeln!(out, "{} {} {}", i + 1, j + 1, w)?;
            }
        }
        Ok(())
    }
}

/// Mean squared difference of the patches at `(ax, ay)` and `(bx, by)` over
/// offsets valid for both.
fn patch_distance(guide: &Image, r: usize, (ax, ay): (usize, usize), (bx, by): (usize, usize)) -> f64 {
    let (w, h) = (guide.width() as isize, guide.height() as isize);
    let r = r as isize;
    let (ax, ay, bx, by) = (ax as isize, ay as isize, bx as isize, by as isize);
    // offsets with both centers inside the image
    let dx_lo = (-r).max(-ax).max(-bx);
    let dx_hi = r.min(w - 1 - ax).min(w - 1 - bx);
    let dy_lo = (-r).max(-ay).max(-by);
    let dy_hi = r.min(h - 1 - ay).min(h - 1 - by);
    let data = guide.data();
    let mut acc = 0.0;
    for dy in dy_lo..=dy_hi {
        let ra = ((ay + dy) * w) as usize;
        let rb = ((by + dy) * w) as usize;
        for dx in dx_lo..=dx_hi {
            let d = data[ra + (ax + dx) as usize] - data[rb + (bx + dx) as usize];
            acc += d * d;
        }
    }
    let count = (dy_hi - dy_lo + 1) * (dx_hi - dx_lo + 1);
    acc / count as f64
}

/// Build the NLM matrix from `guide`.
pub fn build_nlm(guide: &Image, params: &NlmParams) -> Result<DenoiserMatrix> {
    params.validate()?;
    let (w, h) = (guide.width(), guide.height());
    let n = w * h;
    if n == 0 {
        return Err(Error::InvalidArgument("empty guide image".into()));
    }
    let s = params.window_radius;
    let inv_h2 = 1.0 / (params.h * params.h);
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let (px, py) = (i % w, i / w);
            let y_range = py.saturating_sub(s)..=(py + s).min(h - 1);
            let x_range = px.saturating_sub(s)..=(px + s).min(w - 1);
            let cap = y_range.clone().count() * x_range.clone().count();
            let mut idx = Vec::with_capacity(cap);
            let mut ker = Vec::with_capacity(cap);
            for qy in y_range {
                for qx in x_range.clone() {
                    let d2 = patch_distance(guide, params.patch_radius, (px, py), (qx, qy));
                    idx.push(qy * w + qx);
                    ker.push((-d2 * inv_h2).exp());
                }
            }
            (idx, ker)
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let nnz = rows.iter().map(|r| r.0.len()).sum();
    let (mut indices, mut kernel) = (Vec::with_capacity(nnz), Vec::with_capacity(nnz));
    for (idx, ker) in rows {
        indices.extend(idx);
        kernel.extend(ker);
        row_ptr.push(indices.len());
    }
    let mut hasher = Sha256::new();
    for v in guide.data() {
        hasher.update(v.to_le_bytes());
    }
    let mut wm = DenoiserMatrix {
        width: w,
        height: h,
        row_ptr,
        indices,
        kernel,
        weights: Vec::new(),
        guide_hash: hex_digest(hasher),
    };
    wm.normalize();
    Ok(wm)
}
