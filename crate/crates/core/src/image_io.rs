//! Grayscale rasters, PGM I/O, synthetic degradations and quality metrics.
//!
//! Intensities live in `[0, 1]` internally. Iterates are allowed to leave that
//! range; only encoding to PGM clamps.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, PgmErrorKind, Result};

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Error::check_len(width * height, data.len())?;
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Same geometry, new pixel values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Image::new(self.width, self.height, data)
    }

    /// Hex SHA-256 of the little-endian f64 raster plus dimensions.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        for v in &self.data {
            hasher.update(v.to_le_bytes());
        }
        hex_digest(hasher)
    }

    /// Box-average resample to `width`x`height`.
    pub fn resize_to(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("target size must be positive".into()));
        }
        let mut out = Vec::with_capacity(width * height);
        for ty in 0..height {
            let y0 = ty * self.height / height;
            let y1 = ((ty + 1) * self.height / height).max(y0 + 1);
            for tx in 0..width {
                let x0 = tx * self.width / width;
                let x1 = ((tx + 1) * self.width / width).max(x0 + 1);
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += self.get(x, y);
                    }
                }
                out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        Image::new(width, height, out)
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_digest(hasher)
}

/// Per-pixel observation flags for inpainting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    observed: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, observed: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
        }
        Error::check_len(width * height, observed.len())?;
        Ok(Mask {
            width,
            height,
            observed,
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Mask::new(width, height, vec![true; width * height])
    }

    /// Each pixel is independently unobserved with probability `missing_fraction`.
    pub fn random(width: usize, height: usize, missing_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&missing_fraction) {
            return Err(Error::InvalidArgument(format!(
                "missing fraction must lie in [0, 1), got {missing_fraction}"
            )));
        }
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let observed = (0..width * height)
            .map(|_| rng.gen::<f64>() >= missing_fraction)
            .collect();
        Mask::new(width, height, observed)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    pub fn count_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn set_observed(&mut self, i: usize, observed: bool) {
        self.observed[i] = observed;
    }

    /// 1.0 for observed pixels, 0.0 otherwise.
    pub fn to_image(&self) -> Image {
        let data = self
            .observed
            .iter()
            .map(|&o| if o { 1.0 } else { 0.0 })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Pixels at or above half intensity count as observed.
    pub fn from_image(img: &Image) -> Self {
        Mask {
            width: img.width,
            height: img.height,
            observed: img.data.iter().map(|&v| v >= 0.5).collect(),
        }
    }
}

fn pgm_err(offset: usize, kind: PgmErrorKind) -> Error {
    Error::Pgm { offset, kind }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<(usize, &'a str)> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .map(|s| (start, s))
    }

    fn header_uint(&mut self, what: &'static str) -> Result<usize> {
        let (at, tok) = self
            .token()
            .ok_or_else(|| pgm_err(self.pos, PgmErrorKind::MalformedHeader(what)))?;
        tok.parse::<usize>()
            .map_err(|_| pgm_err(at, PgmErrorKind::MalformedHeader(what)))
    }
}

/// Decode a P5 (binary) or P2 (ASCII) PGM byte stream.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = match bytes.get(0..2) {
        Some(m) => m,
        None => {
            return Err(pgm_err(
                0,
                PgmErrorKind::MalformedHeader("missing magic number"),
            ))
        }
    };
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(pgm_err(
                0,
                PgmErrorKind::UnsupportedMagic(String::from_utf8_lossy(other).into_owned()),
            ))
        }
    };
    cur.pos = 2;
    let width = cur.header_uint("width")?;
    let height = cur.header_uint("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.header_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(pgm_err(2, PgmErrorKind::MalformedHeader("zero dimension")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_err(
            maxval_at,
            PgmErrorKind::MalformedHeader("maxval outside 1..=65535"),
        ));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(pgm_err(
                cur.pos,
                PgmErrorKind::MalformedHeader("missing whitespace before raster"),
            ));
        }
        let bps = if maxval < 256 { 1 } else { 2 };
        let payload = &bytes[start..];
        if payload.len() < n * bps {
            return Err(pgm_err(
                bytes.len(),
                PgmErrorKind::Truncated {
                    expected: n,
                    found: payload.len() / bps,
                },
            ));
        }
        for k in 0..n {
            let v = if bps == 1 {
                payload[k] as usize
            } else {
                ((payload[2 * k] as usize) << 8) | payload[2 * k + 1] as usize
            };
            if v > maxval {
                return Err(pgm_err(
                    start + k * bps,
                    PgmErrorKind::BadSample(v.to_string()),
                ));
            }
            data.push(v as f64 / scale);
        }
    } else {
        for k in 0..n {
            let (at, tok) = cur.token().ok_or_else(|| {
                pgm_err(
                    bytes.len(),
                    PgmErrorKind::Truncated {
                        expected: n,
                        found: k,
                    },
                )
            })?;
            let v: usize = tok
                .parse()
                .map_err(|_| pgm_err(at, PgmErrorKind::BadSample(tok.to_string())))?;
            if v > maxval {
                return Err(pgm_err(at, PgmErrorKind::BadSample(tok.to_string())));
            }
            data.push(v as f64 / scale);
        }
    }
    Image::new(width, height, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Quantize one intensity to an 8-bit sample: clamp to [0,1], then round half away from zero.
pub fn quantize(v: f64) -> u8 {
    let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (c * 255.0).round() as u8
}

/// Binary P5, maxval 255.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

pub fn write_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(Mask::from_image(&read_pgm(path)?))
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(&mask.to_image(), path)
}

/// Peak-1 PSNR in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    psnr_slices(&a.data, &b.data)
}

pub(crate) fn psnr_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    Error::check_len(a.len(), b.len())?;
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Gaussian noise vector of standard deviation `sigma`, deterministic in `seed`.
pub fn gaussian_noise(len: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
}

/// Adds i.i.d. N(0, sigma²) noise. The result is not clamped.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    let noise = gaussian_noise(img.len(), sigma, seed)?;
    let data = img.data.iter().zip(&noise).map(|(v, e)| v + e).collect();
    img.with_data(data)
}

pub const MEDIAN_FILL_RADIUS: usize = 2;
pub const MEDIAN_FILL_MAX_PASSES: usize = 20;
pub const MEDIAN_FILL_TOL: f64 = 1e-6;

/// Fill unobserved pixels for use as an initial iterate.
///
/// Each pass visits every unobserved pixel and takes the median of its 5x5
/// neighborhood (clipped at the border) over the pixels defined so far:
/// observed pixels when the window has any, otherwise pixels filled by an
/// earlier pass. Passes stop once no pixel moves by more than 1e-6, or after
/// 20 passes. Anything still undefined then gets the mean of the observed
/// pixels. Observed pixels are never touched.
pub fn median_filter_init(y: &Image, mask: &Mask) -> Result<Image> {
    if y.width != mask.width || y.height != mask.height {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: mask.len(),
        });
    }
    let observed = mask.count_observed();
    if observed == 0 {
        return Err(Error::InvalidArgument(
            "mask has no observed pixels".into(),
        ));
    }
    if observed == mask.len() {
        return Ok(y.clone());
    }
    let mean = y
        .data
        .iter()
        .zip(&mask.observed)
        .filter(|(_, &o)| o)
        .map(|(v, _)| v)
        .sum::<f64>()
        / observed as f64;
    let (w, h) = (y.width, y.height);
    let r = MEDIAN_FILL_RADIUS;
    let mut cur: Vec<Option<f64>> = y
        .data
        .iter()
        .zip(&mask.observed)
        .map(|(&v, &o)| o.then_some(v))
        .collect();
    let mut from_observed = Vec::with_capacity((2 * r + 1) * (2 * r + 1));
    let mut from_filled = Vec::with_capacity((2 * r + 1) * (2 * r + 1));
    for _ in 0..MEDIAN_FILL_MAX_PASSES {
        let prev = cur.clone();
        let mut max_change: f64 = 0.0;
        for py in 0..h {
            for px in 0..w {
                let i = py * w + px;
                if mask.observed[i] {
                    continue;
                }
                from_observed.clear();
                from_filled.clear();
                for qy in py.saturating_sub(r)..=(py + r).min(h - 1) {
                    for qx in px.saturating_sub(r)..=(px + r).min(w - 1) {
                        let j = qy * w + qx;
                        match prev[j] {
                            Some(v) if mask.observed[j] => from_observed.push(v),
                            Some(v) => from_filled.push(v),
                            None => {}
                        }
                    }
                }
                let med = if !from_observed.is_empty() {
                    median(&mut from_observed)
                } else if !from_filled.is_empty() {
                    median(&mut from_filled)
                } else {
                    continue;
                };
                let change = prev[i].map_or(f64::INFINITY, |old| (med - old).abs());
                max_change = max_change.max(change);
                cur[i] = Some(med);
            }
        }
        if max_change <= MEDIAN_FILL_TOL {
            break;
        }
    }
    y.with_data(cur.into_iter().map(|v| v.unwrap_or(mean)).collect())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Deterministic grayscale test scene: a smooth background gradient, a few
/// flat disks and a rectangle, and a band of stripes. Values stay in [0.1, 0.9].
pub fn test_pattern(width: usize, height: usize) -> Result<Image> {
    let mut data = Vec::with_capacity(width * height);
    let (wf, hf) = (width as f64, height as f64);
    for py in 0..height {
        for px in 0..width {
            let u = (px as f64 + 0.5) / wf;
            let v = (py as f64 + 0.5) / hf;
            let mut val = 0.25 + 0.3 * u + 0.1 * v;
            if (u - 0.3).powi(2) + (v - 0.3).powi(2) < 0.04 {
                val = 0.85;
            }
            if (u - 0.72).powi(2) + (v - 0.68).powi(2) < 0.025 {
                val = 0.15;
            }
            if (0.55..0.9).contains(&u) && (0.12..0.35).contains(&v) {
                val = 0.6;
            }
            if (0.1..0.45).contains(&u) && (0.65..0.9).contains(&v) {
                let stripe = ((u * 24.0).floor() as i64) % 2 == 0;
                val = if stripe { 0.8 } else { 0.3 };
            }
            data.push(val.clamp(0.1, 0.9));
        }
    }
    Image::new(width, height, data)
}
