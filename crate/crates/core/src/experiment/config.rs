//! Plain-text experiment configuration: `[section]` headers and `key = value`
//! lines. `#` starts a comment. Paths are resolved against the directory of the
//! config file and must exist when the file is parsed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kernel_denoiser::NlmParams;
use crate::pnp_engine::RunConfig;

/// Blur size used when a deblurring or superresolution config names no PSF file.
pub const DEFAULT_BLUR_SIZE: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Inpainting {
        missing_fraction: f64,
        mask_seed: u64,
    },
    /// Periodic blur with the PSF in `psf`, or a uniform `blur_size`² box.
    Deblurring {
        psf: Option<PathBuf>,
        blur_size: usize,
    },
    Superresolution {
        psf: Option<PathBuf>,
        blur_size: usize,
        factor: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// The built-in test scene at the given size.
    Synthetic { width: usize, height: usize },
    Pgm(PathBuf),
}

impl std::fmt::Display for InputSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputSource::Synthetic { width, height } => write!(f, "synthetic:{width}x{height}"),
            InputSource::Pgm(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub nlm: NlmParams,
    pub run: RunConfig,
    pub input: InputSource,
    pub output: PathBuf,
    /// Side length of the downscaled instance used by `analyze` (none: full size).
    pub analysis_size: Option<usize>,
    /// Bisection tolerance of the step-size search.
    pub analysis_tol: f64,
}

impl ExperimentConfig {
    /// The 64x64, 80%-missing, σ = 10/255 inpainting instance with a frozen
    /// NLM matrix built from the median-filled start.
    pub fn inpainting_preset() -> Self {
        ExperimentConfig {
            problem: Problem::Inpainting {
                missing_fraction: 0.8,
                mask_seed: 1,
            },
            noise_sigma: 10.0 / 255.0,
            noise_seed: 2,
            nlm: NlmParams {
                patch_radius: 3,
                window_radius: 10,
                h: 0.085,
            },
            run: RunConfig {
                gamma: 0.9,
                max_iters: 2000,
                residual_tol: 1e-5,
                adapt_iters: 0,
                snapshot_every: 0,
            },
            input: InputSource::Synthetic {
                width: 64,
                height: 64,
            },
            output: PathBuf::from("out"),
            analysis_size: None,
            analysis_tol: 1e-3,
        }
    }

    /// Uniform 9x9 blur of the same scene, σ = 10/255.
    pub fn deblurring_preset() -> Self {
        ExperimentConfig {
            problem: Problem::Deblurring {
                psf: None,
                blur_size: DEFAULT_BLUR_SIZE,
            },
            ..Self::inpainting_preset()
        }
    }

    /// Set the mask seed to `seed` and the noise seed to `seed + 1`.
    pub fn reseed(&mut self, seed: u64) {
        if let Problem::Inpainting { mask_seed, .. } = &mut self.problem {
            *mask_seed = seed;
        }
        self.noise_seed = seed.wrapping_add(1);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse config text, resolving relative paths against `base`.
    ///
    /// Sections other than `problem`, `noise`, `nlm`, `run`, `io` and
    /// `analysis` are skipped, so a `meta.txt` parses back into the config
    /// that produced it.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let doc = Document::parse(text)?;
        let mut b = Builder::default();
        for entry in &doc.entries {
            if !CONFIG_SECTIONS.contains(&entry.section.as_str()) {
                continue;
            }
            b.set(entry, base)?;
        }
        b.finish(&doc)
    }

    /// Canonical text form; `parse` of this text gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[problem]");
        match &self.problem {
            Problem::Inpainting {
                missing_fraction,
                mask_seed,
            } => {
                let _ = writeln!(s, "kind = inpainting");
                let _ = writeln!(s, "missing_fraction = {missing_fraction}");
                let _ = writeln!(s, "mask_seed = {mask_seed}");
            }
            Problem::Deblurring { psf, blur_size } => {
                let _ = writeln!(s, "kind = deblurring");
                write_psf(&mut s, psf, *blur_size);
            }
            Problem::Superresolution {
                psf,
                blur_size,
                factor,
            } => {
                let _ = writeln!(s, "kind = superresolution");
                write_psf(&mut s, psf, *blur_size);
                let _ = writeln!(s, "factor = {factor}");
            }
        }
        let _ = writeln!(s, "\n[noise]");
        let _ = writeln!(s, "sigma = {}", self.noise_sigma);
        let _ = writeln!(s, "seed = {}", self.noise_seed);
        let _ = writeln!(s, "\n[nlm]");
        let _ = writeln!(s, "patch_radius = {}", self.nlm.patch_radius);
        let _ = writeln!(s, "window_radius = {}", self.nlm.window_radius);
        let _ = writeln!(s, "h = {}", self.nlm.h);
        let r = &self.run;
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "gamma = {}", r.gamma);
        let _ = writeln!(s, "max_iters = {}", r.max_iters);
        let _ = writeln!(s, "residual_tol = {}", r.residual_tol);
        let _ = writeln!(s, "adapt_iters = {}", r.adapt_iters);
        let _ = writeln!(s, "snapshot_every = {}", r.snapshot_every);
        let _ = writeln!(s, "\n[io]");
        let _ = writeln!(s, "input = {}", self.input);
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "\n[analysis]");
        if let Some(n) = self.analysis_size {
            let _ = writeln!(s, "size = {n}");
        }
        let _ = writeln!(s, "tol = {}", self.analysis_tol);
        s
    }
}

fn write_psf(s: &mut String, psf: &Option<PathBuf>, blur_size: usize) {
    match psf {
        Some(p) => {
            let _ = writeln!(s, "psf = {}", p.display());
        }
        None => {
            let _ = writeln!(s, "blur_size = {blur_size}");
        }
    }
}

const CONFIG_SECTIONS: [&str; 6] = ["problem", "noise", "nlm", "run", "io", "analysis"];

/// One `key = value` line with its location.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub section: String,
    pub key: String,
    pub value: String,
}

/// Sectioned key/value text, in file order. Shared by configs and metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub entries: Vec<Entry>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    field: String::new(),
                    message: "section header is missing ']'".into(),
                })?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(Error::Config {
                        line,
                        field: String::new(),
                        message: "empty section name".into(),
                    });
                }
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                field: String::new(),
                message: format!("expected 'key = value', found {content:?}"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    field: String::new(),
                    message: "empty key".into(),
                });
            }
            if section.is_empty() {
                return Err(Error::Config {
                    line,
                    field: key,
                    message: "key appears before any [section]".into(),
                });
            }
            if entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(Error::Config {
                    line,
                    field: format!("{section}.{key}"),
                    message: "duplicate key".into(),
                });
            }
            entries.push(Entry {
                line,
                section: section.clone(),
                key,
                value: value.trim().to_string(),
            });
        }
        Ok(Document { entries })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.key == key)
    }

    /// Section names in order of first appearance.
    pub fn sections(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.section.as_str()) {
                out.push(&e.section);
            }
        }
        out
    }
}

fn field_error(e: &Entry, message: impl Into<String>) -> Error {
    Error::Config {
        line: e.line,
        field: format!("{}.{}", e.section, e.key),
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| field_error(e, format!("expected {what}, found {:?}", e.value)))
}

/// A real number, also accepting `a/b` (as in `sigma = 10/255`).
fn real(e: &Entry) -> Result<f64> {
    let v = match e.value.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| field_error(e, "bad numerator"))?;
            let b: f64 = b.trim().parse().map_err(|_| field_error(e, "bad denominator"))?;
            a / b
        }
        None => number(e, "a number")?,
    };
    if !v.is_finite() {
        return Err(field_error(e, "value must be finite"));
    }
    Ok(v)
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() || base.as_os_str().is_empty() || base == Path::new(".") {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing_path(e: &Entry, base: &Path) -> Result<PathBuf> {
    let p = resolve(base, &e.value);
    if !p.exists() {
        return Err(field_error(e, format!("path {} does not exist", p.display())));
    }
    Ok(p)
}

#[derive(Default)]
struct Builder {
    kind: Option<String>,
    missing_fraction: Option<f64>,
    mask_seed: Option<u64>,
    psf: Option<PathBuf>,
    blur_size: Option<usize>,
    factor: Option<usize>,
    sigma: Option<f64>,
    noise_seed: Option<u64>,
    patch_radius: Option<usize>,
    window_radius: Option<usize>,
    h: Option<f64>,
    run: RunConfig,
    input: Option<InputSource>,
    output: Option<PathBuf>,
    analysis_size: Option<usize>,
    analysis_tol: Option<f64>,
}

impl Builder {
    fn set(&mut self, e: &Entry, base: &Path) -> Result<()> {
        match (e.section.as_str(), e.key.as_str()) {
            ("problem", "kind") => match e.value.as_str() {
                "inpainting" | "deblurring" | "superresolution" => {
                    self.kind = Some(e.value.clone())
                }
                other => {
                    return Err(field_error(
                        e,
                        format!(
                            "unknown kind {other:?} (expected inpainting, deblurring or superresolution)"
                        ),
                    ))
                }
            },
            ("problem", "missing_fraction") => {
                let f = real(e)?;
                if !(0.0..1.0).contains(&f) {
                    return Err(field_error(e, format!("must lie in [0, 1), got {f}")));
                }
                self.missing_fraction = Some(f);
            }
            ("problem", "mask_seed") => self.mask_seed = Some(number(e, "an unsigned integer")?),
            ("problem", "psf") => self.psf = Some(existing_path(e, base)?),
            ("problem", "blur_size") => {
                let s: usize = number(e, "a positive integer")?;
                if s == 0 {
                    return Err(field_error(e, "must be positive"));
                }
                self.blur_size = Some(s);
            }
            ("problem", "factor") => {
                let f: usize = number(e, "a positive integer")?;
                if f == 0 {
                    return Err(field_error(e, "must be positive"));
                }
                self.factor = Some(f);
            }
            ("noise", "sigma") => {
                let s = real(e)?;
                if s < 0.0 {
                    return Err(field_error(e, "must be >= 0"));
                }
                self.sigma = Some(s);
            }
            ("noise", "seed") => self.noise_seed = Some(number(e, "an unsigned integer")?),
            ("nlm", "patch_radius") => self.patch_radius = Some(number(e, "an unsigned integer")?),
            ("nlm", "window_radius") => {
                let s: usize = number(e, "a positive integer")?;
                if s == 0 {
                    return Err(field_error(e, "must be at least 1"));
                }
                self.window_radius = Some(s);
            }
            ("nlm", "h") => {
                let h = real(e)?;
                if h <= 0.0 {
                    return Err(field_error(e, "must be positive"));
                }
                self.h = Some(h);
            }
            ("run", "gamma") => {
                let g = real(e)?;
                if g <= 0.0 {
                    return Err(field_error(e, "must be positive"));
                }
                self.run.gamma = g;
            }
            ("run", "max_iters") => {
                let m: usize = number(e, "a positive integer")?;
                if m == 0 {
                    return Err(field_error(e, "must be at least 1"));
                }
                self.run.max_iters = m;
            }
            ("run", "residual_tol") => {
                let t = real(e)?;
                if t < 0.0 {
                    return Err(field_error(e, "must be >= 0"));
                }
                self.run.residual_tol = t;
            }
            ("run", "adapt_iters") => self.run.adapt_iters = number(e, "an unsigned integer")?,
            ("run", "snapshot_every") => {
                self.run.snapshot_every = number(e, "an unsigned integer")?
            }
            ("io", "input") => {
                self.input = Some(match e.value.strip_prefix("synthetic:") {
                    Some(dims) => {
                        let (w, h) = dims
                            .split_once('x')
                            .ok_or_else(|| field_error(e, "expected synthetic:WIDTHxHEIGHT"))?;
                        let w: usize = w.trim().parse().map_err(|_| field_error(e, "bad width"))?;
                        let h: usize = h.trim().parse().map_err(|_| field_error(e, "bad height"))?;
                        if w == 0 || h == 0 {
                            return Err(field_error(e, "synthetic size must be positive"));
                        }
                        InputSource::Synthetic { width: w, height: h }
                    }
                    None => InputSource::Pgm(existing_path(e, base)?),
                })
            }
            ("io", "output") => self.output = Some(resolve(base, &e.value)),
            ("analysis", "size") => {
                let s: usize = number(e, "a positive integer")?;
                if s == 0 {
                    return Err(field_error(e, "must be positive"));
                }
                self.analysis_size = Some(s);
            }
            ("analysis", "tol") => {
                let t = real(e)?;
                if t <= 0.0 {
                    return Err(field_error(e, "must be positive"));
                }
                self.analysis_tol = Some(t);
            }
            _ => return Err(field_error(e, "unknown key")),
        }
        Ok(())
    }

    fn finish(self, doc: &Document) -> Result<ExperimentConfig> {
        let misplaced = |section: &str, key: &str, why: &str| -> Error {
            let e = doc.entry(section, key).expect("entry exists");
            field_error(e, why.to_string())
        };
        let kind = self.kind.ok_or(Error::Config {
            line: 0,
            field: "problem.kind".into(),
            message: "missing required key".into(),
        })?;
        let problem = match kind.as_str() {
            "inpainting" => {
                for key in ["psf", "blur_size", "factor"] {
                    if doc.entry("problem", key).is_some() {
                        return Err(misplaced("problem", key, "not used by inpainting"));
                    }
                }
                Problem::Inpainting {
                    missing_fraction: self.missing_fraction.unwrap_or(0.8),
                    mask_seed: self.mask_seed.unwrap_or(1),
                }
            }
            other => {
                for key in ["missing_fraction", "mask_seed"] {
                    if doc.entry("problem", key).is_some() {
                        return Err(misplaced("problem", key, "only used by inpainting"));
                    }
                }
                if self.psf.is_some() && self.blur_size.is_some() {
                    return Err(misplaced("problem", "blur_size", "give either psf or blur_size"));
                }
                let blur_size = self.blur_size.unwrap_or(DEFAULT_BLUR_SIZE);
                if other == "deblurring" {
                    if doc.entry("problem", "factor").is_some() {
                        return Err(misplaced("problem", "factor", "only used by superresolution"));
                    }
                    Problem::Deblurring {
                        psf: self.psf,
                        blur_size,
                    }
                } else {
                    Problem::Superresolution {
                        psf: self.psf,
                        blur_size,
                        factor: self.factor.unwrap_or(2),
                    }
                }
            }
        };
        let sigma = self.sigma.unwrap_or(0.0);
        let default_nlm = NlmParams::for_noise(sigma);
        Ok(ExperimentConfig {
            problem,
            noise_sigma: sigma,
            noise_seed: self.noise_seed.unwrap_or(2),
            nlm: NlmParams {
                patch_radius: self.patch_radius.unwrap_or(default_nlm.patch_radius),
                window_radius: self.window_radius.unwrap_or(default_nlm.window_radius),
                h: self.h.unwrap_or(default_nlm.h),
            },
            run: self.run,
            input: self.input.unwrap_or(InputSource::Synthetic {
                width: 64,
                height: 64,
            }),
            output: self.output.unwrap_or_else(|| PathBuf::from("out")),
            analysis_size: self.analysis_size,
            analysis_tol: self.analysis_tol.unwrap_or(1e-3),
        })
    }
}
