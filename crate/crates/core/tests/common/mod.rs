#![allow(dead_code)]

use pnp_ista::image_io::gaussian_noise;
use pnp_ista::{build_nlm, DenoiserMatrix, Image, LinearOperator, Mask, NlmParams, Psf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMALL_NLM: NlmParams = NlmParams {
    patch_radius: 1,
    window_radius: 2,
    h: 0.3,
};

pub struct Case {
    pub label: String,
    pub width: usize,
    pub height: usize,
    pub mask: Option<Mask>,
    pub op: LinearOperator,
    pub w: DenoiserMatrix,
    pub y: Vec<f64>,
}

pub fn random_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.gen::<f64>()).collect();
    Image::new(width, height, data).unwrap()
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Mark pixels observed until every Chebyshev window of radius `s` holds one.
pub fn cover_windows(mask: &mut Mask, s: usize) {
    let (w, h) = (mask.width(), mask.height());
    for py in 0..h {
        for px in 0..w {
            let covered = (py.saturating_sub(s)..=(py + s).min(h - 1)).any(|qy| {
                (px.saturating_sub(s)..=(px + s).min(w - 1)).any(|qx| mask.is_observed(qy * w + qx))
            });
            if !covered {
                mask.set_observed(py * w + px, true);
            }
        }
    }
}

/// Random-guide NLM inpainting instance with every window holding an observed pixel.
pub fn inpainting_case(size: usize, missing: f64, seed: u64, params: NlmParams) -> Case {
    let mut mask = Mask::random(size, size, missing, seed).unwrap();
    cover_windows(&mut mask, params.window_radius);
    let op = LinearOperator::inpainting(&mask).unwrap();
    let guide = random_image(size, size, seed.wrapping_mul(7919).wrapping_add(1));
    let w = build_nlm(&guide, &params).unwrap();
    let clean = random_image(size, size, seed.wrapping_add(1000));
    let mut y = op.apply(clean.data()).unwrap();
    let noise = gaussian_noise(y.len(), 0.05, seed + 2000).unwrap();
    for (v, e) in y.iter_mut().zip(noise) {
        *v += e;
    }
    Case {
        label: format!("inpainting {size}x{size} missing {missing} seed {seed}"),
        width: size,
        height: size,
        mask: Some(mask),
        op,
        w,
        y,
    }
}

pub fn deblurring_case(size: usize, blur: usize, seed: u64, params: NlmParams) -> Case {
    let op = LinearOperator::deblurring(Psf::uniform(blur).unwrap(), size, size).unwrap();
    let guide = random_image(size, size, seed);
    let w = build_nlm(&guide, &params).unwrap();
    let clean = random_image(size, size, seed + 1);
    let y = op.apply(clean.data()).unwrap();
    Case {
        label: format!("deblurring {size}x{size} blur {blur} seed {seed}"),
        width: size,
        height: size,
        mask: None,
        op,
        w,
        y,
    }
}

/// The instance family used for the step-size theorems: mostly 16x16, a few
/// larger, missing fractions cycling through 0.5, 0.7, 0.8.
pub fn theorem_cases() -> Vec<Case> {
    let mut sizes = vec![16usize; 17];
    sizes.extend([24, 24, 24, 32, 32]);
    let fractions = [0.5, 0.7, 0.8];
    sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| inpainting_case(size, fractions[k % 3], 100 + k as u64, SMALL_NLM))
        .collect()
}

pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `rows x rows` row-stochastic matrix times a random perturbation.
pub fn stochastic_times_perturbation(n: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen::<f64>());
    for mut row in s.row_iter_mut() {
        let sum: f64 = row.iter().sum();
        row /= sum;
    }
    let e = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d - rng.gen_range(0.0..1.5) * if i == j { 1.0 } else { 0.05 }
    });
    s * e
}
