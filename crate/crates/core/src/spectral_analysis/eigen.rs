//! Eigenvalues of a dense real nonsymmetric matrix.
//!
//! Householder reduction to upper Hessenberg form followed by Francis
//! double-shift QR iteration on the active block (the EISPACK `orthes`/`hqr`
//! pair, eigenvalues only). Works on a row-major copy.

// Index loops mirror the textbook Householder and QR sweeps.
#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

struct RowMajor {
    n: usize,
    a: Vec<f64>,
}

impl RowMajor {
    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = m[(i, j)];
            }
        }
        RowMajor { n, a }
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline(always)]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }
}

/// Orthogonal similarity to upper Hessenberg form, in place.
fn hessenberg(h: &mut RowMajor) {
    let n = h.n;
    if n < 3 {
        return;
    }
    let mut ort = vec![0.0; n];
    let mut f = vec![0.0; n];
    for m in 1..n - 1 {
        let scale: f64 = (m..n).map(|i| h.at(i, m - 1).abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..n).rev() {
            ort[i] = h.at(i, m - 1) / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        // H <- (I - u uᵀ/hh) H, accumulated row by row for cache locality
        f[m..n].iter_mut().for_each(|v| *v = 0.0);
        for i in m..n {
            let oi = ort[i];
            let row = &h.a[i * n..(i + 1) * n];
            for j in m..n {
                f[j] += oi * row[j];
            }
        }
        for i in m..n {
            let oi = ort[i] / hh;
            let row = &mut h.a[i * n..(i + 1) * n];
            for j in m..n {
                row[j] -= f[j] * oi;
            }
        }
        // H <- H (I - u uᵀ/hh)
        for i in 0..n {
            let row = &mut h.a[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in m..n {
                s += ort[j] * row[j];
            }
            s /= hh;
            for j in m..n {
                row[j] -= s * ort[j];
            }
        }
        ort[m] *= scale;
        h.set(m, m - 1, scale * g);
        for i in m + 1..n {
            h.set(i, m - 1, 0.0);
        }
    }
}

/// All eigenvalues of a square matrix, unordered; complex pairs appear together.
///
/// Total QR iterations are capped at `100 n`.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let mut h = RowMajor::from_dmatrix(m);
    hessenberg(&mut h);
    hqr(&mut h, 100 * n)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

fn hqr(h: &mut RowMajor, max_iterations: usize) -> Result<Vec<Complex64>> {
    let n = h.n;
    let eps = f64::EPSILON;
    let mut eig = vec![Complex64::new(0.0, 0.0); n];

    let mut norm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            norm += h.at(i, j).abs();
        }
    }
    if norm == 0.0 {
        return Ok(eig);
    }

    let mut hi = n as isize - 1;
    let mut exshift = 0.0;
    let mut iter = 0usize;
    let mut total = 0usize;
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut w, mut x, mut y);

    while hi >= 0 {
        let nn = hi as usize;
        // look for a single small subdiagonal element
        let mut l = nn;
        while l > 0 {
            s = h.at(l - 1, l - 1).abs() + h.at(l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if h.at(l, l - 1).abs() < eps * s {
                h.set(l, l - 1, 0.0);
                break;
            }
            l -= 1;
        }

        if l == nn {
            eig[nn] = Complex64::new(h.at(nn, nn) + exshift, 0.0);
            hi -= 1;
            iter = 0;
        } else if l + 1 == nn {
            w = h.at(nn, nn - 1) * h.at(nn - 1, nn);
            p = (h.at(nn - 1, nn - 1) - h.at(nn, nn)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            x = h.at(nn, nn) + exshift;
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                let first = x + z;
                let second = if z != 0.0 { x - w / z } else { first };
                eig[nn - 1] = Complex64::new(first, 0.0);
                eig[nn] = Complex64::new(second, 0.0);
            } else {
                eig[nn - 1] = Complex64::new(x + p, z);
                eig[nn] = Complex64::new(x + p, -z);
            }
            hi -= 2;
            iter = 0;
        } else {
            x = h.at(nn, nn);
            y = h.at(nn - 1, nn - 1);
            w = h.at(nn, nn - 1) * h.at(nn - 1, nn);

            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in 0..=nn {
                    let v = h.at(i, i) - x;
                    h.set(i, i, v);
                }
                s = h.at(nn, nn - 1).abs() + h.at(nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=nn {
                        let v = h.at(i, i) - s;
                        h.set(i, i, v);
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            total += 1;
            if total > max_iterations {
                return Err(Error::EigenNoConvergence {
                    iterations: max_iterations,
                });
            }

            // look for two consecutive small subdiagonal elements
            let mut m = nn - 2;
            loop {
                z = h.at(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / h.at(m + 1, m) + h.at(m, m + 1);
                q = h.at(m + 1, m + 1) - z - r - s;
                r = h.at(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let lhs = h.at(m, m - 1).abs() * (q.abs() + r.abs());
                let rhs = eps
                    * (p.abs()
                        * (h.at(m - 1, m - 1).abs() + z.abs() + h.at(m + 1, m + 1).abs()));
                if lhs < rhs {
                    break;
                }
                m -= 1;
            }

            for i in m + 2..=nn {
                h.set(i, i - 2, 0.0);
                if i > m + 2 {
                    h.set(i, i - 3, 0.0);
                }
            }

            // double QR step on rows l..=nn, columns m..=nn
            for k in m..nn {
                let notlast = k + 1 != nn;
                if k != m {
                    p = h.at(k, k - 1);
                    q = h.at(k + 1, k - 1);
                    r = if notlast { h.at(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h.set(k, k - 1, -s * x);
                } else if l != m {
                    let v = -h.at(k, k - 1);
                    h.set(k, k - 1, v);
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                // row modification
                for j in k..=nn {
                    let mut pp = h.at(k, j) + q * h.at(k + 1, j);
                    if notlast {
                        pp += r * h.at(k + 2, j);
                        let v = h.at(k + 2, j) - pp * z;
                        h.set(k + 2, j, v);
                    }
                    let v = h.at(k, j) - pp * x;
                    h.set(k, j, v);
                    let v = h.at(k + 1, j) - pp * y;
                    h.set(k + 1, j, v);
                }
                // column modification
                for i in l..=nn.min(k + 3) {
                    let mut pp = x * h.at(i, k) + y * h.at(i, k + 1);
                    if notlast {
                        pp += z * h.at(i, k + 2);
                        let v = h.at(i, k + 2) - pp * r;
                        h.set(i, k + 2, v);
                    }
                    let v = h.at(i, k) - pp;
                    h.set(i, k, v);
                    let v = h.at(i, k + 1) - pp * q;
                    h.set(i, k + 1, v);
                }
            }
        }
    }
    Ok(eig)
}
