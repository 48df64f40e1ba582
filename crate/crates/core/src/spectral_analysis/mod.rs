//! Convergence checks for the affine PnP-ISTA map `x ↦ P x + q` with
//! `P = W (I - γ AᵀA) = W - γ Q`, `Q = W AᵀA`, `q = γ W Aᵀ y`.
//!
//! Everything here materializes `n x n` matrices and is meant for desk-scale
//! instances (`n` up to [`DEFAULT_DENSE_CAP`]).

mod eigen;
mod report;

pub use eigen::{eigenvalues, spectral_radius};
pub use report::{analyze, ConvergenceReport};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward_model::{check_cap, LinearOperator, DEFAULT_DENSE_CAP};
use crate::kernel_denoiser::DenoiserMatrix;

fn check_shapes(w: &DenoiserMatrix, op: &LinearOperator) -> Result<usize> {
    let n = w.len();
    Error::check_len(n, op.input_dim())?;
    check_cap(n, DEFAULT_DENSE_CAP)?;
    Ok(n)
}

/// `Q = W AᵀA`, accumulated from the sparse rows of `W`.
pub fn build_q_dense(w: &DenoiserMatrix, op: &LinearOperator) -> Result<DMatrix<f64>> {
    let n = check_shapes(w, op)?;
    let gram = op.dense_gram()?;
    // nalgebra is column-major; build Qᵀ column by column so each output row is contiguous
    let mut qt = DMatrix::zeros(n, n);
    qt.par_column_iter_mut().enumerate().for_each(|(i, mut col)| {
        for (j, wij) in w.row(i) {
            // gram is symmetric, so its column j is row j
            col.axpy(wij, &gram.column(j), 1.0);
        }
    });
    Ok(qt.transpose())
}

/// Dense `P = W (I - γ AᵀA)`.
pub fn build_p_dense(w: &DenoiserMatrix, op: &LinearOperator, gamma: f64) -> Result<DMatrix<f64>> {
    let wd = w.dense()?;
    let q = build_q_dense(w, op)?;
    Ok(p_from_parts(&wd, &q, gamma))
}

pub(crate) fn p_from_parts(wd: &DMatrix<f64>, q: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    if gamma == 0.0 {
        wd.clone()
    } else {
        wd - q * gamma
    }
}

/// `q = γ W Aᵀ y`, computed in operator form.
pub fn build_q(w: &DenoiserMatrix, op: &LinearOperator, gamma: f64, y: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(w.len(), op.input_dim())?;
    let aty = op.apply_adjoint(y)?;
    let scaled: Vec<f64> = aty.iter().map(|v| gamma * v).collect();
    w.apply(&scaled)
}

/// In-window and out-of-window row sums of `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowBalance {
    pub inside_sum: f64,
    pub outside_sum: f64,
}

impl RowBalance {
    /// `inside - outside`; the strict inequality needs this above the margin.
    pub fn slack(&self) -> f64 {
        self.inside_sum - self.outside_sum
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// `{j : W_ij > 0} = Ω_i` for every row.
    pub support_ok: bool,
    /// Every entry of `A` is nonnegative.
    pub nonneg_ok: bool,
    /// Smallest entry of `A`.
    pub min_a_entry: f64,
    pub rows: Vec<RowBalance>,
    /// Strictness margin applied to the row balance test.
    pub margin: f64,
    pub overall: bool,
}

impl AssumptionReport {
    pub fn row_ok(&self, i: usize) -> bool {
        self.rows[i].slack() > self.margin
    }

    pub fn balance_ok(&self) -> bool {
        (0..self.rows.len()).all(|i| self.row_ok(i))
    }

    pub fn failing_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| !self.row_ok(i)).collect()
    }
}

/// Check window support, nonnegativity of `A`, and the per-row balance
/// `Σ_{j∉Ω_i} Q_ij < Σ_{j∈Ω_i} Q_ij`, with zero strictness margin.
pub fn check_assumptions(w: &DenoiserMatrix, op: &LinearOperator) -> Result<AssumptionReport> {
    check_assumptions_with_margin(w, op, 0.0)
}

pub fn check_assumptions_with_margin(
    w: &DenoiserMatrix,
    op: &LinearOperator,
    margin: f64,
) -> Result<AssumptionReport> {
    let n = check_shapes(w, op)?;
    let wd = w.dense()?;
    let support_ok = (0..n).all(|i| {
        let window = w.window(i).expect("row in range");
        let support: Vec<usize> = (0..n).filter(|&j| wd[(i, j)] > 0.0).collect();
        support == window
    });
    let a = op.dense_matrix()?;
    let min_a_entry = a.iter().copied().fold(f64::INFINITY, f64::min);
    let nonneg_ok = min_a_entry >= 0.0;
    let q = build_q_dense(w, op)?;
    let rows: Vec<RowBalance> = (0..n)
        .into_par_iter()
        .map(|i| {
            let window = w.window(i).expect("row in range");
            let total: f64 = q.row(i).iter().sum();
            let inside_sum: f64 = window.iter().map(|&j| q[(i, j)]).sum();
            let outside_sum: f64 = (0..n)
                .filter(|j| window.binary_search(j).is_err())
                .map(|j| q[(i, j)])
                .sum();
            debug_assert!((inside_sum + outside_sum - total).abs() <= 1e-9 * total.abs().max(1.0));
            RowBalance {
                inside_sum,
                outside_sum,
            }
        })
        .collect();
    let mut report = AssumptionReport {
        support_ok,
        nonneg_ok,
        min_a_entry,
        rows,
        margin,
        overall: false,
    };
    report.overall = support_ok && nonneg_ok && report.balance_ok();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: f64,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct GershgorinReport {
    pub disks: Vec<Disk>,
    /// `max_i (P_ii + R_i)`.
    pub max_right: f64,
    /// `min_i (P_ii - R_i)`.
    pub min_left: f64,
    /// Every disk lies strictly inside the unit circle.
    pub certified: bool,
}

impl GershgorinReport {
    fn from_disks(disks: Vec<Disk>) -> Self {
        let max_right = disks
            .iter()
            .map(|d| d.center + d.radius)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_left = disks
            .iter()
            .map(|d| d.center - d.radius)
            .fold(f64::INFINITY, f64::min);
        GershgorinReport {
            disks,
            max_right,
            min_left,
            certified: max_right < 1.0 && min_left > -1.0,
        }
    }

    /// Distance from `z` to the nearest disk (zero when inside one).
    pub fn distance_to_union(&self, z: num_complex::Complex64) -> f64 {
        self.disks
            .iter()
            .map(|d| ((z - d.center).norm() - d.radius).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Gershgorin disks of a square matrix: centers `P_ii`, radii `Σ_{j≠i} |P_ij|`.
pub fn gershgorin(p: &DMatrix<f64>) -> Result<GershgorinReport> {
    if p.nrows() != p.ncols() {
        return Err(Error::InvalidArgument(format!(
            "Gershgorin disks need a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let n = p.nrows();
    let disks = (0..n)
        .map(|i| {
            let radius = (0..n).filter(|&j| j != i).map(|j| p[(i, j)].abs()).sum();
            Disk {
                center: p[(i, i)],
                radius,
            }
        })
        .collect();
    Ok(GershgorinReport::from_disks(disks))
}

/// Gershgorin disks of `W - γQ` without allocating `P`.
fn gershgorin_of(wd: &DMatrix<f64>, q: &DMatrix<f64>, gamma: f64) -> GershgorinReport {
    let n = wd.nrows();
    let disks = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut radius = 0.0;
            for j in 0..n {
                if j != i {
                    radius += (wd[(i, j)] - gamma * q[(i, j)]).abs();
                }
            }
            Disk {
                center: wd[(i, i)] - gamma * q[(i, i)],
                radius,
            }
        })
        .collect();
    GershgorinReport::from_disks(disks)
}

/// Per-row record of the quantities behind the step-size argument.
#[derive(Debug, Clone)]
pub struct ProofRow {
    pub w_ii: f64,
    /// `R_i - P_ii` evaluated on `P(0) = W`.
    pub radius_minus_center_at_zero: f64,
    /// Largest `γ` keeping all in-window off-diagonal `W_ij - γ Q_ij` positive.
    pub beta: f64,
    pub balance: RowBalance,
    /// Predicted slope of `γ ↦ P_ii + R_i` below `beta`: `outside - inside`.
    pub predicted_slope: f64,
    /// Slope measured from the grid values, if two distinct grid points lie below `beta`.
    pub measured_slope: Option<f64>,
    /// Largest `|P_ii + R_i - (1 + γ (outside - inside))|` over grid points below `beta`.
    pub affine_max_error: f64,
    pub grid_points_checked: usize,
}

impl ProofRow {
    /// Error of the `γ = 0` identity `R_i - P_ii = 1 - 2 W_ii`.
    pub fn zero_identity_error(&self) -> f64 {
        (self.radius_minus_center_at_zero - (1.0 - 2.0 * self.w_ii)).abs()
    }

    /// Slope sign agrees with the row balance condition.
    pub fn slope_sign_consistent(&self, report_row_ok: bool) -> bool {
        (self.predicted_slope < 0.0) == report_row_ok
    }
}

/// Certificate geometry at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCertificate {
    pub gamma: f64,
    pub max_right: f64,
    pub min_left: f64,
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct ProofIdentityTable {
    pub rows: Vec<ProofRow>,
    pub grid: Vec<GridCertificate>,
}

impl ProofIdentityTable {
    pub fn max_zero_identity_error(&self) -> f64 {
        self.rows.iter().map(ProofRow::zero_identity_error).fold(0.0, f64::max)
    }

    pub fn max_affine_error(&self) -> f64 {
        self.rows.iter().map(|r| r.affine_max_error).fold(0.0, f64::max)
    }

    pub fn max_slope_error(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.measured_slope.map(|m| (m - r.predicted_slope).abs()))
            .fold(0.0, f64::max)
    }
}

/// Evaluate the disk identities row by row over a grid of step sizes.
pub fn proof_identities(
    w: &DenoiserMatrix,
    op: &LinearOperator,
    gamma_grid: &[f64],
) -> Result<ProofIdentityTable> {
    if let Some(g) = gamma_grid.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "grid step sizes must be >= 0, got {g}"
        )));
    }
    let n = check_shapes(w, op)?;
    let wd = w.dense()?;
    let q = build_q_dense(w, op)?;
    let mut grid: Vec<f64> = gamma_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let window = w.window(i).expect("row in range");
            let w_ii = wd[(i, i)];
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| wd[(i, j)].abs()).sum();
            let radius_minus_center_at_zero = off - w_ii;

            let beta = window
                .iter()
                .filter(|&&j| j != i && q[(i, j)] > 0.0)
                .map(|&j| wd[(i, j)] / q[(i, j)])
                .fold(f64::INFINITY, f64::min);

            let inside_sum: f64 = window.iter().map(|&j| q[(i, j)]).sum();
            let total: f64 = q.row(i).iter().sum();
            let outside_sum = total - inside_sum;
            let predicted_slope = outside_sum - inside_sum;

            let right_edge = |gamma: f64| {
                let mut v = wd[(i, i)] - gamma * q[(i, i)];
                for j in 0..n {
                    if j != i {
                        v += (wd[(i, j)] - gamma * q[(i, j)]).abs();
                    }
                }
                v
            };
            let valid: Vec<(f64, f64)> = grid
                .iter()
                .copied()
                .filter(|&g| g < beta)
                .map(|g| (g, right_edge(g)))
                .collect();
            let affine_max_error = valid
                .iter()
                .map(|&(g, v)| (v - (1.0 + g * predicted_slope)).abs())
                .fold(0.0, f64::max);
            let measured_slope = match (valid.first(), valid.last()) {
                (Some(&(g0, v0)), Some(&(g1, v1))) if g1 > g0 => Some((v1 - v0) / (g1 - g0)),
                _ => None,
            };
            ProofRow {
                w_ii,
                radius_minus_center_at_zero,
                beta,
                balance: RowBalance {
                    inside_sum,
                    outside_sum,
                },
                predicted_slope,
                measured_slope,
                affine_max_error,
                grid_points_checked: valid.len(),
            }
        })
        .collect();

    let grid = grid
        .iter()
        .map(|&gamma| {
            let g = gershgorin_of(&wd, &q, gamma);
            GridCertificate {
                gamma,
                max_right: g.max_right,
                min_left: g.min_left,
                certified: g.certified,
            }
        })
        .collect();
    Ok(ProofIdentityTable { rows, grid })
}

/// Step sizes above this are never probed by [`delta_search`].
pub const DELTA_SEARCH_CEILING: f64 = 4.0;
const DELTA_SEARCH_FLOOR: f64 = 1e-12;

/// Largest `δ` (to within `tol`) such that the Gershgorin certificate holds on `(0, δ]`.
///
/// Starts at [`DELTA_SEARCH_CEILING`] and halves until a certified step size
/// is found, then bisects between it and the last failing probe. The
/// certified set is an interval because each disk edge is convex in `γ`.
pub fn delta_search(w: &DenoiserMatrix, op: &LinearOperator, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let report = check_assumptions(w, op)?;
    if !report.overall {
        return Err(Error::InvalidArgument(format!(
            "assumptions fail (support {}, nonnegativity {}, {} unbalanced rows)",
            report.support_ok,
            report.nonneg_ok,
            report.failing_rows().len()
        )));
    }
    let wd = w.dense()?;
    let q = build_q_dense(w, op)?;
    let certified = |gamma: f64| gershgorin_of(&wd, &q, gamma).certified;

    let mut probe = DELTA_SEARCH_CEILING;
    if certified(probe) {
        return Ok(probe);
    }
    let mut failing = probe;
    while !certified(probe) {
        failing = probe;
        probe *= 0.5;
        if probe < DELTA_SEARCH_FLOOR {
            return Err(Error::NoCertifiedStep {
                smallest_gamma: probe,
            });
        }
    }
    let (mut lo, mut hi) = (probe, failing);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if certified(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

const POWER_MAX_ITERS: usize = 100_000;

/// Largest eigenvalue of `AᵀA` by power iteration in operator form.
pub fn lipschitz_gram(op: &LinearOperator) -> Result<f64> {
    let n = op.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect();
    normalize(&mut x);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mut gx = op.apply_gram(&x)?;
        let next = dot(&x, &gx);
        let norm = normalize(&mut gx);
        if norm == 0.0 {
            return Ok(0.0);
        }
        let done = (next - lambda).abs() <= 1e-15 * next.abs();
        lambda = next;
        x = gx;
        if done {
            return Ok(lambda);
        }
    }
    Err(Error::EigenNoConvergence {
        iterations: POWER_MAX_ITERS,
    })
}

/// Largest singular value, by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.ncols();
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma2 = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = m.tr_mul(&(m * &x));
        let next = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x = y / norm;
        let done = (next - sigma2).abs() <= 1e-15 * next.abs();
        sigma2 = next;
        if done {
            return Ok(sigma2.sqrt());
        }
    }
    Err(Error::EigenNoConvergence {
        iterations: POWER_MAX_ITERS,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::Psf;
    use crate::image_io::{test_pattern, Mask};
    use crate::kernel_denoiser::{build_nlm, NlmParams};

    fn nlm(w: usize, h: usize) -> DenoiserMatrix {
        let g = test_pattern(w, h).unwrap();
        build_nlm(
            &g,
            &NlmParams {
                patch_radius: 1,
                window_radius: 2,
                h: 0.2,
            },
        )
        .unwrap()
    }

    #[test]
    fn gamma_zero_gives_w() {
        let w = nlm(6, 6);
        let op = LinearOperator::inpainting(&Mask::random(6, 6, 0.5, 1).unwrap()).unwrap();
        assert_eq!(build_p_dense(&w, &op, 0.0).unwrap(), w.dense().unwrap());
        let y = vec![1.0; op.output_dim()];
        assert!(build_q(&w, &op, 0.0, &y).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inpainting_q_structure() {
        let w = nlm(6, 6);
        let mask = Mask::random(6, 6, 0.5, 2).unwrap();
        let op = LinearOperator::inpainting(&mask).unwrap();
        let q = build_q_dense(&w, &op).unwrap();
        for i in 0..36 {
            for j in 0..36 {
                let expect = if mask.is_observed(j) { w.weight(i, j) } else { 0.0 };
                assert_eq!(q[(i, j)], expect);
            }
        }
    }

    #[test]
    fn p_plus_gamma_q_is_w() {
        let w = nlm(8, 8);
        let op = LinearOperator::deblurring(Psf::uniform(3).unwrap(), 8, 8).unwrap();
        let q = build_q_dense(&w, &op).unwrap();
        let p = build_p_dense(&w, &op, 0.7).unwrap();
        let diff = (p + q * 0.7 - w.dense().unwrap()).abs().max();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn gershgorin_reference_cases() {
        let half = DMatrix::identity(4, 4) * 0.5;
        let g = gershgorin(&half).unwrap();
        assert!(g.certified);
        assert!(g.disks.iter().all(|d| d.center == 0.5 && d.radius == 0.0));
        let g = gershgorin(&DMatrix::identity(3, 3)).unwrap();
        assert!(!g.certified);
        assert_eq!(g.max_right, 1.0);
        assert!(gershgorin(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn assumption_checks_inpainting() {
        let w = nlm(8, 8);
        let mut mask = Mask::random(8, 8, 0.5, 3).unwrap();
        mask.set_observed(0, true);
        let op = LinearOperator::inpainting(&mask).unwrap();
        let report = check_assumptions(&w, &op).unwrap();
        assert!(report.support_ok && report.nonneg_ok);
        assert!(report.rows.iter().all(|r| r.outside_sum == 0.0));

        let mut obs = vec![true; 9];
        obs[4] = false;
        let op = LinearOperator::inpainting(&Mask::new(3, 3, obs).unwrap()).unwrap();
        let report = check_assumptions(&DenoiserMatrix::identity(3, 3), &op).unwrap();
        assert!(!report.overall);
        assert_eq!(report.failing_rows(), vec![4]);
        assert_eq!(report.rows[4], RowBalance { inside_sum: 0.0, outside_sum: 0.0 });
    }

    #[test]
    fn delta_search_full_observation() {
        let w = nlm(6, 6);
        let op = LinearOperator::inpainting(&Mask::full(6, 6).unwrap()).unwrap();
        let tol = 1e-3;
        let delta = delta_search(&w, &op, tol).unwrap();
        assert!(delta >= 1.0 - tol);
    }

    #[test]
    fn delta_search_requires_assumptions() {
        let mut obs = vec![true; 9];
        obs[4] = false;
        let op = LinearOperator::inpainting(&Mask::new(3, 3, obs).unwrap()).unwrap();
        assert!(delta_search(&DenoiserMatrix::identity(3, 3), &op, 1e-3).is_err());
    }

    #[test]
    fn lipschitz_reference_values() {
        let op = LinearOperator::deblurring(Psf::delta(), 5, 5).unwrap();
        assert!((lipschitz_gram(&op).unwrap() - 1.0).abs() <= 1e-15);
        let op = LinearOperator::inpainting(&Mask::random(6, 6, 0.7, 4).unwrap()).unwrap();
        assert!((lipschitz_gram(&op).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lipschitz_matches_symmetric_eigensolver() {
        let op = LinearOperator::deblurring(Psf::uniform(3).unwrap(), 8, 8).unwrap();
        let g = op.dense_gram().unwrap();
        let top = g.symmetric_eigenvalues().iter().copied().fold(f64::MIN, f64::max);
        assert!((lipschitz_gram(&op).unwrap() - top).abs() < 1e-8 * top);
    }

    #[test]
    fn proof_identities_hold_at_zero() {
        let w = nlm(6, 6);
        let op = LinearOperator::deblurring(Psf::uniform(3).unwrap(), 6, 6).unwrap();
        let t = proof_identities(&w, &op, &[0.0, 0.01, 0.02]).unwrap();
        assert!(t.max_zero_identity_error() <= 1e-12);
        assert!(t.max_affine_error() <= 1e-10);
        assert!(proof_identities(&w, &op, &[-0.1]).is_err());
    }

    #[test]
    fn spectral_norm_of_stochastic_matrix_at_least_one() {
        let w = nlm(6, 6).dense().unwrap();
        assert!(spectral_norm(&w).unwrap() >= 1.0 - 1e-10);
        let svd = w.singular_values().max();
        assert!((spectral_norm(&w).unwrap() - svd).abs() < 1e-8);
    }
}
