use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;

use super::{
    build_q_dense, check_assumptions, delta_search, eigenvalues, gershgorin, p_from_parts,
    AssumptionReport, GershgorinReport,
};
use crate::error::Result;
use crate::forward_model::LinearOperator;
use crate::kernel_denoiser::DenoiserMatrix;

/// Everything known about the stability of `P(γ)` for one instance.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub gamma_tested: f64,
    /// Spectral radius of `P(γ)`.
    pub rho: f64,
    pub eigenvalues: Vec<Complex64>,
    pub gershgorin: GershgorinReport,
    pub assumptions: AssumptionReport,
    /// Certified step-size bound, when the assumptions hold and the search succeeds.
    pub delta_estimate: Option<f64>,
}

impl ConvergenceReport {
    pub fn converges(&self) -> bool {
        self.rho < 1.0
    }

    /// Structured plain-text summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let a = &self.assumptions;
        let failing = a.failing_rows();
        let _ = writeln!(s, "gamma = {}", self.gamma_tested);
        let _ = writeln!(s, "n = {}", a.rows.len());
        let _ = writeln!(s, "[assumptions]");
        let _ = writeln!(s, "window_support = {}", pass(a.support_ok));
        let _ = writeln!(s, "operator_nonnegative = {} (min entry {})", pass(a.nonneg_ok), a.min_a_entry);
        let _ = writeln!(
            s,
            "row_balance = {} ({} of {} rows fail, margin {})",
            pass(a.balance_ok()),
            failing.len(),
            a.rows.len(),
            a.margin
        );
        if let Some(&i) = failing.first() {
            let r = a.rows[i];
            let _ = writeln!(
                s,
                "first_failing_row = {} (inside {}, outside {})",
                i, r.inside_sum, r.outside_sum
            );
        }
        let min_slack = a.rows.iter().map(|r| r.slack()).fold(f64::INFINITY, f64::min);
        let _ = writeln!(s, "min_row_slack = {min_slack}");
        let _ = writeln!(s, "overall = {}", pass(a.overall));
        let _ = writeln!(s, "[gershgorin]");
        let _ = writeln!(s, "max_right = {}", self.gershgorin.max_right);
        let _ = writeln!(s, "min_left = {}", self.gershgorin.min_left);
        let _ = writeln!(s, "certified = {}", self.gershgorin.certified);
        let _ = writeln!(s, "[spectrum]");
        let _ = writeln!(s, "spectral_radius = {}", self.rho);
        let _ = writeln!(s, "converges = {}", self.converges());
        let _ = writeln!(s, "[step_size]");
        match self.delta_estimate {
            Some(d) => {
                let _ = writeln!(s, "certified_delta = {d}");
            }
            None => {
                let _ = writeln!(s, "certified_delta = none");
            }
        }
        s
    }

    /// One row per pixel: `i,P_ii,R_i,inside_sum,outside_sum` (0-based `i`).
    pub fn write_rows_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "i,P_ii,R_i,inside_sum,outside_sum")?;
        for (i, (d, r)) in self
            .gershgorin
            .disks
            .iter()
            .zip(&self.assumptions.rows)
            .enumerate()
        {
            writeln!(
                out,
                "{},{},{},{},{}",
                i, d.center, d.radius, r.inside_sum, r.outside_sum
            )?;
        }
        Ok(())
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Assumptions, Gershgorin disks, spectrum, and (when the assumptions hold)
/// the certified step-size bound at bisection tolerance `tol`.
pub fn analyze(
    w: &DenoiserMatrix,
    op: &LinearOperator,
    gamma: f64,
    tol: f64,
) -> Result<ConvergenceReport> {
    let assumptions = check_assumptions(w, op)?;
    let wd = w.dense()?;
    let q = build_q_dense(w, op)?;
    let p = p_from_parts(&wd, &q, gamma);
    let gershgorin = gershgorin(&p)?;
    let eigenvalues = eigenvalues(&p)?;
    let rho = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let delta_estimate = if assumptions.overall {
        delta_search(w, op, tol).ok()
    } else {
        None
    };
    Ok(ConvergenceReport {
        gamma_tested: gamma,
        rho,
        eigenvalues,
        gershgorin,
        assumptions,
        delta_estimate,
    })
}
