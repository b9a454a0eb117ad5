//! Sparse convex quadratic programming with verifiable KKT certificates.
//!
//! Problems are stated as
//!
//! ```text
//! minimize   ½ xᵀPx + qᵀx
//! subject to lower ≤ Ax ≤ upper        (equality rows have lower = upper)
//!            var_lower ≤ x ≤ var_upper (optional box)
//! ```
//!
//! The workhorse is an operator-splitting iteration with Ruiz equilibration,
//! adaptive penalty and an active-set polishing step that solves the KKT
//! system on the identified active set. A dense active-set method
//! ([`active_set::solve_active_set`]) provides an independent reference path
//! and a fallback when splitting stalls on small degenerate problems.

pub mod active_set;
mod admm;
pub mod ldl;
pub mod sparse;

use std::io::Write;

pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

/// Solver tolerances and limits. `eps_feas`/`eps_dual` are absolute
/// infinity-norm bounds checked on the original (unscaled) problem.
#[derive(Debug, Clone)]
pub struct ToleranceSpec {
    pub eps_feas: f64,
    pub eps_dual: f64,
    pub max_iter: usize,
    pub time_limit_secs: Option<f64>,
    /// Skip the Cholesky PSD probe (set when re-solving with a P that has
    /// already been verified).
    pub assume_psd: bool,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            eps_feas: 1e-6,
            eps_dual: 1e-6,
            max_iter: 200_000,
            time_limit_secs: None,
            assume_psd: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// A primal-dual solution. `y` holds row duals, `z` variable-bound duals;
/// the stationarity convention is Px + q + Aᵀy + z = 0 with positive duals
/// on active upper bounds and negative on active lower bounds.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    /// True when the active-set fallback produced the certificate.
    pub polished: bool,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: SparseMatrix,
    pub q: Vec<f64>,
    pub a: SparseMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_lower: Option<Vec<f64>>,
    pub var_upper: Option<Vec<f64>>,
}

impl QpProblem {
    pub fn n_vars(&self) -> usize {
        self.q.len()
    }

    pub fn n_rows(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let m = self.n_rows();
        if self.p.nrows != n || self.p.ncols != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.p.nrows });
        }
        if self.a.nrows != m || self.a.ncols != n {
            return Err(Error::DimensionMismatch { expected: m, got: self.a.nrows });
        }
        if self.upper.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.upper.len() });
        }
        let scale = self.p.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if self.p.asymmetry() > 1e-12 * scale.max(1.0) {
            return Err(Error::NotPsd("quadratic term is not symmetric".into()));
        }
        if self.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigError("linear term has non-finite entries".into()));
        }
        for i in 0..m {
            if self.lower[i] > self.upper[i] {
                return Err(Error::ConfigError(format!(
                    "row {i}: lower {} > upper {}",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        if let (Some(lo), Some(hi)) = (&self.var_lower, &self.var_upper) {
            for j in 0..n {
                if lo[j] > hi[j] {
                    return Err(Error::ConfigError(format!(
                        "variable {j}: lower {} > upper {}",
                        lo[j], hi[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.p.matvec(x, &mut px);
        0.5 * px.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Plain-text triplet dump for external verification.
    pub fn dump(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "qp n_vars {} n_rows {}", self.n_vars(), self.n_rows())?;
        writeln!(w, "P triplets (i j value)")?;
        for r in 0..self.p.nrows {
            let (cols, vals) = self.p.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{r} {c} {v:.17e}")?;
            }
        }
        writeln!(w, "q")?;
        for v in &self.q {
            writeln!(w, "{v:.17e}")?;
        }
        writeln!(w, "A triplets (i j value)")?;
        for r in 0..self.a.nrows {
            let (cols, vals) = self.a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{r} {c} {v:.17e}")?;
            }
        }
        writeln!(w, "bounds (lower upper)")?;
        for i in 0..self.n_rows() {
            writeln!(w, "{:.17e} {:.17e}", self.lower[i], self.upper[i])?;
        }
        if let (Some(lo), Some(hi)) = (&self.var_lower, &self.var_upper) {
            writeln!(w, "var bounds (lower upper)")?;
            for j in 0..self.n_vars() {
                writeln!(w, "{:.17e} {:.17e}", lo[j], hi[j])?;
            }
        }
        Ok(())
    }
}

/// KKT residual report, all infinity norms on the original problem.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub primal_inf: f64,
    pub dual_inf: f64,
    pub comp_slack: f64,
}

/// Recomputes residuals for a candidate solution; pure, no solver state.
pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> Result<KktReport> {
    let n = p.n_vars();
    let m = p.n_rows();
    if s.x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: s.x.len() });
    }
    if s.y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: s.y.len() });
    }

    let mut ax = vec![0.0; m];
    p.a.matvec(&s.x, &mut ax);
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..m {
        let below = (p.lower[i] - ax[i]).max(0.0);
        let above = (ax[i] - p.upper[i]).max(0.0);
        primal = primal.max(below).max(above);
        // Complementary slackness: positive dual pairs with the upper bound,
        // negative with the lower. A dual pointing at an infinite bound can
        // never be complementary, so its whole magnitude is a violation.
        if s.y[i] > 0.0 {
            if p.upper[i].is_finite() {
                comp = comp.max(s.y[i] * (p.upper[i] - ax[i]).abs());
            } else {
                comp = comp.max(s.y[i]);
            }
        } else if s.y[i] < 0.0 {
            if p.lower[i].is_finite() {
                comp = comp.max(-s.y[i] * (ax[i] - p.lower[i]).abs());
            } else {
                comp = comp.max(-s.y[i]);
            }
        }
    }
    if let (Some(lo), Some(hi)) = (&p.var_lower, &p.var_upper) {
        for j in 0..n {
            primal = primal.max((lo[j] - s.x[j]).max(0.0)).max((s.x[j] - hi[j]).max(0.0));
            if s.z[j] > 0.0 {
                if hi[j].is_finite() {
                    comp = comp.max(s.z[j] * (hi[j] - s.x[j]).abs());
                } else {
                    comp = comp.max(s.z[j]);
                }
            } else if s.z[j] < 0.0 {
                if lo[j].is_finite() {
                    comp = comp.max(-s.z[j] * (s.x[j] - lo[j]).abs());
                } else {
                    comp = comp.max(-s.z[j]);
                }
            }
        }
    }

    let mut dual = vec![0.0; n];
    p.p.matvec(&s.x, &mut dual);
    let mut aty = vec![0.0; n];
    p.a.matvec_t(&s.y, &mut aty);
    let mut dual_inf: f64 = 0.0;
    for j in 0..n {
        let r = dual[j] + p.q[j] + aty[j] + s.z[j];
        dual_inf = dual_inf.max(r.abs());
    }
    Ok(KktReport { primal_inf: primal, dual_inf, comp_slack: comp })
}

/// Solves a convex QP; see module docs for the algorithm.
pub fn solve_qp(p: &QpProblem, tol: &ToleranceSpec) -> Result<QpSolution> {
    solve_qp_warm(p, tol, None)
}

/// Like [`solve_qp`] with an initial primal/dual point `(x, y, z)` (used by
/// cutting-plane loops and branch-and-bound node re-solves).
pub fn solve_qp_warm(
    p: &QpProblem,
    tol: &ToleranceSpec,
    warm: Option<(&[f64], &[f64], &[f64])>,
) -> Result<QpSolution> {
    p.validate()?;
    if !tol.assume_psd {
        admm::verify_psd(&p.p)?;
    }
    let mut sol = admm::solve(p, tol, warm)?;
    if sol.status != SolveStatus::Optimal {
        // Dense fallback for small stubborn problems.
        let kkt_dim = p.n_vars() + p.n_rows();
        if sol.status == SolveStatus::MaxIterations && kkt_dim <= 1500 {
            match active_set::solve_active_set(p) {
                Ok(fallback) => {
                    let rep = kkt_residuals(p, &fallback)?;
                    if rep.primal_inf <= tol.eps_feas && rep.dual_inf <= tol.eps_dual {
                        return Ok(fallback);
                    }
                    log::debug!(
                        "active-set fallback rejected: status {:?}, residuals {rep:?}",
                        fallback.status
                    );
                }
                Err(e) => log::debug!("active-set fallback failed: {e}"),
            }
        }
    }
    if sol.status == SolveStatus::Optimal {
        let rep = kkt_residuals(p, &sol)?;
        debug_assert!(
            rep.primal_inf <= tol.eps_feas * 10.0 && rep.dual_inf <= tol.eps_dual * 10.0,
            "optimal status without certificate: {rep:?}"
        );
        sol.objective = p.objective_at(&sol.x);
    }
    Ok(sol)
}
