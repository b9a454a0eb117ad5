//! Continuous trainers: the classical ℓ2 soft-margin dual, the
//! ordered-weighted convex formulations, and the two-step reweighting
//! heuristic.

pub mod app_owa;
pub mod convex;
pub mod l2;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_cross, kernel_eval, GramMatrix, KernelSpec};
use crate::qp::{
    kkt_residuals, solve_qp_warm, KktReport, QpProblem, QpSolution, SolveStatus, SparseMatrix,
    ToleranceSpec,
};

pub use app_owa::{train_app_owa, AppOwaOutcome};
pub use convex::{
    recover_bias, train_c_owa_dual, train_c_owa_primal, train_ot_c_owa, ConvexOwaDualSolution,
    OtOwaSolution, PrimalOwaSolution,
};
pub use l2::{train_l2_svm, train_l2_svm_with_tol};

/// Worst-case KKT residuals across every QP a trainer solved.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct KktAggregate {
    pub max_primal: f64,
    pub max_dual: f64,
    pub max_comp: f64,
    pub solves: usize,
}

impl KktAggregate {
    pub fn absorb(&mut self, r: &KktReport) {
        self.max_primal = self.max_primal.max(r.primal_inf);
        self.max_dual = self.max_dual.max(r.dual_inf);
        self.max_comp = self.max_comp.max(r.comp_slack);
        self.solves += 1;
    }

    pub fn merge(&mut self, other: &KktAggregate) {
        self.max_primal = self.max_primal.max(other.max_primal);
        self.max_dual = self.max_dual.max(other.max_dual);
        self.max_comp = self.max_comp.max(other.max_comp);
        self.solves += other.solves;
    }
}

/// Solves a QP and turns non-optimal statuses into errors, recording the
/// certificate.
pub(crate) fn certified_solve(
    prob: &QpProblem,
    tol: &ToleranceSpec,
    warm: Option<(&[f64], &[f64], &[f64])>,
    agg: &mut KktAggregate,
) -> Result<QpSolution> {
    let sol = solve_qp_warm(prob, tol, warm)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::MaxIterations => return Err(Error::MaxIterations(sol.iterations)),
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible("trainer subproblem reported infeasible".into()))
        }
    }
    agg.absorb(&kkt_residuals(prob, &sol)?);
    Ok(sol)
}

/// A trained kernel classifier evaluating Σ αᵢ yᵢ K(xᵢ, x) + b.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub support_x: Array2<f64>,
    pub support_y: Vec<i8>,
    pub trainer_tag: String,
    pub objective: f64,
    /// Human-readable description of the weight vector that produced the
    /// model, when one was involved.
    pub lambda_provenance: Option<String>,
    pub certificates: KktAggregate,
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 1e-9).count()
    }

    /// Decision score for one sample.
    pub fn decision_function(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.support_x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support_x.ncols(),
                got: x.len(),
            });
        }
        let mut score = self.bias;
        for i in 0..self.support_x.nrows() {
            if self.alpha[i] == 0.0 {
                continue;
            }
            score += self.alpha[i]
                * f64::from(self.support_y[i])
                * kernel_eval(&self.kernel, self.support_x.row(i), x)?;
        }
        Ok(score)
    }

    /// Sign of the score with ties going to +1.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<i8> {
        Ok(if self.decision_function(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Scores for a whole matrix of samples.
    pub fn decision_many(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let cross = gram_cross(&self.kernel, x, self.support_x.view())?;
        let mut out = vec![self.bias; x.nrows()];
        for r in 0..x.nrows() {
            for i in 0..self.support_x.nrows() {
                out[r] += self.alpha[i] * f64::from(self.support_y[i]) * cross.values[[r, i]];
            }
        }
        Ok(out)
    }

    /// Scores for the training rows given the training Gram matrix.
    pub fn training_scores(&self, gram: &GramMatrix) -> Vec<f64> {
        let n = gram.nrows();
        let mut out = vec![self.bias; n];
        for r in 0..n {
            for i in 0..n {
                out[r] += self.alpha[i] * f64::from(self.support_y[i]) * gram.values[[i, r]];
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let x: Vec<Vec<f64>> =
            self.support_x.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok(serde_json::json!({
            "format_version": 1,
            "trainer_tag": self.trainer_tag,
            "kernel": self.kernel,
            "alpha": self.alpha,
            "bias": self.bias,
            "support_x": x,
            "support_y": self.support_y,
            "objective": self.objective,
            "lambda_provenance": self.lambda_provenance,
            "kkt": self.certificates,
        }))
    }

    pub fn from_json(value: &serde_json::Value) -> Result<SvmModel> {
        let version = value["format_version"].as_u64().unwrap_or(0);
        if version != 1 {
            return Err(Error::ConfigError(format!("unsupported model version {version}")));
        }
        let kernel: KernelSpec = serde_json::from_value(value["kernel"].clone())?;
        let alpha: Vec<f64> = serde_json::from_value(value["alpha"].clone())?;
        let support_y: Vec<i8> = serde_json::from_value(value["support_y"].clone())?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(value["support_x"].clone())?;
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        let mut support_x = Array2::zeros((n, d));
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                support_x[[r, c]] = v;
            }
        }
        Ok(SvmModel {
            alpha,
            bias: value["bias"].as_f64().unwrap_or(0.0),
            kernel,
            support_x,
            support_y,
            trainer_tag: value["trainer_tag"].as_str().unwrap_or("unknown").to_string(),
            objective: value["objective"].as_f64().unwrap_or(f64::NAN),
            lambda_provenance: value["lambda_provenance"].as_str().map(ToString::to_string),
            certificates: serde_json::from_value(value["kkt"].clone()).unwrap_or_default(),
        })
    }
}

/// Assembles P = (y yᵀ) ⊙ K with the 1e-10 diagonal jitter applied at QP
/// assembly time (stored Gram matrices stay exact).
pub(crate) fn labeled_quadratic(gram: &GramMatrix, y: &[i8]) -> SparseMatrix {
    let n = y.len();
    let mut trip = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = f64::from(y[i]) * f64::from(y[j]) * gram.values[[i, j]];
            if i == j {
                v += 1e-10;
            }
            if v != 0.0 {
                trip.push((i, j, v));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &trip).expect("labeled quadratic shape")
}

/// Shared soft-margin dual: maximize Σα − ½ Σ αᵢαⱼyᵢyⱼKᵢⱼ with 0 ≤ αᵢ ≤ cap_i
/// and Σ αᵢyᵢ = 0, stated as a minimization for the QP engine.
pub(crate) struct SoftMarginDual {
    pub alpha: Vec<f64>,
    /// Multiplier of the Σ αy = 0 row; equals the primal bias at the exact
    /// KKT point and is used to cross-check the recovered bias.
    pub eq_dual: f64,
    /// Maximization objective value (Σα − ½αᵀQα).
    pub objective: f64,
    pub solution: QpSolution,
}

pub(crate) fn solve_soft_margin_dual(
    q_matrix: &SparseMatrix,
    y: &[i8],
    caps: &[f64],
    tol: &ToleranceSpec,
    warm: Option<(&[f64], &[f64], &[f64])>,
    agg: &mut KktAggregate,
) -> Result<SoftMarginDual> {
    let n = y.len();
    let a = SparseMatrix::from_triplets(
        1,
        n,
        &(0..n).map(|i| (0usize, i, f64::from(y[i]))).collect::<Vec<_>>(),
    )
    .expect("eq row");
    let prob = QpProblem {
        p: q_matrix.clone(),
        q: vec![-1.0; n],
        a,
        lower: vec![0.0],
        upper: vec![0.0],
        var_lower: Some(vec![0.0; n]),
        var_upper: Some(caps.to_vec()),
    };
    let sol = certified_solve(&prob, tol, warm, agg)?;
    Ok(SoftMarginDual {
        alpha: sol.x.clone(),
        eq_dual: sol.y[0],
        objective: -sol.objective,
        solution: sol,
    })
}

/// Bias from free support vectors (0 < αᵢ < capᵢ strictly), averaged; when no
/// such vector exists, the midpoint of the KKT-implied interval.
pub(crate) fn bias_from_scores(
    alpha: &[f64],
    caps: &[f64],
    y: &[i8],
    scores_without_bias: &[f64],
    majority: i8,
) -> Result<f64> {
    let n = alpha.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let eps = 1e-6 * caps[i].max(1e-12);
        if alpha[i] > eps && alpha[i] < caps[i] - eps {
            // y_i (s_i + b) = 1  =>  b = y_i − s_i  (using 1/y = y for ±1)
            sum += f64::from(y[i]) - scores_without_bias[i];
            count += 1;
        }
    }
    if count > 0 {
        return Ok(sum / count as f64);
    }
    // Interval from the complementary-slackness direction of each sample.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let eps = 1e-6 * caps[i].max(1e-12);
        let b_at = f64::from(y[i]) - scores_without_bias[i];
        if alpha[i] <= eps {
            // margin at least 1
            if y[i] == 1 {
                lo = lo.max(b_at);
            } else {
                hi = hi.min(b_at);
            }
        } else if alpha[i] >= caps[i] - eps {
            // margin at most 1
            if y[i] == 1 {
                hi = hi.min(b_at);
            } else {
                lo = lo.max(b_at);
            }
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => Ok(0.5 * (lo + hi)),
        (true, false) => Ok(lo),
        (false, true) => Ok(hi),
        (false, false) => {
            log::warn!("empty model: no bias information, defaulting to majority class");
            Err(Error::EmptyModel(format!("majority class {majority}")))
        }
    }
}
