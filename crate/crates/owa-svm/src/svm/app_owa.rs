//! Two-step reweighting heuristic: train the classical soft-margin dual,
//! rank samples by their hinge deviations, then re-train with per-sample
//! dual caps C·λ_rank(i). With per-position weights this embeds the fixed
//! weights through the dual upper bounds, which is equivalent to scaling the
//! per-sample penalties in the primal.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::qp::ToleranceSpec;
use crate::svm::l2::majority_class;
use crate::svm::{
    bias_from_scores, labeled_quadratic, solve_soft_margin_dual, KktAggregate, SvmModel,
};
use crate::weights::OwaWeights;

/// Result of the two-step method with the rank diagnostics of both steps.
#[derive(Debug, Clone)]
pub struct AppOwaOutcome {
    pub model: SvmModel,
    /// Position of each sample in step one's deviation order (0-based).
    pub step1_position: Vec<usize>,
    /// Position of each sample in the deviation order induced by the
    /// re-trained model.
    pub step2_position: Vec<usize>,
}

/// Stable ascending ranks: position[i] = rank of sample i when sorting by
/// (deviation, index).
pub fn deviation_positions(xi: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xi.len()).collect();
    order.sort_by(|&a, &b| xi[a].partial_cmp(&xi[b]).unwrap().then(a.cmp(&b)));
    let mut position = vec![0usize; xi.len()];
    for (pos, &i) in order.iter().enumerate() {
        position[i] = pos;
    }
    position
}

pub fn train_app_owa(
    gram: &GramMatrix,
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<AppOwaOutcome> {
    let n = y.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch { weights: weights.len(), deviations: n });
    }
    let q = labeled_quadratic(gram, y);
    let mut agg = KktAggregate::default();

    // Step 1: plain soft margin.
    let caps1 = vec![c; n];
    let step1 = solve_soft_margin_dual(&q, y, &caps1, tol, None, &mut agg)?;
    let mut tol2 = tol.clone();
    tol2.assume_psd = true;
    let scores1 = scores_without_bias(gram, y, &step1.alpha);
    let majority = majority_class(y);
    let b1 = bias_from_scores(&step1.alpha, &caps1, y, &scores1, majority).unwrap_or(0.0);
    let xi1: Vec<f64> = (0..n)
        .map(|i| (1.0 - f64::from(y[i]) * (scores1[i] + b1)).max(0.0))
        .collect();
    let step1_position = deviation_positions(&xi1);

    // Step 2: per-sample caps fixed by the induced order.
    let caps2: Vec<f64> = (0..n).map(|i| c * weights.lambda[step1_position[i]]).collect();
    let step2 = solve_soft_margin_dual(&q, y, &caps2, &tol2, None, &mut agg)?;
    let scores2 = scores_without_bias(gram, y, &step2.alpha);
    let b2 = match bias_from_scores(&step2.alpha, &caps2, y, &scores2, majority) {
        Ok(b) => b,
        Err(Error::EmptyModel(_)) => f64::from(majority),
        Err(e) => return Err(e),
    };
    let xi2: Vec<f64> = (0..n)
        .map(|i| (1.0 - f64::from(y[i]) * (scores2[i] + b2)).max(0.0))
        .collect();
    let step2_position = deviation_positions(&xi2);

    let model = SvmModel {
        alpha: step2.alpha,
        bias: b2,
        kernel: gram.spec,
        support_x: x.to_owned(),
        support_y: y.to_vec(),
        trainer_tag: "app-owa".into(),
        objective: step2.objective,
        lambda_provenance: None,
        certificates: agg,
    };
    Ok(AppOwaOutcome { model, step1_position, step2_position })
}

fn scores_without_bias(gram: &GramMatrix, y: &[i8], alpha: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut scores = vec![0.0; n];
    for r in 0..n {
        for i in 0..n {
            scores[r] += alpha[i] * f64::from(y[i]) * gram.values[[i, r]];
        }
    }
    scores
}
