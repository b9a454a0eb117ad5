//! Classical ℓ2 soft-margin SVM trained through its kernel dual.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::qp::ToleranceSpec;
use crate::svm::{
    bias_from_scores, labeled_quadratic, solve_soft_margin_dual, KktAggregate, SvmModel,
};

/// Trains the standard kernel dual: maximize Σα − ½ΣΣ αᵢαⱼyᵢyⱼK(xᵢ,xⱼ)
/// subject to 0 ≤ α ≤ C and Σ αy = 0. The bias is averaged over free
/// support vectors, falling back to the midpoint of the KKT interval.
pub fn train_l2_svm(
    gram: &GramMatrix,
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
) -> Result<SvmModel> {
    train_l2_svm_with_tol(gram, x, y, c, &ToleranceSpec::default())
}

pub fn train_l2_svm_with_tol(
    gram: &GramMatrix,
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    tol: &ToleranceSpec,
) -> Result<SvmModel> {
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::ConfigError(format!("penalty C must be positive, got {c}")));
    }
    let n = y.len();
    if gram.nrows() != n || x.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gram.nrows() });
    }
    let q = labeled_quadratic(gram, y);
    let caps = vec![c; n];
    let mut agg = KktAggregate::default();
    let dual = solve_soft_margin_dual(&q, y, &caps, tol, None, &mut agg)?;

    let mut scores = vec![0.0; n];
    for r in 0..n {
        for i in 0..n {
            scores[r] += dual.alpha[i] * f64::from(y[i]) * gram.values[[i, r]];
        }
    }
    let majority = majority_class(y);
    let bias = match bias_from_scores(&dual.alpha, &caps, y, &scores, majority) {
        Ok(b) => b,
        Err(Error::EmptyModel(_)) => f64::from(majority),
        Err(e) => return Err(e),
    };

    Ok(SvmModel {
        alpha: dual.alpha,
        bias,
        kernel: gram.spec,
        support_x: x.to_owned(),
        support_y: y.to_vec(),
        trainer_tag: "l2".into(),
        objective: dual.objective,
        lambda_provenance: None,
        certificates: agg,
    })
}

pub(crate) fn majority_class(y: &[i8]) -> i8 {
    let pos = y.iter().filter(|&&v| v == 1).count();
    if 2 * pos >= y.len() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn two_point_analytic() {
        // x = ±1 in 1-D, linear kernel, large C: the primal optimum is
        // w = 1, b = 0 (both margins tight), and w = α₁ + α₂ with symmetry
        // forces α = (1/2, 1/2).
        let x = array![[1.0], [-1.0]];
        let y = vec![1i8, -1];
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let m = train_l2_svm(&g, x.view(), &y, 10.0).unwrap();
        assert_abs_diff_eq!(m.alpha[0], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(m.alpha[1], 0.5, epsilon = 1e-5);
        let w_eff = m.alpha[0] + m.alpha[1];
        assert_abs_diff_eq!(w_eff, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(m.bias, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.decision_function(array![0.0].view()).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.decision_function(array![0.5].view()).unwrap(), 0.5, epsilon = 1e-5);
        // Tie rule at the separator.
        assert_eq!(m.predict(array![0.0].view()).unwrap(), 1);
    }

    #[test]
    fn duplicated_dataset_same_decision_function() {
        // Doubling every sample at half the penalty leaves the decision
        // function unchanged; per-copy α sums halve.
        let x = array![[0.2, 1.1], [-0.7, 0.3], [1.5, -0.4], [-1.0, -1.2], [0.6, 0.5]];
        let y = vec![1i8, -1, 1, -1, 1];
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let base = train_l2_svm(&g, x.view(), &y, 2.0).unwrap();

        let mut x2 = Array2::zeros((10, 2));
        let mut y2 = Vec::new();
        for i in 0..5 {
            x2.row_mut(2 * i).assign(&x.row(i));
            x2.row_mut(2 * i + 1).assign(&x.row(i));
            y2.push(y[i]);
            y2.push(y[i]);
        }
        let g2 = gram(&KernelSpec::Linear, x2.view()).unwrap();
        let doubled = train_l2_svm(&g2, x2.view(), &y2, 1.0).unwrap();

        for probe in [array![0.0, 0.0], array![1.0, -1.0], array![-0.3, 0.8]] {
            assert_abs_diff_eq!(
                base.decision_function(probe.view()).unwrap(),
                doubled.decision_function(probe.view()).unwrap(),
                epsilon = 2e-4
            );
        }
        for i in 0..5 {
            let per_copy = doubled.alpha[2 * i] + doubled.alpha[2 * i + 1];
            assert_abs_diff_eq!(per_copy, base.alpha[i], epsilon = 2e-4);
        }
    }

    #[test]
    fn separable_data_trains_clean() {
        let x = array![[2.0, 0.1], [1.8, -0.2], [-2.0, 0.3], [-1.7, -0.1]];
        let y = vec![1i8, 1, -1, -1];
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let m = train_l2_svm(&g, x.view(), &y, 1e4).unwrap();
        for i in 0..4 {
            let s = m.decision_function(x.row(i)).unwrap();
            // Hinge deviations vanish on separable data.
            assert!(f64::from(y[i]) * s >= 1.0 - 1e-4, "sample {i}: {s}");
            assert_eq!(m.predict(x.row(i)).unwrap(), y[i]);
        }
    }

    #[test]
    fn all_zero_alpha_model_scores_constant() {
        let m = SvmModel {
            alpha: vec![0.0, 0.0],
            bias: 0.3,
            kernel: KernelSpec::Linear,
            support_x: array![[1.0], [-1.0]],
            support_y: vec![1, -1],
            trainer_tag: "test".into(),
            objective: 0.0,
            lambda_provenance: None,
            certificates: KktAggregate::default(),
        };
        for v in [-5.0, 0.0, 7.0] {
            assert_eq!(m.decision_function(array![v].view()).unwrap(), 0.3);
            assert_eq!(m.predict(array![v].view()).unwrap(), 1);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let x = array![[1.0, 0.5], [-1.0, 0.2]];
        let y = vec![1i8, -1];
        let g = gram(
            &KernelSpec::gaussian(1.5, crate::kernel::GaussianVariant::PaperUnsquared).unwrap(),
            x.view(),
        )
        .unwrap();
        let m = train_l2_svm(&g, x.view(), &y, 3.0).unwrap();
        let json = m.to_json().unwrap();
        let back = SvmModel::from_json(&json).unwrap();
        assert_eq!(back.trainer_tag, m.trainer_tag);
        assert_eq!(back.alpha, m.alpha);
        assert_eq!(back.bias, m.bias);
        let probe = array![0.1, -0.4];
        assert_abs_diff_eq!(
            back.decision_function(probe.view()).unwrap(),
            m.decision_function(probe.view()).unwrap(),
            epsilon = 1e-15
        );
    }
}
