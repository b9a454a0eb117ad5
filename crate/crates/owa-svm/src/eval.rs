//! Metrics, cross validation, grid search and the rank-coincidence
//! diagnostic.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_standardizer, fit_standardizer, stratified_folds, TrainingSet};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::qp::ToleranceSpec;
use crate::svm::app_owa::deviation_positions;
use crate::svm::{
    train_app_owa, train_c_owa_dual, train_l2_svm_with_tol, SvmModel,
};
use crate::weights::{quantifier_weights, QuantifierSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[i8], predicted: &[i8]) -> ConfusionCounts {
        let mut c = ConfusionCounts { tp: 0, tn: 0, fp: 0, fn_: 0 };
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (1, 1) => c.tp += 1,
                (-1, -1) => c.tn += 1,
                (-1, 1) => c.fp += 1,
                (1, -1) => c.fn_ += 1,
                _ => {}
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// (TP + TN) / total.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Balanced accuracy ½(TPR + TNR); emitted as `auc_balanced` since it is the
/// two-point formula, not a full ROC integral.
pub fn auc(c: &ConfusionCounts) -> Result<f64> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return Err(Error::OneClassAbsent);
    }
    Ok(0.5 * (c.tp as f64 / pos as f64 + c.tn as f64 / neg as f64))
}

/// Percentage of indices occupying the same position in both rank vectors.
pub fn order_coincidence(perm_a: &[usize], perm_b: &[usize]) -> Result<f64> {
    let n = perm_a.len();
    if perm_b.len() != n {
        return Err(Error::NotAPermutation(n));
    }
    for perm in [perm_a, perm_b] {
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::NotAPermutation(n));
            }
            seen[p] = true;
        }
    }
    let same = perm_a.iter().zip(perm_b).filter(|(a, b)| a == b).count();
    Ok(100.0 * same as f64 / n as f64)
}

/// Trainer family selectable in a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    L2,
    COwa,
    NcOwa,
    AppOwa,
    /// Picks the convex trainer for non-decreasing weights and the exact
    /// mixed-integer one otherwise.
    Auto,
}

impl TrainerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerKind::L2 => "l2",
            TrainerKind::COwa => "c-owa",
            TrainerKind::NcOwa => "nc-owa",
            TrainerKind::AppOwa => "app-owa",
            TrainerKind::Auto => "auto",
        }
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(TrainerKind::L2),
            "c-owa" | "c_owa" | "cowa" => Ok(TrainerKind::COwa),
            "nc-owa" | "nc_owa" | "ncowa" => Ok(TrainerKind::NcOwa),
            "app-owa" | "app_owa" | "appowa" => Ok(TrainerKind::AppOwa),
            "auto" => Ok(TrainerKind::Auto),
            other => Err(Error::ConfigError(format!("unknown trainer {other:?}"))),
        }
    }
}

/// One train/evaluate configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub trainer: TrainerKind,
    pub kernel: KernelSpec,
    pub c: f64,
    /// Quantifier generating per-fold weights; None means uniform weights
    /// (and is required for the plain trainer).
    pub quantifier: Option<QuantifierSpec>,
}

impl EvalConfig {
    pub fn describe(&self) -> String {
        let q = match &self.quantifier {
            Some(q) => format!("{}(alpha={})", q.kind.as_str(), q.alpha),
            None => "none".into(),
        };
        format!(
            "trainer={} kernel={} C={} quantifier={}",
            self.trainer.as_str(),
            self.kernel.describe(),
            self.c,
            q
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub acc: f64,
    pub auc_balanced: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold: Vec<FoldOutcome>,
    pub mean_acc: f64,
    pub mean_auc: f64,
    pub config: EvalConfig,
    pub folds: usize,
    pub seed: u64,
}

/// Resolves the effective trainer for a weight vector: the convex trainer
/// refuses non-monotone weights and `Auto` dispatches on the monotonicity
/// flag.
pub fn dispatch_formulation(
    nondecreasing: bool,
    requested: TrainerKind,
) -> Result<TrainerKind> {
    match requested {
        TrainerKind::COwa if !nondecreasing => {
            Err(Error::NonMonotoneWeights { trainer: "c-owa (use nc-owa for these weights)" })
        }
        TrainerKind::Auto => {
            Ok(if nondecreasing { TrainerKind::COwa } else { TrainerKind::NcOwa })
        }
        other => Ok(other),
    }
}

/// Trains one configuration on a prepared (already standardized) training
/// set and returns the model.
pub fn train_one(
    train: &TrainingSet,
    config: &EvalConfig,
    tol: &ToleranceSpec,
    bb: &crate::nonconvex::BbOptions,
) -> Result<SvmModel> {
    let y: Vec<i8> = train.labels.to_vec();
    let n = y.len();
    let g = gram(&config.kernel, train.features.view())?;
    let weights = match &config.quantifier {
        Some(q) => quantifier_weights(q, n)?,
        None => crate::weights::OwaWeights::uniform(n),
    };
    let trainer = dispatch_formulation(weights.nondecreasing, config.trainer)?;
    let mut model = match trainer {
        TrainerKind::L2 => train_l2_svm_with_tol(&g, train.features.view(), &y, config.c, tol)?,
        TrainerKind::COwa => {
            let (_, model) =
                train_c_owa_dual(&g, train.features.view(), &y, config.c, &weights, tol)?;
            model
        }
        TrainerKind::AppOwa => {
            train_app_owa(&g, train.features.view(), &y, config.c, &weights, tol)?.model
        }
        TrainerKind::NcOwa => {
            let sol = crate::nonconvex::train_nc_owa_kernel(&g, &y, config.c, &weights, bb)?;
            nc_solution_to_model(&g, train, &y, config.c, &weights, &sol, tol)?
        }
        TrainerKind::Auto => unreachable!("dispatch resolved above"),
    };
    if let Some(q) = &config.quantifier {
        model.lambda_provenance = Some(format!("{}(alpha={}, n={})", q.kind.as_str(), q.alpha, n));
    }
    Ok(model)
}

/// Builds a certified model from a mixed-integer solution by re-solving the
/// fixed-assignment dual at the optimal permutation (its multipliers satisfy
/// Σαy = 0 and α ≥ 0, unlike the free-signed direct coefficients).
fn nc_solution_to_model(
    g: &crate::kernel::GramMatrix,
    train: &TrainingSet,
    y: &[i8],
    c: f64,
    weights: &crate::weights::OwaWeights,
    sol: &crate::nonconvex::NcOwaSolution,
    tol: &ToleranceSpec,
) -> Result<SvmModel> {
    let m_big = crate::nonconvex::default_big_m_gram(g);
    let dual = crate::nonconvex::train_fixed_assignment(g, y, c, weights, &sol.z, m_big, tol)?;
    let mut certs = sol.certificates;
    certs.merge(&dual.certificates);
    Ok(SvmModel {
        alpha: dual.alpha,
        bias: dual.eq_dual,
        kernel: g.spec,
        support_x: train.features.clone(),
        support_y: y.to_vec(),
        trainer_tag: "nc-owa".into(),
        objective: sol.objective,
        lambda_provenance: None,
        certificates: certs,
    })
}

/// Stratified k-fold cross validation: per fold, fit the standardizer on the
/// training part only, train, and score the held-out part.
pub fn cross_validate(
    set: &TrainingSet,
    config: &EvalConfig,
    k: usize,
    seed: u64,
    tol: &ToleranceSpec,
    bb: &crate::nonconvex::BbOptions,
) -> Result<CvReport> {
    let labels: Vec<i8> = set.labels.to_vec();
    let assignment = stratified_folds(&labels, k, seed)?;
    let outcomes: Vec<Result<FoldOutcome>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (train_idx, test_idx) = assignment.split(fold);
            let started = std::time::Instant::now();
            let train_raw = set.subset(&train_idx);
            let test_raw = set.subset(&test_idx);
            let standardizer = fit_standardizer(&train_raw);
            let train = apply_standardizer(&standardizer, &train_raw)?;
            let test = apply_standardizer(&standardizer, &test_raw)?;
            let model = train_one(&train, config, tol, bb)?;
            let train_seconds = started.elapsed().as_secs_f64();
            let scores = model.decision_many(test.features.view())?;
            let predicted: Vec<i8> =
                scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
            let truth: Vec<i8> = test.labels.to_vec();
            let c = ConfusionCounts::from_predictions(&truth, &predicted);
            Ok(FoldOutcome {
                fold,
                acc: accuracy(&c)?,
                auc_balanced: auc(&c)?,
                train_seconds,
            })
        })
        .collect();
    let mut per_fold = Vec::with_capacity(k);
    for o in outcomes {
        // A failed fold invalidates the whole configuration.
        per_fold.push(o?);
    }
    per_fold.sort_by_key(|f| f.fold);
    let mean_acc = per_fold.iter().map(|f| f.acc).sum::<f64>() / k as f64;
    let mean_auc = per_fold.iter().map(|f| f.auc_balanced).sum::<f64>() / k as f64;
    Ok(CvReport { per_fold, mean_acc, mean_auc, config: config.clone(), folds: k, seed })
}

/// Grid definition for [`grid_search`]. Quantifier and α grids are ignored
/// for the plain trainer (no weights involved).
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub trainer: TrainerKind,
    pub kernel_sigmas: Vec<Option<f64>>,
    pub kernel_variant: crate::kernel::GaussianVariant,
    pub c_values: Vec<f64>,
    pub quantifiers: Vec<QuantifierSpec>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_by_auc: CvReport,
    pub best_by_acc: CvReport,
    pub table: Vec<CvReport>,
}

/// Evaluates the full Cartesian grid; the winner maximizes mean balanced
/// accuracy with ties broken by higher accuracy, then smaller C, then
/// smaller σ.
pub fn grid_search(
    set: &TrainingSet,
    grid: &GridSpec,
    k: usize,
    seed: u64,
    tol: &ToleranceSpec,
    bb: &crate::nonconvex::BbOptions,
) -> Result<GridOutcome> {
    let mut configs: Vec<EvalConfig> = Vec::new();
    for sigma in &grid.kernel_sigmas {
        let kernel = match sigma {
            None => KernelSpec::Linear,
            Some(s) => KernelSpec::gaussian(*s, grid.kernel_variant)?,
        };
        for &c in &grid.c_values {
            if grid.trainer == TrainerKind::L2 || grid.quantifiers.is_empty() {
                configs.push(EvalConfig { trainer: grid.trainer, kernel, c, quantifier: None });
            } else {
                for q in &grid.quantifiers {
                    configs.push(EvalConfig {
                        trainer: grid.trainer,
                        kernel,
                        c,
                        quantifier: Some(*q),
                    });
                }
            }
        }
    }
    if configs.is_empty() {
        return Err(Error::AllConfigsFailed("empty grid".into()));
    }

    let results: BTreeMap<usize, Result<CvReport>> = configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| (i, cross_validate(set, cfg, k, seed, tol, bb)))
        .collect();
    let mut table = Vec::new();
    let mut first_error = None;
    for (_, r) in results {
        match r {
            Ok(rep) => table.push(rep),
            Err(e) => {
                log::warn!("grid configuration failed: {e}");
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if table.is_empty() {
        return Err(Error::AllConfigsFailed(
            first_error.map(|e| e.to_string()).unwrap_or_else(|| "no configurations".into()),
        ));
    }

    let sigma_of = |r: &CvReport| match r.config.kernel {
        KernelSpec::Linear => 0.0,
        KernelSpec::Gaussian { sigma, .. } => sigma,
    };
    let better_auc = |a: &CvReport, b: &CvReport| {
        (a.mean_auc, a.mean_acc, -a.config.c, -sigma_of(a))
            .partial_cmp(&(b.mean_auc, b.mean_acc, -b.config.c, -sigma_of(b)))
            .unwrap()
    };
    let better_acc = |a: &CvReport, b: &CvReport| {
        (a.mean_acc, a.mean_auc, -a.config.c, -sigma_of(a))
            .partial_cmp(&(b.mean_acc, b.mean_auc, -b.config.c, -sigma_of(b)))
            .unwrap()
    };
    let best_by_auc = table.iter().max_by(|a, b| better_auc(a, b)).unwrap().clone();
    let best_by_acc = table.iter().max_by(|a, b| better_acc(a, b)).unwrap().clone();
    Ok(GridOutcome { best_by_auc, best_by_acc, table })
}

/// Per-fold rank-coincidence percentages between the two steps of the
/// reweighting heuristic on the training part of each fold, plus the
/// coincidence between step 2 and the exact convex trainer's order.
pub fn order_coincidence_diagnostic(
    set: &TrainingSet,
    kernel: &KernelSpec,
    c: f64,
    quantifier: &QuantifierSpec,
    k: usize,
    seed: u64,
    tol: &ToleranceSpec,
) -> Result<(f64, f64)> {
    let labels: Vec<i8> = set.labels.to_vec();
    let assignment = stratified_folds(&labels, k, seed)?;
    let per_fold: Vec<Result<(f64, f64)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (train_idx, _) = assignment.split(fold);
            let train_raw = set.subset(&train_idx);
            let standardizer = fit_standardizer(&train_raw);
            let train = apply_standardizer(&standardizer, &train_raw)?;
            let y: Vec<i8> = train.labels.to_vec();
            let n = y.len();
            let g = gram(kernel, train.features.view())?;
            let weights = quantifier_weights(quantifier, n)?;
            let out = train_app_owa(&g, train.features.view(), &y, c, &weights, tol)?;
            let step12 = order_coincidence(&out.step1_position, &out.step2_position)?;
            let (dual, model) =
                train_c_owa_dual(&g, train.features.view(), &y, c, &weights, tol)?;
            let _ = model;
            let exact_positions = deviation_positions(&dual.xi);
            let step2_exact = order_coincidence(&out.step2_position, &exact_positions)?;
            Ok((step12, step2_exact))
        })
        .collect();
    let mut s12 = 0.0;
    let mut s2e = 0.0;
    for r in per_fold {
        let (a, b) = r?;
        s12 += a;
        s2e += b;
    }
    Ok((s12 / k as f64, s2e / k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GaussianVariant;
    use crate::weights::QuantifierKind;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn metric_point_values() {
        let c = ConfusionCounts { tp: 50, tn: 40, fp: 5, fn_: 5 };
        assert_abs_diff_eq!(accuracy(&c).unwrap(), 0.90, epsilon = 1e-12);
        assert_abs_diff_eq!(
            auc(&c).unwrap(),
            0.5 * (50.0 / 55.0 + 40.0 / 45.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(auc(&c).unwrap(), 0.8990, epsilon = 1e-4);

        let one_class = ConfusionCounts { tp: 0, tn: 100, fp: 0, fn_: 0 };
        assert_abs_diff_eq!(accuracy(&one_class).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(auc(&one_class), Err(Error::OneClassAbsent)));

        let even = ConfusionCounts { tp: 1, tn: 1, fp: 1, fn_: 1 };
        assert_abs_diff_eq!(accuracy(&even).unwrap(), 0.5, epsilon = 1e-12);

        let perfect = ConfusionCounts { tp: 10, tn: 10, fp: 0, fn_: 0 };
        assert_abs_diff_eq!(auc(&perfect).unwrap(), 1.0, epsilon = 1e-12);
        let all_neg = ConfusionCounts { tp: 0, tn: 10, fp: 0, fn_: 10 };
        assert_abs_diff_eq!(auc(&all_neg).unwrap(), 0.5, epsilon = 1e-12);

        assert!(matches!(
            accuracy(&ConfusionCounts { tp: 0, tn: 0, fp: 0, fn_: 0 }),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn metrics_invariant_under_class_swap() {
        let c = ConfusionCounts { tp: 31, tn: 17, fp: 4, fn_: 9 };
        let swapped = ConfusionCounts { tp: c.tn, tn: c.tp, fp: c.fn_, fn_: c.fp };
        assert_abs_diff_eq!(accuracy(&c).unwrap(), accuracy(&swapped).unwrap(), epsilon = 1e-15);
        assert_abs_diff_eq!(auc(&c).unwrap(), auc(&swapped).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn coincidence_examples() {
        assert_abs_diff_eq!(order_coincidence(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(), 100.0);
        assert_abs_diff_eq!(order_coincidence(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap(), 0.0);
        assert_abs_diff_eq!(order_coincidence(&[0, 1, 2, 3], &[1, 0, 2, 3]).unwrap(), 50.0);
        assert!(matches!(
            order_coincidence(&[0, 1, 1], &[0, 1, 2]),
            Err(Error::NotAPermutation(3))
        ));
    }

    #[test]
    fn dispatch_rules() {
        assert_eq!(dispatch_formulation(true, TrainerKind::Auto).unwrap(), TrainerKind::COwa);
        assert_eq!(dispatch_formulation(false, TrainerKind::Auto).unwrap(), TrainerKind::NcOwa);
        assert!(matches!(
            dispatch_formulation(false, TrainerKind::COwa),
            Err(Error::NonMonotoneWeights { .. })
        ));
        assert_eq!(dispatch_formulation(true, TrainerKind::L2).unwrap(), TrainerKind::L2);
        // The paper's quantifier dispatch: basic and exponential are always
        // monotone, quadratic only at the smallest grid value.
        for (kind, alpha, expect_convex) in [
            (QuantifierKind::Basic, 0.6, true),
            (QuantifierKind::Exponential, 0.4, true),
            (QuantifierKind::Quadratic, 0.2, true),
            (QuantifierKind::Quadratic, 0.6, false),
            (QuantifierKind::Trigonometric, 0.6, false),
        ] {
            let w =
                quantifier_weights(&QuantifierSpec::new(kind, alpha).unwrap(), 40).unwrap();
            let effective = dispatch_formulation(w.nondecreasing, TrainerKind::Auto).unwrap();
            assert_eq!(
                effective,
                if expect_convex { TrainerKind::COwa } else { TrainerKind::NcOwa },
                "{kind:?} alpha={alpha}"
            );
        }
    }

    fn separable_set(n: usize) -> TrainingSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = if i % 2 == 0 { 1i8 } else { -1 };
            x[[i, 0]] = 3.0 * f64::from(label) + rng.gen_range(-0.5..0.5);
            x[[i, 1]] = rng.gen_range(-1.0..1.0);
            y.push(label);
        }
        TrainingSet::new(x, ndarray::Array1::from_vec(y)).unwrap()
    }

    #[test]
    fn cross_validate_separable_is_perfect_and_deterministic() {
        let set = separable_set(24);
        let config = EvalConfig {
            trainer: TrainerKind::L2,
            kernel: KernelSpec::Linear,
            c: 10.0,
            quantifier: None,
        };
        let tol = ToleranceSpec::default();
        let bb = crate::nonconvex::BbOptions::default();
        let rep = cross_validate(&set, &config, 4, 0, &tol, &bb).unwrap();
        assert_abs_diff_eq!(rep.mean_acc, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.mean_auc, 1.0, epsilon = 1e-12);
        // Mean equals the arithmetic mean of the folds.
        let m = rep.per_fold.iter().map(|f| f.acc).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(rep.mean_acc, m, epsilon = 1e-12);

        let rep2 = cross_validate(&set, &config, 4, 0, &tol, &bb).unwrap();
        assert_eq!(format!("{rep:?}"), format!("{rep2:?}"));
    }

    #[test]
    fn leave_one_out_structure() {
        let set = separable_set(12);
        let config = EvalConfig {
            trainer: TrainerKind::L2,
            kernel: KernelSpec::Linear,
            c: 1.0,
            quantifier: None,
        };
        // k = n/2 per class minimum; use k = 6 folds of size 2.
        let rep = cross_validate(
            &set,
            &config,
            6,
            0,
            &ToleranceSpec::default(),
            &crate::nonconvex::BbOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.per_fold.len(), 6);
        for f in &rep.per_fold {
            assert!(f.acc >= 0.0 && f.acc <= 1.0);
        }
    }

    #[test]
    fn grid_search_single_config_matches_cv_and_counts_rows() {
        let set = separable_set(16);
        let tol = ToleranceSpec::default();
        let bb = crate::nonconvex::BbOptions::default();
        let grid = GridSpec {
            trainer: TrainerKind::L2,
            kernel_sigmas: vec![Some(1.0)],
            kernel_variant: GaussianVariant::PaperUnsquared,
            c_values: vec![1.0],
            quantifiers: vec![],
        };
        let out = grid_search(&set, &grid, 4, 0, &tol, &bb).unwrap();
        assert_eq!(out.table.len(), 1);
        let config = EvalConfig {
            trainer: TrainerKind::L2,
            kernel: KernelSpec::gaussian(1.0, GaussianVariant::PaperUnsquared).unwrap(),
            c: 1.0,
            quantifier: None,
        };
        let direct = cross_validate(&set, &config, 4, 0, &tol, &bb).unwrap();
        assert_abs_diff_eq!(out.best_by_auc.mean_acc, direct.mean_acc, epsilon = 1e-12);

        // Row count = product of grid sizes (quantifier dimension dropped
        // for the weightless trainer).
        let grid = GridSpec {
            trainer: TrainerKind::L2,
            kernel_sigmas: vec![Some(0.5), Some(1.0), Some(2.0)],
            kernel_variant: GaussianVariant::PaperUnsquared,
            c_values: vec![0.5, 1.0],
            quantifiers: vec![QuantifierSpec::new(QuantifierKind::Basic, 0.4).unwrap()],
        };
        let out = grid_search(&set, &grid, 4, 0, &tol, &bb).unwrap();
        assert_eq!(out.table.len(), 6);
    }

    #[test]
    fn grid_tie_break_prefers_higher_acc_then_smaller_c() {
        let mk = |auc: f64, acc: f64, c: f64| CvReport {
            per_fold: vec![],
            mean_acc: acc,
            mean_auc: auc,
            config: EvalConfig {
                trainer: TrainerKind::L2,
                kernel: KernelSpec::Linear,
                c,
                quantifier: None,
            },
            folds: 10,
            seed: 0,
        };
        let a = mk(0.9, 0.95, 2.0);
        let b = mk(0.9, 0.93, 1.0);
        let pick = |x: &CvReport, y: &CvReport| {
            if (x.mean_auc, x.mean_acc, -x.config.c) >= (y.mean_auc, y.mean_acc, -y.config.c) {
                x.clone()
            } else {
                y.clone()
            }
        };
        assert_eq!(pick(&a, &b).mean_acc, 0.95);
        // Equal AUC and ACC: smaller C wins.
        let c1 = mk(0.9, 0.95, 1.0);
        let c2 = mk(0.9, 0.95, 4.0);
        assert_eq!(pick(&c1, &c2).config.c, 1.0);
    }
}
