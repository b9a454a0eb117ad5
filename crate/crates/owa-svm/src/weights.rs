//! Position-weight generation from linguistic quantifiers and the ordered
//! weighted sum.
//!
//! A quantifier Q on [0,1] induces raw weights λ'_i = Q(1−(i−1)/n) − Q(1−i/n),
//! which are normalized by their average so the final vector has mean one.
//! Position 1 receives the smallest deviation, position n the largest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four quantifier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifierKind {
    /// Q(r) = r^α
    Basic,
    /// Q(r) = 1 / (1 − α·√r)
    Quadratic,
    /// Q(r) = e^(−α·r); decreasing, so raw differences are taken in
    /// absolute value (see `raw_weights`).
    Exponential,
    /// Q(r) = arcsin(α·r)
    Trigonometric,
}

impl QuantifierKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuantifierKind::Basic => "basic",
            QuantifierKind::Quadratic => "quadratic",
            QuantifierKind::Exponential => "exponential",
            QuantifierKind::Trigonometric => "trigonometric",
        }
    }
}

impl std::str::FromStr for QuantifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(QuantifierKind::Basic),
            "quadratic" => Ok(QuantifierKind::Quadratic),
            "exponential" => Ok(QuantifierKind::Exponential),
            "trigonometric" => Ok(QuantifierKind::Trigonometric),
            other => Err(Error::ConfigError(format!("unknown quantifier kind {other:?}"))),
        }
    }
}

/// A quantifier family plus its α parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantifierSpec {
    pub kind: QuantifierKind,
    pub alpha: f64,
}

impl QuantifierSpec {
    pub fn new(kind: QuantifierKind, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::DomainError(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if kind == QuantifierKind::Trigonometric && alpha > 1.0 {
            return Err(Error::DomainError(format!(
                "trigonometric quantifier needs alpha <= 1 so arcsin stays defined, got {alpha}"
            )));
        }
        if kind == QuantifierKind::Quadratic && alpha >= 1.0 {
            return Err(Error::DomainError(format!(
                "quadratic quantifier needs alpha < 1 so the denominator stays positive, got {alpha}"
            )));
        }
        Ok(QuantifierSpec { kind, alpha })
    }
}

/// Evaluates Q(r) for r in [0,1].
pub fn quantifier_value(spec: &QuantifierSpec, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::DomainError(format!("quantifier argument r = {r} outside [0,1]")));
    }
    let a = spec.alpha;
    Ok(match spec.kind {
        QuantifierKind::Basic => r.powf(a),
        QuantifierKind::Quadratic => 1.0 / (1.0 - a * r.sqrt()),
        QuantifierKind::Exponential => (-a * r).exp(),
        QuantifierKind::Trigonometric => {
            let x = a * r;
            if !(-1.0..=1.0).contains(&x) {
                return Err(Error::DomainError(format!("arcsin argument {x} outside [-1,1]")));
            }
            x.asin()
        }
    })
}

/// Raw (unnormalized) weights by successive quantifier differences.
///
/// The exponential quantifier decreases on [0,1], so its differences come
/// out negative; the absolute value restores nonnegative weights and makes
/// the resulting vector monotone non-decreasing.
pub fn raw_weights(spec: &QuantifierSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::ConfigError("weight vector length must be >= 1".into()));
    }
    let nf = n as f64;
    let mut lambda = Vec::with_capacity(n);
    for i in 1..=n {
        let hi = quantifier_value(spec, 1.0 - (i as f64 - 1.0) / nf)?;
        let lo = quantifier_value(spec, 1.0 - i as f64 / nf)?;
        lambda.push((hi - lo).abs());
    }
    Ok(lambda)
}

/// A normalized position-weight vector (mean one) with its monotonicity flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwaWeights {
    pub lambda: Vec<f64>,
    pub nondecreasing: bool,
}

const MONOTONE_TOL: f64 = 1e-12;

impl OwaWeights {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// All positions weighted equally; reduces every trainer to the
    /// classical plain-sum objective.
    pub fn uniform(n: usize) -> OwaWeights {
        OwaWeights { lambda: vec![1.0; n], nondecreasing: true }
    }

    /// Builds already-normalized weights from explicit values.
    pub fn from_lambda(lambda: Vec<f64>) -> Result<OwaWeights> {
        normalize_weights(&lambda)
    }
}

/// Divides by the average so the weights have mean one, and classifies
/// monotonicity with a 1e−12 tolerance (ties count as non-decreasing).
pub fn normalize_weights(raw: &[f64]) -> Result<OwaWeights> {
    if raw.is_empty() {
        return Err(Error::ConfigError("weight vector length must be >= 1".into()));
    }
    if raw.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::DomainError("raw weights must be finite and nonnegative".into()));
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    if mean <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    let lambda: Vec<f64> = raw.iter().map(|v| v / mean).collect();
    let nondecreasing = lambda.windows(2).all(|w| w[0] <= w[1] + MONOTONE_TOL);
    Ok(OwaWeights { lambda, nondecreasing })
}

/// Quantifier weights of length n, normalized.
pub fn quantifier_weights(spec: &QuantifierSpec, n: usize) -> Result<OwaWeights> {
    normalize_weights(&raw_weights(spec, n)?)
}

/// Ordered weighted sum Σ λ_i ξ_(i) with ξ sorted non-decreasingly.
pub fn owa_sum(weights: &OwaWeights, deviations: &[f64]) -> Result<f64> {
    if weights.len() != deviations.len() {
        return Err(Error::LengthMismatch {
            weights: weights.len(),
            deviations: deviations.len(),
        });
    }
    let mut sorted = deviations.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("deviations must not be NaN"));
    Ok(weights.lambda.iter().zip(sorted.iter()).map(|(l, x)| l * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(kind: QuantifierKind, alpha: f64) -> QuantifierSpec {
        QuantifierSpec::new(kind, alpha).unwrap()
    }

    #[test]
    fn quantifier_point_values() {
        assert_abs_diff_eq!(
            quantifier_value(&spec(QuantifierKind::Basic, 0.5), 0.25).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            quantifier_value(&spec(QuantifierKind::Trigonometric, 1.0), 1.0).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            quantifier_value(&spec(QuantifierKind::Exponential, 0.4), 1.0).unwrap(),
            (-0.4f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            quantifier_value(&spec(QuantifierKind::Exponential, 0.4), 1.0).unwrap(),
            0.6703,
            epsilon = 1e-4
        );
    }

    #[test]
    fn quantifier_domain_checks() {
        assert!(QuantifierSpec::new(QuantifierKind::Trigonometric, 1.5).is_err());
        assert!(quantifier_value(&spec(QuantifierKind::Basic, 0.5), 1.5).is_err());
        assert!(quantifier_value(&spec(QuantifierKind::Basic, 0.5), -0.1).is_err());
        // r^0 == 1 everywhere, so basic with alpha = 0 yields all-zero raw
        // weights and normalization refuses them.
        let degenerate = raw_weights(&spec(QuantifierKind::Basic, 0.0), 4).unwrap();
        assert!(matches!(normalize_weights(&degenerate), Err(Error::AllZeroWeights)));
    }

    #[test]
    fn raw_weights_basic_uniform() {
        let w = raw_weights(&spec(QuantifierKind::Basic, 1.0), 4).unwrap();
        for v in w {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn raw_weights_basic_sqrt() {
        let w = raw_weights(&spec(QuantifierKind::Basic, 0.5), 2).unwrap();
        assert_abs_diff_eq!(w[0], 1.0 - 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.2929, epsilon = 1e-4);
        assert_abs_diff_eq!(w[1], 0.7071, epsilon = 1e-4);
    }

    #[test]
    fn raw_weights_exponential_absolute_differences() {
        let w = raw_weights(&spec(QuantifierKind::Exponential, 0.2), 2).unwrap();
        assert_abs_diff_eq!(w[0], (-0.1f64).exp() - (-0.2f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0 - (-0.1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.0861, epsilon = 1e-4);
        assert_abs_diff_eq!(w[1], 0.0952, epsilon = 1e-4);
    }

    #[test]
    fn normalize_examples() {
        let w = normalize_weights(&[0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(w.lambda, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(w.nondecreasing);

        let w = normalize_weights(&[1.0 - 0.5f64.sqrt(), 0.5f64.sqrt()]).unwrap();
        assert_abs_diff_eq!(w.lambda[0], 0.5858, epsilon = 1e-4);
        assert_abs_diff_eq!(w.lambda[1], 1.4142, epsilon = 1e-4);
        assert!(w.nondecreasing);

        let w = normalize_weights(&[3.0, 1.0]).unwrap();
        assert_eq!(w.lambda, vec![1.5, 0.5]);
        assert!(!w.nondecreasing);

        assert!(matches!(normalize_weights(&[0.0, 0.0]), Err(Error::AllZeroWeights)));
    }

    #[test]
    fn normalize_preserves_ratios() {
        let raw = [0.2, 0.5, 1.7, 0.9];
        let w = normalize_weights(&raw).unwrap();
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                assert_abs_diff_eq!(
                    w.lambda[i] / w.lambda[j],
                    raw[i] / raw[j],
                    epsilon = 1e-12
                );
            }
        }
        let mean = w.lambda.iter().sum::<f64>() / w.lambda.len() as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn owa_sum_examples() {
        let uniform = OwaWeights::uniform(3);
        assert_abs_diff_eq!(owa_sum(&uniform, &[3.0, 1.0, 2.0]).unwrap(), 6.0, epsilon = 1e-12);

        let w = OwaWeights { lambda: vec![0.5, 1.0, 1.5], nondecreasing: true };
        assert_abs_diff_eq!(owa_sum(&w, &[3.0, 1.0, 2.0]).unwrap(), 7.0, epsilon = 1e-12);
        assert_eq!(owa_sum(&w, &[0.0, 0.0, 0.0]).unwrap(), 0.0);

        assert!(matches!(
            owa_sum(&w, &[1.0, 2.0]),
            Err(Error::LengthMismatch { weights: 3, deviations: 2 })
        ));
    }

    #[test]
    fn monotone_families_by_sweep() {
        for n in [1usize, 2, 3, 7, 50, 500, 2000] {
            for alpha in [0.2, 0.4, 0.6, 0.8] {
                for kind in [QuantifierKind::Basic, QuantifierKind::Exponential] {
                    let w = quantifier_weights(&spec(kind, alpha), n).unwrap();
                    assert!(w.nondecreasing, "{kind:?} alpha={alpha} n={n}");
                }
            }
            // Quadratic is non-decreasing at the smallest grid value only.
            let w = quantifier_weights(&spec(QuantifierKind::Quadratic, 0.2), n).unwrap();
            assert!(w.nondecreasing, "quadratic 0.2 n={n}");
        }
        // Larger quadratic alphas break monotonicity once n >= 4.
        let w = quantifier_weights(&spec(QuantifierKind::Quadratic, 0.4), 4).unwrap();
        assert!(!w.nondecreasing);
        // Trigonometric weights decrease with position.
        let w = quantifier_weights(&spec(QuantifierKind::Trigonometric, 0.6), 5).unwrap();
        assert!(!w.nondecreasing);
    }

    proptest! {
        #[test]
        fn owa_sum_permutation_invariant(
            mut xs in proptest::collection::vec(0.0f64..100.0, 1..20),
            seed in 0u64..1000,
        ) {
            let n = xs.len();
            let w = quantifier_weights(&spec(QuantifierKind::Basic, 0.6), n).unwrap();
            let before = owa_sum(&w, &xs).unwrap();
            // Deterministic shuffle driven by the seed.
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            xs.shuffle(&mut rng);
            let after = owa_sum(&w, &xs).unwrap();
            prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before.abs()));
        }

        #[test]
        fn uniform_weights_reduce_to_plain_sum(
            xs in proptest::collection::vec(0.0f64..50.0, 1..30),
        ) {
            let w = OwaWeights::uniform(xs.len());
            let owa = owa_sum(&w, &xs).unwrap();
            let plain: f64 = xs.iter().sum();
            prop_assert!((owa - plain).abs() <= 1e-12 * (1.0 + plain.abs()));
        }

        #[test]
        fn normalized_mean_is_one(
            raw in proptest::collection::vec(0.0f64..10.0, 1..40),
        ) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-9);
            let w = normalize_weights(&raw).unwrap();
            let mean = w.lambda.iter().sum::<f64>() / w.lambda.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
        }
    }
}
