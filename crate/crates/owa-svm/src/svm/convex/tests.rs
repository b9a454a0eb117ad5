use approx::assert_abs_diff_eq;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kernel::{gram, KernelSpec};
use crate::svm::train_l2_svm;
use crate::weights::{quantifier_weights, QuantifierKind, QuantifierSpec};

fn random_set(seed: u64, n: usize, d: usize, separation: f64) -> (Array2<f64>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1i8 } else { -1 };
        for j in 0..d {
            x[[i, j]] = rng.gen_range(-1.0..1.0) + separation * f64::from(label);
        }
        y.push(label);
    }
    (x, y)
}

fn basic_weights(n: usize, alpha: f64) -> crate::weights::OwaWeights {
    quantifier_weights(&QuantifierSpec::new(QuantifierKind::Basic, alpha).unwrap(), n).unwrap()
}

// ---- water-filling and the doubly stochastic chain ----

#[test]
fn waterfill_adds_mass_to_small_entries() {
    let y = waterfill(&[3.0, 0.0, 0.0], 6.0);
    assert_abs_diff_eq!(y[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(y[1], 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(y[2], 1.5, epsilon = 1e-12);

    // Level above every entry.
    let y = waterfill(&[1.0, 1.0], 6.0);
    assert_abs_diff_eq!(y[0], 3.0, epsilon = 1e-12);

    // Equality case is the identity.
    let y = waterfill(&[2.0, 1.0], 3.0);
    assert_eq!(y, vec![2.0, 1.0]);
}

#[test]
fn waterfill_preserves_total_and_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let k = rng.gen_range(1..8);
        let x: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
        let extra: f64 = rng.gen_range(0.0..3.0);
        let target = x.iter().sum::<f64>() + extra;
        let y = waterfill(&x, target);
        assert_abs_diff_eq!(y.iter().sum::<f64>(), target, epsilon = 1e-9);
        for (a, b) in y.iter().zip(x.iter()) {
            assert!(a + 1e-12 >= *b);
        }
    }
}

fn sinkhorn_ds(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..k * k).map(|_| rng.gen_range(0.1..1.0)).collect();
    for _ in 0..200 {
        for i in 0..k {
            let s: f64 = m[i * k..(i + 1) * k].iter().sum();
            for j in 0..k {
                m[i * k + j] /= s;
            }
        }
        for j in 0..k {
            let s: f64 = (0..k).map(|i| m[i * k + j]).sum();
            for i in 0..k {
                m[i * k + j] /= s;
            }
        }
    }
    m
}

#[test]
fn doubly_stochastic_chain_reconstructs_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..300 {
        let k = rng.gen_range(1..9);
        let c: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..3.0)).collect();
        let ds = sinkhorn_ds(&mut rng, k);
        // y = DS · c is majorized by c.
        let y: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| ds[i * k + j] * c[j]).sum())
            .collect();
        let m = doubly_stochastic_for(&y, &c).unwrap_or_else(|e| panic!("trial {trial}: {e}"));
        for i in 0..k {
            let row: f64 = m[i * k..(i + 1) * k].iter().sum();
            assert_abs_diff_eq!(row, 1.0, epsilon = 1e-8);
            let col: f64 = (0..k).map(|r| m[r * k + i]).sum();
            assert_abs_diff_eq!(col, 1.0, epsilon = 1e-8);
            let recon: f64 = (0..k).map(|j| m[i * k + j] * c[j]).sum();
            assert_abs_diff_eq!(recon, y[i], epsilon = 1e-7 * (1.0 + y[i].abs()));
            for j in 0..k {
                assert!(m[i * k + j] >= -1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn eta_certificate_is_doubly_stochastic_and_feasible(
        seed in 0u64..5000,
        n in 2usize..10,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = basic_weights(n, 0.6).lambda;
        let c = 2.0;
        // α built to satisfy the prefix constraints: α = C·(DS·λ) shrunk.
        let ds = sinkhorn_ds(&mut rng, n);
        let shrink: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let alpha: Vec<f64> = (0..n)
            .map(|i| c * shrink[i] * (0..n).map(|j| ds[i * n + j] * lam[j]).sum::<f64>())
            .collect();
        let xi: Vec<f64> = (0..n).map(|_| {
            if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..1.5) }
        }).collect();
        let eta = eta_certificate(&alpha, &xi, &lam, c).unwrap();
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            let mut bound = 0.0;
            for j in 0..n {
                row += eta[[i, j]];
                col += eta[[j, i]];
                bound += eta[[i, j]] * lam[j];
                prop_assert!(eta[[i, j]] >= -1e-9);
            }
            prop_assert!((row - 1.0).abs() < 1e-6, "row sum {row}");
            prop_assert!((col - 1.0).abs() < 1e-6, "col sum {col}");
            prop_assert!(alpha[i] <= c * bound + 1e-6, "bound violated: {} > {}", alpha[i], c * bound);
        }
    }
}

// ---- trainer agreement ----

#[test]
fn uniform_lambda_reduces_every_formulation_to_l2() {
    for seed in [1u64, 2, 3] {
        let (x, y) = random_set(seed, 8, 2, 0.4);
        let n = y.len();
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let c = 1.0;
        let w = crate::weights::OwaWeights::uniform(n);
        let tol = ToleranceSpec::default();

        let l2 = train_l2_svm(&g, x.view(), &y, c).unwrap();
        let primal = train_c_owa_primal(x.view(), &y, c, &w, &tol).unwrap();
        let ot = train_ot_c_owa(x.view(), &y, c, &w, &tol).unwrap();
        let (dual, _) = train_c_owa_dual(&g, x.view(), &y, c, &w, &tol).unwrap();

        // l2 dual objective equals the primal optimum by strong duality.
        assert_abs_diff_eq!(primal.objective, l2.objective, epsilon = 1e-4 * (1.0 + l2.objective.abs()));
        assert_abs_diff_eq!(ot.objective, primal.objective, epsilon = 1e-4 * (1.0 + primal.objective.abs()));
        assert_abs_diff_eq!(dual.objective, primal.objective, epsilon = 1e-4 * (1.0 + primal.objective.abs()));
    }
}

#[test]
fn primal_objective_decomposes_into_margin_plus_owa() {
    let (x, y) = random_set(11, 9, 3, 0.3);
    let w = basic_weights(9, 0.6);
    let sol = train_c_owa_primal(x.view(), &y, 1.3, &w, &ToleranceSpec::default()).unwrap();
    let wnorm: f64 = sol.w.iter().map(|v| v * v).sum::<f64>() * 0.5;
    let owa = owa_sum(&w, &sol.xi).unwrap();
    assert_abs_diff_eq!(sol.objective, wnorm + 1.3 * owa, epsilon = 1e-5 * (1.0 + sol.objective.abs()));
    // Inner-LP consistency: Σu + Σv equals C · OWA(ξ).
    let uv: f64 = sol.u.iter().sum::<f64>() + sol.v.iter().sum::<f64>();
    assert_abs_diff_eq!(uv, 1.3 * owa, epsilon = 1e-5 * (1.0 + uv.abs()));
    // Coupling rows hold for every pair.
    for i in 0..9 {
        for j in 0..9 {
            assert!(sol.u[i] + sol.v[j] >= 1.3 * w.lambda[j] * sol.xi[i] - 1e-6);
        }
    }
    // Margins hold.
    for i in 0..9 {
        let s: f64 = sol.w.iter().zip(x.row(i)).map(|(a, b)| a * b).sum::<f64>() + sol.b;
        assert!(f64::from(y[i]) * s >= 1.0 - sol.xi[i] - 1e-6);
    }
}

#[test]
fn ot_matches_primal_on_random_instances() {
    for seed in [4u64, 5, 6] {
        let (x, y) = random_set(seed, 6, 2, 0.2);
        let w = basic_weights(6, 0.6);
        let tol = ToleranceSpec::default();
        let primal = train_c_owa_primal(x.view(), &y, 2.0, &w, &tol).unwrap();
        let ot = train_ot_c_owa(x.view(), &y, 2.0, &w, &tol).unwrap();
        assert_abs_diff_eq!(
            ot.objective,
            primal.objective,
            epsilon = 1e-5 * (1.0 + primal.objective.abs())
        );
    }
    // Fixed ladder weights as well.
    let (x, y) = random_set(7, 5, 2, 0.2);
    let w = crate::weights::normalize_weights(&[0.5, 0.75, 1.0, 1.25, 1.5]).unwrap();
    let tol = ToleranceSpec::default();
    let primal = train_c_owa_primal(x.view(), &y, 1.0, &w, &tol).unwrap();
    let ot = train_ot_c_owa(x.view(), &y, 1.0, &w, &tol).unwrap();
    assert_abs_diff_eq!(ot.objective, primal.objective, epsilon = 1e-5 * (1.0 + primal.objective.abs()));
}

#[test]
fn strong_duality_linear_kernel() {
    for seed in [8u64, 9, 10, 11] {
        let (x, y) = random_set(seed, 8, 2, 0.25);
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let w = basic_weights(8, 0.4);
        let tol = ToleranceSpec::default();
        let primal = train_c_owa_primal(x.view(), &y, 1.5, &w, &tol).unwrap();
        let (dual, model) = train_c_owa_dual(&g, x.view(), &y, 1.5, &w, &tol).unwrap();
        assert_abs_diff_eq!(
            dual.objective,
            primal.objective,
            epsilon = 1e-4 * (1.0 + primal.objective.abs())
        );
        // Σ αᵢyᵢ = 0 and α ≥ 0 hold on the certified solution.
        let ay: f64 = dual.alpha.iter().zip(&y).map(|(a, &yy)| a * f64::from(yy)).sum();
        assert!(ay.abs() < 1e-6);
        assert!(dual.alpha.iter().all(|&a| a >= -1e-9));
        assert!(model.certificates.max_primal < 1e-6);
    }
}

#[test]
fn cut_route_matches_direct_eta_formulation() {
    for seed in [21u64, 22, 23] {
        let (x, y) = random_set(seed, 7, 2, 0.2);
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let w = basic_weights(7, 0.6);
        let tol = ToleranceSpec::default();
        let (dual, _) = train_c_owa_dual(&g, x.view(), &y, 1.0, &w, &tol).unwrap();
        let (alpha_direct, eta_direct, obj_direct) =
            train_c_owa_dual_direct(&g, &y, 1.0, &w, &tol).unwrap();
        assert_abs_diff_eq!(dual.objective, obj_direct, epsilon = 1e-4 * (1.0 + obj_direct.abs()));
        // Both α vectors produce the same objective; the vectors themselves
        // agree when the optimum is unique.
        for i in 0..7 {
            assert_abs_diff_eq!(dual.alpha[i], alpha_direct[i], epsilon = 5e-3);
        }
        // The direct η is feasible for its own constraints.
        for i in 0..7 {
            let bound: f64 = (0..7).map(|j| eta_direct[[i, j]] * w.lambda[j]).sum();
            assert!(alpha_direct[i] <= bound + 1e-5);
        }
    }
}

#[test]
fn two_point_symmetric_bias_zero() {
    let x = ndarray::array![[1.0], [-1.0]];
    let y = vec![1i8, -1];
    let g = gram(&KernelSpec::Linear, x.view()).unwrap();
    let w = crate::weights::normalize_weights(&[0.5, 1.5]).unwrap();
    let (dual, model) = train_c_owa_dual(&g, x.view(), &y, 50.0, &w, &ToleranceSpec::default()).unwrap();
    assert_abs_diff_eq!(model.bias, 0.0, epsilon = 1e-5);
    // Separable at large C: same separator as the plain SVM.
    assert!(dual.xi.iter().all(|&v| v < 1e-5));
    assert_abs_diff_eq!(
        model.decision_function(ndarray::array![0.5].view()).unwrap(),
        0.5,
        epsilon = 1e-4
    );
}

#[test]
fn bias_translation_covariance() {
    // Shifting features by t shifts the recovered bias by −w·t.
    let (x, y) = random_set(31, 8, 1, 0.5);
    let g = gram(&KernelSpec::Linear, x.view()).unwrap();
    let w = basic_weights(8, 0.6);
    let tol = ToleranceSpec::default();
    let (_, model) = train_c_owa_dual(&g, x.view(), &y, 2.0, &w, &tol).unwrap();
    let t = 0.7;
    let mut x_shift = x.clone();
    for v in x_shift.column_mut(0).iter_mut() {
        *v += t;
    }
    let g2 = gram(&KernelSpec::Linear, x_shift.view()).unwrap();
    let (_, model2) = train_c_owa_dual(&g2, x_shift.view(), &y, 2.0, &w, &tol).unwrap();
    // Effective slope from the dual coefficients.
    let slope: f64 = model
        .alpha
        .iter()
        .zip(&y)
        .zip(x.column(0).iter())
        .map(|((a, &yy), xv)| a * f64::from(yy) * xv)
        .sum();
    let slope2: f64 = model2
        .alpha
        .iter()
        .zip(&y)
        .zip(x_shift.column(0).iter())
        .map(|((a, &yy), xv)| a * f64::from(yy) * xv)
        .sum();
    assert_abs_diff_eq!(slope, slope2, epsilon = 1e-4 * (1.0 + slope.abs()));
    assert_abs_diff_eq!(model2.bias, model.bias - slope * t, epsilon = 1e-4 * (1.0 + model.bias.abs()));
}

#[test]
fn individual_bias_candidates_agree() {
    let (x, y) = random_set(41, 8, 2, 0.3);
    let g = gram(&KernelSpec::Linear, x.view()).unwrap();
    let w = basic_weights(8, 0.6);
    let (dual, model) = train_c_owa_dual(&g, x.view(), &y, 1.0, &w, &ToleranceSpec::default()).unwrap();
    let eps = 1e-6 * 1.0 * w.lambda.iter().cloned().fold(0.0f64, f64::max);
    let mut candidates = Vec::new();
    for k in 0..8 {
        let bound: f64 = (0..8).map(|j| dual.eta[[k, j]] * w.lambda[j]).sum::<f64>() * 1.0;
        if dual.alpha[k] > eps && dual.alpha[k] < bound - eps {
            let s: f64 = (0..8)
                .map(|i| dual.alpha[i] * f64::from(y[i]) * g.values[[i, k]])
                .sum();
            candidates.push(f64::from(y[k]) - s);
        }
    }
    for b in &candidates {
        assert_abs_diff_eq!(*b, model.bias, epsilon = 1e-4 * (1.0 + model.bias.abs()));
    }
    // The equality-row multiplier is the same bias.
    assert_abs_diff_eq!(dual.eq_dual, model.bias, epsilon = 1e-4 * (1.0 + model.bias.abs()));
}

#[test]
fn separable_instance_has_zero_deviations() {
    let mut x = Array2::zeros((6, 2));
    for i in 0..3 {
        x[[i, 0]] = 1.5 + 0.2 * i as f64;
        x[[i + 3, 0]] = -1.5 - 0.2 * i as f64;
    }
    let y = vec![1i8, 1, 1, -1, -1, -1];
    let w = basic_weights(6, 0.4);
    let sol = train_c_owa_primal(x.view(), &y, 10.0, &w, &ToleranceSpec::default()).unwrap();
    assert!(sol.xi.iter().all(|&v| v < 1e-6), "xi = {:?}", sol.xi);
    let wnorm: f64 = sol.w.iter().map(|v| v * v).sum::<f64>() * 0.5;
    assert_abs_diff_eq!(sol.objective, wnorm, epsilon = 1e-5 * (1.0 + wnorm));
}

#[test]
fn scaling_weights_never_decreases_objective() {
    let (x, y) = random_set(55, 7, 2, 0.2);
    let w = basic_weights(7, 0.6);
    let tol = ToleranceSpec::default();
    let base = train_c_owa_primal(x.view(), &y, 1.0, &w, &tol).unwrap();
    for rho in [1.5, 3.0] {
        let scaled = crate::weights::OwaWeights {
            lambda: w.lambda.iter().map(|v| v * rho).collect(),
            nondecreasing: true,
        };
        let out = train_c_owa_primal(x.view(), &y, 1.0, &scaled, &tol).unwrap();
        assert!(out.objective >= base.objective - 1e-6 * (1.0 + base.objective.abs()));
    }
}

#[test]
fn non_monotone_weights_rejected() {
    let (x, y) = random_set(3, 4, 2, 0.3);
    let w = crate::weights::normalize_weights(&[2.0, 1.0, 0.5, 0.5]).unwrap();
    assert!(matches!(
        train_c_owa_primal(x.view(), &y, 1.0, &w, &ToleranceSpec::default()),
        Err(Error::NonMonotoneWeights { .. })
    ));
    let g = gram(&KernelSpec::Linear, x.view()).unwrap();
    assert!(matches!(
        train_c_owa_dual(&g, x.view(), &y, 1.0, &w, &ToleranceSpec::default()),
        Err(Error::NonMonotoneWeights { .. })
    ));
}
