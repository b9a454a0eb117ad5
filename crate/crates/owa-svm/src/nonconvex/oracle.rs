//! Factorial enumeration oracle: minimizes the fixed-assignment optimum over
//! every permutation. Independent of the big-M machinery and of branch and
//! bound, so it certifies both.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::nonconvex::fixed::fixed_permutation_primal;
use crate::qp::{QpProblem, SparseMatrix, ToleranceSpec};
use crate::svm::{certified_solve, labeled_quadratic, KktAggregate};
use crate::weights::OwaWeights;

const ORACLE_MAX_N: usize = 8;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    heap_permute(&mut current, n, &mut out);
    out
}

fn heap_permute(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(arr.clone());
        return;
    }
    for i in 0..k {
        heap_permute(arr, k - 1, out);
        if k % 2 == 0 {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}

/// Minimum over all n! permutations of the exact fixed-permutation value
/// (linear kernel, primal form). Returns the value and the best positions.
pub fn brute_force_oracle(
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<(f64, Vec<usize>)> {
    let n = y.len();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLargeForBruteForce(n));
    }
    let mut best = f64::INFINITY;
    let mut best_perm = Vec::new();
    for perm in permutations(n) {
        let sol = fixed_permutation_primal(x, y, c, weights, &perm, tol)?;
        if sol.objective < best - 1e-12 {
            best = sol.objective;
            best_perm = perm;
        }
    }
    Ok((best, best_perm))
}

/// Kernel-form oracle: same enumeration with the dual-expansion subproblem
/// min ½ΣΣ yᵢyⱼαᵢαⱼKᵢⱼ + CΣλₖθₖ at each pinned permutation.
pub fn brute_force_oracle_gram(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<(f64, Vec<usize>)> {
    let n = y.len();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLargeForBruteForce(n));
    }
    let mut best = f64::INFINITY;
    let mut best_perm = Vec::new();
    let mut agg = KktAggregate::default();
    for perm in permutations(n) {
        let obj = fixed_permutation_kernel_value(gram, y, c, weights, &perm, tol, &mut agg)?;
        if obj < best - 1e-12 {
            best = obj;
            best_perm = perm;
        }
    }
    Ok((best, best_perm))
}

fn fixed_permutation_kernel_value(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    positions: &[usize],
    tol: &ToleranceSpec,
    agg: &mut KktAggregate,
) -> Result<f64> {
    let n = y.len();
    let mut sample_at = vec![usize::MAX; n];
    for (i, &p) in positions.iter().enumerate() {
        if p >= n || sample_at[p] != usize::MAX {
            return Err(Error::NotAPermutation(n));
        }
        sample_at[p] = i;
    }
    // Layout: α(n), b, ξ(n), θ(n)
    let off_b = n;
    let off_xi = n + 1;
    let off_theta = off_xi + n;
    let nv = off_theta + n;
    let q_block = labeled_quadratic(gram, y);
    let mut p_trip = Vec::new();
    for r in 0..n {
        let (cols, vals) = q_block.row(r);
        for (&cc, &v) in cols.iter().zip(vals) {
            p_trip.push((r, cc, v));
        }
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;
    let mut q = vec![0.0; nv];
    for k in 0..n {
        q[off_theta + k] = c * weights.lambda[k];
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        let yi = f64::from(y[i]);
        for j in 0..n {
            let v = yi * f64::from(y[j]) * gram.values[[i, j]];
            if v != 0.0 {
                trip.push((i, j, v));
            }
        }
        trip.push((i, off_b, yi));
        trip.push((i, off_xi + i, 1.0));
    }
    for k in 0..n {
        let r = n + k;
        trip.push((r, off_theta + k, 1.0));
        trip.push((r, off_xi + sample_at[k], -1.0));
    }
    for k in 1..n {
        let r = 2 * n + k - 1;
        trip.push((r, off_theta + k, 1.0));
        trip.push((r, off_theta + k - 1, -1.0));
    }
    let m_rows = 2 * n + (n - 1);
    let a = SparseMatrix::from_triplets(m_rows, nv, &trip)?;
    let mut lower = vec![1.0; n];
    lower.extend(vec![0.0; n + (n - 1)]);
    let upper = vec![f64::INFINITY; m_rows];
    let mut var_lower = vec![f64::NEG_INFINITY; nv];
    for s in off_xi..nv {
        var_lower[s] = 0.0;
    }
    let prob = QpProblem {
        p,
        q,
        a,
        lower,
        upper,
        var_lower: Some(var_lower),
        var_upper: Some(vec![f64::INFINITY; nv]),
    };
    let sol = certified_solve(&prob, tol, None, agg)?;
    Ok(prob.objective_at(&sol.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};
    use crate::nonconvex::fixed::fixed_permutation_primal;
    use crate::weights::OwaWeights;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn symmetric_weights_make_all_permutations_equal() {
        let x = ndarray::array![[1.0, 0.2], [-0.5, 0.4], [0.1, -1.0]];
        let y = vec![1i8, -1, 1];
        let w = OwaWeights::uniform(3);
        let tol = ToleranceSpec::default();
        let mut values = Vec::new();
        for perm in permutations(3) {
            let sol = fixed_permutation_primal(x.view(), &y, 1.0, &w, &perm, &tol).unwrap();
            values.push(sol.objective);
        }
        for v in &values {
            assert_abs_diff_eq!(*v, values[0], epsilon = 1e-5 * (1.0 + values[0].abs()));
        }
    }

    #[test]
    fn oracle_matches_convex_trainer_for_monotone_weights() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let n = 5;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1i8 } else { -1 };
            for j in 0..2 {
                x[[i, j]] = rng.gen_range(-1.0..1.0) + 0.2 * f64::from(label);
            }
            y.push(label);
        }
        let w = crate::weights::normalize_weights(&[0.5, 0.75, 1.0, 1.25, 1.5]).unwrap();
        let tol = ToleranceSpec::default();
        let (oracle_obj, _) = brute_force_oracle(x.view(), &y, 1.0, &w, &tol).unwrap();
        let primal = crate::svm::train_c_owa_primal(x.view(), &y, 1.0, &w, &tol).unwrap();
        assert_abs_diff_eq!(oracle_obj, primal.objective, epsilon = 1e-4 * (1.0 + oracle_obj.abs()));
    }

    #[test]
    fn linear_and_kernel_oracles_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let n = 4;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1i8 } else { -1 };
            for j in 0..2 {
                x[[i, j]] = rng.gen_range(-1.0..1.0);
            }
            y.push(label);
        }
        // Decreasing weights make the assignment genuinely matter.
        let w = crate::weights::normalize_weights(&[1.6, 1.2, 0.8, 0.4]).unwrap();
        let tol = ToleranceSpec::default();
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let (a, _) = brute_force_oracle(x.view(), &y, 1.5, &w, &tol).unwrap();
        let (b, _) = brute_force_oracle_gram(&g, &y, 1.5, &w, &tol).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-4 * (1.0 + a.abs()));
    }

    #[test]
    fn oversize_is_rejected() {
        let x = Array2::zeros((9, 1));
        let y = vec![1i8; 9];
        let w = OwaWeights::uniform(9);
        assert!(matches!(
            brute_force_oracle(x.view(), &y, 1.0, &w, &ToleranceSpec::default()),
            Err(Error::TooLargeForBruteForce(9))
        ));
    }
}
