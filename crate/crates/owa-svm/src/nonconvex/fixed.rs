//! Fixed-assignment subproblems: the big-M dual used as the incumbent
//! machinery, and the exact no-M primal for a pinned permutation.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::nonconvex::AssignmentMatrix;
use crate::qp::{QpProblem, SparseMatrix, ToleranceSpec};
use crate::svm::{certified_solve, labeled_quadratic, KktAggregate};
use crate::weights::OwaWeights;

/// Dual of the fixed-assignment problem: α are the margin multipliers and
/// μ_ik the multipliers of the position-link rows.
#[derive(Debug, Clone)]
pub struct FixedAssignmentDual {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    /// Maximization objective (equals the fixed-assignment primal optimum).
    pub objective: f64,
    /// Multiplier of Σ αy = 0, i.e. the bias of the induced separator.
    pub eq_dual: f64,
    pub certificates: KktAggregate,
}

/// Maximizes Σα − ½ΣΣ αᵢαⱼyᵢyⱼK − M ΣΣ μ_ik (1 − Σ_{j≤k} ẑ_ij)
/// subject to Σαy = 0, α_i ≤ Σ_k μ_ik, Σ_i μ_ik ≤ Cλ_k, α ≥ 0, μ ≥ 0.
pub fn train_fixed_assignment(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    z_hat: &AssignmentMatrix,
    m_big: f64,
    tol: &ToleranceSpec,
) -> Result<FixedAssignmentDual> {
    let n = y.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch { weights: weights.len(), deviations: n });
    }
    if !z_hat.is_binary(1e-9) {
        return Err(Error::ConfigError("fixed assignment must be binary".into()));
    }
    let positions = z_hat.positions();
    let q_block = labeled_quadratic(gram, y);

    // Layout: α(n), μ(n×n) with μ_ik at n + i·n + k.
    let nv = n + n * n;
    let mut p_trip = Vec::new();
    for r in 0..n {
        let (cols, vals) = q_block.row(r);
        for (&cc, &v) in cols.iter().zip(vals) {
            p_trip.push((r, cc, v));
        }
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;
    let mut q = vec![0.0; nv];
    for i in 0..n {
        q[i] = -1.0;
        for k in 0..n {
            // cum_ik = Σ_{j≤k} ẑ_ij is 1 exactly when position(i) ≤ k.
            let cum = if positions[i] <= k { 1.0 } else { 0.0 };
            q[n + i * n + k] = m_big * (1.0 - cum);
        }
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        trip.push((0, i, f64::from(y[i])));
    }
    // Σ_k μ_ik − α_i ≥ 0
    for i in 0..n {
        let r = 1 + i;
        trip.push((r, i, -1.0));
        for k in 0..n {
            trip.push((r, n + i * n + k, 1.0));
        }
    }
    // Σ_i μ_ik ≤ Cλ_k
    for k in 0..n {
        let r = 1 + n + k;
        for i in 0..n {
            trip.push((r, n + i * n + k, 1.0));
        }
    }
    let m_rows = 1 + 2 * n;
    let a = SparseMatrix::from_triplets(m_rows, nv, &trip)?;
    let mut lower = vec![0.0];
    let mut upper = vec![0.0];
    lower.extend(vec![0.0; n]);
    upper.extend(vec![f64::INFINITY; n]);
    lower.extend(vec![f64::NEG_INFINITY; n]);
    upper.extend(weights.lambda.iter().map(|&l| c * l));
    let prob = QpProblem {
        p,
        q,
        a,
        lower,
        upper,
        var_lower: Some(vec![0.0; nv]),
        var_upper: Some(vec![f64::INFINITY; nv]),
    };
    let mut agg = KktAggregate::default();
    let sol = certified_solve(&prob, tol, None, &mut agg)?;
    Ok(FixedAssignmentDual {
        alpha: sol.x[..n].to_vec(),
        mu: sol.x[n..].to_vec(),
        objective: -prob.objective_at(&sol.x),
        eq_dual: sol.y[0],
        certificates: agg,
    })
}

/// Exact primal value of a pinned permutation, modeled without big-M:
/// θ_k ≥ θ_{k−1} and θ_k ≥ ξ of the sample in position k encode the running
/// maximum that the link constraints produce at binary assignments.
#[derive(Debug, Clone)]
pub struct FixedPermutationPrimal {
    pub w: Vec<f64>,
    pub b: f64,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub certificates: KktAggregate,
}

pub fn fixed_permutation_primal(
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    positions: &[usize],
    tol: &ToleranceSpec,
) -> Result<FixedPermutationPrimal> {
    let n = y.len();
    let d = x.ncols();
    // sample_at[k] = sample occupying position k
    let mut sample_at = vec![usize::MAX; n];
    for (i, &p) in positions.iter().enumerate() {
        if p >= n || sample_at[p] != usize::MAX {
            return Err(Error::NotAPermutation(n));
        }
        sample_at[p] = i;
    }

    let off_b = d;
    let off_xi = d + 1;
    let off_theta = off_xi + n;
    let nv = off_theta + n;
    let mut p_trip = Vec::new();
    for j in 0..d {
        p_trip.push((j, j, 1.0));
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;
    let mut q = vec![0.0; nv];
    for k in 0..n {
        q[off_theta + k] = c * weights.lambda[k];
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        let yi = f64::from(y[i]);
        for j in 0..d {
            let v = yi * x[[i, j]];
            if v != 0.0 {
                trip.push((i, j, v));
            }
        }
        trip.push((i, off_b, yi));
        trip.push((i, off_xi + i, 1.0));
    }
    // θ_k ≥ ξ_{sample_at[k]}
    for k in 0..n {
        let r = n + k;
        trip.push((r, off_theta + k, 1.0));
        trip.push((r, off_xi + sample_at[k], -1.0));
    }
    // θ_k ≥ θ_{k−1}
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
    let mut agg = KktAggregate::default();
    let sol = certified_solve(&prob, tol, None, &mut agg)?;
    Ok(FixedPermutationPrimal {
        w: sol.x[..d].to_vec(),
        b: sol.x[off_b],
        xi: sol.x[off_xi..off_xi + n].to_vec(),
        theta: sol.x[off_theta..off_theta + n].to_vec(),
        objective: prob.objective_at(&sol.x),
        certificates: agg,
    })
}
