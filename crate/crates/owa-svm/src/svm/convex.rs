//! Exact convex trainers for non-decreasing position weights.
//!
//! Three routes to the same optimum are provided:
//!
//! - [`train_c_owa_primal`]: the linear-classifier primal with dual variables
//!   (u, v) of the inner assignment problem, solved with row generation over
//!   the u_i + v_j ≥ Cλ_jξ_i couplings.
//! - [`train_ot_c_owa`]: the sum-of-k-largest reformulation, used as a cross
//!   check.
//! - [`train_c_owa_dual`]: the kernel dual. The doubly-stochastic block is
//!   not materialized inside the QP; feasibility of α is equivalent to the
//!   weak-submajorization condition "sum of the k largest α ≤ C · (sum of the
//!   k largest λ) for every k" (a point is dominated by an element of the
//!   permutohedron of λ exactly when it is weakly submajorized by λ), so the
//!   dual is solved by cutting planes over sorted-prefix constraints and the
//!   doubly-stochastic certificate η is reconstructed afterwards from the
//!   KKT data. [`train_c_owa_dual_direct`] keeps the literal η-formulation
//!   for small instances so both routes can be compared.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::qp::{QpProblem, SparseMatrix, ToleranceSpec};
use crate::svm::l2::majority_class;
use crate::svm::{certified_solve, labeled_quadratic, KktAggregate, SvmModel};
use crate::weights::OwaWeights;

/// Solution of the C-OWA primal: separator (w, b), deviations ξ and the
/// assignment duals (u, v).
#[derive(Debug, Clone)]
pub struct PrimalOwaSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
    pub certificates: KktAggregate,
}

/// Solution of the sum-of-k-largest reformulation.
#[derive(Debug, Clone)]
pub struct OtOwaSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub xi: Vec<f64>,
    pub objective: f64,
    pub certificates: KktAggregate,
}

/// Dual optimum with its doubly-stochastic certificate.
#[derive(Debug, Clone)]
pub struct ConvexOwaDualSolution {
    pub alpha: Vec<f64>,
    /// Row-stochastic in both directions; η[i][j] couples sample i with
    /// position j, and α_i ≤ C Σ_j η_ij λ_j holds at the optimum.
    pub eta: Array2<f64>,
    /// Maximization objective Σα − ½ΣΣ αᵢαⱼyᵢyⱼK.
    pub objective: f64,
    /// Hinge deviations at the KKT point, used for the certificate and the
    /// assignment diagnostics.
    pub xi: Vec<f64>,
    /// Multiplier of Σαy = 0 (equals the bias at the exact KKT point).
    pub eq_dual: f64,
    pub certificates: KktAggregate,
}

fn require_nondecreasing(weights: &OwaWeights, trainer: &'static str) -> Result<()> {
    if !weights.nondecreasing {
        return Err(Error::NonMonotoneWeights { trainer });
    }
    Ok(())
}

fn check_lengths(n: usize, weights: &OwaWeights) -> Result<()> {
    if weights.len() != n {
        return Err(Error::LengthMismatch { weights: weights.len(), deviations: n });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Primal with (u, v) assignment duals
// ---------------------------------------------------------------------------

/// Trains the linear C-OWA classifier:
/// min ½‖w‖² + Σuᵢ + Σvⱼ s.t. margins, u_i + v_j ≥ Cλ_jξ_i, ξ ≥ 0.
/// The n² coupling rows are generated lazily; termination requires every
/// pair to be satisfied, so the returned optimum is that of the full program.
pub fn train_c_owa_primal(
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<PrimalOwaSolution> {
    require_nondecreasing(weights, "train_c_owa_primal")?;
    let n = y.len();
    check_lengths(n, weights)?;
    let d = x.ncols();
    let lam = &weights.lambda;
    let lam_max = lam.iter().cloned().fold(0.0f64, f64::max);

    // Layout: w(0..d), b(d), ξ(d+1..d+1+n), u(..+n), v(..+n)
    let off_b = d;
    let off_xi = d + 1;
    let off_u = off_xi + n;
    let off_v = off_u + n;
    let nv = off_v + n;

    let mut p_trip = Vec::with_capacity(d);
    for j in 0..d {
        p_trip.push((j, j, 1.0));
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;
    let mut q = vec![0.0; nv];
    for i in 0..n {
        q[off_u + i] = 1.0;
        q[off_v + i] = 1.0;
    }
    let mut var_lower = vec![f64::NEG_INFINITY; nv];
    let var_upper = vec![f64::INFINITY; nv];
    for i in 0..n {
        var_lower[off_xi + i] = 0.0;
    }

    let mut margin_rows: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        let yi = f64::from(y[i]);
        for j in 0..d {
            let v = yi * x[[i, j]];
            if v != 0.0 {
                margin_rows.push((i, j, v));
            }
        }
        margin_rows.push((i, off_b, yi));
        margin_rows.push((i, off_xi + i, 1.0));
    }

    // Active coupling pairs, starting from the diagonal.
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut agg = KktAggregate::default();
    let mut tol_inner = tol.clone();
    let mut warm: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let viol_tol = 1e-8 * (1.0 + c * lam_max);

    for _round in 0..80 {
        let m = n + pairs.len();
        let mut trip = margin_rows.clone();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let r = n + k;
            trip.push((r, off_u + i, 1.0));
            trip.push((r, off_v + j, 1.0));
            trip.push((r, off_xi + i, -c * lam[j]));
        }
        let a = SparseMatrix::from_triplets(m, nv, &trip)?;
        let mut lower = vec![1.0; n];
        let mut upper = vec![f64::INFINITY; m];
        lower.extend(vec![0.0; pairs.len()]);
        upper[..].iter_mut().for_each(|_| {});
        let prob = QpProblem {
            p: p.clone(),
            q: q.clone(),
            a,
            lower,
            upper,
            var_lower: Some(var_lower.clone()),
            var_upper: Some(var_upper.clone()),
        };
        let sol = certified_solve(
            &prob,
            &tol_inner,
            warm.as_ref().map(|(x, y, z)| (x.as_slice(), y.as_slice(), z.as_slice())),
            &mut agg,
        )?;
        tol_inner.assume_psd = true;

        // Scan all couplings for violations; add the worst per sample.
        let xi = &sol.x[off_xi..off_xi + n];
        let u = &sol.x[off_u..off_u + n];
        let v = &sol.x[off_v..off_v + n];
        let mut new_pairs: Vec<(usize, usize)> = Vec::new();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut best_j = None;
            let mut best_v = viol_tol;
            for j in 0..n {
                let viol = c * lam[j] * xi[i] - u[i] - v[j];
                if viol > best_v {
                    best_v = viol;
                    best_j = Some(j);
                }
            }
            if let Some(j) = best_j {
                if !pairs.contains(&(i, j)) {
                    new_pairs.push((i, j));
                    worst = worst.max(best_v);
                }
            }
        }
        if new_pairs.is_empty() {
            let objective = prob.objective_at(&sol.x);
            return Ok(PrimalOwaSolution {
                w: sol.x[..d].to_vec(),
                b: sol.x[off_b],
                xi: xi.to_vec(),
                u: u.to_vec(),
                v: v.to_vec(),
                objective,
                certificates: agg,
            });
        }
        log::trace!("c-owa primal: adding {} coupling rows (worst {worst:.2e})", new_pairs.len());
        let mut y_next = sol.y.clone();
        y_next.extend(vec![0.0; new_pairs.len()]);
        warm = Some((sol.x.clone(), y_next, sol.z.clone()));
        pairs.extend(new_pairs);
    }
    Err(Error::MaxIterations(80))
}

// ---------------------------------------------------------------------------
// Sum-of-k-largest reformulation
// ---------------------------------------------------------------------------

/// Alternative exact formulation built from the telescoping coefficients
/// δ_k = λ_{n−k+1} − λ_{n−k} (λ_0 = 0): for each k with δ_k > 0 the term
/// δ_k (k t_k + Σ d_ik) prices the sum of the k largest Cξ. Blocks with
/// δ_k = 0 contribute nothing and are dropped before assembly.
pub fn train_ot_c_owa(
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<OtOwaSolution> {
    require_nondecreasing(weights, "train_ot_c_owa")?;
    let n = y.len();
    check_lengths(n, weights)?;
    let d = x.ncols();
    let lam = &weights.lambda;

    let delta: Vec<f64> = (1..=n)
        .map(|k| {
            let hi = lam[n - k]; // λ_{n−k+1} with 1-based indexing
            let lo = if k == n { 0.0 } else { lam[n - k - 1] };
            hi - lo
        })
        .collect();
    let active_k: Vec<usize> = (0..n).filter(|&k| delta[k] > 1e-15).collect();
    let nk = active_k.len();

    // Layout: w(0..d), b, ξ(n), t(nk), d-block (n × nk, i-major)
    let off_b = d;
    let off_xi = d + 1;
    let off_t = off_xi + n;
    let off_d = off_t + nk;
    let nv = off_d + n * nk;

    let mut p_trip = Vec::with_capacity(d);
    for j in 0..d {
        p_trip.push((j, j, 1.0));
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;
    let mut q = vec![0.0; nv];
    for (slot, &k) in active_k.iter().enumerate() {
        q[off_t + slot] = delta[k] * (k + 1) as f64;
        for i in 0..n {
            q[off_d + i * nk + slot] = delta[k];
        }
    }
    let mut var_lower = vec![f64::NEG_INFINITY; nv];
    for i in 0..n {
        var_lower[off_xi + i] = 0.0;
    }
    for s in 0..n * nk {
        var_lower[off_d + s] = 0.0;
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
    // d_ik ≥ Cξ_i − t_k
    for (slot, _) in active_k.iter().enumerate() {
        for i in 0..n {
            let r = n + slot * n + i;
            trip.push((r, off_d + i * nk + slot, 1.0));
            trip.push((r, off_t + slot, 1.0));
            trip.push((r, off_xi + i, -c));
        }
    }
    let m = n + nk * n;
    let a = SparseMatrix::from_triplets(m, nv, &trip)?;
    let mut lower = vec![1.0; n];
    lower.extend(vec![0.0; nk * n]);
    let upper = vec![f64::INFINITY; m];
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
    Ok(OtOwaSolution {
        w: sol.x[..d].to_vec(),
        b: sol.x[off_b],
        xi: sol.x[off_xi..off_xi + n].to_vec(),
        objective: prob.objective_at(&sol.x),
        certificates: agg,
    })
}

// ---------------------------------------------------------------------------
// Kernel dual via sorted-prefix cutting planes
// ---------------------------------------------------------------------------

/// Desk-scale ceiling for the dual trainer (the η certificate is dense).
const DUAL_MAX_N: usize = 800;

pub fn train_c_owa_dual(
    gram: &GramMatrix,
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<(ConvexOwaDualSolution, SvmModel)> {
    require_nondecreasing(weights, "train_c_owa_dual")?;
    let n = y.len();
    check_lengths(n, weights)?;
    if n > DUAL_MAX_N {
        return Err(Error::TooLarge {
            n,
            limit: DUAL_MAX_N,
            hint: "subsample the training set or use the linear primal",
        });
    }
    let q_matrix = labeled_quadratic(gram, y);
    let dual = solve_prefix_cut_dual(&q_matrix, gram, y, c, weights, tol, None)?;
    let bias = recover_bias(&dual, gram, y, c, weights)?;
    let model = SvmModel {
        alpha: dual.alpha.clone(),
        bias,
        kernel: gram.spec,
        support_x: x.to_owned(),
        support_y: y.to_vec(),
        trainer_tag: "c-owa-dual".into(),
        objective: dual.objective,
        lambda_provenance: None,
        certificates: dual.certificates,
    };
    Ok((dual, model))
}

/// The cutting-plane engine, exposed for reuse by the evaluation harness
/// (warm starts across neighboring grid configurations).
pub(crate) fn solve_prefix_cut_dual(
    q_matrix: &SparseMatrix,
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
    warm_alpha: Option<&[f64]>,
) -> Result<ConvexOwaDualSolution> {
    let n = y.len();
    let lam = &weights.lambda;
    let mut lam_desc = lam.clone();
    lam_desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let prefix: Vec<f64> = lam_desc
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let lam_max = lam_desc[0];
    let total: f64 = prefix[n - 1];

    let mut agg = KktAggregate::default();
    let mut tol_inner = tol.clone();
    // Cut set: each entry is the sorted sample index set of one prefix cut.
    let mut cuts: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut warm: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> =
        warm_alpha.map(|a| (a.to_vec(), vec![0.0; 2], vec![0.0; n]));
    let viol_tol = 1e-8 * (1.0 + c * total);

    let mut result = None;
    for _round in 0..(3 * n + 24) {
        let m = 2 + cuts.len();
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * n + cuts.len() * n);
        for i in 0..n {
            trip.push((0, i, f64::from(y[i])));
            trip.push((1, i, 1.0));
        }
        for (k, (set, _)) in cuts.iter().enumerate() {
            for &i in set {
                trip.push((2 + k, i, 1.0));
            }
        }
        let a = SparseMatrix::from_triplets(m, n, &trip)?;
        let mut lower = vec![0.0, f64::NEG_INFINITY];
        let mut upper = vec![0.0, c * total];
        for (_, bound) in &cuts {
            lower.push(f64::NEG_INFINITY);
            upper.push(*bound);
        }
        let prob = QpProblem {
            p: q_matrix.clone(),
            q: vec![-1.0; n],
            a,
            lower,
            upper,
            var_lower: Some(vec![0.0; n]),
            var_upper: Some(vec![c * lam_max; n]),
        };
        let sol = certified_solve(
            &prob,
            &tol_inner,
            warm.as_ref().map(|(x, y, z)| (x.as_slice(), y.as_slice(), z.as_slice())),
            &mut agg,
        )?;
        tol_inner.assume_psd = true;

        // Most violated sorted-prefix constraint.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| sol.x[j].partial_cmp(&sol.x[i]).unwrap());
        let mut running = 0.0;
        let mut worst_k = None;
        let mut worst_v = viol_tol;
        for k in 0..n {
            running += sol.x[order[k]];
            let viol = running - c * prefix[k];
            if viol > worst_v {
                worst_v = viol;
                worst_k = Some(k);
            }
        }
        match worst_k {
            None => {
                result = Some((prob, sol));
                break;
            }
            Some(k) => {
                let mut set: Vec<usize> = order[..=k].to_vec();
                set.sort_unstable();
                if cuts.iter().any(|(s, _)| s == &set) {
                    // The same set violating again means the master solve was
                    // not tight enough; treat as converged to tolerance.
                    result = Some((prob, sol));
                    break;
                }
                log::trace!("prefix cut: k={} viol={worst_v:.2e}", k + 1);
                let mut y_next = sol.y.clone();
                y_next.push(0.0);
                warm = Some((sol.x.clone(), y_next, sol.z.clone()));
                cuts.push((set, c * prefix[k]));
            }
        }
    }
    let Some((prob, sol)) = result else {
        return Err(Error::MaxIterations(3 * n + 24));
    };

    let alpha = sol.x.clone();
    let eq_dual = sol.y[0];
    let objective = -prob.objective_at(&alpha);

    // Deviations from the KKT bias, then the doubly-stochastic certificate.
    let mut xi = vec![0.0; n];
    for i in 0..n {
        let mut s = eq_dual;
        for j in 0..n {
            s += alpha[j] * f64::from(y[j]) * gram.values[[j, i]];
        }
        xi[i] = (1.0 - f64::from(y[i]) * s).max(0.0);
    }
    let eta = eta_certificate(&alpha, &xi, lam, c)?;
    Ok(ConvexOwaDualSolution { alpha, eta, objective, xi, eq_dual, certificates: agg })
}

/// Literal dual with the η block materialized; kept for comparison with the
/// cutting-plane route at small n.
pub fn train_c_owa_dual_direct(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    tol: &ToleranceSpec,
) -> Result<(Vec<f64>, Array2<f64>, f64)> {
    require_nondecreasing(weights, "train_c_owa_dual_direct")?;
    let n = y.len();
    check_lengths(n, weights)?;
    if n > 40 {
        return Err(Error::TooLarge { n, limit: 40, hint: "direct η formulation is quadratic" });
    }
    let lam = &weights.lambda;
    let q_matrix = labeled_quadratic(gram, y);
    let nv = n + n * n;
    let mut p_trip = Vec::new();
    for r in 0..n {
        let (cols, vals) = q_matrix.row(r);
        for (&cc, &v) in cols.iter().zip(vals) {
            p_trip.push((r, cc, v));
        }
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;
    let mut q = vec![0.0; nv];
    for i in 0..n {
        q[i] = -1.0;
    }
    let eta_at = |i: usize, j: usize| n + i * n + j;
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        trip.push((0, i, f64::from(y[i])));
    }
    // α_i − C Σ_j λ_j η_ij ≤ 0
    for i in 0..n {
        let r = 1 + i;
        trip.push((r, i, 1.0));
        for j in 0..n {
            trip.push((r, eta_at(i, j), -c * lam[j]));
        }
    }
    // Column and row sums of η equal one.
    for j in 0..n {
        let r = 1 + n + j;
        for i in 0..n {
            trip.push((r, eta_at(i, j), 1.0));
        }
    }
    for i in 0..n {
        let r = 1 + 2 * n + i;
        for j in 0..n {
            trip.push((r, eta_at(i, j), 1.0));
        }
    }
    let m = 1 + 3 * n;
    let a = SparseMatrix::from_triplets(m, nv, &trip)?;
    let mut lower = vec![0.0];
    let mut upper = vec![0.0];
    lower.extend(vec![f64::NEG_INFINITY; n]);
    upper.extend(vec![0.0; n]);
    lower.extend(vec![1.0; 2 * n]);
    upper.extend(vec![1.0; 2 * n]);
    let mut var_lower = vec![0.0; nv];
    let mut var_upper = vec![f64::INFINITY; nv];
    for i in 0..n {
        var_upper[i] = c * lam.iter().cloned().fold(0.0f64, f64::max);
    }
    for s in n..nv {
        var_lower[s] = 0.0;
        var_upper[s] = 1.0;
    }
    let prob = QpProblem { p, q, a, lower, upper, var_lower: Some(var_lower), var_upper: Some(var_upper) };
    let mut agg = KktAggregate::default();
    let sol = certified_solve(&prob, tol, None, &mut agg)?;
    let alpha = sol.x[..n].to_vec();
    let mut eta = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            eta[[i, j]] = sol.x[eta_at(i, j)];
        }
    }
    Ok((alpha, eta, -prob.objective_at(&sol.x)))
}

// ---------------------------------------------------------------------------
// Bias recovery
// ---------------------------------------------------------------------------

/// Bias of the kernel separator: averaged over samples with strictly
/// interior α (0 < α_k < C Σ_j η_kj λ_j), falling back to the midpoint of
/// the interval implied by the complementary-slackness directions.
pub fn recover_bias(
    sol: &ConvexOwaDualSolution,
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
) -> Result<f64> {
    let n = y.len();
    let lam_max = weights.lambda.iter().cloned().fold(0.0f64, f64::max);
    let eps = 1e-6 * c * lam_max;

    let mut scores = vec![0.0; n];
    for k in 0..n {
        for i in 0..n {
            scores[k] += sol.alpha[i] * f64::from(y[i]) * gram.values[[i, k]];
        }
    }
    let bound_of = |k: usize| -> f64 {
        let mut b = 0.0;
        for j in 0..n {
            b += sol.eta[[k, j]] * weights.lambda[j];
        }
        c * b
    };

    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..n {
        let bound = bound_of(k);
        if sol.alpha[k] > eps && sol.alpha[k] < bound - eps {
            sum += f64::from(y[k]) - scores[k];
            count += 1;
        }
    }
    if count > 0 {
        return Ok(sum / count as f64);
    }

    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for k in 0..n {
        let bound = bound_of(k);
        let b_at = f64::from(y[k]) - scores[k];
        if sol.alpha[k] <= eps && bound > eps {
            // μ_k > 0 ⇒ ξ_k = 0 ⇒ margin at least one.
            if y[k] == 1 {
                lo = lo.max(b_at);
            } else {
                hi = hi.min(b_at);
            }
        } else if sol.alpha[k] >= bound - eps && sol.alpha[k] > eps {
            // α at its effective cap ⇒ margin at most one.
            if y[k] == 1 {
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
            let majority = majority_class(y);
            log::warn!(
                "bias interval unbounded with all α at zero; defaulting to majority class {majority}"
            );
            Ok(f64::from(majority))
        }
    }
}

// ---------------------------------------------------------------------------
// Doubly-stochastic certificate construction
// ---------------------------------------------------------------------------

/// Water-filling: the pointwise-smallest-prefix vector y ≥ x with Σy = target.
/// Among all such vectors it minimizes every sorted prefix sum, so if any
/// dominating point majorized by λ exists, the water-filled one is.
fn waterfill(x: &[f64], target: f64) -> Vec<f64> {
    let total: f64 = x.iter().sum();
    if target <= total {
        // No mass to add (equality up to solver tolerance): shave the
        // surplus off the largest entries.
        let mut y = x.to_vec();
        let mut surplus = total - target;
        if surplus > 0.0 {
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap());
            for &i in &order {
                let cut = surplus.min(y[i]);
                y[i] -= cut;
                surplus -= cut;
                if surplus <= 0.0 {
                    break;
                }
            }
        }
        return y;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Find the level t with Σ max(x_i, t) = target: with t between the
    // (k−1)-th and k-th smallest entries, f(t) = k·t + (sum of the rest).
    let n = x.len();
    let mut prefix = 0.0;
    let mut level = target / n as f64; // level above every entry
    for k in 1..=n {
        prefix += sorted[k - 1];
        let tail = total - prefix;
        let t = (target - tail) / k as f64;
        if t >= sorted[k - 1] - 1e-15 && (k == n || t <= sorted[k] + 1e-15) {
            level = t;
            break;
        }
    }
    x.iter().map(|&v| v.max(level)).collect()
}

/// Builds a k×k doubly stochastic matrix M with M·c = y, given y ≺ c
/// (equal sums and dominated sorted prefixes), by a chain of two-coordinate
/// averaging transforms.
fn doubly_stochastic_for(y: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let k = y.len();
    debug_assert_eq!(c.len(), k);
    if k == 0 {
        return Ok(vec![]);
    }
    let mut pc: Vec<usize> = (0..k).collect();
    pc.sort_by(|&a, &b| c[b].partial_cmp(&c[a]).unwrap());
    let mut py: Vec<usize> = (0..k).collect();
    py.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap());
    let cs: Vec<f64> = pc.iter().map(|&i| c[i]).collect();
    let ys: Vec<f64> = py.iter().map(|&i| y[i]).collect();

    let scale = cs[0].abs().max(ys[0].abs()).max(1e-12);
    let tol = 1e-11 * scale;
    let mut cur = cs.clone();
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = 1.0;
    }

    let apply = |mrow: &mut [f64], a: usize, b: usize, theta: f64, k: usize| {
        for t in 0..k {
            let ra = mrow[a * k + t];
            let rb = mrow[b * k + t];
            mrow[a * k + t] = theta * ra + (1.0 - theta) * rb;
            mrow[b * k + t] = (1.0 - theta) * ra + theta * rb;
        }
    };

    for _ in 0..(2 * k + 8) {
        // Largest surplus source and largest deficit target.
        let mut a = None;
        let mut b = None;
        for i in 0..k {
            let d = cur[i] - ys[i];
            if d > tol && (a.is_none() || cur[i] > cur[a.unwrap()]) {
                a = Some(i);
            }
            if d < -tol && (b.is_none() || ys[i] > ys[b.unwrap()]) {
                b = Some(i);
            }
        }
        let (Some(mut a), Some(mut b)) = (a, b) else {
            break;
        };
        let mut theta = best_theta(&cur, &ys, a, b);
        if theta.is_none() {
            // Scan every admissible pair.
            'scan: for i in 0..k {
                if cur[i] - ys[i] <= tol {
                    continue;
                }
                for j in 0..k {
                    if ys[j] - cur[j] <= tol {
                        continue;
                    }
                    if let Some(th) = best_theta(&cur, &ys, i, j) {
                        a = i;
                        b = j;
                        theta = Some(th);
                        break 'scan;
                    }
                }
            }
        }
        let Some(theta) = theta else {
            return Err(Error::BiasUndetermined(
                "no valid averaging transform; certificate construction failed".into(),
            ));
        };
        let (ca, cb) = (cur[a], cur[b]);
        cur[a] = theta * ca + (1.0 - theta) * cb;
        cur[b] = (1.0 - theta) * ca + theta * cb;
        apply(&mut m, a, b, theta, k);
    }
    let err = cur.iter().zip(ys.iter()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    if err > 1e-7 * scale.max(1.0) {
        return Err(Error::BiasUndetermined(format!(
            "averaging chain did not converge (residual {err:.2e})"
        )));
    }
    // Map back to the original orders: M_orig[py[s]][pc[t]] = m[s][t].
    let mut out = vec![0.0; k * k];
    for s in 0..k {
        for t in 0..k {
            out[py[s] * k + pc[t]] = m[s * k + t];
        }
    }
    Ok(out)
}

/// θ mixing coordinates (a, b) of `cur` so one of them lands exactly on its
/// target, provided the target lies between the two current values.
fn best_theta(cur: &[f64], ys: &[f64], a: usize, b: usize) -> Option<f64> {
    let denom = cur[a] - cur[b];
    if denom.abs() < 1e-15 {
        return None;
    }
    let mut best: Option<f64> = None;
    let th_a = (ys[a] - cur[b]) / denom;
    if (0.0..=1.0).contains(&th_a) {
        best = Some(th_a);
    }
    let th_b = (cur[a] - ys[b]) / denom;
    if (0.0..=1.0).contains(&th_b) {
        best = Some(best.map_or(th_b, |v: f64| v.max(th_b)));
    }
    best
}

/// KKT-consistent doubly stochastic certificate: samples are ordered by
/// deviation, ties form blocks, and each block receives a water-filled
/// target inside the permutohedron of its λ slice.
pub(crate) fn eta_certificate(
    alpha: &[f64],
    xi: &[f64],
    lambda: &[f64],
    c: f64,
) -> Result<Array2<f64>> {
    let n = alpha.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xi[i].partial_cmp(&xi[j]).unwrap().then(i.cmp(&j)));
    let xi_max = xi.iter().cloned().fold(0.0f64, f64::max);
    let tie_tol = 1e-7 * (1.0 + xi_max);

    let mut eta = Array2::zeros((n, n));
    let mut start = 0usize;
    let mut fallback_global = false;
    while start < n {
        let mut end = start + 1;
        while end < n && xi[order[end]] - xi[order[start]] <= tie_tol {
            end += 1;
        }
        let rows: Vec<usize> = order[start..end].to_vec();
        let positions: Vec<usize> = (start..end).collect();
        let x_b: Vec<f64> = rows.iter().map(|&i| alpha[i].max(0.0) / c).collect();
        let lam_b: Vec<f64> = positions.iter().map(|&p| lambda[p]).collect();
        let target: f64 = lam_b.iter().sum();
        // Block-wise domination only holds at exact KKT points; anything
        // beyond solver noise means the tie grouping does not reflect the
        // true assignment, so build one global block instead.
        if x_b.iter().sum::<f64>() > target + 1e-6 * (1.0 + target) {
            fallback_global = true;
            break;
        }
        let y_b = waterfill(&x_b, target);
        match doubly_stochastic_for(&y_b, &lam_b) {
            Ok(m) => {
                let k = rows.len();
                for (s, &row) in rows.iter().enumerate() {
                    for (t, &pos) in positions.iter().enumerate() {
                        eta[[row, pos]] = m[s * k + t];
                    }
                }
            }
            Err(_) => {
                fallback_global = true;
                break;
            }
        }
        start = end;
    }
    if fallback_global {
        // One block over everything; always feasible given the prefix cuts.
        let x_all: Vec<f64> = alpha.iter().map(|&a| a.max(0.0) / c).collect();
        let target: f64 = lambda.iter().sum();
        let y_all = waterfill(&x_all, target);
        let m = doubly_stochastic_for(&y_all, lambda)?;
        for i in 0..n {
            for j in 0..n {
                eta[[i, j]] = m[i * n + j];
            }
        }
    }
    Ok(eta)
}

#[cfg(test)]
mod tests;
