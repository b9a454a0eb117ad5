//! Bias-bound and big-M auxiliary problems.
//!
//! Each auxiliary maximizes (or minimizes) a single variable subject to a
//! linear system plus one convex quadratic constraint
//! ½ΣΣ yᵢyⱼαᵢαⱼK + Cλ_n θ ≤ UB. Rather than adding a second-order-cone
//! layer to the QP engine, the scalar objective is bisected: a level t is
//! feasible exactly when Φ(t) = min {quadratic | system, objective-var ≥ t}
//! stays below UB, and Φ is convex and monotone in t, so bisection brackets
//! the optimum. The returned bounds take the conservative (infeasible-side)
//! endpoint, keeping them valid for pruning.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::nonconvex::default_big_m_gram;
use crate::qp::{QpProblem, SparseMatrix, ToleranceSpec};
use crate::svm::{certified_solve, labeled_quadratic, KktAggregate};
use crate::weights::OwaWeights;

/// Incumbent value, bias interval and big-M produced by the auxiliaries.
#[derive(Debug, Clone, Copy)]
pub struct BoundsBundle {
    pub ub_star: f64,
    pub l_b: f64,
    pub u_b: f64,
    pub ub_m: f64,
}

/// Which scalar the bisection drives.
#[derive(Clone, Copy, PartialEq)]
enum Direction {
    BiasUp,
    BiasDown,
    ThetaUp,
}

struct AuxiliarySystem {
    base: QpProblem,
    n: usize,
    off_b: usize,
    off_theta: usize,
}

/// Shared constraint system over (α, b, ξ, θ): margins, Σαy = 0, θ ≥ ξᵢ,
/// 0 ≤ α ≤ CΣλ, ξ ≥ 0, θ ≥ 0. The quadratic ½αᵀQα + Cλ_nθ is the QP
/// objective whose optimum is compared against UB.
fn build_system(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    lambda_coeff: f64,
) -> Result<AuxiliarySystem> {
    let n = y.len();
    let off_b = n;
    let off_xi = n + 1;
    let off_theta = off_xi + n;
    let nv = off_theta + 1;
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
    q[off_theta] = c * lambda_coeff;

    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        trip.push((0, i, f64::from(y[i])));
    }
    for i in 0..n {
        let r = 1 + i;
        let yi = f64::from(y[i]);
        for j in 0..n {
            let v = yi * f64::from(y[j]) * gram.values[[i, j]];
            if v != 0.0 {
                trip.push((r, j, v));
            }
        }
        trip.push((r, off_b, yi));
        trip.push((r, off_xi + i, 1.0));
    }
    for i in 0..n {
        let r = 1 + n + i;
        trip.push((r, off_theta, 1.0));
        trip.push((r, off_xi + i, -1.0));
    }
    let m_rows = 1 + 2 * n;
    let a = SparseMatrix::from_triplets(m_rows, nv, &trip)?;
    let mut lower = vec![0.0];
    let mut upper = vec![0.0];
    lower.extend(vec![1.0; n]);
    upper.extend(vec![f64::INFINITY; n]);
    lower.extend(vec![0.0; n]);
    upper.extend(vec![f64::INFINITY; n]);

    let alpha_cap = c * weights.lambda.iter().sum::<f64>();
    let mut var_lower = vec![0.0; nv];
    let mut var_upper = vec![alpha_cap; nv];
    var_lower[off_b] = f64::NEG_INFINITY;
    var_upper[off_b] = f64::INFINITY;
    for s in off_xi..=off_theta {
        var_lower[s] = 0.0;
        var_upper[s] = f64::INFINITY;
    }
    let base =
        QpProblem { p, q, a, lower, upper, var_lower: Some(var_lower), var_upper: Some(var_upper) };
    Ok(AuxiliarySystem { base, n, off_b, off_theta })
}

struct LevelProbe<'a> {
    sys: &'a AuxiliarySystem,
    tol: ToleranceSpec,
    agg: KktAggregate,
    warm: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    b_window: Option<(f64, f64)>,
}

impl<'a> LevelProbe<'a> {
    /// Φ(level) = minimal quadratic value with the directed variable pinned
    /// beyond `level` (None = unconstrained seed solve).
    fn phi(&mut self, dir: Direction, level: Option<f64>) -> Result<(f64, Vec<f64>)> {
        let mut prob = self.sys.base.clone();
        let (vl, vu) = (prob.var_lower.as_mut().unwrap(), prob.var_upper.as_mut().unwrap());
        if let Some((lo, hi)) = self.b_window {
            vl[self.sys.off_b] = lo;
            vu[self.sys.off_b] = hi;
        }
        if let Some(t) = level {
            match dir {
                Direction::BiasUp => vl[self.sys.off_b] = vl[self.sys.off_b].max(t),
                Direction::BiasDown => vu[self.sys.off_b] = vu[self.sys.off_b].min(t),
                Direction::ThetaUp => vl[self.sys.off_theta] = t,
            }
        }
        let sol = certified_solve(
            &prob,
            &self.tol,
            self.warm.as_ref().map(|(x, y, z)| (x.as_slice(), y.as_slice(), z.as_slice())),
            &mut self.agg,
        )
        .map_err(|e| {
            log::debug!("auxiliary level probe failed at level {level:?}: {e}");
            e
        })?;
        let value = prob.objective_at(&sol.x);
        self.warm = Some((sol.x.clone(), sol.y.clone(), sol.z.clone()));
        self.tol.assume_psd = true;
        Ok((value, sol.x))
    }
}

/// Escalate-then-bisect on the level; returns the conservative endpoint.
fn directed_bound(
    probe: &mut LevelProbe,
    dir: Direction,
    seed_level: f64,
    ub: f64,
    hard_cap: f64,
    slack: f64,
) -> Result<f64> {
    let sign = if dir == Direction::BiasDown { -1.0 } else { 1.0 };
    // seed_level is feasible by construction. Escalate until infeasible.
    let mut feas = seed_level;
    let mut step = 1.0f64.max(0.1 * (1.0 + seed_level.abs()));
    let mut infeas = None;
    for _ in 0..60 {
        let candidate = feas + sign * step;
        if sign * candidate >= sign * hard_cap {
            let (value, _) = probe.phi(dir, Some(hard_cap))?;
            if value <= ub + slack {
                return Ok(hard_cap);
            }
            infeas = Some(hard_cap);
            break;
        }
        let (value, _) = probe.phi(dir, Some(candidate))?;
        if value <= ub + slack {
            feas = candidate;
            step *= 4.0;
        } else {
            infeas = Some(candidate);
            break;
        }
    }
    let Some(mut infeas) = infeas else {
        return Ok(hard_cap);
    };
    for _ in 0..80 {
        if (infeas - feas).abs() <= 1e-6 * (1.0 + feas.abs().max(infeas.abs())) {
            break;
        }
        let mid = 0.5 * (feas + infeas);
        let (value, _) = probe.phi(dir, Some(mid))?;
        if value <= ub + slack {
            feas = mid;
        } else {
            infeas = mid;
        }
    }
    Ok(infeas)
}

/// Solves the bias-range and big-M auxiliaries for a valid upper bound `ub`
/// on the mixed-integer optimum. `use_max_lambda` swaps the written λ_n
/// coefficient for max_k λ_k (more conservative when weights are not
/// monotone).
pub fn compute_bounds(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    ub: f64,
    use_max_lambda: bool,
    tol: &ToleranceSpec,
) -> Result<BoundsBundle> {
    let n = y.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch { weights: weights.len(), deviations: n });
    }
    let lambda_coeff = if use_max_lambda {
        weights.lambda.iter().cloned().fold(0.0f64, f64::max)
    } else {
        *weights.lambda.last().expect("nonempty weights")
    };
    let sys = build_system(gram, y, c, weights, lambda_coeff)?;
    let slack = 1e-7 * (1.0 + ub.abs());
    let mut probe = LevelProbe {
        sys: &sys,
        tol: tol.clone(),
        agg: KktAggregate::default(),
        warm: None,
        b_window: None,
    };

    // Seed: the unconstrained minimum of the quadratic over the system.
    let (phi_min, x_min) = probe.phi(Direction::BiasUp, None)?;
    if phi_min > ub + slack {
        return Err(Error::AuxiliaryInfeasible(ub));
    }
    let b_seed = x_min[sys.off_b];
    let theta_seed = x_min[sys.off_theta];

    // Hard caps: |b| and θ can never be certified useful beyond these.
    let diameter_m = default_big_m_gram(gram);
    let alpha_cap = c * weights.lambda.iter().sum::<f64>();
    let score_cap = alpha_cap
        * (0..n)
            .map(|i| gram.values.row(i).iter().fold(0.0f64, |a, &v| a.max(v.abs())))
            .fold(0.0f64, f64::max);
    let b_cap = 1.0 + score_cap + diameter_m;

    let u_b = directed_bound(&mut probe, Direction::BiasUp, b_seed, ub, b_cap, slack)?;
    probe.warm = None;
    let l_b = directed_bound(&mut probe, Direction::BiasDown, b_seed, ub, -b_cap, slack)?;

    // θ bound with the bias window added.
    probe.warm = None;
    probe.b_window = Some((l_b, u_b));
    let ub_m = if lambda_coeff <= 1e-12 {
        // The quadratic constraint cannot limit θ; fall back to the
        // geometric default.
        diameter_m
    } else {
        directed_bound(&mut probe, Direction::ThetaUp, theta_seed, ub, diameter_m.max(theta_seed), slack)?
    };
    Ok(BoundsBundle { ub_star: ub, l_b, u_b, ub_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};
    use crate::svm::train_l2_svm;
    use ndarray::array;

    #[test]
    fn symmetric_two_point_interval_brackets_zero() {
        let x = array![[1.0], [-1.0]];
        let y = vec![1i8, -1];
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let w = crate::weights::normalize_weights(&[0.8, 1.2]).unwrap();
        // Any valid incumbent works as UB; use the plain SVM objective.
        let l2 = train_l2_svm(&g, x.view(), &y, 5.0).unwrap();
        let bundle =
            compute_bounds(&g, &y, 5.0, &w, l2.objective.max(0.5), false, &ToleranceSpec::default())
                .unwrap();
        assert!(bundle.l_b <= 0.0 && 0.0 <= bundle.u_b, "{bundle:?}");
        assert!(bundle.ub_m >= 0.0);
    }

    #[test]
    fn invalid_upper_bound_is_flagged() {
        let x = array![[1.0, 0.0], [0.5, 0.2], [-1.0, 0.1], [-0.6, -0.3]];
        let y = vec![1i8, 1, -1, -1];
        let g = gram(&KernelSpec::Linear, x.view()).unwrap();
        let w = crate::weights::OwaWeights::uniform(4);
        // A negative bound is below the attainable quadratic minimum (zero).
        assert!(matches!(
            compute_bounds(&g, &y, 1.0, &w, -1.0, false, &ToleranceSpec::default()),
            Err(Error::AuxiliaryInfeasible(_))
        ));
    }
}
