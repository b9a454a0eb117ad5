//! Exact training for general (not necessarily monotone) position weights:
//! the mixed-integer formulation solved by branch and bound on the
//! assignment binaries, its fixed-assignment dual, the big-M and bias-bound
//! auxiliaries, and a factorial brute-force oracle.

pub mod bounds;
pub mod branch_bound;
pub mod fixed;
pub mod oracle;

use ndarray::{Array2, ArrayView2};

use crate::kernel::GramMatrix;
use crate::qp::ToleranceSpec;
use crate::svm::KktAggregate;

pub use bounds::{compute_bounds, BoundsBundle};
pub use branch_bound::{train_nc_owa, train_nc_owa_kernel, BbOptions};
pub use fixed::{train_fixed_assignment, FixedAssignmentDual};
pub use oracle::{brute_force_oracle, brute_force_oracle_gram};

/// Sample-to-position assignment; column sums are one, and row sums are one
/// as well in the strengthened form used throughout.
#[derive(Debug, Clone)]
pub struct AssignmentMatrix {
    pub z: Array2<f64>,
    pub relaxed: bool,
}

impl AssignmentMatrix {
    /// Permutation matrix from positions[i] = position of sample i.
    pub fn from_positions(positions: &[usize]) -> AssignmentMatrix {
        let n = positions.len();
        let mut z = Array2::zeros((n, n));
        for (i, &p) in positions.iter().enumerate() {
            z[[i, p]] = 1.0;
        }
        AssignmentMatrix { z, relaxed: false }
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// positions[i] = assigned position, valid for binary matrices.
    pub fn positions(&self) -> Vec<usize> {
        let n = self.n();
        let mut pos = vec![0usize; n];
        for i in 0..n {
            let mut best = 0;
            for j in 1..n {
                if self.z[[i, j]] > self.z[[i, best]] {
                    best = j;
                }
            }
            pos[i] = best;
        }
        pos
    }

    pub fn is_binary(&self, tol: f64) -> bool {
        self.z.iter().all(|&v| v.min(1.0 - v).abs() <= tol || (v - v.round()).abs() <= tol)
    }
}

/// Primal coefficients of a mixed-integer solution: the linear form carries
/// the separator weights, the kernel form the dual expansion coefficients.
#[derive(Debug, Clone)]
pub enum NcPrimal {
    Linear { w: Vec<f64> },
    Kernel { alpha: Vec<f64> },
}

/// Outcome of an exact (branch-and-bound) solve.
#[derive(Debug, Clone)]
pub struct NcOwaSolution {
    pub primal: NcPrimal,
    pub b: f64,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub z: AssignmentMatrix,
    pub objective: f64,
    /// (incumbent − best bound) / max(1, |incumbent|); zero certifies
    /// global optimality at the configured tolerance.
    pub gap: f64,
    pub nodes: usize,
    pub certificates: KktAggregate,
}

/// Big-M, incumbent and bias bounds produced by the auxiliary problems.
#[derive(Debug, Clone, Copy)]
pub struct NcBounds {
    pub m_big: f64,
    pub b_lower: Option<f64>,
    pub b_upper: Option<f64>,
}

/// Search limits; the defaults match the documented desk-scale budget.
#[derive(Debug, Clone)]
pub struct BbOptionsInner {
    pub node_limit: usize,
    pub time_limit_secs: f64,
    pub rel_gap: f64,
    pub qp_tol: ToleranceSpec,
    /// Refuse exact training above this size unless forced.
    pub force: bool,
}

/// Maximum pairwise Euclidean distance plus two: the diameter covers the
/// geometric spread and the +2 the unit hinge offsets on both sides. The
/// tightened value from the auxiliary problems supersedes this whenever
/// available.
pub fn default_big_m(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows();
    let mut max_d2 = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            max_d2 = max_d2.max(d2);
        }
    }
    max_d2.sqrt() + 2.0
}

/// Feature-space diameter recovered from a Gram matrix
/// (‖φ(a) − φ(b)‖² = K(a,a) + K(b,b) − 2K(a,b)), plus the same +2 slack.
pub fn default_big_m_gram(gram: &GramMatrix) -> f64 {
    let n = gram.nrows();
    let mut max_d2 = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = gram.values[[i, i]] + gram.values[[j, j]] - 2.0 * gram.values[[i, j]];
            max_d2 = max_d2.max(d2.max(0.0));
        }
    }
    max_d2.sqrt() + 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn big_m_examples() {
        // Two points at distance 3.
        let x = array![[0.0, 0.0], [3.0, 0.0]];
        assert_abs_diff_eq!(default_big_m(x.view()), 5.0, epsilon = 1e-12);
        // All identical points: zero diameter.
        let x = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        assert_abs_diff_eq!(default_big_m(x.view()), 2.0, epsilon = 1e-12);
        // Unit square corners.
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_abs_diff_eq!(default_big_m(x.view()), 2.0f64.sqrt() + 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gram_diameter_matches_linear_geometry() {
        let x = array![[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]];
        let g = crate::kernel::gram(&crate::kernel::KernelSpec::Linear, x.view()).unwrap();
        assert_abs_diff_eq!(default_big_m_gram(&g), default_big_m(x.view()), epsilon = 1e-12);
    }

    #[test]
    fn assignment_round_trip() {
        let z = AssignmentMatrix::from_positions(&[2, 0, 1]);
        assert!(z.is_binary(0.0));
        assert_eq!(z.positions(), vec![2, 0, 1]);
    }
}
