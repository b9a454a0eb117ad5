//! Dense LDLᵀ factorization without pivoting.
//!
//! The KKT matrices factored here are symmetric quasi-definite
//! ([P+σI, Aᵀ; A, −R]), for which an unpivoted LDLᵀ with mixed-sign D exists
//! and is stable after equilibration. Near-zero pivots are nudged so that
//! rank-deficient active sets (redundant equality rows) still factor; the
//! caller compensates with iterative refinement.

/// Row-major dense symmetric matrix holding L (strict lower) and D (diagonal)
/// after factorization.
pub struct LdlFactor {
    n: usize,
    ld: Vec<f64>,
    /// Number of pivots whose magnitude had to be bumped.
    pub bumped_pivots: usize,
}

impl LdlFactor {
    /// Factors the dense symmetric matrix `a` (row-major, n×n).
    pub fn new(mut ld: Vec<f64>, n: usize, pivot_floor: f64) -> LdlFactor {
        debug_assert_eq!(ld.len(), n * n);
        let mut bumped = 0usize;
        for j in 0..n {
            // d_j = a_jj − Σ_{k<j} L_jk² d_k
            let mut dj = ld[j * n + j];
            for k in 0..j {
                let ljk = ld[j * n + k];
                dj -= ljk * ljk * ld[k * n + k];
            }
            if dj.abs() < pivot_floor {
                dj = if dj >= 0.0 { pivot_floor } else { -pivot_floor };
                bumped += 1;
            }
            ld[j * n + j] = dj;
            // Column j of L below the diagonal.
            for i in (j + 1)..n {
                let mut v = ld[i * n + j];
                let (row_i, row_j) = (i * n, j * n);
                for k in 0..j {
                    v -= ld[row_i + k] * ld[row_j + k] * ld[k * n + k];
                }
                ld[i * n + j] = v / dj;
            }
        }
        LdlFactor { n, ld, bumped_pivots: bumped }
    }

    /// Solves L D Lᵀ x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // Forward: L y = b
        for i in 0..n {
            let mut v = b[i];
            let row = i * n;
            for k in 0..i {
                v -= self.ld[row + k] * b[k];
            }
            b[i] = v;
        }
        // Diagonal
        for i in 0..n {
            b[i] /= self.ld[i * n + i];
        }
        // Backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self.ld[k * n + i] * b[k];
            }
            b[i] = v;
        }
    }
}

/// Dense symmetric matrix builder for KKT systems.
pub struct DenseSym {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(n: usize) -> DenseSym {
        DenseSym { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    #[inline]
    pub fn set_diag_add(&mut self, i: usize, v: f64) {
        self.data[i * self.n + i] += v;
    }

    /// y = M x (full symmetric storage).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            y[i] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        }
    }

    pub fn factor(&self, pivot_floor: f64) -> LdlFactor {
        LdlFactor::new(self.data.clone(), self.n, pivot_floor)
    }
}

/// Solves M x = b using a factored regularized copy of M, refining against
/// the true M a few rounds. Returns the refined solution.
pub fn solve_refined(m_true: &DenseSym, factor: &LdlFactor, b: &[f64], rounds: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    factor.solve_in_place(&mut x);
    let mut resid = vec![0.0; n];
    for _ in 0..rounds {
        m_true.matvec(&x, &mut resid);
        for i in 0..n {
            resid[i] = b[i] - resid[i];
        }
        let norm = resid.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if norm < 1e-14 * (1.0 + b.iter().fold(0.0f64, |a, &v| a.max(v.abs()))) {
            break;
        }
        factor.solve_in_place(&mut resid);
        for i in 0..n {
            x[i] += resid[i];
        }
    }
    x
}
