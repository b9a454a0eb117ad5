//! Minimal CSR sparse matrix used by the QP engine.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    /// Row offsets, length nrows + 1.
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> SparseMatrix {
        SparseMatrix { nrows, ncols, indptr: vec![0; nrows + 1], indices: vec![], data: vec![] }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<SparseMatrix> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::ConfigError(format!(
                    "triplet ({r},{c}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] = indices.len();
                last = Some((r, c));
            }
        }
        // Fill gaps for empty rows and drop stored zeros.
        for r in 1..=nrows {
            if indptr[r] == 0 {
                indptr[r] = indptr[r - 1];
            }
        }
        let mut m = SparseMatrix { nrows, ncols, indptr, indices, data };
        m.drop_zeros();
        Ok(m)
    }

    /// Dense row-major construction helper for tests and small blocks.
    pub fn from_dense(rows: &[Vec<f64>]) -> SparseMatrix {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut trip = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((r, c, v));
                }
            }
        }
        SparseMatrix::from_triplets(nrows, ncols, &trip).expect("valid dense shape")
    }

    fn drop_zeros(&mut self) {
        if !self.data.iter().any(|&v| v == 0.0) {
            return;
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.data[k] != 0.0 {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.data[s..e])
    }

    /// out = A x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            out[r] = acc;
        }
    }

    /// out = Aᵀ x
    pub fn matvec_t(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.fill(0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[self.indices[k]] += self.data[k] * xr;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                trip.push((self.indices[k], r, self.data[k]));
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, &trip).expect("transpose shape")
    }

    /// Per-column infinity norm.
    pub fn col_abs_max(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.ncols];
        for (&c, &v) in self.indices.iter().zip(self.data.iter()) {
            out[c] = out[c].max(v.abs());
        }
        out
    }

    /// Per-row infinity norm.
    pub fn row_abs_max(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[r] = out[r].max(self.data[k].abs());
            }
        }
        out
    }

    /// Returns diag(left) · A · diag(right).
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> SparseMatrix {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.data[k] *= left[r] * right[out.indices[k]];
            }
        }
        out
    }

    /// Max absolute asymmetry |A − Aᵀ| over all entries (A must be square).
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            let (ci, cv) = self.row(r);
            let (ti, tv) = t.row(r);
            let mut i = 0;
            let mut j = 0;
            while i < ci.len() || j < ti.len() {
                let (ca, va) = if i < ci.len() { (ci[i], cv[i]) } else { (usize::MAX, 0.0) };
                let (cb, vb) = if j < ti.len() { (ti[j], tv[j]) } else { (usize::MAX, 0.0) };
                if ca == cb {
                    worst = worst.max((va - vb).abs());
                    i += 1;
                    j += 1;
                } else if ca < cb {
                    worst = worst.max(va.abs());
                    i += 1;
                } else {
                    worst = worst.max(vb.abs());
                    j += 1;
                }
            }
        }
        worst
    }

    /// Dense copy, row-major as nested Vec.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[r][self.indices[k]] = self.data[k];
            }
        }
        out
    }
}
