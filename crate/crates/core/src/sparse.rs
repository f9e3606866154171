//! Sparse 0-1 incidence matrices and the elementwise kernels shared by the
//! plain solvers and the recording executor.
//!
//! Both incidence matrices of a routing game are 0-1: the link-path matrix Λ
//! (rows = links, columns = paths) and the OD-path matrix Σ (rows = OD pairs,
//! columns = paths). They are stored as a compressed column-of-row-indices
//! pattern — entries are implicit ones — so that both `M·v` and `Mᵀ·v`
//! traverse the nonzeros exactly once. Every kernel in this module writes its
//! output in one fixed order; higher layers rely on that determinism for
//! bit-identical replays.

use crate::error::{Error, Result};

/// A sparse 0-1 matrix stored column-compressed: for column `j`, the row
/// indices of its nonzeros are `row_idx[col_ptr[j]..col_ptr[j+1]]`, sorted
/// ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    nrows: usize,
    /// Column offsets; `col_ptr.len() == ncols + 1`.
    col_ptr: Vec<usize>,
    /// Concatenated row indices per column.
    row_idx: Vec<usize>,
}

impl Incidence {
    /// Build from per-column row-index lists. Row indices are sorted and
    /// deduplicated; out-of-range indices are rejected.
    pub fn from_columns(nrows: usize, columns: &[Vec<usize>]) -> Result<Self> {
        let mut col_ptr = Vec::with_capacity(columns.len() + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in columns {
            let mut rows = col.clone();
            rows.sort_unstable();
            rows.dedup();
            if let Some(&r) = rows.last() {
                if r >= nrows {
                    return Err(Error::Dimension {
                        what: "incidence row index",
                        expected: nrows,
                        got: r + 1,
                    });
                }
            }
            row_idx.extend_from_slice(&rows);
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            nrows,
            col_ptr,
            row_idx,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    /// Number of (implicit-one) nonzero entries.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Row indices of column `j`, sorted ascending.
    pub fn col(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Dense materialization, for small oracles and debugging only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.ncols()]; self.nrows];
        for j in 0..self.ncols() {
            for &i in self.col(j) {
                m[i][j] = 1.0;
            }
        }
        m
    }

    fn check_len(&self, got: usize, expected: usize, what: &'static str) -> Result<()> {
        if got != expected {
            return Err(Error::Dimension {
                what,
                expected,
                got,
            });
        }
        Ok(())
    }

    /// `out = M·v` (length checks included); cost proportional to nnz.
    pub fn mul(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(v.len(), self.ncols(), "spmv input")?;
        self.check_len(out.len(), self.nrows, "spmv output")?;
        spmv(self, v, out);
        Ok(())
    }

    /// `out = Mᵀ·v`; cost proportional to nnz.
    pub fn mul_t(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(v.len(), self.nrows, "spmv_t input")?;
        self.check_len(out.len(), self.ncols(), "spmv_t output")?;
        spmv_t(self, v, out);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Kernels.
//
// Each kernel is the single implementation of its operation: the plain
// dynamics loops and the recording executor both call these, which keeps the
// recorded computation bit-identical to the live one.
// ---------------------------------------------------------------------------

/// `out = M·v` without dimension checks (callers guarantee shapes).
pub(crate) fn spmv(m: &Incidence, v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for j in 0..m.ncols() {
        let vj = v[j];
        for &i in m.col(j) {
            out[i] += vj;
        }
    }
}

/// `out = Mᵀ·v` without dimension checks.
pub(crate) fn spmv_t(m: &Incidence, v: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &i in m.col(j) {
            acc += v[i];
        }
        *o = acc;
    }
}

/// `out[i] = a[i] * b[i]`.
pub(crate) fn ew_mul(a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = a[i] * b[i];
    }
}

/// `out[i] = a[i] + b[i]`.
pub(crate) fn ew_add(a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = a[i] + b[i];
    }
}

/// `out[i] = alpha * a[i]`.
pub(crate) fn ew_scale(alpha: f64, a: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = alpha * a[i];
    }
}

/// `out[i] = alpha + a[i]`.
pub(crate) fn ew_add_scalar(alpha: f64, a: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = alpha + a[i];
    }
}

/// `out[i] = exp(a[i])`.
pub(crate) fn ew_exp(a: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = a[i].exp();
    }
}

/// `out[i] = a[i] / b[i]`.
pub(crate) fn ew_div(a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = a[i] / b[i];
    }
}

/// `out[i] = a[i] / b[i]`, with the continuous extension `0` where `b[i] == 0`
/// (used for flow-share ratios at zero total flow).
pub(crate) fn ew_safe_div(a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = if b[i] == 0.0 { 0.0 } else { a[i] / b[i] };
    }
}

/// `out[i] = a[i]^n` for integer `n`.
pub(crate) fn ew_powi(a: &[f64], n: i32, out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = a[i].powi(n);
    }
}

/// `⟨a, b⟩`.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Per-group shift: `out[k] = a[k] - max(a over k's group)`, where groups are
/// the contiguous ranges `ptr[g]..ptr[g+1]`. Used as the overflow guard before
/// exponentiation; an identity transform for the normalized dynamics.
pub(crate) fn group_shift_max(ptr: &[usize], a: &[f64], out: &mut [f64]) {
    for g in 0..ptr.len() - 1 {
        let (lo, hi) = (ptr[g], ptr[g + 1]);
        let mut m = f64::NEG_INFINITY;
        for k in lo..hi {
            if a[k] > m {
                m = a[k];
            }
        }
        for k in lo..hi {
            out[k] = a[k] - m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        m.iter().map(|row| dot(row, v)).collect()
    }

    fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (r, c) = (m.len(), m[0].len());
        (0..c).map(|j| (0..r).map(|i| m[i][j]).collect()).collect()
    }

    #[test]
    fn identity_pattern_preserves_vector() {
        let id = Incidence::from_columns(3, &[vec![0], vec![1], vec![2]]).unwrap();
        let v = [1.5, -2.0, 0.25];
        let mut out = [0.0; 3];
        id.mul(&v, &mut out).unwrap();
        assert_eq!(out, v);
        id.mul_t(&v, &mut out).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn random_pattern_matches_dense_oracle() {
        // Fixed 5x7 pattern; compare both products against dense arithmetic.
        let cols: Vec<Vec<usize>> = vec![
            vec![0, 2],
            vec![1],
            vec![0, 3, 4],
            vec![2, 3],
            vec![4],
            vec![0, 1, 2, 3, 4],
            vec![],
        ];
        let m = Incidence::from_columns(5, &cols).unwrap();
        assert_eq!(m.nnz(), 14);
        let dense = m.to_dense();
        let v7: Vec<f64> = (0..7).map(|i| (i as f64) * 0.7 - 1.0).collect();
        let v5: Vec<f64> = (0..5).map(|i| 1.0 / (i as f64 + 1.0)).collect();

        let mut out = vec![0.0; 5];
        m.mul(&v7, &mut out).unwrap();
        assert_eq!(out, dense_mul(&dense, &v7));

        let mut out_t = vec![0.0; 7];
        m.mul_t(&v5, &mut out_t).unwrap();
        assert_eq!(out_t, dense_mul(&transpose(&dense), &v5));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = Incidence::from_columns(2, &[vec![0], vec![1]]).unwrap();
        let mut out = vec![0.0; 2];
        assert!(m.mul(&[1.0], &mut out).is_err());
        assert!(m.mul_t(&[1.0, 2.0, 3.0], &mut out).is_err());
    }

    #[test]
    fn out_of_range_row_rejected() {
        assert!(Incidence::from_columns(2, &[vec![2]]).is_err());
    }

    #[test]
    fn group_shift_subtracts_group_max() {
        let ptr = [0usize, 2, 5];
        let a = [3.0, 1.0, -1.0, 4.0, 2.0];
        let mut out = [0.0; 5];
        group_shift_max(&ptr, &a, &mut out);
        assert_eq!(out, [0.0, -2.0, -5.0, 0.0, -2.0]);
    }

    #[test]
    fn safe_div_extends_zero_over_zero() {
        let mut out = [0.0; 3];
        ew_safe_div(&[1.0, 0.0, 2.0], &[2.0, 0.0, 4.0], &mut out);
        assert_eq!(out, [0.5, 0.0, 0.5]);
    }
}
