//! Compressed sparse row matrices sized for desk-scale finite element
//! operators.  Only the operations the toolkit needs are provided: assembly
//! from triplets, matrix-vector products, linear combinations over a shared
//! sparsity pattern, and conversions to dense or banded form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from (row, col, value) triplets; duplicate positions are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            if i >= n_rows || j >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) outside {n_rows} x {n_cols}"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

        // row_ptr[i + 1] counts row i first, then a prefix sum closes it
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut prev = None;
        for (i, j, v) in entries {
            if prev == Some((i, j)) {
                *values.last_mut().expect("merged entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                prev = Some((i, j));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Row `i` as parallel (column, value) slices.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub(crate) fn pattern_eq(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = DVector::zeros(self.n_rows);
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &DVector<T>, y: &mut DVector<T>) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    /// `A X` for a dense block of column vectors.
    pub fn mul_mat(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.n_cols);
        let mut y = DMatrix::zeros(self.n_rows, x.ncols());
        for c in 0..x.ncols() {
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                let mut acc = T::zero();
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += v * x[(j, c)];
                }
                y[(i, c)] = acc;
            }
        }
        y
    }

    /// `x^H (A y)`; the quadratic form when `x == y`.
    pub fn sesquilinear(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        let ay = self.mul_vec(y);
        x.dotc(&ay)
    }

    /// Half bandwidth: max |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &j in cols {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Max |a_ij - conj(a_ji)| over the stored pattern (0 for Hermitian).
    pub fn hermitian_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let vt = self.get(j, i);
                defect = defect.max((v - vt.conjugate()).abs_f64());
            }
        }
        defect
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }
}

/// Rewrites every matrix onto the union sparsity pattern, inserting explicit
/// zeros, so affine combinations become plain value-array operations.
pub fn unify_patterns<T: Scalar>(mats: &[CsrMatrix<T>]) -> Result<Vec<CsrMatrix<T>>> {
    let Some(first) = mats.first() else {
        return Ok(Vec::new());
    };
    let (n_rows, n_cols) = (first.n_rows, first.n_cols);
    for m in mats {
        if m.n_rows != n_rows || m.n_cols != n_cols {
            return Err(Error::DimensionMismatch("pattern union over unequal shapes".into()));
        }
    }
    // union pattern, row by row
    let mut row_ptr = vec![0usize; n_rows + 1];
    let mut col_idx = Vec::new();
    let mut scratch: Vec<usize> = Vec::new();
    for i in 0..n_rows {
        scratch.clear();
        for m in mats {
            scratch.extend_from_slice(m.row(i).0);
        }
        scratch.sort_unstable();
        scratch.dedup();
        col_idx.extend_from_slice(&scratch);
        row_ptr[i + 1] = col_idx.len();
    }

    let mut out = Vec::with_capacity(mats.len());
    for m in mats {
        let mut values = vec![T::zero(); col_idx.len()];
        for i in 0..n_rows {
            let (cols, vals) = m.row(i);
            let pat = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (&j, &v) in cols.iter().zip(vals) {
                let k = pat.binary_search(&j).expect("union pattern covers every term");
                values[row_ptr[i] + k] += v;
            }
        }
        out.push(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: row_ptr.clone(),
            col_idx: col_idx.clone(),
            values,
        });
    }
    Ok(out)
}

/// `sum_q coeffs[q] * mats[q]` over a shared pattern.
pub fn linear_combination<T: Scalar>(coeffs: &[T], mats: &[CsrMatrix<T>]) -> CsrMatrix<T> {
    assert_eq!(coeffs.len(), mats.len());
    assert!(!mats.is_empty());
    let mut out = mats[0].clone();
    debug_assert!(mats.iter().all(|m| m.pattern_eq(&out)));
    for v in out.values.iter_mut() {
        *v *= coeffs[0];
    }
    for (c, m) in coeffs.iter().zip(mats).skip(1) {
        for (o, &v) in out.values.iter_mut().zip(&m.values) {
            *o += *c * v;
        }
    }
    out
}
