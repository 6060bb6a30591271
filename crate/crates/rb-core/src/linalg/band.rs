//! Banded direct solvers.  Truth operators here come from 1-D spectral and
//! 2-D grid discretizations whose bandwidth stays far below the dof count, so
//! a band Cholesky (Hermitian positive definite Gramians) and a band LU with
//! partial pivoting (general parametric operators) cover every truth solve.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_traits::One;

use crate::error::{Error, Result};
use crate::linalg::sparse::CsrMatrix;
use crate::scalar::Scalar;

/// Cholesky factorization `A = L L^H` of a Hermitian positive definite band
/// matrix.  Storage is the lower band by columns: `data[j*(bw+1) + (i-j)]`
/// holds `L[i][j]` for `j <= i <= j+bw`.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::DimensionMismatch("band Cholesky needs a square matrix".into()));
        }
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut data = vec![T::zero(); n * stride];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[j * stride + (i - j)] = v;
                }
            }
        }

        for j in 0..n {
            let mut s = data[j * stride].real();
            let lo = j.saturating_sub(bw);
            for k in lo..j {
                let l_jk = data[k * stride + (j - k)];
                s -= l_jk.modulus_squared();
            }
            let pivot = T::real_to_f64(s.clone());
            if !(pivot > 0.0) {
                return Err(Error::EigenFailure(format!(
                    "matrix not positive definite at pivot {j} (value {pivot:.3e})"
                )));
            }
            let d = s.sqrt();
            data[j * stride] = T::from_real(d.clone());
            let inv_d = T::from_real(T::RealField::one() / d);
            let hi = (j + bw).min(n - 1);
            for i in (j + 1)..=hi {
                let mut t = data[j * stride + (i - j)];
                let lo_i = i.saturating_sub(bw);
                for k in lo_i.max(lo)..j {
                    t -= data[k * stride + (i - k)] * data[k * stride + (j - k)].conjugate();
                }
                data[j * stride + (i - j)] = t * inv_d;
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut DVector<T>) {
        assert_eq!(b.len(), self.n);
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        // L y = b
        for k in 0..n {
            let y = b[k] / self.data[k * stride];
            b[k] = y;
            let hi = (k + bw).min(n - 1);
            for i in (k + 1)..=hi {
                let l = self.data[k * stride + (i - k)];
                b[i] -= l * y;
            }
        }
        // L^H x = y
        for k in (0..n).rev() {
            let mut t = b[k];
            let hi = (k + bw).min(n - 1);
            for i in (k + 1)..=hi {
                t -= self.data[k * stride + (i - k)].conjugate() * b[i];
            }
            b[k] = t / self.data[k * stride];
        }
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(b.nrows(), self.n);
        let mut out = b.clone();
        let mut col = DVector::zeros(self.n);
        for j in 0..b.ncols() {
            col.copy_from(&b.column(j));
            self.solve_in_place(&mut col);
            out.set_column(j, &col);
        }
        out
    }

    /// `L^H x`.  Maps the inner product induced by `A = L L^H` onto the
    /// Euclidean one: `(L^H u)^H (L^H v) = u^H A v`.
    pub fn mul_adjoint_vec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.n);
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        let mut y = DVector::zeros(n);
        for k in 0..n {
            let mut t = T::zero();
            let hi = (k + bw).min(n - 1);
            for i in k..=hi {
                t += self.data[k * stride + (i - k)].conjugate() * x[i];
            }
            y[k] = t;
        }
        y
    }

    /// `L^H X` column by column.
    pub fn mul_adjoint_mat(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.n);
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &self.mul_adjoint_vec(&x.column(j).into_owned()));
        }
        out
    }
}

/// LU factorization with partial pivoting of a general band matrix with `kl`
/// sub- and `ku` superdiagonals.  Row interchanges widen the upper band to
/// `ku + kl`; storage accounts for that fill from the start.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    /// column-major bands: entry (i, j) at `data[j*nb + kl + ku + i - j]`
    data: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::DimensionMismatch("band LU needs a square matrix".into()));
        }
        let kl = a.bandwidth();
        let ku = kl;
        let nb = 2 * kl + ku + 1;
        let mut data = vec![T::zero(); n * nb];
        let ofs = |i: usize, j: usize| j * nb + kl + ku + i - j;
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                data[ofs(i, j)] = v;
            }
        }

        let mut pivots = vec![0usize; n];
        for j in 0..n {
            let i_hi = (j + kl).min(n - 1);
            let mut p = j;
            let mut p_abs = data[ofs(j, j)].abs_f64();
            for i in (j + 1)..=i_hi {
                let v = data[ofs(i, j)].abs_f64();
                if v > p_abs {
                    p = i;
                    p_abs = v;
                }
            }
            if p_abs == 0.0 {
                return Err(Error::EigenFailure(format!("exact zero pivot in column {j}")));
            }
            pivots[j] = p;
            let c_hi = (j + ku + kl).min(n - 1);
            if p != j {
                for c in j..=c_hi {
                    data.swap(ofs(j, c), ofs(p, c));
                }
            }
            let inv_d = T::one() / data[ofs(j, j)];
            for i in (j + 1)..=i_hi {
                let m = data[ofs(i, j)] * inv_d;
                data[ofs(i, j)] = m;
            }
            for c in (j + 1)..=c_hi {
                let u = data[ofs(j, c)];
                if u != T::zero() {
                    for i in (j + 1)..=i_hi {
                        let m = data[ofs(i, j)];
                        data[ofs(i, c)] -= m * u;
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, data, pivots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut DVector<T>) {
        assert_eq!(b.len(), self.n);
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let nb = 2 * kl + ku + 1;
        let ofs = |i: usize, j: usize| j * nb + kl + ku + i - j;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap_rows(j, p);
            }
            let bj = b[j];
            let i_hi = (j + kl).min(n - 1);
            for i in (j + 1)..=i_hi {
                let l = self.data[ofs(i, j)];
                b[i] -= l * bj;
            }
        }
        for j in (0..n).rev() {
            let x = b[j] / self.data[ofs(j, j)];
            b[j] = x;
            let i_lo = j.saturating_sub(ku + kl);
            for i in i_lo..j {
                let u = self.data[ofs(i, j)];
                b[i] -= u * x;
            }
        }
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn random_band<T: Scalar>(n: usize, bw: usize, seed: u64, hermitian_pd: bool) -> CsrMatrix<T> {
        let mut s = seed;
        let mut trip = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                if hermitian_pd && j > i {
                    continue;
                }
                let v = T::try_from_parts(
                    lcg(&mut s),
                    if T::IS_COMPLEX && j != i { lcg(&mut s) } else { 0.0 },
                )
                .unwrap();
                trip.push((i, j, v));
                if hermitian_pd && j < i {
                    trip.push((j, i, v.conjugate()));
                }
            }
            if hermitian_pd {
                // strong real diagonal keeps it positive definite
                trip.push((i, i, T::from_re(2.0 * (bw + 1) as f64)));
            }
        }
        CsrMatrix::from_triplets(n, n, trip).unwrap()
    }

    fn random_vec<T: Scalar>(n: usize, seed: u64) -> DVector<T> {
        let mut s = seed;
        DVector::from_fn(n, |_, _| {
            T::try_from_parts(lcg(&mut s), if T::IS_COMPLEX { lcg(&mut s) } else { 0.0 }).unwrap()
        })
    }

    #[test]
    fn cholesky_solves_real_and_complex() {
        let a = random_band::<f64>(40, 3, 1, true);
        let chol = BandCholesky::factor(&a).unwrap();
        let b = random_vec::<f64>(40, 2);
        let x = chol.solve(&b);
        assert!((a.to_dense() * &x - &b).norm() < 1e-10);

        let a = random_band::<Complex<f64>>(35, 4, 3, true);
        let chol = BandCholesky::factor(&a).unwrap();
        let b = random_vec::<Complex<f64>>(35, 4);
        let x = chol.solve(&b);
        assert!((a.to_dense() * &x - &b).norm() < 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a =
            CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0f64), (1, 1, -1.0)]).unwrap();
        assert!(BandCholesky::factor(&a).is_err());
    }

    #[test]
    fn lu_matches_dense_solver() {
        for seed in 0..5u64 {
            let a = random_band::<f64>(30, 2, 10 + seed, false);
            let b = random_vec::<f64>(30, 20 + seed);
            let lu = BandLu::factor(&a).unwrap();
            let x = lu.solve(&b);
            assert!((a.to_dense() * &x - &b).norm() < 1e-9, "seed {seed}");
        }
        let a = random_band::<Complex<f64>>(45, 5, 77, false);
        let b = random_vec::<Complex<f64>>(45, 78);
        let x = BandLu::factor(&a).unwrap().solve(&b);
        assert!((a.to_dense() * &x - &b).norm() < 1e-9);
    }

    #[test]
    fn lu_pivots_through_zero_diagonal() {
        // zero diagonal forces an interchange on the first column
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 1, 1.0f64), (1, 0, 2.0), (1, 1, 1.0), (1, 2, 1.0), (2, 1, 3.0), (2, 2, 1.0)],
        )
        .unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = BandLu::factor(&a).unwrap().solve(&b);
        assert!((a.to_dense() * &x - &b).norm() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let a = random_band::<f32>(25, 2, 5, true);
        let b = random_vec::<f32>(25, 6);
        let x = BandCholesky::factor(&a).unwrap().solve(&b);
        assert!((a.to_dense() * &x - &b).norm() < 1e-4);
    }
}
