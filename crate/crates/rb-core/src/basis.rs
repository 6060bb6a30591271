//! Reduced basis construction: a frozen orthonormalization frame and
//! proper-orthogonal-decomposition extension that never touches columns
//! already in the basis, so every leading sub-block remains a valid smaller
//! basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, CsrMatrix};
use crate::scalar::Scalar;
use crate::truth::TruthModel;

/// Relative singular-value cutoff below which an incoming snapshot direction
/// is treated as already contained in the basis.
pub const DEFAULT_POD_DROP_TOL: f64 = 1e-10;

/// The inner product in which bases are orthonormalized and residual dual
/// norms are evaluated.  For parameter-dependent inner products this is the
/// product frozen at one reference parameter; the estimator itself can still
/// use the exact parametric norm through the reduced Gramian blocks.
#[derive(Debug)]
pub struct OrthoFrame<T: Scalar> {
    gram: CsrMatrix<T>,
    chol: BandCholesky<T>,
    mu_ref: Option<Vec<f64>>,
}

impl<T: Scalar> OrthoFrame<T> {
    /// Builds the frame from the model's inner product.  `mu_ref` is required
    /// exactly when the inner product is parameter-dependent and records where
    /// it was frozen.
    pub fn new(model: &TruthModel<T>, mu_ref: Option<&[f64]>) -> Result<Self> {
        let gram = model.gram_matrix(mu_ref)?;
        let chol = BandCholesky::factor(&gram)?;
        Ok(Self { gram, chol, mu_ref: mu_ref.map(|m| m.to_vec()) })
    }

    pub fn gram(&self) -> &CsrMatrix<T> {
        &self.gram
    }

    pub fn cholesky(&self) -> &BandCholesky<T> {
        &self.chol
    }

    pub fn mu_ref(&self) -> Option<&[f64]> {
        self.mu_ref.as_deref()
    }

    pub fn dofs(&self) -> usize {
        self.gram.n_rows()
    }

    /// `u^H G v`
    pub fn inner(&self, u: &DVector<T>, v: &DVector<T>) -> T {
        self.gram.sesquilinear(u, v)
    }

    pub fn norm(&self, v: &DVector<T>) -> f64 {
        self.inner(v, v).re_f64().max(0.0).sqrt()
    }

    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        self.gram.mul_vec(v)
    }

    pub fn apply_mat(&self, v: &DMatrix<T>) -> DMatrix<T> {
        self.gram.mul_mat(v)
    }
}

/// Which truth solve a basis block came from.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotLabel {
    /// A plain solution snapshot `u(μ)`.
    Lagrange { mu: Vec<f64> },
    /// A parameter-derivative snapshot `∂^order u / ∂μ_direction^order (μ)`.
    Taylor { mu: Vec<f64>, direction: usize, order: u32 },
}

impl SnapshotLabel {
    pub fn mu(&self) -> &[f64] {
        match self {
            SnapshotLabel::Lagrange { mu } => mu,
            SnapshotLabel::Taylor { mu, .. } => mu,
        }
    }
}

/// One extension batch: the snapshots that went in and how many orthonormal
/// directions survived compression.
#[derive(Debug, Clone)]
pub struct BasisBlock {
    pub labels: Vec<SnapshotLabel>,
    pub columns: usize,
}

/// Basis matrix `Ξ` with `G`-orthonormal columns.  Extension only appends
/// columns; the first `n` columns always form the dimension-`n` basis.
#[derive(Debug, Clone)]
pub struct ReducedBasis<T: Scalar> {
    xi: DMatrix<T>,
    blocks: Vec<BasisBlock>,
}

impl<T: Scalar> ReducedBasis<T> {
    pub fn empty(dofs: usize) -> Self {
        Self { xi: DMatrix::zeros(dofs, 0), blocks: Vec::new() }
    }

    /// Number of basis vectors.
    pub fn dim(&self) -> usize {
        self.xi.ncols()
    }

    pub fn dofs(&self) -> usize {
        self.xi.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.xi
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    /// Restores a basis from raw parts; used by the binary container.
    pub fn from_parts(xi: DMatrix<T>, blocks: Vec<BasisBlock>) -> Result<Self> {
        let recorded: usize = blocks.iter().map(|b| b.columns).sum();
        if recorded != xi.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "block bookkeeping covers {recorded} columns, basis has {}",
                xi.ncols()
            )));
        }
        Ok(Self { xi, blocks })
    }

    /// `Ξ_{:,0..n} c` for `n = c.len() <= dim()`.
    pub fn lift(&self, coeffs: &DVector<T>) -> DVector<T> {
        let n = coeffs.len();
        assert!(n <= self.dim(), "coefficient vector longer than the basis");
        self.xi.columns(0, n) * coeffs
    }

    /// Coordinates `Ξ^H G v` of the `G`-orthogonal projection of `v`.
    pub fn coordinates_of(&self, v: &DVector<T>, frame: &OrthoFrame<T>) -> DVector<T> {
        self.xi.ad_mul(&frame.apply(v))
    }

    /// Worst-case deviation of `Ξ^H G Ξ` from the identity; a health check.
    pub fn orthonormality_defect(&self, frame: &OrthoFrame<T>) -> f64 {
        let m = self.dim();
        if m == 0 {
            return 0.0;
        }
        let c = self.xi.ad_mul(&frame.apply_mat(&self.xi));
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((c[(i, j)] - target).abs_f64());
            }
        }
        worst
    }

    /// Appends the dominant new directions of `snapshots` to the basis.
    ///
    /// The incoming block is normalized, deflated against the existing basis,
    /// and compressed through its small Gramian; directions whose singular
    /// value falls below `drop_tol` times the block's leading singular value
    /// are discarded.  Returns how many columns were added (zero when every
    /// snapshot already lies in the span).  Existing columns are never
    /// modified.
    pub fn extend_pod(
        &mut self,
        frame: &OrthoFrame<T>,
        snapshots: &[DVector<T>],
        labels: Vec<SnapshotLabel>,
        drop_tol: f64,
    ) -> Result<usize> {
        if snapshots.len() != labels.len() {
            return Err(Error::DimensionMismatch(
                "one label per snapshot is required".into(),
            ));
        }
        if snapshots.is_empty() {
            return Ok(0);
        }
        let dofs = self.dofs();
        for s in snapshots {
            if s.len() != dofs {
                return Err(Error::DimensionMismatch(format!(
                    "snapshot of length {} in a basis over {dofs} dofs",
                    s.len()
                )));
            }
        }

        // Normalize; exact zero vectors carry no direction at all.
        let mut cols: Vec<DVector<T>> = Vec::with_capacity(snapshots.len());
        for s in snapshots {
            let nv = frame.norm(s);
            if nv.is_finite() && nv > 0.0 {
                cols.push(s / T::from_re(nv));
            }
        }
        if cols.is_empty() {
            self.blocks.push(BasisBlock { labels, columns: 0 });
            return Ok(0);
        }
        let mut v = DMatrix::from_columns(&cols);

        // Working in the Cholesky image `B = L^H V` turns the `G`-geometry
        // into the Euclidean one, so a thin SVD of `B` measures new-direction
        // content at full precision (a Gramian eigensolve would square the
        // conditioning and lose half the digits).
        let l = frame.cholesky();

        // Reference scale: leading singular value of the normalized block
        // before deflation; the columns are unit vectors, so this lies in
        // `[1, sqrt(k)]`.
        let sigma_ref = {
            let b0 = l.mul_adjoint_mat(&v);
            let sv = b0.singular_values();
            if sv.is_empty() {
                0.0
            } else {
                T::real_to_f64(sv[0].clone())
            }
        };
        if sigma_ref == 0.0 {
            self.blocks.push(BasisBlock { labels, columns: 0 });
            return Ok(0);
        }

        // Deflate against the existing basis (two passes for stability).
        if self.dim() > 0 {
            for _ in 0..2 {
                let coeffs = self.xi.ad_mul(&frame.apply_mat(&v));
                v -= &self.xi * &coeffs;
            }
        }

        // Compress the deflated block: right singular vectors of `L^H V`
        // give the combination weights, singular values are exact `G`-norms.
        let svd = l.mul_adjoint_mat(&v).svd(false, true);
        let w_t = svd
            .v_t
            .ok_or_else(|| Error::EigenFailure("snapshot compression lost right vectors".into()))?;
        let k = v.ncols();

        let mut added = 0usize;
        let mut new_cols: Vec<DVector<T>> = Vec::new();
        for idx in 0..svd.singular_values.len().min(k) {
            let sigma = T::real_to_f64(svd.singular_values[idx].clone()).max(0.0);
            if sigma <= drop_tol * sigma_ref {
                break; // singular values are sorted; the rest are smaller
            }
            let y = w_t.row(idx).adjoint();
            let mut z: DVector<T> = &v * y / T::from_re(sigma);
            // One more orthogonalization sweep against everything accepted so
            // far; repeat once if cancellation ate most of the vector.
            let mut nz = 1.0f64;
            for _ in 0..2 {
                let gz = frame.apply(&z);
                if self.dim() > 0 {
                    let coeffs = self.xi.ad_mul(&gz);
                    z -= &self.xi * coeffs;
                }
                for p in &new_cols {
                    let c = p.dotc(&frame.apply(&z));
                    z -= p * c;
                }
                nz = frame.norm(&z);
                if nz > 0.5 {
                    break;
                }
                if nz <= drop_tol * sigma_ref {
                    break;
                }
            }
            if nz <= drop_tol * sigma_ref || nz == 0.0 {
                continue;
            }
            z /= T::from_re(frame.norm(&z));
            new_cols.push(z);
            added += 1;
        }

        if added > 0 {
            let mut all: Vec<DVector<T>> = Vec::with_capacity(self.dim() + added);
            for j in 0..self.dim() {
                all.push(self.xi.column(j).into_owned());
            }
            all.extend(new_cols);
            self.xi = DMatrix::from_columns(&all);
        }
        self.blocks.push(BasisBlock { labels, columns: added });
        Ok(added)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::problems::{build_thermal_block, ThermalBlockConfig};

    fn small_frame() -> (TruthModel<f64>, OrthoFrame<f64>) {
        let model = build_thermal_block::<f64>(&ThermalBlockConfig::new(6).unwrap()).unwrap();
        let frame = OrthoFrame::new(&model, None).unwrap();
        (model, frame)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn extension_is_orthonormal_and_prefix_preserving() {
        let (_, frame) = small_frame();
        let n = frame.dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut basis = ReducedBasis::<f64>::empty(n);

        let first: Vec<DVector<f64>> = (0..3).map(|_| random_vec(&mut rng, n)).collect();
        let labels: Vec<SnapshotLabel> =
            (0..3).map(|i| SnapshotLabel::Lagrange { mu: vec![i as f64] }).collect();
        let added =
            basis.extend_pod(&frame, &first, labels, DEFAULT_POD_DROP_TOL).unwrap();
        assert_eq!(added, 3);
        let before = basis.matrix().clone();

        let second: Vec<DVector<f64>> = (0..2).map(|_| random_vec(&mut rng, n)).collect();
        let labels: Vec<SnapshotLabel> =
            (0..2).map(|i| SnapshotLabel::Lagrange { mu: vec![10.0 + i as f64] }).collect();
        let added =
            basis.extend_pod(&frame, &second, labels, DEFAULT_POD_DROP_TOL).unwrap();
        assert_eq!(added, 2);
        assert_eq!(basis.dim(), 5);

        // prefix untouched
        for j in 0..3 {
            for i in 0..n {
                assert_eq!(basis.matrix()[(i, j)], before[(i, j)]);
            }
        }
        assert!(basis.orthonormality_defect(&frame) < 1e-12);
    }

    #[test]
    fn dependent_snapshots_are_dropped() {
        let (_, frame) = small_frame();
        let n = frame.dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut basis = ReducedBasis::<f64>::empty(n);

        let a = random_vec(&mut rng, n);
        let b = random_vec(&mut rng, n);
        let batch = vec![a.clone(), b.clone(), &a * 2.0 - &b * 0.5];
        let labels = vec![
            SnapshotLabel::Lagrange { mu: vec![0.0] },
            SnapshotLabel::Lagrange { mu: vec![1.0] },
            SnapshotLabel::Lagrange { mu: vec![2.0] },
        ];
        let added = basis.extend_pod(&frame, &batch, labels, DEFAULT_POD_DROP_TOL).unwrap();
        assert_eq!(added, 2, "a linear combination adds no third direction");

        // re-adding a known vector adds nothing
        let added = basis
            .extend_pod(
                &frame,
                &[a.clone()],
                vec![SnapshotLabel::Lagrange { mu: vec![0.0] }],
                DEFAULT_POD_DROP_TOL,
            )
            .unwrap();
        assert_eq!(added, 0);
        assert_eq!(basis.dim(), 2);
        assert_eq!(basis.blocks().len(), 2);
        assert_eq!(basis.blocks()[0].columns, 2);
        assert_eq!(basis.blocks()[1].columns, 0);
    }

    #[test]
    fn zero_snapshots_add_nothing() {
        let (_, frame) = small_frame();
        let n = frame.dofs();
        let mut basis = ReducedBasis::<f64>::empty(n);
        let added = basis
            .extend_pod(
                &frame,
                &[DVector::zeros(n)],
                vec![SnapshotLabel::Lagrange { mu: vec![0.0] }],
                DEFAULT_POD_DROP_TOL,
            )
            .unwrap();
        assert_eq!(added, 0);
    }

    #[test]
    fn projection_reproduces_spanned_vectors() {
        let (_, frame) = small_frame();
        let n = frame.dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut basis = ReducedBasis::<f64>::empty(n);
        let snaps: Vec<DVector<f64>> = (0..4).map(|_| random_vec(&mut rng, n)).collect();
        let labels: Vec<SnapshotLabel> =
            (0..4).map(|i| SnapshotLabel::Lagrange { mu: vec![i as f64] }).collect();
        basis.extend_pod(&frame, &snaps, labels, DEFAULT_POD_DROP_TOL).unwrap();

        for s in &snaps {
            let rec = basis.lift(&basis.coordinates_of(s, &frame));
            let err = frame.norm(&(s - &rec)) / frame.norm(s);
            assert!(err < 1e-10, "reconstruction error {err}");
        }
    }

    #[test]
    fn complex_basis_stays_orthonormal() {
        use crate::problems::{build_helmholtz_1d, HelmholtzConfig};
        let cfg = HelmholtzConfig::new(20, 4).unwrap();
        let model = build_helmholtz_1d::<Complex<f64>>(&cfg).unwrap();
        let mu_ref = [5.0];
        let frame = OrthoFrame::new(&model, Some(&mu_ref)).unwrap();
        let mut basis = ReducedBasis::<Complex<f64>>::empty(model.dofs());
        let snaps: Vec<DVector<Complex<f64>>> = [4.0, 5.0, 6.0]
            .iter()
            .map(|&m| model.truth_solve(&[m]).unwrap())
            .collect();
        let labels: Vec<SnapshotLabel> =
            [4.0, 5.0, 6.0].iter().map(|&m| SnapshotLabel::Lagrange { mu: vec![m] }).collect();
        let added = basis.extend_pod(&frame, &snaps, labels, DEFAULT_POD_DROP_TOL).unwrap();
        assert_eq!(added, 3);
        assert!(basis.orthonormality_defect(&frame) < 1e-11);
    }
}
