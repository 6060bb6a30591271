//! Dense kernels behind the exact stability oracles: generalized Hermitian
//! eigenproblems and singular extremes of the pencil (A, G).  These run on
//! truth spaces small enough for O(n^3) work and are never on the online path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn cholesky_l<T: Scalar>(g: &DMatrix<T>) -> Result<DMatrix<T>> {
    g.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::EigenFailure("inner-product matrix is not positive definite".into()))
}

/// `C = L^-1 A L^-H` for lower-triangular `L`; similarity that carries the
/// pencil (A, G) with `G = L L^H` to a plain eigen/singular problem.
fn congruence<T: Scalar>(l: &DMatrix<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    let z = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    Ok(z.adjoint())
}

/// Eigenpairs of the Hermitian pencil `A v = lambda G v` (`A` Hermitian, `G`
/// Hermitian positive definite).  Eigenvalues ascending; eigenvector columns
/// are G-orthonormal.
pub fn hermitian_pencil_eigen<T: Scalar>(
    a: &DMatrix<T>,
    g: &DMatrix<T>,
) -> Result<(Vec<f64>, DMatrix<T>)> {
    let l = cholesky_l(g)?;
    let mut c = congruence(&l, a)?;
    // symmetrize round-off before the Hermitian solver
    let ch = c.adjoint();
    c += ch;
    c *= T::from_re(0.5);
    let se = nalgebra::SymmetricEigen::new(c);

    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        T::real_to_f64(se.eigenvalues[i].clone()).total_cmp(&T::real_to_f64(se.eigenvalues[j].clone()))
    });
    let values: Vec<f64> = order.iter().map(|&i| T::real_to_f64(se.eigenvalues[i].clone())).collect();
    let mut w = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        w.set_column(k, &se.eigenvectors.column(i));
    }
    let vectors = l
        .ad_solve_lower_triangular(&w)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    Ok((values, vectors))
}

/// Extreme singular values of A in the G-geometry, with the right singular
/// vector of the smallest one mapped back to pencil coordinates.  `sigma_min`
/// is the inf-sup constant of A with respect to the G-inner product,
/// `sigma_max` the continuity constant.
pub struct PencilExtremes<T: Scalar> {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub v_min: DVector<T>,
}

pub fn pencil_singular_extremes<T: Scalar>(
    a: &DMatrix<T>,
    g: &DMatrix<T>,
) -> Result<PencilExtremes<T>> {
    let l = cholesky_l(g)?;
    let c = congruence(&l, a)?;
    let svd = c.svd(false, true);
    let sv = &svd.singular_values;
    if sv.is_empty() {
        return Err(Error::EigenFailure("empty singular spectrum".into()));
    }
    // singular values come out in descending order
    let sigma_max = T::real_to_f64(sv[0].clone());
    let last = sv.len() - 1;
    let sigma_min = T::real_to_f64(sv[last].clone());
    let v_t = svd.v_t.ok_or_else(|| Error::EigenFailure("missing right singular vectors".into()))?;
    let w: DVector<T> = v_t.row(last).adjoint();
    let v_min = l
        .ad_solve_lower_triangular(&w)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    Ok(PencilExtremes { sigma_min, sigma_max, v_min })
}
