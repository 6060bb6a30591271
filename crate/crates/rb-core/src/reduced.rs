//! Offline/online split: dense reduced operator, load, and Gramian blocks
//! projected once, then assembled and solved at any parameter in dimensions
//! independent of the truth space.

use nalgebra::{DMatrix, DVector};

use crate::basis::ReducedBasis;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::theta::ThetaFunction;
use crate::truth::{TruthModel, XGram};

/// Reduced inner-product blocks; mirrors the truth `XGram` so the estimator
/// can evaluate the exact parametric norm of reduced differences.
#[derive(Debug, Clone)]
pub enum GramRed<T> {
    Fixed(DMatrix<T>),
    Affine { terms: Vec<DMatrix<T>>, sigma: Vec<ThetaFunction<f64>> },
}

/// Galerkin projection of a [`TruthModel`] onto a reduced basis.  All blocks
/// are stored for the full basis dimension `m`; every solve can restrict to a
/// leading sub-basis because extension never reorders columns.
#[derive(Debug, Clone)]
pub struct ReducedModel<T: Scalar> {
    a_red: Vec<DMatrix<T>>,
    f_red: Vec<DVector<T>>,
    gram_red: GramRed<T>,
    theta_a: Vec<ThetaFunction<T>>,
    theta_f: Vec<ThetaFunction<T>>,
    dim: usize,
}

impl<T: Scalar> ReducedModel<T> {
    /// Projects operator, load, and inner-product terms onto `basis`.
    pub fn project(model: &TruthModel<T>, basis: &ReducedBasis<T>) -> Result<Self> {
        if basis.dofs() != model.dofs() {
            return Err(Error::DimensionMismatch(format!(
                "basis over {} dofs, model over {}",
                basis.dofs(),
                model.dofs()
            )));
        }
        let xi = basis.matrix();
        let a_red: Vec<DMatrix<T>> =
            model.a_terms().iter().map(|a| xi.ad_mul(&a.mul_mat(xi))).collect();
        let f_red: Vec<DVector<T>> =
            model.f_terms().iter().map(|f| xi.ad_mul(f)).collect();
        let gram_red = match model.x_gram() {
            XGram::Fixed(g) => GramRed::Fixed(xi.ad_mul(&g.mul_mat(xi))),
            XGram::Affine { terms, sigma } => GramRed::Affine {
                terms: terms.iter().map(|g| xi.ad_mul(&g.mul_mat(xi))).collect(),
                sigma: sigma.clone(),
            },
        };
        Ok(Self {
            a_red,
            f_red,
            gram_red,
            theta_a: model.theta_a().to_vec(),
            theta_f: model.theta_f().to_vec(),
            dim: basis.dim(),
        })
    }

    /// Restores a model from raw parts; used by the binary container.
    pub fn from_parts(
        a_red: Vec<DMatrix<T>>,
        f_red: Vec<DVector<T>>,
        gram_red: GramRed<T>,
        theta_a: Vec<ThetaFunction<T>>,
        theta_f: Vec<ThetaFunction<T>>,
    ) -> Result<Self> {
        let dim = a_red.first().map_or(0, |a| a.nrows());
        if a_red.len() != theta_a.len() || f_red.len() != theta_f.len() {
            return Err(Error::DimensionMismatch("terms and coefficients disagree".into()));
        }
        if a_red.iter().any(|a| a.nrows() != dim || a.ncols() != dim)
            || f_red.iter().any(|f| f.len() != dim)
        {
            return Err(Error::DimensionMismatch("reduced blocks of unequal size".into()));
        }
        Ok(Self { a_red, f_red, gram_red, theta_a, theta_f, dim })
    }

    /// Full stored basis dimension `m`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q_a(&self) -> usize {
        self.a_red.len()
    }

    pub fn q_f(&self) -> usize {
        self.f_red.len()
    }

    pub fn a_red(&self) -> &[DMatrix<T>] {
        &self.a_red
    }

    pub fn f_red(&self) -> &[DVector<T>] {
        &self.f_red
    }

    pub fn gram_red(&self) -> &GramRed<T> {
        &self.gram_red
    }

    /// `Σ_q θ^a_q(μ) A_q` restricted to the leading `n × n` block.
    pub fn operator(&self, mu: &[f64], n: usize) -> DMatrix<T> {
        assert!(n <= self.dim);
        let mut op = DMatrix::zeros(n, n);
        for (theta, a) in self.theta_a.iter().zip(&self.a_red) {
            let c = theta.eval(mu);
            op += a.view((0, 0), (n, n)) * c;
        }
        op
    }

    /// `Σ_q θ^f_q(μ) F_q` restricted to the leading `n` entries.
    pub fn rhs(&self, mu: &[f64], n: usize) -> DVector<T> {
        assert!(n <= self.dim);
        let mut f = DVector::zeros(n);
        for (theta, fq) in self.theta_f.iter().zip(&self.f_red) {
            let c = theta.eval(mu);
            f += fq.rows(0, n) * c;
        }
        f
    }

    /// Reduced Gramian at `mu` restricted to the leading `n × n` block.
    /// `mu` may be `None` only when the inner product is fixed.
    pub fn gram_matrix(&self, mu: Option<&[f64]>, n: usize) -> Result<DMatrix<T>> {
        assert!(n <= self.dim);
        match &self.gram_red {
            GramRed::Fixed(g) => Ok(g.view((0, 0), (n, n)).into_owned()),
            GramRed::Affine { terms, sigma } => {
                let mu = mu.ok_or_else(|| {
                    Error::InvalidConfig(
                        "the inner product is parameter-dependent; a parameter is required".into(),
                    )
                })?;
                let mut g = DMatrix::zeros(n, n);
                for (s, gr) in sigma.iter().zip(terms) {
                    let c = T::from_re(s.eval(mu));
                    g += gr.view((0, 0), (n, n)) * c;
                }
                Ok(g)
            }
        }
    }

    /// `sqrt(Re(c^H G(μ) c))` over the leading block matching `coeffs`.
    pub fn x_norm(&self, coeffs: &DVector<T>, mu: Option<&[f64]>) -> Result<f64> {
        let n = coeffs.len();
        let g = self.gram_matrix(mu, n)?;
        let sq = coeffs.dotc(&(&g * coeffs)).re_f64();
        Ok(sq.max(0.0).sqrt())
    }

    /// Galerkin solve in the leading dimension-`n` sub-basis; returns the
    /// coefficient vector with respect to the first `n` basis columns.
    pub fn solve(&self, mu: &[f64], n: usize) -> Result<DVector<T>> {
        if n == 0 {
            return Ok(DVector::zeros(0));
        }
        let op = self.operator(mu, n);
        let f = self.rhs(mu, n);
        op.lu()
            .solve(&f)
            .ok_or_else(|| Error::SingularReduced { mu: mu.to_vec(), n })
    }

    /// Galerkin solve in the subspace spanned by the columns of `map` (an
    /// `m_sub × n` coordinate matrix over the leading `m_sub` basis columns);
    /// returns coordinates with respect to those `m_sub` columns.
    pub fn solve_mapped(&self, mu: &[f64], map: &DMatrix<T>) -> Result<DVector<T>> {
        let m_sub = map.nrows();
        let n = map.ncols();
        assert!(m_sub <= self.dim);
        if n == 0 {
            return Ok(DVector::zeros(m_sub));
        }
        let op = map.ad_mul(&(self.operator(mu, m_sub) * map));
        let f = map.ad_mul(&self.rhs(mu, m_sub));
        let c = op
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::SingularReduced { mu: mu.to_vec(), n })?;
        Ok(map * c)
    }

    /// Lifts reduced coefficients back to a truth-space vector.
    pub fn reconstruct(&self, basis: &ReducedBasis<T>, coeffs: &DVector<T>) -> DVector<T> {
        basis.lift(coeffs)
    }
}
