//! Truth discretization: affine operator and right-hand-side terms, the
//! X-inner product, direct solves, Riesz representers, and the exact
//! stability oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::dense::{hermitian_pencil_eigen, pencil_singular_extremes};
use crate::linalg::{linear_combination, unify_patterns, BandCholesky, BandLu, CsrMatrix};
use crate::scalar::{Field, Scalar};
use crate::theta::ThetaFunction;

/// Inner product of the truth space: either one fixed Hermitian positive
/// definite matrix or an affine family `G(μ) = Σ_r σ_r(μ) G_r` that stays
/// positive definite over the parameter box.
#[derive(Debug, Clone)]
pub enum XGram<T> {
    Fixed(CsrMatrix<T>),
    Affine { terms: Vec<CsrMatrix<T>>, sigma: Vec<ThetaFunction<f64>> },
}

impl<T: Scalar> XGram<T> {
    pub fn is_affine(&self) -> bool {
        matches!(self, XGram::Affine { .. })
    }

    fn require_mu<'a>(&self, mu: Option<&'a [f64]>) -> Result<Option<&'a [f64]>> {
        match (self, mu) {
            (XGram::Affine { .. }, None) => Err(Error::InvalidConfig(
                "the inner product is parameter-dependent; a parameter (or frozen reference) is required"
                    .into(),
            )),
            _ => Ok(mu),
        }
    }

    /// Materializes `G(μ)`; `mu` may be `None` only for the fixed variant.
    pub fn matrix(&self, mu: Option<&[f64]>) -> Result<CsrMatrix<T>> {
        self.require_mu(mu)?;
        match self {
            XGram::Fixed(g) => Ok(g.clone()),
            XGram::Affine { terms, sigma } => {
                let mu = mu.expect("checked above");
                let coeffs: Vec<T> =
                    sigma.iter().map(|s| T::from_re(s.eval(mu))).collect();
                Ok(linear_combination(&coeffs, terms))
            }
        }
    }

    /// `G(μ) v` without materializing the combination.
    pub fn apply(&self, v: &DVector<T>, mu: Option<&[f64]>) -> Result<DVector<T>> {
        self.require_mu(mu)?;
        match self {
            XGram::Fixed(g) => Ok(g.mul_vec(v)),
            XGram::Affine { terms, sigma } => {
                let mu = mu.expect("checked above");
                let mut y = DVector::zeros(v.len());
                for (s, g) in sigma.iter().zip(terms) {
                    let c = T::from_re(s.eval(mu));
                    y += g.mul_vec(v) * c;
                }
                Ok(y)
            }
        }
    }
}

/// Exact inf-sup and continuity constants at one parameter.
#[derive(Debug, Clone, Copy)]
pub struct StabilityPair {
    pub beta: f64,
    pub gamma: f64,
}

/// Affine-decomposed truth problem `A(μ) u = F(μ)` with
/// `A(μ) = Σ_q θ^a_q(μ) A_q` and `F(μ) = Σ_q θ^f_q(μ) F_q`.
#[derive(Debug)]
pub struct TruthModel<T: Scalar> {
    a_terms: Vec<CsrMatrix<T>>,
    f_terms: Vec<DVector<T>>,
    theta_a: Vec<ThetaFunction<T>>,
    theta_f: Vec<ThetaFunction<T>>,
    x_gram: XGram<T>,
    /// true when every `A_q` is Hermitian and every `θ^a_q` real-valued, so
    /// `A(μ)` is Hermitian for all parameters
    self_adjoint: bool,
    dofs: usize,
}

impl<T: Scalar> TruthModel<T> {
    pub fn new(
        a_terms: Vec<CsrMatrix<T>>,
        f_terms: Vec<DVector<T>>,
        theta_a: Vec<ThetaFunction<T>>,
        theta_f: Vec<ThetaFunction<T>>,
        x_gram: XGram<T>,
        self_adjoint: bool,
    ) -> Result<Self> {
        if a_terms.is_empty() || f_terms.is_empty() {
            return Err(Error::InvalidConfig("at least one operator and one load term".into()));
        }
        if a_terms.len() != theta_a.len() || f_terms.len() != theta_f.len() {
            return Err(Error::DimensionMismatch("terms and coefficients disagree".into()));
        }
        let dofs = a_terms[0].n_rows();
        for a in &a_terms {
            if a.n_rows() != dofs || a.n_cols() != dofs {
                return Err(Error::DimensionMismatch("operator terms of unequal size".into()));
            }
        }
        for f in &f_terms {
            if f.len() != dofs {
                return Err(Error::DimensionMismatch("load term of wrong length".into()));
            }
        }
        // one shared sparsity pattern makes μ-assembly a value-array combination
        let a_terms = unify_patterns(&a_terms)?;
        Ok(Self { a_terms, f_terms, theta_a, theta_f, x_gram, self_adjoint, dofs })
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn q_a(&self) -> usize {
        self.a_terms.len()
    }

    pub fn q_f(&self) -> usize {
        self.f_terms.len()
    }

    pub fn field(&self) -> Field {
        T::field()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    pub fn a_terms(&self) -> &[CsrMatrix<T>] {
        &self.a_terms
    }

    pub fn f_terms(&self) -> &[DVector<T>] {
        &self.f_terms
    }

    pub fn theta_a(&self) -> &[ThetaFunction<T>] {
        &self.theta_a
    }

    pub fn theta_f(&self) -> &[ThetaFunction<T>] {
        &self.theta_f
    }

    pub fn x_gram(&self) -> &XGram<T> {
        &self.x_gram
    }

    pub fn theta_a_values(&self, mu: &[f64]) -> Vec<T> {
        self.theta_a.iter().map(|t| t.eval(mu)).collect()
    }

    pub fn theta_f_values(&self, mu: &[f64]) -> Vec<T> {
        self.theta_f.iter().map(|t| t.eval(mu)).collect()
    }

    /// `Σ_q θ^a_q(μ) A_q`
    pub fn assemble_operator(&self, mu: &[f64]) -> CsrMatrix<T> {
        linear_combination(&self.theta_a_values(mu), &self.a_terms)
    }

    /// `Σ_q θ^f_q(μ) F_q`
    pub fn assemble_rhs(&self, mu: &[f64]) -> DVector<T> {
        let coeffs = self.theta_f_values(mu);
        let mut f = DVector::zeros(self.dofs);
        for (c, fq) in coeffs.iter().zip(&self.f_terms) {
            f += fq * *c;
        }
        f
    }

    /// Band factorization of `A(μ)`, reusable for derivative solves at the
    /// same parameter.
    pub fn factorize(&self, mu: &[f64]) -> Result<BandLu<T>> {
        BandLu::factor(&self.assemble_operator(mu)).map_err(|e| Error::SingularSystem {
            mu: mu.to_vec(),
            detail: e.to_string(),
        })
    }

    pub fn truth_solve(&self, mu: &[f64]) -> Result<DVector<T>> {
        Ok(self.factorize(mu)?.solve(&self.assemble_rhs(mu)))
    }

    /// `F(μ) - A(μ) u`
    pub fn truth_residual(&self, mu: &[f64], u: &DVector<T>) -> DVector<T> {
        self.assemble_rhs(mu) - self.assemble_operator(mu).mul_vec(u)
    }

    pub fn gram_matrix(&self, mu: Option<&[f64]>) -> Result<CsrMatrix<T>> {
        self.x_gram.matrix(mu)
    }

    /// The parameter to evaluate norms at: `Some(mu)` when the inner product
    /// is parameter-dependent, `None` when it is fixed.
    pub fn norm_parameter<'a>(&self, mu: &'a [f64]) -> Option<&'a [f64]> {
        if self.x_gram.is_affine() {
            Some(mu)
        } else {
            None
        }
    }

    pub fn gram_cholesky(&self, mu: Option<&[f64]>) -> Result<BandCholesky<T>> {
        BandCholesky::factor(&self.gram_matrix(mu)?)
    }

    /// `u^H G(μ) v`
    pub fn x_inner(&self, u: &DVector<T>, v: &DVector<T>, mu: Option<&[f64]>) -> Result<T> {
        Ok(u.dotc(&self.x_gram.apply(v, mu)?))
    }

    pub fn x_norm(&self, v: &DVector<T>, mu: Option<&[f64]>) -> Result<f64> {
        let sq = self.x_inner(v, v, mu)?.re_f64();
        Ok(sq.max(0.0).sqrt())
    }

    /// Solves `G(μ) v = functional`; the Riesz representer of the functional.
    pub fn riesz_representer(
        &self,
        functional: &DVector<T>,
        mu: Option<&[f64]>,
    ) -> Result<DVector<T>> {
        if functional.len() != self.dofs {
            return Err(Error::DimensionMismatch("functional of wrong length".into()));
        }
        Ok(self.gram_cholesky(mu)?.solve(functional))
    }

    /// Dual norm `sqrt(functional^H G(μ)^-1 functional)`.
    pub fn dual_norm(&self, functional: &DVector<T>, mu: Option<&[f64]>) -> Result<f64> {
        let v = self.riesz_representer(functional, mu)?;
        Ok(functional.dotc(&v).re_f64().max(0.0).sqrt())
    }

    /// β(μ) and γ(μ): extreme singular values of `A(μ)` in the geometry of a
    /// caller-supplied (typically frozen) inner product.
    pub fn stability_constants_wrt(
        &self,
        mu: &[f64],
        gram: &CsrMatrix<T>,
    ) -> Result<StabilityPair> {
        let a = self.assemble_operator(mu).to_dense();
        let g = gram.to_dense();
        if self.self_adjoint {
            let (vals, _) = hermitian_pencil_eigen(&a, &g)?;
            let beta = vals.iter().fold(f64::INFINITY, |m, &l| m.min(l.abs()));
            let gamma = vals.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
            Ok(StabilityPair { beta, gamma })
        } else {
            let ex = pencil_singular_extremes(&a, &g)?;
            Ok(StabilityPair { beta: ex.sigma_min, gamma: ex.sigma_max })
        }
    }

    /// β(μ), γ(μ) with respect to the model's own X-inner product at `μ`.
    pub fn stability_constants(&self, mu: &[f64]) -> Result<StabilityPair> {
        let gram = self.gram_matrix(if self.x_gram.is_affine() { Some(mu) } else { None })?;
        self.stability_constants_wrt(mu, &gram)
    }

    /// Smallest generalized singular value of `(A(μ), G(μ))`.
    pub fn exact_inf_sup(&self, mu: &[f64]) -> Result<f64> {
        Ok(self.stability_constants(mu)?.beta)
    }

    /// Largest generalized singular value of `(A(μ), G(μ))`.
    pub fn exact_continuity(&self, mu: &[f64]) -> Result<f64> {
        Ok(self.stability_constants(mu)?.gamma)
    }

    /// Dense operator at `μ`; oracle-sized problems only.
    pub fn dense_operator(&self, mu: &[f64]) -> DMatrix<T> {
        self.assemble_operator(mu).to_dense()
    }
}
