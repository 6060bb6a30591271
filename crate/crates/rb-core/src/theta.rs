//! Coefficient functions of an affine parameter decomposition together with
//! their classical partial derivatives in `μ`.

use std::fmt;
use std::sync::Arc;

use crate::scalar::Scalar;

type EvalFn<T> = dyn Fn(&[f64]) -> T + Send + Sync;
type DerivFn<T> = dyn Fn(&[f64], usize, u32) -> T + Send + Sync;

/// One coefficient `θ(μ)` with its derivative family
/// `(μ, i, k) ↦ ∂^k θ / ∂μ_i^k`.  Order 0 must reproduce the evaluator; the
/// constructors here guarantee that.
#[derive(Clone)]
pub struct ThetaFunction<T> {
    eval: Arc<EvalFn<T>>,
    deriv: Arc<DerivFn<T>>,
}

impl<T: Scalar> ThetaFunction<T> {
    pub fn new(
        eval: impl Fn(&[f64]) -> T + Send + Sync + 'static,
        deriv: impl Fn(&[f64], usize, u32) -> T + Send + Sync + 'static,
    ) -> Self {
        let eval = Arc::new(eval);
        let e = Arc::clone(&eval) as Arc<EvalFn<T>>;
        Self {
            eval,
            deriv: Arc::new(move |mu, i, k| if k == 0 { e(mu) } else { deriv(mu, i, k) }),
        }
    }

    pub fn constant(c: T) -> Self {
        Self::new(move |_| c, |_, _, _| T::zero())
    }

    /// `θ(μ) = μ_i`, the coefficient of an affinely entering parameter.
    pub fn coordinate(i: usize) -> Self {
        Self::new(
            move |mu: &[f64]| T::from_re(mu[i]),
            move |_, dir, k| if dir == i && k == 1 { T::one() } else { T::zero() },
        )
    }

    pub fn eval(&self, mu: &[f64]) -> T {
        (self.eval)(mu)
    }

    /// `∂^k θ / ∂μ_direction^k`; order 0 is the plain evaluation.
    pub fn deriv(&self, mu: &[f64], direction: usize, order: u32) -> T {
        (self.deriv)(mu, direction, order)
    }
}

impl<T> fmt::Debug for ThetaFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ThetaFunction")
    }
}
