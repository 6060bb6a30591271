//! Parameter-derivative snapshots.  Differentiating the affine problem
//! `A(μ) u(μ) = F(μ)` repeatedly in one parameter direction gives
//!
//! `A(μ) u^(k) = ∂^k F(μ) - Σ_{m=1..k} C(k,m) (Σ_q ∂^m θ^a_q(μ) A_q) u^(k-m)`,
//!
//! so every derivative order reuses the factorization of `A(μ)` with a
//! right-hand side assembled from lower orders.

use nalgebra::DVector;

use crate::basis::{OrthoFrame, ReducedBasis, SnapshotLabel};
use crate::error::{Error, Result};
use crate::linalg::BandLu;
use crate::scalar::Scalar;
use crate::truth::TruthModel;

/// `C(k, m)` as a float; orders stay in the single digits here.
pub fn binomial(k: u32, m: u32) -> f64 {
    if m > k {
        return 0.0;
    }
    let m = m.min(k - m);
    let mut num = 1.0f64;
    let mut den = 1.0f64;
    for i in 0..m {
        num *= (k - i) as f64;
        den *= (i + 1) as f64;
    }
    num / den
}

/// All derivative snapshots `∂^k u / ∂μ_dir^k` at one parameter, raised lazily
/// order by order.  Holds on to the factorization of `A(μ)`, so raising the
/// order costs one banded solve per direction.
#[derive(Debug)]
pub struct DerivativeChains<T: Scalar> {
    mu: Vec<f64>,
    lu: BandLu<T>,
    u0: DVector<T>,
    /// `higher[dir][k-1]` holds `∂^k u / ∂μ_dir^k`.
    higher: Vec<Vec<DVector<T>>>,
    order: u32,
}

impl<T: Scalar> DerivativeChains<T> {
    pub fn new(model: &TruthModel<T>, mu: &[f64]) -> Result<Self> {
        let lu = model.factorize(mu)?;
        let u0 = lu.solve(&model.assemble_rhs(mu));
        let dirs = mu.len();
        Ok(Self { mu: mu.to_vec(), lu, u0, higher: vec![Vec::new(); dirs], order: 0 })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Highest derivative order computed so far.
    pub fn order(&self) -> u32 {
        self.order
    }

    /// The plain solution snapshot `u(μ)`.
    pub fn solution(&self) -> &DVector<T> {
        &self.u0
    }

    /// `∂^k u / ∂μ_dir^k`; requires `k <= order()` (`k = 0` is the solution).
    pub fn derivative(&self, direction: usize, k: u32) -> &DVector<T> {
        if k == 0 {
            &self.u0
        } else {
            &self.higher[direction][(k - 1) as usize]
        }
    }

    /// Raises every direction's chain to order `k`.
    pub fn extend_to(&mut self, model: &TruthModel<T>, k: u32) -> Result<()> {
        while self.order < k {
            let next = self.order + 1;
            for dir in 0..self.mu.len() {
                let rhs = self.leibniz_rhs(model, dir, next)?;
                let snap = self.lu.solve(&rhs);
                self.higher[dir].push(snap);
            }
            self.order = next;
        }
        Ok(())
    }

    /// Right-hand side of the order-`k` derivative problem in one direction.
    fn leibniz_rhs(&self, model: &TruthModel<T>, dir: usize, k: u32) -> Result<DVector<T>> {
        if k == 0 || k > self.order + 1 {
            return Err(Error::InvalidConfig(format!(
                "order {k} requested with chains at order {}",
                self.order
            )));
        }
        let mut rhs = DVector::zeros(self.u0.len());
        for (theta, fq) in model.theta_f().iter().zip(model.f_terms()) {
            let c = theta.deriv(&self.mu, dir, k);
            if c != T::zero() {
                rhs += fq * c;
            }
        }
        for m in 1..=k {
            let bin = T::from_re(binomial(k, m));
            let u_prev = self.derivative(dir, k - m);
            for (theta, aq) in model.theta_a().iter().zip(model.a_terms()) {
                let c = theta.deriv(&self.mu, dir, m);
                if c != T::zero() {
                    rhs -= aq.mul_vec(u_prev) * (c * bin);
                }
            }
        }
        Ok(rhs)
    }

    /// Snapshots and labels of one derivative order across all directions.
    pub fn order_block(&self, k: u32) -> (Vec<DVector<T>>, Vec<SnapshotLabel>) {
        if k == 0 {
            return (
                vec![self.u0.clone()],
                vec![SnapshotLabel::Lagrange { mu: self.mu.clone() }],
            );
        }
        let mut snaps = Vec::new();
        let mut labels = Vec::new();
        for dir in 0..self.mu.len() {
            snaps.push(self.derivative(dir, k).clone());
            labels.push(SnapshotLabel::Taylor { mu: self.mu.clone(), direction: dir, order: k });
        }
        (snaps, labels)
    }
}

/// Appends the order-`k` derivative snapshots at `mu` (every direction) to
/// the basis; returns how many directions survived compression.
pub fn append_derivative_order<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    basis: &mut ReducedBasis<T>,
    chains: &mut DerivativeChains<T>,
    k: u32,
    drop_tol: f64,
) -> Result<usize> {
    chains.extend_to(model, k)?;
    let (snaps, labels) = chains.order_block(k);
    basis.extend_pod(frame, &snaps, labels, drop_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    use crate::problems::{
        build_helmholtz_1d, build_thermal_block, HelmholtzConfig, ThermalBlockConfig,
    };

    #[test]
    fn binomial_matches_pascals_triangle() {
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 1), 5.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn thermal_derivatives_match_finite_differences() {
        let model = build_thermal_block::<f64>(&ThermalBlockConfig::new(6).unwrap()).unwrap();
        let mu = [1.3, 0.9];
        let mut chains = DerivativeChains::new(&model, &mu).unwrap();
        chains.extend_to(&model, 2).unwrap();

        for dir in 0..2 {
            let h = 1e-4 * mu[dir];
            let shift = |s: f64| {
                let mut m = mu.to_vec();
                m[dir] += s;
                model.truth_solve(&m).unwrap()
            };
            let (up, um, u0) = (shift(h), shift(-h), chains.solution().clone());

            let fd1 = (&up - &um) / (2.0 * h);
            let d1 = chains.derivative(dir, 1);
            let e1 = model.x_norm(&(&fd1 - d1), None).unwrap()
                / model.x_norm(d1, None).unwrap();
            assert!(e1 < 1e-6, "first derivative FD mismatch {e1} in direction {dir}");

            let fd2 = (&up - &u0 * 2.0 + &um) / (h * h);
            let d2 = chains.derivative(dir, 2);
            let e2 = model.x_norm(&(&fd2 - d2), None).unwrap()
                / model.x_norm(d2, None).unwrap();
            assert!(e2 < 1e-5, "second derivative FD mismatch {e2} in direction {dir}");
        }
    }

    #[test]
    fn helmholtz_derivatives_match_finite_differences() {
        let cfg = HelmholtzConfig::new(40, 4).unwrap();
        let model = build_helmholtz_1d::<Complex<f64>>(&cfg).unwrap();
        let mu = [6.0];
        let mut chains = DerivativeChains::new(&model, &mu).unwrap();
        chains.extend_to(&model, 2).unwrap();

        let h = 1e-4 * mu[0];
        let shift = |s: f64| model.truth_solve(&[mu[0] + s]).unwrap();
        let (up, um, u0) = (shift(h), shift(-h), chains.solution().clone());

        let fd1 = (&up - &um) / Complex::new(2.0 * h, 0.0);
        let d1 = chains.derivative(0, 1);
        let e1 = model.x_norm(&(&fd1 - d1), Some(&mu)).unwrap()
            / model.x_norm(d1, Some(&mu)).unwrap();
        assert!(e1 < 1e-6, "first derivative FD mismatch {e1}");

        let fd2 = (&up - &u0 * Complex::new(2.0, 0.0) + &um) / Complex::new(h * h, 0.0);
        let d2 = chains.derivative(0, 2);
        let e2 = model.x_norm(&(&fd2 - d2), Some(&mu)).unwrap()
            / model.x_norm(d2, Some(&mu)).unwrap();
        assert!(e2 < 1e-5, "second derivative FD mismatch {e2}");
    }

    #[test]
    fn enrichment_appends_derivative_directions() {
        use crate::basis::DEFAULT_POD_DROP_TOL;
        let model = build_thermal_block::<f64>(&ThermalBlockConfig::new(6).unwrap()).unwrap();
        let frame = OrthoFrame::new(&model, None).unwrap();
        let mu = [1.0, 2.0];
        let mut basis = ReducedBasis::empty(model.dofs());
        let mut chains = DerivativeChains::new(&model, &mu).unwrap();
        let (s0, l0) = chains.order_block(0);
        basis.extend_pod(&frame, &s0, l0, DEFAULT_POD_DROP_TOL).unwrap();
        let added =
            append_derivative_order(&model, &frame, &mut basis, &mut chains, 1, DEFAULT_POD_DROP_TOL)
                .unwrap();
        // The operator is homogeneous of degree one in μ, so Euler's relation
        // μ·∇u = -u ties the two first-order derivatives to the solution and
        // only one genuinely new direction can survive.
        assert_eq!(added, 1, "homogeneity leaves one new direction at order one");
        assert_eq!(basis.dim(), 2);
        let euler = chains.derivative(0, 1) * mu[0] + chains.derivative(1, 1) * mu[1]
            + chains.solution();
        let rel = model.x_norm(&euler, None).unwrap()
            / model.x_norm(chains.solution(), None).unwrap();
        assert!(rel < 1e-12, "Euler relation violated: {rel}");
        assert!(basis.orthonormality_defect(&frame) < 1e-12);
        assert!(matches!(
            basis.blocks()[1].labels[0],
            SnapshotLabel::Taylor { direction: 0, order: 1, .. }
        ));
    }
}
