//! A-posteriori error estimators: the residual/stability estimator and the
//! hierarchical two-level estimator, both with truth-free online evaluation.

use nalgebra::{DMatrix, DVector};

use crate::basis::{OrthoFrame, ReducedBasis};
use crate::error::{Error, Result};
use crate::reduced::ReducedModel;
use crate::scalar::Scalar;
use crate::truth::TruthModel;

/// Offline factorization of the residual dual norm.  With
/// `Φ = [F_1 .. F_Qf | A_1 ξ_1 .. A_Qa ξ_M]` and the frame Gramian `Ḡ`, the
/// matrix `S = Φ^H Ḡ⁻¹ Φ` turns `‖F(μ) - A(μ) Ξ c‖_{X'}` into the quadratic
/// form `c(μ)^H S c(μ)` in `Q_f + Q_a·M` coefficients.
#[derive(Debug, Clone)]
pub struct ResidualData<T: Scalar> {
    s: DMatrix<T>,
    q_f: usize,
    q_a: usize,
    m: usize,
}

impl<T: Scalar> ResidualData<T> {
    pub fn build(
        model: &TruthModel<T>,
        basis: &ReducedBasis<T>,
        frame: &OrthoFrame<T>,
    ) -> Result<Self> {
        if basis.dofs() != model.dofs() || frame.dofs() != model.dofs() {
            return Err(Error::DimensionMismatch(
                "model, basis, and frame must share the truth space".into(),
            ));
        }
        let (q_f, q_a, m) = (model.q_f(), model.q_a(), basis.dim());
        let dofs = model.dofs();
        let mut phi = DMatrix::zeros(dofs, q_f + q_a * m);
        for (q, f) in model.f_terms().iter().enumerate() {
            phi.set_column(q, f);
        }
        for (q, a) in model.a_terms().iter().enumerate() {
            let a_xi = a.mul_mat(basis.matrix());
            for i in 0..m {
                phi.set_column(q_f + q * m + i, &a_xi.column(i).into_owned());
            }
        }
        let w = frame.cholesky().solve_mat(&phi);
        let s = phi.ad_mul(&w);
        Ok(Self { s, q_f, q_a, m })
    }

    pub fn basis_dim(&self) -> usize {
        self.m
    }

    /// Residual dual norm for reduced coefficients `coeffs` (length `n <= M`)
    /// given the affine coefficient values at the parameter.  Cost depends on
    /// `n` and the number of affine terms only.
    pub fn dual_norm(&self, theta_f: &[T], theta_a: &[T], coeffs: &DVector<T>) -> f64 {
        assert_eq!(theta_f.len(), self.q_f);
        assert_eq!(theta_a.len(), self.q_a);
        let n = coeffs.len();
        assert!(n <= self.m);
        // active coefficient vector: loads, then -θ^a_q c_i per (q, i < n)
        let mut idx = Vec::with_capacity(self.q_f + self.q_a * n);
        let mut val = Vec::with_capacity(self.q_f + self.q_a * n);
        for (q, t) in theta_f.iter().enumerate() {
            idx.push(q);
            val.push(*t);
        }
        for (q, t) in theta_a.iter().enumerate() {
            for i in 0..n {
                idx.push(self.q_f + q * self.m + i);
                val.push(-*t * coeffs[i]);
            }
        }
        let mut sq = T::zero();
        for (a, &ia) in val.iter().zip(&idx) {
            let mut row = T::zero();
            for (b, &ib) in val.iter().zip(&idx) {
                row += self.s[(ia, ib)] * *b;
            }
            sq += a.conjugate() * row;
        }
        sq.re_f64().max(0.0).sqrt()
    }

    /// Convenience wrapper evaluating the affine coefficients at `mu`.
    pub fn dual_norm_at(&self, model: &TruthModel<T>, mu: &[f64], coeffs: &DVector<T>) -> f64 {
        self.dual_norm(&model.theta_f_values(mu), &model.theta_a_values(mu), coeffs)
    }
}

/// Residual/stability estimate `‖r‖_{X'} / β_LB`; an upper bound on the truth
/// error whenever `β_LB` under-estimates the inf-sup constant in the same
/// norm.
pub fn delta_std(residual_dual: f64, beta_lb: f64) -> Result<f64> {
    if !(beta_lb > 0.0) || !beta_lb.is_finite() {
        return Err(Error::NonpositiveBeta(beta_lb));
    }
    Ok(residual_dual / beta_lb)
}

/// Two-level gap `Δ_{N,M}(μ) = ‖u_M - u_N‖_{X(μ)}` from reduced coefficients
/// of the coarse (`c_n`) and fine (`c_m`) surrogates; `c_n` is padded with
/// zeros, and the norm uses the reduced Gramian blocks at `mu`, so a
/// parameter-dependent inner product is honored exactly.
pub fn delta_hier<T: Scalar>(
    rm: &ReducedModel<T>,
    mu: &[f64],
    c_n: &DVector<T>,
    c_m: &DVector<T>,
) -> Result<f64> {
    let (n, m) = (c_n.len(), c_m.len());
    if n > m {
        return Err(Error::DimensionMismatch(format!(
            "coarse dimension {n} exceeds fine dimension {m}"
        )));
    }
    let mut delta = c_m.clone();
    for i in 0..n {
        delta[i] -= c_n[i];
    }
    rm.x_norm(&delta, Some(mu))
}

/// Certified version `Δ_{N,M} / (1 - Θ)`; requires a valid saturation
/// constant `Θ ∈ [0, 1)`.
pub fn certify(delta: f64, theta: f64) -> Result<f64> {
    if !(theta >= 0.0 && theta < 1.0) {
        return Err(Error::SaturationInvalid { theta });
    }
    Ok(delta / (1.0 - theta))
}

/// Two-sided enclosure `[Δ/(1+Θ), Δ/(1-Θ)]` of the truth error implied by a
/// saturation constant `Θ ∈ [0, 1)`.
pub fn sandwich(delta: f64, theta: f64) -> Result<(f64, f64)> {
    if !(theta >= 0.0 && theta < 1.0) {
        return Err(Error::SaturationInvalid { theta });
    }
    Ok((delta / (1.0 + theta), delta / (1.0 - theta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::basis::{SnapshotLabel, DEFAULT_POD_DROP_TOL};
    use crate::problems::{
        build_helmholtz_1d, build_thermal_block, HelmholtzConfig, ThermalBlockConfig,
    };

    fn thermal_fixture() -> (TruthModel<f64>, ReducedBasis<f64>, OrthoFrame<f64>) {
        let model = build_thermal_block::<f64>(&ThermalBlockConfig::new(9).unwrap()).unwrap();
        let frame = OrthoFrame::new(&model, None).unwrap();
        let params = [vec![0.6, 1.8], vec![2.2, 0.5], vec![1.0, 1.0], vec![3.0, 2.0]];
        let mut basis = ReducedBasis::empty(model.dofs());
        let snaps: Vec<_> = params.iter().map(|mu| model.truth_solve(mu).unwrap()).collect();
        let labels: Vec<_> =
            params.iter().map(|mu| SnapshotLabel::Lagrange { mu: mu.clone() }).collect();
        basis.extend_pod(&frame, &snaps, labels, DEFAULT_POD_DROP_TOL).unwrap();
        (model, basis, frame)
    }

    #[test]
    fn factorized_residual_matches_direct_dual_norm() {
        let (model, basis, frame) = thermal_fixture();
        let rm = ReducedModel::project(&model, &basis).unwrap();
        let rd = ResidualData::build(&model, &basis, &frame).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mu = vec![rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)];
            let n = rng.random_range(1..=basis.dim());
            let c = rm.solve(&mu, n).unwrap();
            let fast = rd.dual_norm_at(&model, &mu, &c);
            let r = model.truth_residual(&mu, &rm.reconstruct(&basis, &c));
            let direct = model.dual_norm(&r, None).unwrap();
            let denom = direct.max(1e-300);
            assert!(
                (fast - direct).abs() / denom < 1e-9,
                "fast {fast} vs direct {direct} at n={n}"
            );
        }
    }

    #[test]
    fn standard_estimator_brackets_the_error_with_exact_constants() {
        let (model, basis, frame) = thermal_fixture();
        let rm = ReducedModel::project(&model, &basis).unwrap();
        let rd = ResidualData::build(&model, &basis, &frame).unwrap();
        let mu = vec![1.4, 0.8];
        let st = model.stability_constants_wrt(&mu, frame.gram()).unwrap();
        let c = rm.solve(&mu, 2).unwrap();
        let u = model.truth_solve(&mu).unwrap();
        let err = model.x_norm(&(&u - rm.reconstruct(&basis, &c)), None).unwrap();
        let res = rd.dual_norm_at(&model, &mu, &c);
        // residual sandwich: β e <= ‖r‖ <= γ e
        assert!(res >= st.beta * err * (1.0 - 1e-9));
        assert!(res <= st.gamma * err * (1.0 + 1e-9));
        let d = delta_std(res, st.beta).unwrap();
        assert!(d >= err * (1.0 - 1e-9), "estimate {d} below error {err}");
    }

    #[test]
    fn hierarchical_gap_equals_lifted_truth_norm() {
        let (model, basis, _frame) = thermal_fixture();
        let rm = ReducedModel::project(&model, &basis).unwrap();
        let mu = vec![2.1, 0.9];
        let c_n = rm.solve(&mu, 2).unwrap();
        let c_m = rm.solve(&mu, basis.dim()).unwrap();
        let fast = delta_hier(&rm, &mu, &c_n, &c_m).unwrap();
        let diff = rm.reconstruct(&basis, &c_m)
            - rm.reconstruct(&basis, &DVector::from_fn(basis.dim(), |i, _| {
                if i < c_n.len() {
                    c_n[i]
                } else {
                    0.0
                }
            }));
        let direct = model.x_norm(&diff, None).unwrap();
        assert!((fast - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn parametric_norm_is_honored_for_complex_problems() {
        let cfg = HelmholtzConfig::new(25, 4).unwrap();
        let model = build_helmholtz_1d::<Complex<f64>>(&cfg).unwrap();
        let mu_ref = [7.0];
        let frame = OrthoFrame::new(&model, Some(&mu_ref)).unwrap();
        let params = [vec![5.5], vec![7.0], vec![8.5]];
        let mut basis = ReducedBasis::empty(model.dofs());
        let snaps: Vec<_> = params.iter().map(|mu| model.truth_solve(mu).unwrap()).collect();
        let labels: Vec<_> =
            params.iter().map(|mu| SnapshotLabel::Lagrange { mu: mu.clone() }).collect();
        basis.extend_pod(&frame, &snaps, labels, DEFAULT_POD_DROP_TOL).unwrap();
        let rm = ReducedModel::project(&model, &basis).unwrap();

        let mu = vec![6.2];
        let c_n = rm.solve(&mu, 1).unwrap();
        let c_m = rm.solve(&mu, basis.dim()).unwrap();
        let fast = delta_hier(&rm, &mu, &c_n, &c_m).unwrap();
        let mut pad = DVector::zeros(basis.dim());
        for i in 0..c_n.len() {
            pad[i] = c_n[i];
        }
        let diff = rm.reconstruct(&basis, &c_m) - rm.reconstruct(&basis, &pad);
        let direct = model.x_norm(&diff, Some(&mu)).unwrap();
        assert!(
            (fast - direct).abs() <= 1e-11 * direct.max(1e-300),
            "fast {fast} vs direct {direct}"
        );
    }

    #[test]
    fn certification_rejects_invalid_saturation() {
        assert!(certify(1.0, 1.0).is_err());
        assert!(certify(1.0, -0.1).is_err());
        assert!(certify(1.0, f64::NAN).is_err());
        let c = certify(3.0, 0.5).unwrap();
        assert!((c - 6.0).abs() < 1e-15);
        let (lo, hi) = sandwich(3.0, 0.5).unwrap();
        assert!((lo - 2.0).abs() < 1e-15 && (hi - 6.0).abs() < 1e-15);
    }
}
