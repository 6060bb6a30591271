//! 1-D Helmholtz impedance problem on (0, 1): `-u'' - μ² u = r` with
//! `u(0) = 0` and the Robin condition `u'(1) + iμ u(1) = g`, discretized by
//! high-order Lagrange elements on Gauss-Lobatto nodes with the standard
//! collocated quadrature.  The wavenumber `μ` is the single parameter and the
//! X-inner product is the μ-dependent norm `μ²‖v‖₀² + |v|₁²`.

use nalgebra::DVector;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{unify_patterns, CsrMatrix};
use crate::scalar::Scalar;
use crate::theta::ThetaFunction;
use crate::truth::{TruthModel, XGram};

#[derive(Debug, Clone, Copy)]
pub struct HelmholtzConfig {
    pub elements: usize,
    pub degree: usize,
    /// constant volume source
    pub source: Complex<f64>,
    /// Robin datum at x = 1
    pub robin_data: Complex<f64>,
}

impl HelmholtzConfig {
    pub fn new(elements: usize, degree: usize) -> Result<Self> {
        if elements == 0 || degree == 0 {
            return Err(Error::InvalidConfig(format!(
                "need at least one element of degree >= 1, got {elements} x {degree}"
            )));
        }
        Ok(Self { elements, degree, source: Complex::new(1.0, 0.0), robin_data: Complex::ZERO })
    }

    /// Unknowns after eliminating the Dirichlet node at x = 0.
    pub fn dofs(&self) -> usize {
        self.elements * self.degree
    }

    /// Coordinates of the retained nodes, indexed like the dof vector.
    pub fn dof_coordinates(&self) -> Vec<f64> {
        let (nodes, _) = gauss_lobatto(self.degree);
        let h = 1.0 / self.elements as f64;
        let mut xs = Vec::with_capacity(self.dofs());
        for e in 0..self.elements {
            let x0 = e as f64 * h;
            for (i, &xi) in nodes.iter().enumerate() {
                if e == 0 && i == 0 {
                    continue; // Dirichlet node
                }
                if e > 0 && i == 0 {
                    continue; // shared with the previous element
                }
                xs.push(x0 + 0.5 * (xi + 1.0) * h);
            }
        }
        xs
    }
}

/// Gauss-Lobatto nodes and quadrature weights on [-1, 1] for degree `p`
/// (p + 1 points).  Interior nodes are the roots of the derivative of the
/// degree-p Legendre polynomial, found by Newton from Chebyshev estimates.
pub fn gauss_lobatto(p: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(p >= 1);
    let mut nodes = vec![0.0; p + 1];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    for k in 1..p {
        let mut x = -(std::f64::consts::PI * k as f64 / p as f64).cos();
        for _ in 0..100 {
            let (lp, dlp) = legendre_with_derivative(p, x);
            // P'' from the Legendre differential equation
            let ddlp = (2.0 * x * dlp - (p * (p + 1)) as f64 * lp) / (1.0 - x * x);
            let step = dlp / ddlp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[k] = x;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (lp, _) = legendre_with_derivative(p, x);
            2.0 / ((p * (p + 1)) as f64 * lp * lp)
        })
        .collect();
    (nodes, weights)
}

/// Legendre polynomial `P_p` and its derivative at `x` (|x| < 1 for the
/// derivative formula; the endpoints never reach it).
fn legendre_with_derivative(p: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..p {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    if p == 0 {
        return (1.0, 0.0);
    }
    let dp = (p as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Lagrange differentiation matrix on the Gauss-Lobatto nodes.
fn diff_matrix(p: usize, nodes: &[f64]) -> Vec<Vec<f64>> {
    let lp: Vec<f64> = nodes.iter().map(|&x| legendre_endpoint_safe(p, x)).collect();
    let mut d = vec![vec![0.0; p + 1]; p + 1];
    for i in 0..=p {
        for j in 0..=p {
            if i != j {
                d[i][j] = lp[i] / (lp[j] * (nodes[i] - nodes[j]));
            }
        }
    }
    d[0][0] = -((p * (p + 1)) as f64) / 4.0;
    d[p][p] = ((p * (p + 1)) as f64) / 4.0;
    d
}

fn legendre_endpoint_safe(p: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if p == 0 {
        return 1.0;
    }
    for k in 1..p {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Assembles the three-term affine truth model `K - μ² M + iμ B` with loads
/// from the constant source and the Robin datum.  Requires a complex scalar
/// type; the impedance term has no real representation.
pub fn build_helmholtz_1d<T: Scalar>(cfg: &HelmholtzConfig) -> Result<TruthModel<T>> {
    if !T::IS_COMPLEX {
        return Err(Error::ComplexRequired("the impedance boundary term is imaginary"));
    }
    let (p, ne) = (cfg.degree, cfg.elements);
    let n_dofs = cfg.dofs();
    let h = 1.0 / ne as f64;
    let (nodes, weights) = gauss_lobatto(p);
    let d = diff_matrix(p, &nodes);

    // element stiffness (2/h) D^T W D, exact for the polynomial integrand
    let mut k_local = vec![vec![0.0; p + 1]; p + 1];
    for i in 0..=p {
        for j in 0..=p {
            let mut s = 0.0;
            for (m, &w) in weights.iter().enumerate() {
                s += w * d[m][i] * d[m][j];
            }
            k_local[i][j] = s * 2.0 / h;
        }
    }

    // global node id e*p + i; the Dirichlet node 0 is dropped, dof = node - 1
    let dof = |e: usize, i: usize| -> Option<usize> {
        let g = e * p + i;
        g.checked_sub(1)
    };

    let mut k_trip = Vec::new();
    let mut m_diag = vec![0.0f64; n_dofs];
    for e in 0..ne {
        for i in 0..=p {
            let Some(gi) = dof(e, i) else { continue };
            m_diag[gi] += weights[i] * 0.5 * h;
            for j in 0..=p {
                let Some(gj) = dof(e, j) else { continue };
                if k_local[i][j] != 0.0 {
                    k_trip.push((gi, gj, T::from_re(k_local[i][j])));
                }
            }
        }
    }
    let k = CsrMatrix::from_triplets(n_dofs, n_dofs, k_trip)?;
    let m = CsrMatrix::from_triplets(
        n_dofs,
        n_dofs,
        m_diag.iter().enumerate().map(|(i, &v)| (i, i, T::from_re(v))),
    )?;
    let last = n_dofs - 1;
    let b = CsrMatrix::from_triplets(n_dofs, n_dofs, vec![(last, last, T::one())])?;

    let theta_a = vec![
        ThetaFunction::constant(T::one()),
        // -μ²
        ThetaFunction::new(
            |mu: &[f64]| T::from_re(-mu[0] * mu[0]),
            |mu, _, k| match k {
                1 => T::from_re(-2.0 * mu[0]),
                2 => T::from_re(-2.0),
                _ => T::zero(),
            },
        ),
        // iμ
        ThetaFunction::new(
            |mu: &[f64]| T::try_from_parts(0.0, mu[0]).expect("complex checked above"),
            |_, _, k| {
                if k == 1 {
                    T::try_from_parts(0.0, 1.0).expect("complex checked above")
                } else {
                    T::zero()
                }
            },
        ),
    ];

    // loads: ∫ r v̄ collocates to the lumped mass diagonal; the Robin datum
    // acts on the endpoint value
    let mut f_terms = vec![DVector::from_iterator(n_dofs, m_diag.iter().map(|&v| T::from_re(v)))];
    let mut theta_f = vec![ThetaFunction::constant(
        T::try_from_parts(cfg.source.re, cfg.source.im).expect("complex checked above"),
    )];
    if cfg.robin_data != Complex::ZERO {
        let mut fg = DVector::zeros(n_dofs);
        fg[last] = T::one();
        f_terms.push(fg);
        theta_f.push(ThetaFunction::constant(
            T::try_from_parts(cfg.robin_data.re, cfg.robin_data.im).expect("complex checked above"),
        ));
    }

    // the Gramian K + μ² M needs its own shared pattern
    let gram_terms = unify_patterns(&[k.clone(), m.clone()])?;
    let sigma = vec![
        ThetaFunction::<f64>::constant(1.0),
        ThetaFunction::<f64>::new(|mu: &[f64]| mu[0] * mu[0], |mu, _, k| match k {
            1 => 2.0 * mu[0],
            2 => 2.0,
            _ => 0.0,
        }),
    ];

    TruthModel::new(
        vec![k, m, b],
        f_terms,
        theta_a,
        theta_f,
        XGram::Affine { terms: gram_terms, sigma },
        false,
    )
}

/// Closed-form solution for the default data `r = 1`, `g = 0`:
/// `u = c₁ sin(μx) + (cos(μx) - 1)/μ²` with the impedance condition fixing
/// `c₁ = (sin μ - i(cos μ - 1)) / (μ² e^{iμ})`.
pub fn closed_form_default(mu: f64, x: f64) -> Complex<f64> {
    let i = Complex::<f64>::new(0.0, 1.0);
    let c1 = (Complex::new(mu.sin(), 0.0) - i * (mu.cos() - 1.0))
        / (mu * mu * (i * mu).exp());
    c1 * (mu * x).sin() + ((mu * x).cos() - 1.0) / (mu * mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    type C64 = Complex<f64>;

    #[test]
    fn dof_counts_match_spectral_layout() {
        assert_eq!(HelmholtzConfig::new(100, 6).unwrap().dofs(), 600);
        assert_eq!(HelmholtzConfig::new(1000, 16).unwrap().dofs(), 16_000);
    }

    #[test]
    fn gauss_lobatto_integrates_polynomials() {
        // degree-p rule is exact through order 2p - 1
        for p in [2, 4, 6] {
            let (nodes, weights) = gauss_lobatto(p);
            assert_eq!(nodes.len(), p + 1);
            for order in 0..=(2 * p - 1) {
                let quad: f64 =
                    nodes.iter().zip(&weights).map(|(&x, &w)| w * x.powi(order as i32)).sum();
                let exact =
                    if order % 2 == 0 { 2.0 / (order as f64 + 1.0) } else { 0.0 };
                assert!(
                    (quad - exact).abs() < 1e-13,
                    "p = {p}, order {order}: {quad} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn real_scalars_are_rejected() {
        let cfg = HelmholtzConfig::new(4, 3).unwrap();
        assert!(matches!(build_helmholtz_1d::<f64>(&cfg), Err(Error::ComplexRequired(_))));
    }

    #[test]
    fn truth_matches_the_closed_form() {
        let cfg = HelmholtzConfig::new(100, 6).unwrap();
        let model = build_helmholtz_1d::<C64>(&cfg).unwrap();
        let mu = [2.0];
        let u = model.truth_solve(&mu).unwrap();
        let xs = cfg.dof_coordinates();
        let norm: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut err = 0.0f64;
        for (&x, &uh) in xs.iter().zip(u.iter()) {
            err = err.max((uh - closed_form_default(mu[0], x)).norm());
        }
        assert!(err / norm * (xs.len() as f64).sqrt() < 1e-8, "relative error {err}");
    }

    #[test]
    fn norm_equivalence_constants() {
        let cfg = HelmholtzConfig::new(20, 4).unwrap();
        let model = build_helmholtz_1d::<C64>(&cfg).unwrap();
        let (mu_min, mu_max) = (1.0f64, 5.0f64);
        let mut seed = 77u64;
        let mut lcg = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        for trial in 0..20 {
            let v = DVector::from_fn(model.dofs(), |_, _| C64::new(lcg(), lcg()));
            let mu = [mu_min + (mu_max - mu_min) * (trial as f64) / 19.0];
            let n_mu = model.x_norm(&v, Some(&mu)).unwrap();
            // the plain H¹ norm is the μ = 1 member of the family
            let n_one = model.x_norm(&v, Some(&[1.0])).unwrap();
            assert!(n_mu >= 1.0f64.min(mu_min) * n_one - 1e-9);
            assert!(n_mu <= 1.0f64.max(mu_max) * n_one + 1e-9);
        }
    }
}
