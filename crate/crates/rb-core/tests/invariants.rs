//! Cross-module invariants verified end to end on the two bundled benchmark
//! problems: affine assembly against its terms, the two-level gap against its
//! truth-space definition, the residual estimator against exact stability
//! constants, frame independence, and snapshot reproduction.

use nalgebra::{Complex, DMatrix, DVector};

use rb_core::basis::{OrthoFrame, ReducedBasis, SnapshotLabel, DEFAULT_POD_DROP_TOL};
use rb_core::estimator::{delta_hier, ResidualData};
use rb_core::param::{random_sample, tensor_grid, ParameterDomain};
use rb_core::problems::{
    build_helmholtz_1d, build_thermal_block, HelmholtzConfig, ThermalBlockConfig,
};
use rb_core::reduced::ReducedModel;
use rb_core::truth::TruthModel;
use rb_core::Scalar;

fn thermal_model() -> TruthModel<f64> {
    build_thermal_block::<f64>(&ThermalBlockConfig::new(9).unwrap()).unwrap()
}

fn thermal_domain() -> ParameterDomain {
    ParameterDomain::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap()
}

fn helmholtz_model() -> TruthModel<Complex<f64>> {
    build_helmholtz_1d::<Complex<f64>>(&HelmholtzConfig::new(20, 3).unwrap()).unwrap()
}

fn helmholtz_domain() -> ParameterDomain {
    ParameterDomain::new(vec![2.0], vec![6.0]).unwrap()
}

/// Builds a Lagrange basis from truth solves at the given parameters.
fn lagrange_basis<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    params: &[Vec<f64>],
) -> ReducedBasis<T> {
    let mut basis = ReducedBasis::empty(model.dofs());
    for mu in params {
        let u = model.truth_solve(mu).unwrap();
        basis
            .extend_pod(
                frame,
                &[u],
                vec![SnapshotLabel::Lagrange { mu: mu.clone() }],
                DEFAULT_POD_DROP_TOL,
            )
            .unwrap();
    }
    basis
}

fn dense_affine_sum<T: Scalar>(model: &TruthModel<T>, mu: &[f64]) -> DMatrix<T> {
    let mut a = DMatrix::zeros(model.dofs(), model.dofs());
    for (theta, term) in model.theta_a().iter().zip(model.a_terms()) {
        a += term.to_dense() * theta.eval(mu);
    }
    a
}

/// Checks `Σ_q θ_q(μ) A_q` on both benchmarks: the assembled operator matches
/// the dense term sum and the truth solve satisfies the assembled system.
#[test]
fn assembled_systems_match_their_affine_terms() {
    fn check<T: Scalar>(model: &TruthModel<T>, dom: &ParameterDomain, seed: u64) {
        for mu in random_sample(dom, 10, seed).unwrap().points() {
            let direct = model.dense_operator(mu);
            let summed = dense_affine_sum(model, mu);
            let gap = T::real_to_f64((&direct - &summed).norm())
                / T::real_to_f64(direct.norm());
            assert!(gap <= 1e-13, "assembly vs term sum gap {gap} at {mu:?}");

            let u = model.truth_solve(mu).unwrap();
            let mut f = DVector::zeros(model.dofs());
            for (theta, fq) in model.theta_f().iter().zip(model.f_terms()) {
                f += fq * theta.eval(mu);
            }
            let residual =
                T::real_to_f64((&direct * &u - &f).norm()) / T::real_to_f64(f.norm());
            assert!(residual <= 1e-10, "truth residual {residual} at {mu:?}");
        }
    }
    check(&thermal_model(), &thermal_domain(), 11);
    check(&helmholtz_model(), &helmholtz_domain(), 12);
}

/// The two-level gap computed from reduced Gramian blocks must equal the
/// truth-space norm of the reconstructed difference: same quadratic form,
/// evaluated in `M` versus `N_truth` dimensions.
#[test]
fn two_level_gap_matches_its_truth_space_definition() {
    fn check<T: Scalar>(
        model: &TruthModel<T>,
        frame: &OrthoFrame<T>,
        dom: &ParameterDomain,
        snapshots: &[Vec<f64>],
        seed: u64,
    ) {
        let basis = lagrange_basis(model, frame, snapshots);
        let rm = ReducedModel::project(model, &basis).unwrap();
        let (n, m) = (2, basis.dim());
        assert!(m > n, "need a strict hierarchy, got m = {m}");
        for mu in random_sample(dom, 50, seed).unwrap().points() {
            let c_n = rm.solve(mu, n).unwrap();
            let c_m = rm.solve(mu, m).unwrap();
            let online = delta_hier(&rm, mu, &c_n, &c_m).unwrap();
            let diff = basis.lift(&c_m) - basis.lift(&c_n);
            let truth = model.x_norm(&diff, Some(mu)).unwrap();
            let gap = (online - truth).abs() / truth.max(1e-300);
            assert!(gap <= 1e-10, "reduced vs truth norm gap {gap} at {mu:?}");
        }
    }

    let thermal = thermal_model();
    let frame = OrthoFrame::new(&thermal, None).unwrap();
    let grid = tensor_grid(&thermal_domain(), &[3, 3]).unwrap();
    check(&thermal, &frame, &thermal_domain(), &grid.points()[..6], 21);

    let wave = helmholtz_model();
    let mu_ref = helmholtz_domain().midpoint();
    let frame = OrthoFrame::new(&wave, Some(&mu_ref)).unwrap();
    let grid = tensor_grid(&helmholtz_domain(), &[6]).unwrap();
    check(&wave, &frame, &helmholtz_domain(), grid.points(), 22);
}

/// With the exact inf-sup and continuity constants of the frozen-frame
/// geometry, the residual dual norm brackets the truth error from both sides
/// for any reduced approximation.
#[test]
fn residual_estimator_brackets_the_error_with_exact_constants() {
    fn check<T: Scalar>(
        model: &TruthModel<T>,
        frame: &OrthoFrame<T>,
        dom: &ParameterDomain,
        snapshots: &[Vec<f64>],
        seed: u64,
    ) {
        assert!(model.dofs() <= 600, "exact constants are an oracle-scale tool");
        let basis = lagrange_basis(model, frame, snapshots);
        let rm = ReducedModel::project(model, &basis).unwrap();
        let rd = ResidualData::build(model, &basis, frame).unwrap();
        let slack = 1e-8;
        for mu in random_sample(dom, 50, seed).unwrap().points() {
            let c = rm.solve(mu, basis.dim()).unwrap();
            let diff = model.truth_solve(mu).unwrap() - basis.lift(&c);
            let e = frame.gram().sesquilinear(&diff, &diff).re_f64().max(0.0).sqrt();
            let dual = rd.dual_norm_at(model, mu, &c);
            let pair = model.stability_constants_wrt(mu, frame.gram()).unwrap();
            let upper = dual / pair.beta;
            let lower = dual / pair.gamma;
            assert!(
                e <= upper * (1.0 + slack) + 1e-14,
                "error {e} above residual bound {upper} at {mu:?}"
            );
            assert!(
                lower <= e * (1.0 + slack) + 1e-14,
                "residual floor {lower} above error {e} at {mu:?}"
            );
        }
    }

    let thermal = thermal_model();
    let frame = OrthoFrame::new(&thermal, None).unwrap();
    let grid = tensor_grid(&thermal_domain(), &[2, 2]).unwrap();
    check(&thermal, &frame, &thermal_domain(), grid.points(), 31);

    let wave = helmholtz_model();
    let mu_ref = helmholtz_domain().midpoint();
    let frame = OrthoFrame::new(&wave, Some(&mu_ref)).unwrap();
    let grid = tensor_grid(&helmholtz_domain(), &[4]).unwrap();
    check(&wave, &frame, &helmholtz_domain(), grid.points(), 32);
}

/// Two different orthonormalizations of the same nested snapshot spaces must
/// give the same two-level gap: the estimator depends on the spaces, not on
/// the basis chosen for them.
#[test]
fn two_level_gap_is_frame_independent() {
    let model = thermal_model();
    let frame = OrthoFrame::new(&model, None).unwrap();
    let dom = thermal_domain();
    let params: Vec<Vec<f64>> = tensor_grid(&dom, &[3, 2]).unwrap().points().to_vec();
    let solves: Vec<DVector<f64>> =
        params.iter().map(|mu| model.truth_solve(mu).unwrap()).collect();

    // route A: one snapshot per extension
    let mut one_by_one = ReducedBasis::empty(model.dofs());
    for (mu, u) in params.iter().zip(&solves) {
        one_by_one
            .extend_pod(
                &frame,
                std::slice::from_ref(u),
                vec![SnapshotLabel::Lagrange { mu: mu.clone() }],
                DEFAULT_POD_DROP_TOL,
            )
            .unwrap();
    }
    // route B: pairs compressed jointly; prefix spans at even cuts agree
    let mut pairwise = ReducedBasis::empty(model.dofs());
    for chunk in params.chunks(2).zip(solves.chunks(2)) {
        let labels = chunk.0.iter().map(|mu| SnapshotLabel::Lagrange { mu: mu.clone() }).collect();
        pairwise.extend_pod(&frame, chunk.1, labels, DEFAULT_POD_DROP_TOL).unwrap();
    }
    assert_eq!(one_by_one.dim(), pairwise.dim(), "both routes keep all directions");

    let rm_a = ReducedModel::project(&model, &one_by_one).unwrap();
    let rm_b = ReducedModel::project(&model, &pairwise).unwrap();
    let (n, m) = (2, one_by_one.dim());
    for mu in random_sample(&dom, 20, 41).unwrap().points() {
        let da = delta_hier(&rm_a, mu, &rm_a.solve(mu, n).unwrap(), &rm_a.solve(mu, m).unwrap())
            .unwrap();
        let db = delta_hier(&rm_b, mu, &rm_b.solve(mu, n).unwrap(), &rm_b.solve(mu, m).unwrap())
            .unwrap();
        let gap = (da - db).abs() / da.abs().max(1e-300);
        assert!(gap <= 1e-9, "frame dependence {gap} at {mu:?}: {da} vs {db}");
    }
}

/// Solving the reduced system at a snapshot parameter must reproduce the
/// truth snapshot to solver precision relative to its norm.
#[test]
fn reduced_solves_reproduce_their_snapshots() {
    fn check<T: Scalar>(
        model: &TruthModel<T>,
        frame: &OrthoFrame<T>,
        snapshots: &[Vec<f64>],
    ) {
        let basis = lagrange_basis(model, frame, snapshots);
        let rm = ReducedModel::project(model, &basis).unwrap();
        for mu in snapshots {
            let u = model.truth_solve(mu).unwrap();
            let c = rm.solve(mu, basis.dim()).unwrap();
            let err = model.x_norm(&(u.clone() - basis.lift(&c)), Some(mu)).unwrap();
            let scale = model.x_norm(&u, Some(mu)).unwrap();
            assert!(err <= 1e-9 * scale, "reproduction error {err} vs scale {scale} at {mu:?}");
        }
    }

    let thermal = thermal_model();
    let frame = OrthoFrame::new(&thermal, None).unwrap();
    let grid = tensor_grid(&thermal_domain(), &[3, 3]).unwrap();
    check(&thermal, &frame, grid.points());

    let wave = helmholtz_model();
    let mu_ref = helmholtz_domain().midpoint();
    let frame = OrthoFrame::new(&wave, Some(&mu_ref)).unwrap();
    let grid = tensor_grid(&helmholtz_domain(), &[5]).unwrap();
    check(&wave, &frame, grid.points());
}

/// The impedance condition keeps the wave problem uniformly invertible, but
/// its inf-sup constant decays like `1/μ`: tiny against the `μ²`-sized
/// operator coefficients in the high-frequency window, which is exactly what
/// makes a certified stability lower bound expensive there.
#[test]
fn wave_stability_decays_like_inverse_frequency() {
    let model =
        build_helmholtz_1d::<Complex<f64>>(&HelmholtzConfig::new(40, 4).unwrap()).unwrap();
    let dom = ParameterDomain::new(vec![90.0], vec![100.0]).unwrap();
    let grid = tensor_grid(&dom, &[21]).unwrap();
    let scaled: Vec<f64> = grid
        .points()
        .iter()
        .map(|mu| mu[0] * model.exact_inf_sup(mu).unwrap())
        .collect();
    let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scaled.iter().cloned().fold(0.0f64, f64::max);
    assert!(min > 0.0, "operator must stay invertible on the window");
    assert!(
        max <= 1.5 * min,
        "μ·β(μ) should be near-constant on the window, got [{min}, {max}]"
    );

    let low = model.exact_inf_sup(&[2.0]).unwrap();
    let high = model.exact_inf_sup(&[100.0]).unwrap();
    assert!(
        low >= 10.0 * high,
        "stability must shrink with frequency: β(2) = {low}, β(100) = {high}"
    );
}
