//! Offline basis construction: strong greedy on the truth error, weak greedy
//! on the residual estimator, and weak greedy driven by the hierarchical
//! estimator with Taylor enrichment of the comparison space.
//!
//! All drivers share the conventions: selector evaluation over the training
//! set is a parallel map, argmax ties resolve to the lowest training index,
//! and every iteration appends one record to a [`GreedyTrace`].

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{OrthoFrame, ReducedBasis, SnapshotLabel, DEFAULT_POD_DROP_TOL};
use crate::error::{Error, Result};
use crate::estimator::{delta_hier, delta_std, ResidualData};
use crate::param::SampleSet;
use crate::reduced::ReducedModel;
use crate::saturation::{
    saturation_from_samples, two_level_errors_mapped, SaturationResult, ThetaMethod,
    NOISE_FLOOR_REL,
};
use crate::scalar::Scalar;
use crate::scm::{min_theta_lower_bound, ScmState};
use crate::taylor::{append_derivative_order, DerivativeChains};
use crate::truth::TruthModel;

/// Truth solutions aligned with a training set, computed once and shared by
/// every offline stage (basis selection and saturation estimation).
pub struct TrainingSolves<T: Scalar> {
    solutions: Vec<DVector<T>>,
}

impl<T: Scalar> TrainingSolves<T> {
    pub fn compute(model: &TruthModel<T>, train: &SampleSet) -> Result<Self> {
        let solutions = train
            .points()
            .par_iter()
            .map(|mu| model.truth_solve(mu))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { solutions })
    }

    /// Wraps precomputed solutions (for example, loaded from disk).
    pub fn from_vectors(solutions: Vec<DVector<T>>) -> Self {
        Self { solutions }
    }

    pub fn get(&self, i: usize) -> &DVector<T> {
        &self.solutions[i]
    }

    pub fn all(&self) -> &[DVector<T>] {
        &self.solutions
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

/// Which quantity a greedy driver maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    TruthError,
    ResidualEstimator,
    HierarchicalEstimator,
}

impl Selector {
    pub fn as_str(self) -> &'static str {
        match self {
            Selector::TruthError => "truth-error",
            Selector::ResidualEstimator => "residual-estimator",
            Selector::HierarchicalEstimator => "hierarchical-estimator",
        }
    }
}

/// One greedy iteration: the state of the selector sweep and what was done
/// with its argmax.  The final record of a run has `accepted = false` and
/// documents the stopping state.
#[derive(Debug, Clone)]
pub struct GreedyRecord {
    /// Snapshot count the selector was evaluated at.
    pub n: usize,
    /// Argmax parameter.
    pub mu: Vec<f64>,
    pub selector: Selector,
    /// Selector value at `mu` (the maximum over the training set).
    pub max_value: f64,
    /// Saturation constant of the accepted space pair, where applicable.
    pub theta: Option<f64>,
    /// Enrichment bookkeeping counter `K_N` (one more than the highest
    /// derivative order appended), where applicable.
    pub k_n: Option<u32>,
    /// Wall-clock seconds spent on the iteration ending in this record.
    pub t_offline: f64,
    /// Whether the snapshot at `mu` was appended to the basis.
    pub accepted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GreedyTrace {
    pub records: Vec<GreedyRecord>,
}

impl GreedyTrace {
    /// Selector maximum at the end of the run (the last record).
    pub fn final_max(&self) -> Option<f64> {
        self.records.last().map(|r| r.max_value)
    }

    /// Accepted parameters in selection order.
    pub fn selected(&self) -> Vec<Vec<f64>> {
        self.records.iter().filter(|r| r.accepted).map(|r| r.mu.clone()).collect()
    }
}

fn argmax(values: &[f64]) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > best {
            best = *v;
            idx = i;
        }
    }
    (best, idx)
}

/// `‖u(μ_i) - Galerkin(μ_i)‖_{X(μ_i)}` over the training set; the truth norm
/// itself while the basis is empty.
fn training_errors<T: Scalar>(
    model: &TruthModel<T>,
    basis: &ReducedBasis<T>,
    train: &SampleSet,
    solves: &TrainingSolves<T>,
) -> Result<Vec<f64>> {
    if basis.dim() == 0 {
        return train
            .points()
            .par_iter()
            .zip(solves.all().par_iter())
            .map(|(mu, u)| model.x_norm(u, model.norm_parameter(mu)))
            .collect();
    }
    let rm = ReducedModel::project(model, basis)?;
    let n = basis.dim();
    train
        .points()
        .par_iter()
        .zip(solves.all().par_iter())
        .map(|(mu, u)| {
            let c = rm.solve(mu, n)?;
            model.x_norm(&(u - basis.lift(&c)), model.norm_parameter(mu))
        })
        .collect()
}

fn check_alignment<T: Scalar>(train: &SampleSet, solves: &TrainingSolves<T>) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if solves.len() != train.len() {
        return Err(Error::DimensionMismatch(
            "one cached truth solution per training point is required".into(),
        ));
    }
    Ok(())
}

/// Iteratively appends the snapshot with the largest truth error until the
/// error maximum drops below `tol` or `n_max` snapshots are placed.  A
/// repeated argmax (error already at noise level everywhere) stops cleanly.
pub fn strong_greedy<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    train: &SampleSet,
    solves: &TrainingSolves<T>,
    n_max: usize,
    tol: f64,
) -> Result<(ReducedBasis<T>, GreedyTrace)> {
    check_alignment(train, solves)?;
    let mut basis = ReducedBasis::empty(model.dofs());
    let mut trace = GreedyTrace::default();
    let mut selected: Vec<usize> = Vec::new();

    loop {
        let t0 = Instant::now();
        let errors = training_errors(model, &basis, train, solves)?;
        let (best, idx) = argmax(&errors);
        let mu = train.points()[idx].clone();
        let stop = best <= tol || selected.contains(&idx) || selected.len() >= n_max;
        let mut accepted = false;
        if !stop {
            let added = basis.extend_pod(
                frame,
                &[solves.get(idx).clone()],
                vec![SnapshotLabel::Lagrange { mu: mu.clone() }],
                DEFAULT_POD_DROP_TOL,
            )?;
            accepted = added > 0;
            if accepted {
                selected.push(idx);
            }
        }
        trace.records.push(GreedyRecord {
            n: selected.len().saturating_sub(accepted as usize),
            mu,
            selector: Selector::TruthError,
            max_value: best,
            theta: None,
            k_n: None,
            t_offline: t0.elapsed().as_secs_f64(),
            accepted,
        });
        if !accepted {
            return Ok((basis, trace));
        }
    }
}

/// Where the stability lower bound of the residual estimator comes from.
pub enum BetaSource<'a, T: Scalar> {
    /// Exact generalized-eigenvalue solves at every training point; intended
    /// for small consistency studies, not production offline runs.
    ExactEig,
    /// A converged successive-constraint state.
    Scm(&'a ScmState<T>),
    /// The min-θ bound for parametrically coercive problems.
    MinTheta { mu_ref: Vec<f64>, beta_ref: f64 },
}

impl<T: Scalar> BetaSource<'_, T> {
    fn beta(&self, model: &TruthModel<T>, frame: &OrthoFrame<T>, mu: &[f64]) -> Result<f64> {
        match self {
            BetaSource::ExactEig => {
                Ok(model.stability_constants_wrt(mu, frame.gram())?.beta)
            }
            BetaSource::Scm(state) => Ok(state.lower_bound(mu)),
            BetaSource::MinTheta { mu_ref, beta_ref } => {
                min_theta_lower_bound(model, mu, mu_ref, *beta_ref)
            }
        }
    }
}

/// Weak greedy with the residual estimator `Δ^Std = ‖residual‖_{X'} / β_LB`
/// as selector.  Only the accepted snapshots are solved in the truth space.
/// An unconverged constraint state is rejected up front.
pub fn weak_greedy_std<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    train: &SampleSet,
    n_max: usize,
    tol: f64,
    beta_source: &BetaSource<'_, T>,
) -> Result<(ReducedBasis<T>, GreedyTrace)> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if let BetaSource::Scm(state) = beta_source {
        if !state.converged() {
            let gap = state.history().last().map(|h| h.gap).unwrap_or(1.0);
            return Err(Error::ScmNonConvergence { gap, k: state.constraints().len() });
        }
    }
    let mut basis = ReducedBasis::empty(model.dofs());
    let mut trace = GreedyTrace::default();
    let mut selected: Vec<usize> = Vec::new();

    loop {
        let t0 = Instant::now();
        let rd = ResidualData::build(model, &basis, frame)?;
        let rm = if basis.dim() > 0 {
            Some(ReducedModel::project(model, &basis)?)
        } else {
            None
        };
        let n = basis.dim();
        let estimates = train
            .points()
            .par_iter()
            .map(|mu| {
                let c = match &rm {
                    Some(rm) => rm.solve(mu, n)?,
                    None => DVector::zeros(0),
                };
                let r = rd.dual_norm_at(model, mu, &c);
                delta_std(r, beta_source.beta(model, frame, mu)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (best, idx) = argmax(&estimates);
        let mu = train.points()[idx].clone();
        let stop = best <= tol || selected.contains(&idx) || selected.len() >= n_max;
        let mut accepted = false;
        if !stop {
            let u = model.truth_solve(&mu)?;
            let added = basis.extend_pod(
                frame,
                &[u],
                vec![SnapshotLabel::Lagrange { mu: mu.clone() }],
                DEFAULT_POD_DROP_TOL,
            )?;
            accepted = added > 0;
            if accepted {
                selected.push(idx);
            }
        }
        trace.records.push(GreedyRecord {
            n: selected.len().saturating_sub(accepted as usize),
            mu,
            selector: Selector::ResidualEstimator,
            max_value: best,
            theta: None,
            k_n: None,
            t_offline: t0.elapsed().as_secs_f64(),
            accepted,
        });
        if !accepted {
            return Ok((basis, trace));
        }
    }
}

/// Output of the hierarchical-estimator greedy: the accumulated basis `Ξ`
/// spans the fine space `X_M`; the plain snapshot space `X_N` is reachable
/// through `lagrange_map`, an orthonormal coordinate matrix over `Ξ`.
pub struct HierGreedyOutput<T: Scalar> {
    pub basis: ReducedBasis<T>,
    pub lagrange_map: DMatrix<T>,
    /// Selected parameters in order (`S_N`).
    pub snapshot_params: Vec<Vec<f64>>,
    /// Final saturation estimate for the returned space pair.
    pub theta: SaturationResult,
    /// Bookkeeping counter `K_n` per snapshot: one more than the highest
    /// derivative order appended there.
    pub orders: Vec<u32>,
    pub trace: GreedyTrace,
}

/// Orthonormal coordinates of the selected snapshots over the accumulated
/// basis.  A Euclidean QR of coordinates is orthonormal in the truth inner
/// product because the basis columns are.
/// Orthonormal coordinate map whose columns span, inside the full basis, the
/// space of the given snapshots.  Solving through the map (see
/// [`ReducedModel::solve_mapped`]) realizes the Galerkin approximation on the
/// snapshot span even when the snapshots are not a column prefix of the
/// basis.
pub fn snapshot_coordinate_map<T: Scalar>(
    basis: &ReducedBasis<T>,
    frame: &OrthoFrame<T>,
    snapshots: &[DVector<T>],
) -> DMatrix<T> {
    let m = basis.dim();
    let mut map = DMatrix::<T>::zeros(m, snapshots.len());
    for (j, u) in snapshots.iter().enumerate() {
        map.set_column(j, &basis.coordinates_of(u, frame));
    }
    map.qr().q()
}

fn lagrange_coordinate_map<T: Scalar>(
    basis: &ReducedBasis<T>,
    frame: &OrthoFrame<T>,
    solves: &TrainingSolves<T>,
    selected: &[usize],
) -> DMatrix<T> {
    let snapshots: Vec<DVector<T>> =
        selected.iter().map(|&i| solves.get(i).clone()).collect();
    snapshot_coordinate_map(basis, frame, &snapshots)
}

/// Weak greedy driven by the hierarchical estimator.  Each round enriches
/// the comparison space with successive derivative orders at the newest
/// snapshot parameter until the saturation constant drops below `theta_tol`,
/// then selects the next parameter by maximizing `Δ_{N,M}`.
///
/// The inner counter `k` starts at one and increments after every appended
/// order, so `K_n = k` records one more than the highest order used; the cap
/// `k_max` therefore admits derivative orders up to `k_max - 1`.  Hitting
/// the cap with `Θ ≥ theta_tol` aborts with a saturation-failure report, and
/// re-selecting an already chosen parameter aborts with a duplicate report.
#[allow(clippy::too_many_arguments)]
pub fn weak_greedy_hier<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    train: &SampleSet,
    solves: &TrainingSolves<T>,
    n_max: usize,
    tol: f64,
    theta_tol: f64,
    k_max: u32,
) -> Result<HierGreedyOutput<T>> {
    check_alignment(train, solves)?;
    if n_max == 0 {
        return Err(Error::InvalidConfig("at least one snapshot is required".into()));
    }
    if k_max < 2 {
        return Err(Error::InvalidConfig(
            "the enrichment cap must admit at least first derivatives (k_max >= 2)".into(),
        ));
    }

    // first parameter: largest truth norm (the free choice made determinate)
    let norms = train
        .points()
        .par_iter()
        .zip(solves.all().par_iter())
        .map(|(mu, u)| model.x_norm(u, model.norm_parameter(mu)))
        .collect::<Result<Vec<f64>>>()?;
    let (_, idx0) = argmax(&norms);
    // absolute denominator floor: errors below this are truth-solver noise
    let noise_floor = NOISE_FLOOR_REL * norms.iter().cloned().fold(0.0, f64::max);

    let mut basis = ReducedBasis::empty(model.dofs());
    let mut trace = GreedyTrace::default();
    let mut selected = vec![idx0];
    let mut snapshot_params = vec![train.points()[idx0].clone()];
    let mut orders: Vec<u32> = Vec::new();
    let added = basis.extend_pod(
        frame,
        &[solves.get(idx0).clone()],
        vec![SnapshotLabel::Lagrange { mu: snapshot_params[0].clone() }],
        DEFAULT_POD_DROP_TOL,
    )?;
    if added == 0 {
        return Err(Error::AllSnapshotsDropped);
    }

    loop {
        let t0 = Instant::now();
        let mu_n = snapshot_params.last().expect("nonempty snapshot set").clone();
        let mut chains = DerivativeChains::new(model, &mu_n)?;

        // enrichment loop: raise the derivative order at mu_n until the
        // training-set saturation constant certifies the space pair
        let mut k: u32 = 1;
        let (rm, map, theta) = loop {
            append_derivative_order(model, frame, &mut basis, &mut chains, k, DEFAULT_POD_DROP_TOL)?;
            k += 1;
            let rm = ReducedModel::project(model, &basis)?;
            let map = lagrange_coordinate_map(&basis, frame, solves, &selected);
            let (f, g) =
                two_level_errors_mapped(model, &rm, &basis, train, solves.all(), &map, basis.dim())?;
            let theta =
                saturation_from_samples(train, &f, &g, ThetaMethod::TrainRatio, 0.0, noise_floor)?;
            if theta.theta < theta_tol {
                break (rm, map, theta);
            }
            if k >= k_max {
                return Err(Error::SaturationFailure {
                    theta: theta.theta,
                    k,
                    k_max,
                    mu: mu_n.clone(),
                });
            }
        };
        orders.push(k);

        // selector pass
        let m = basis.dim();
        let deltas = train
            .points()
            .par_iter()
            .map(|mu| {
                let c_m = rm.solve(mu, m)?;
                let c_n = rm.solve_mapped(mu, &map)?;
                rm.x_norm(&(c_m - c_n), Some(mu))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (best, idx) = argmax(&deltas);
        let mu_next = train.points()[idx].clone();

        let stop = best < tol || snapshot_params.len() >= n_max;
        if !stop && selected.contains(&idx) {
            return Err(Error::DuplicateSelection {
                mu: mu_next,
                n: snapshot_params.len(),
                hint: "the hierarchical estimator peaks at an already selected parameter; \
                       the enriched spaces cannot separate it further"
                    .into(),
            });
        }
        let accepted = !stop;
        trace.records.push(GreedyRecord {
            n: snapshot_params.len(),
            mu: mu_next.clone(),
            selector: Selector::HierarchicalEstimator,
            max_value: best,
            theta: Some(theta.theta),
            k_n: Some(k),
            t_offline: t0.elapsed().as_secs_f64(),
            accepted,
        });
        if stop {
            return Ok(HierGreedyOutput {
                basis,
                lagrange_map: map,
                snapshot_params,
                theta,
                orders,
                trace,
            });
        }
        basis.extend_pod(
            frame,
            &[solves.get(idx).clone()],
            vec![SnapshotLabel::Lagrange { mu: mu_next.clone() }],
            DEFAULT_POD_DROP_TOL,
        )?;
        selected.push(idx);
        snapshot_params.push(mu_next);
    }
}

/// The straightforward pairing that drives the hierarchical estimator with
/// consecutive plain snapshot spaces (`X_N`, `X_{N+1}`) and no enrichment.
/// It can stall by re-selecting a snapshot — that is reported as an error
/// rather than worked around, because the stall is a property of the method.
pub fn weak_greedy_naive_pair<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    train: &SampleSet,
    solves: &TrainingSolves<T>,
    n_max: usize,
    tol: f64,
) -> Result<(ReducedBasis<T>, GreedyTrace)> {
    check_alignment(train, solves)?;
    let mut basis = ReducedBasis::empty(model.dofs());
    let mut trace = GreedyTrace::default();
    let mut selected: Vec<usize> = Vec::new();

    // seed with two strong steps so that the first pair (N, M) = (1, 2) exists
    for _ in 0..2 {
        let errors = training_errors(model, &basis, train, solves)?;
        let (_, idx) = argmax(&errors);
        basis.extend_pod(
            frame,
            &[solves.get(idx).clone()],
            vec![SnapshotLabel::Lagrange { mu: train.points()[idx].clone() }],
            DEFAULT_POD_DROP_TOL,
        )?;
        selected.push(idx);
    }

    loop {
        let t0 = Instant::now();
        let m = basis.dim();
        let n = m - 1;
        let rm = ReducedModel::project(model, &basis)?;
        let deltas = train
            .points()
            .par_iter()
            .map(|mu| {
                let c_m = rm.solve(mu, m)?;
                let c_n = rm.solve(mu, n)?;
                delta_hier(&rm, mu, &c_n, &c_m)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (best, idx) = argmax(&deltas);
        let mu = train.points()[idx].clone();
        let stop = best <= tol || selected.len() >= n_max;
        if !stop && selected.contains(&idx) {
            return Err(Error::DuplicateSelection {
                mu,
                n: selected.len(),
                hint: "consecutive snapshot spaces drive the estimator back to the newest \
                       snapshot; enrich the comparison space instead"
                    .into(),
            });
        }
        let accepted = !stop;
        trace.records.push(GreedyRecord {
            n: selected.len(),
            mu: mu.clone(),
            selector: Selector::HierarchicalEstimator,
            max_value: best,
            theta: None,
            k_n: None,
            t_offline: t0.elapsed().as_secs_f64(),
            accepted,
        });
        if stop {
            return Ok((basis, trace));
        }
        basis.extend_pod(
            frame,
            &[solves.get(idx).clone()],
            vec![SnapshotLabel::Lagrange { mu }],
            DEFAULT_POD_DROP_TOL,
        )?;
        selected.push(idx);
    }
}

/// How much larger the fine space of a nested snapshot pair is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MRule {
    NPlus1,
    NPlus2,
    NPlus3,
}

impl MRule {
    pub fn offset(self) -> usize {
        match self {
            MRule::NPlus1 => 1,
            MRule::NPlus2 => 2,
            MRule::NPlus3 => 3,
        }
    }

    pub fn fine_dim(self, n: usize) -> usize {
        n + self.offset()
    }
}

/// Validates a nested prefix pair `(N, M)` of a greedy-ordered basis; the
/// fine level must fit inside the basis.  The rule type makes `M > N` hold
/// by construction.
pub fn build_lagrange_pair<T: Scalar>(
    basis: &ReducedBasis<T>,
    n: usize,
    rule: MRule,
) -> Result<(usize, usize)> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "the coarse space needs at least one snapshot".into(),
        ));
    }
    let m = rule.fine_dim(n);
    if m > basis.dim() {
        return Err(Error::InvalidConfig(format!(
            "fine level {m} exceeds the basis dimension {}",
            basis.dim()
        )));
    }
    Ok((n, m))
}
