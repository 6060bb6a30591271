//! Saturation constant of the hierarchical estimator: the worst ratio of
//! fine-level to coarse-level reduction errors over a training set, computed
//! either by direct scan or by Dinkelbach's parametric iteration.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::basis::ReducedBasis;
use crate::error::{Error, Result};
use crate::param::{exclusion_tol, partition_positive, SampleSet};
use crate::reduced::ReducedModel;
use crate::scalar::Scalar;
use crate::truth::TruthModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaMethod {
    /// Direct scan of `max_i f_i / g_i`.
    TrainRatio,
    /// Parametric iteration on `F(q) = max_i (f_i - q g_i)`.
    Dinkelbach,
}

/// Saturation estimate over one training set.
#[derive(Debug, Clone)]
pub struct SaturationResult {
    /// `Θ`: the maximal ratio found.
    pub theta: f64,
    /// Maximal ratio per partition subset.
    pub per_subset: Vec<f64>,
    /// Dinkelbach iterate sequence per subset (empty for the direct scan).
    pub iterates: Vec<Vec<f64>>,
    /// Index into the original training set attaining `theta`.
    pub argmax_index: usize,
    /// `theta < 1`, the condition under which certification is possible.
    pub valid: bool,
    pub method: ThetaMethod,
    /// Number of training points excluded for a vanishing denominator.
    pub excluded: usize,
}

/// `max_i f_i / g_i` with the attaining index; all `g_i` must be positive.
pub fn max_ratio(f: &[f64], g: &[f64]) -> (f64, usize) {
    assert_eq!(f.len(), g.len());
    assert!(!f.is_empty());
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for i in 0..f.len() {
        debug_assert!(g[i] > 0.0);
        let r = f[i] / g[i];
        if r > best {
            best = r;
            idx = i;
        }
    }
    (best, idx)
}

/// Dinkelbach iteration for `max_i f_i / g_i` over positive denominators.
///
/// Starting from `q0` (which must not exceed the maximum; `0` always works
/// for nonnegative numerators), each step evaluates
/// `F(q) = max_i (f_i - q g_i)` and jumps to the ratio of the argmax.  The
/// iterates are strictly increasing members of the finite ratio set, so the
/// loop terminates at the exact maximum after at most one step per distinct
/// ratio.  Returns `(max ratio, attaining index, iterate sequence)`.
pub fn dinkelbach_max_ratio(f: &[f64], g: &[f64], q0: f64) -> (f64, usize, Vec<f64>) {
    assert_eq!(f.len(), g.len());
    assert!(!f.is_empty());
    let mut q = q0;
    let mut iterates = vec![q0];
    let mut q_idx: Option<usize> = None;
    for _ in 0..=f.len() + 1 {
        let mut best_val = f64::NEG_INFINITY;
        let mut best_i = 0;
        for i in 0..f.len() {
            debug_assert!(g[i] > 0.0);
            let v = f[i] - q * g[i];
            if v > best_val {
                best_val = v;
                best_i = i;
            }
        }
        if q_idx.is_none() {
            q_idx = Some(best_i);
        }
        let ratio = f[best_i] / g[best_i];
        if best_val <= 0.0 || ratio <= q {
            // F(q) <= 0 at a member of the ratio set: q is the maximum.
            // A non-increasing ratio can only be floating-point stall.
            break;
        }
        q = ratio;
        q_idx = Some(best_i);
        iterates.push(q);
    }
    (q, q_idx.expect("at least one candidate"), iterates)
}

/// Default relative noise floor for error denominators: reduction errors
/// below this fraction of the solution scale are round-off, not information.
/// Backward-stable truth solves leave relative errors of order
/// `condition · machine-eps`; at desk-scale conditioning this floor keeps a
/// three-order safety margin above that.
pub const NOISE_FLOOR_REL: f64 = 1e-12;

impl SaturationResult {
    /// The degenerate result for a training set whose denominators all sit
    /// below the noise floor: both reduction errors are unresolvable at
    /// solver precision, so the ratio constant is vacuously zero.
    pub fn vacuous(train_len: usize, method: ThetaMethod) -> Self {
        Self {
            theta: 0.0,
            per_subset: Vec::new(),
            iterates: Vec::new(),
            argmax_index: 0,
            valid: true,
            method,
            excluded: train_len,
        }
    }
}

/// Computes the saturation constant from per-point numerators `f` (fine-level
/// errors) and denominators `g` (coarse-level errors) aligned with `train`.
/// Points whose denominator sits at solver-noise level — relative to the
/// largest denominator or below the absolute `noise_floor` — are excluded
/// before the ratio search, because their ratios measure round-off only.
pub fn saturation_from_samples(
    train: &SampleSet,
    f: &[f64],
    g: &[f64],
    method: ThetaMethod,
    q0: f64,
    noise_floor: f64,
) -> Result<SaturationResult> {
    if f.len() != g.len() || f.len() != train.len() {
        return Err(Error::DimensionMismatch(
            "numerators, denominators, and training points must align".into(),
        ));
    }
    if noise_floor > 0.0 && g.iter().all(|&x| x <= noise_floor) {
        return Ok(SaturationResult::vacuous(train.len(), method));
    }
    let tol = exclusion_tol(g).max(noise_floor);
    let part = partition_positive(train, g, tol)?;
    let mut per_subset = Vec::new();
    let mut iterates = Vec::new();
    let mut theta = f64::NEG_INFINITY;
    let mut argmax_index = 0;
    for indices in part.subset_indices() {
        let f_sub: Vec<f64> = indices.iter().map(|&i| f[i]).collect();
        let g_sub: Vec<f64> = indices.iter().map(|&i| g[i]).collect();
        let (value, local_idx, iters) = match method {
            ThetaMethod::TrainRatio => {
                let (v, i) = max_ratio(&f_sub, &g_sub);
                (v, i, Vec::new())
            }
            ThetaMethod::Dinkelbach => dinkelbach_max_ratio(&f_sub, &g_sub, q0),
        };
        if value > theta {
            theta = value;
            argmax_index = indices[local_idx];
        }
        per_subset.push(value);
        iterates.push(iters);
    }
    Ok(SaturationResult {
        theta,
        per_subset,
        iterates,
        argmax_index,
        valid: theta.is_finite() && theta < 1.0,
        method,
        excluded: part.excluded().len(),
    })
}

/// Per-point reduction errors of the coarse and fine surrogates against the
/// truth: returns `(f, g)` with `f_i = ‖u(μ_i) - u_M(μ_i)‖_{X(μ_i)}` and
/// `g_i = ‖u(μ_i) - u_N(μ_i)‖_{X(μ_i)}`.  `truths` must align with `train`.
pub fn two_level_errors<T: Scalar>(
    model: &TruthModel<T>,
    rm: &ReducedModel<T>,
    basis: &ReducedBasis<T>,
    train: &SampleSet,
    truths: &[DVector<T>],
    n: usize,
    m: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if truths.len() != train.len() {
        return Err(Error::DimensionMismatch(
            "one truth solution per training point is required".into(),
        ));
    }
    if n > m || m > rm.dim() {
        return Err(Error::InvalidConfig(format!(
            "levels must satisfy n <= m <= basis dimension, got n={n}, m={m}, dim={}",
            rm.dim()
        )));
    }
    let pairs: Vec<Result<(f64, f64)>> = train
        .points()
        .par_iter()
        .zip(truths.par_iter())
        .map(|(mu, u)| {
            let mu_norm = model.norm_parameter(mu);
            let c_m = rm.solve(mu, m)?;
            let c_n = rm.solve(mu, n)?;
            let e_m = model.x_norm(&(u - rm.reconstruct(basis, &c_m)), mu_norm)?;
            let e_n = model.x_norm(&(u - rm.reconstruct(basis, &c_n)), mu_norm)?;
            Ok((e_m, e_n))
        })
        .collect();
    let mut f = Vec::with_capacity(train.len());
    let mut g = Vec::with_capacity(train.len());
    for p in pairs {
        let (e_m, e_n) = p?;
        f.push(e_m);
        g.push(e_n);
    }
    Ok((f, g))
}

/// Like [`two_level_errors`], but the coarse space is the span of the
/// columns of `map_n` (coordinates over the leading rows of the basis)
/// instead of a leading column prefix.  Used when snapshot and enrichment
/// columns interleave, so the plain snapshot space is not a prefix.
pub fn two_level_errors_mapped<T: Scalar>(
    model: &TruthModel<T>,
    rm: &ReducedModel<T>,
    basis: &ReducedBasis<T>,
    train: &SampleSet,
    truths: &[DVector<T>],
    map_n: &nalgebra::DMatrix<T>,
    m: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if truths.len() != train.len() {
        return Err(Error::DimensionMismatch(
            "one truth solution per training point is required".into(),
        ));
    }
    if map_n.nrows() > rm.dim() || m > rm.dim() {
        return Err(Error::InvalidConfig(format!(
            "coarse map has {} rows and the fine level is {}, but the basis dimension is {}",
            map_n.nrows(),
            m,
            rm.dim()
        )));
    }
    let pairs: Vec<Result<(f64, f64)>> = train
        .points()
        .par_iter()
        .zip(truths.par_iter())
        .map(|(mu, u)| {
            let mu_norm = model.norm_parameter(mu);
            let c_m = rm.solve(mu, m)?;
            let c_n = rm.solve_mapped(mu, map_n)?;
            let e_m = model.x_norm(&(u - rm.reconstruct(basis, &c_m)), mu_norm)?;
            let e_n = model.x_norm(&(u - rm.reconstruct(basis, &c_n)), mu_norm)?;
            Ok((e_m, e_n))
        })
        .collect();
    let mut f = Vec::with_capacity(train.len());
    let mut g = Vec::with_capacity(train.len());
    for p in pairs {
        let (e_m, e_n) = p?;
        f.push(e_m);
        g.push(e_n);
    }
    Ok((f, g))
}

/// Largest truth-solution norm over the training set; the reference scale
/// for the absolute denominator noise floor.
pub fn truth_scale<T: Scalar>(
    model: &TruthModel<T>,
    train: &SampleSet,
    truths: &[DVector<T>],
) -> Result<f64> {
    let norms = train
        .points()
        .par_iter()
        .zip(truths.par_iter())
        .map(|(mu, u)| model.x_norm(u, model.norm_parameter(mu)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// Full saturation computation for the `(n, m)` level pair.  Denominators
/// below `NOISE_FLOOR_REL` times the largest truth norm are excluded.
#[allow(clippy::too_many_arguments)]
pub fn compute_theta<T: Scalar>(
    model: &TruthModel<T>,
    rm: &ReducedModel<T>,
    basis: &ReducedBasis<T>,
    train: &SampleSet,
    truths: &[DVector<T>],
    n: usize,
    m: usize,
    method: ThetaMethod,
) -> Result<SaturationResult> {
    let (f, g) = two_level_errors(model, rm, basis, train, truths, n, m)?;
    let floor = NOISE_FLOOR_REL * truth_scale(model, train, truths)?;
    saturation_from_samples(train, &f, &g, method, 0.0, floor)
}
