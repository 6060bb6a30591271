//! Lower and upper bounds of the parametric stability constant: a min-θ
//! bound for parametrically coercive problems and a successive-constraint
//! construction whose online cost is independent of the truth dimension.
//!
//! Both the coercivity constant and the squared inf-sup constant are minima
//! of a parameter-weighted sum of Rayleigh quotients,
//! `λ(μ) = min_v Σ_j α_j(μ) (v^H B_j v)/(v^H Ḡ v)`.  The constraint method
//! relaxes the minimum over the unknown joint numerical range to a linear
//! program over a bounding box intersected with exactness constraints at
//! greedily selected parameters.

use nalgebra::DMatrix;

use crate::basis::OrthoFrame;
use crate::error::{Error, Result};
use crate::linalg::dense::hermitian_pencil_eigen;
use crate::linalg::lp::{min_linear_boxed, LpOutcome};
use crate::param::SampleSet;
use crate::scalar::Scalar;
use crate::theta::ThetaFunction;
use crate::truth::TruthModel;

/// Which stability constant the constraint method bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScmMode {
    /// Coercivity constant of a Hermitian operator: `J = Q` terms, one per
    /// affine operator term.
    Coercive,
    /// Squared inf-sup constant through the normal equations
    /// `A(μ)^H Ḡ⁻¹ A(μ)`, affine in products of the operator coefficients:
    /// `Q(Q+1)/2` real terms for real scalars, `Q²` for complex ones.
    InfSupSquared,
}

#[derive(Debug, Clone)]
pub struct ScmConfig {
    pub mode: ScmMode,
    /// Number of nearest exactness constraints entering each linear program.
    pub m_alpha: usize,
    /// Number of nearest training points contributing positivity rows.
    pub m_plus: usize,
    /// Greedy iteration cap.
    pub k_max: usize,
    /// Target for the gap metric `1 - (LB/UB)²`.
    pub gap_tol: f64,
}

impl ScmConfig {
    pub fn new(mode: ScmMode) -> Self {
        Self { mode, m_alpha: 30, m_plus: 20, k_max: 3000, gap_tol: 1e-6 }
    }
}

/// One greedily selected parameter with its exact eigenvalue and the Rayleigh
/// values of the minimizing eigenvector under every term.
#[derive(Debug, Clone)]
pub struct ScmConstraint {
    pub mu: Vec<f64>,
    pub value: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScmHistoryEntry {
    pub k: usize,
    pub mu: Vec<f64>,
    pub gap: f64,
}

/// Offline product of the constraint method; bound queries need only the
/// box, the constraints, and the coefficient functions.
pub struct ScmState<T: Scalar> {
    mode: ScmMode,
    theta_a: Vec<ThetaFunction<T>>,
    box_lower: Vec<f64>,
    box_upper: Vec<f64>,
    constraints: Vec<ScmConstraint>,
    train: SampleSet,
    history: Vec<ScmHistoryEntry>,
    converged: bool,
    config: ScmConfig,
}

/// Dense Hermitian term matrices `B_j` and the reference Gramian; offline
/// only, never stored in the state.
pub struct ScmTerms<T: Scalar> {
    pub b: Vec<DMatrix<T>>,
    pub g: DMatrix<T>,
}

fn hermitian_half<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.adjoint()) * T::from_re(0.5)
}

impl<T: Scalar> ScmTerms<T> {
    pub fn build(model: &TruthModel<T>, frame: &OrthoFrame<T>, mode: ScmMode) -> Result<Self> {
        let g = frame.gram().to_dense();
        let b = match mode {
            ScmMode::Coercive => {
                model.a_terms().iter().map(|a| hermitian_half(&a.to_dense())).collect()
            }
            ScmMode::InfSupSquared => {
                let q = model.q_a();
                let dense: Vec<DMatrix<T>> =
                    model.a_terms().iter().map(|a| a.to_dense()).collect();
                let winv: Vec<DMatrix<T>> =
                    dense.iter().map(|a| frame.cholesky().solve_mat(a)).collect();
                let mut h = Vec::with_capacity(q * q);
                for aq in &dense {
                    for w in &winv {
                        h.push(aq.ad_mul(w));
                    }
                }
                let at = |i: usize, j: usize| &h[i * q + j];
                let mut terms = Vec::new();
                for i in 0..q {
                    terms.push(hermitian_half(at(i, i)));
                }
                for i in 0..q {
                    for j in (i + 1)..q {
                        terms.push(at(i, j) + at(i, j).adjoint());
                        if T::IS_COMPLEX {
                            let imag = T::try_from_parts(0.0, 1.0)
                                .ok_or(Error::ComplexRequired("squared-mode cross terms"))?;
                            terms.push((at(i, j) - at(i, j).adjoint()) * imag);
                        }
                    }
                }
                terms
            }
        };
        Ok(Self { b, g })
    }

    /// Exact `λ(μ) = min_v Σ_j α_j (v^H B_j v)/(v^H Ḡ v)` with the Rayleigh
    /// values of the minimizer under every term.
    pub fn exact_value(&self, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
        assert_eq!(alpha.len(), self.b.len());
        let n = self.g.nrows();
        let mut combined = DMatrix::<T>::zeros(n, n);
        for (a, b) in alpha.iter().zip(&self.b) {
            combined += b * T::from_re(*a);
        }
        let (vals, vecs) = hermitian_pencil_eigen(&combined, &self.g)?;
        let v0 = vecs.column(0).into_owned();
        let denom = v0.dotc(&(&self.g * &v0)).re_f64();
        let y: Vec<f64> =
            self.b.iter().map(|b| v0.dotc(&(b * &v0)).re_f64() / denom).collect();
        Ok((vals[0], y))
    }

    /// Per-term Rayleigh ranges; the box of the linear program.
    pub fn boxes(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut lower = Vec::with_capacity(self.b.len());
        let mut upper = Vec::with_capacity(self.b.len());
        for b in &self.b {
            let (vals, _) = hermitian_pencil_eigen(b, &self.g)?;
            lower.push(vals[0]);
            upper.push(*vals.last().expect("nonempty spectrum"));
        }
        Ok((lower, upper))
    }
}

impl<T: Scalar> ScmState<T> {
    pub fn mode(&self) -> ScmMode {
        self.mode
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn constraints(&self) -> &[ScmConstraint] {
        &self.constraints
    }

    pub fn history(&self) -> &[ScmHistoryEntry] {
        &self.history
    }

    pub fn config(&self) -> &ScmConfig {
        &self.config
    }

    pub fn train(&self) -> &SampleSet {
        &self.train
    }

    pub fn box_bounds(&self) -> (&[f64], &[f64]) {
        (&self.box_lower, &self.box_upper)
    }

    /// Restores a state from raw parts; coefficient functions come from the
    /// model the state was built for.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        mode: ScmMode,
        theta_a: Vec<ThetaFunction<T>>,
        box_lower: Vec<f64>,
        box_upper: Vec<f64>,
        constraints: Vec<ScmConstraint>,
        train: SampleSet,
        history: Vec<ScmHistoryEntry>,
        converged: bool,
        config: ScmConfig,
    ) -> Self {
        Self {
            mode,
            theta_a,
            box_lower,
            box_upper,
            constraints,
            train,
            history,
            converged,
            config,
        }
    }

    /// The real coefficients `α_j(μ)` matching the term order of
    /// [`ScmTerms::build`].
    pub fn coefficient_values(&self, mu: &[f64]) -> Vec<f64> {
        coefficient_values::<T>(&self.theta_a, self.mode, mu)
    }

    fn objective(alpha: &[f64], y: &[f64]) -> f64 {
        alpha.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// Upper bound in the native units of the mode (`β` or `β²`): the best
    /// feasible Rayleigh evaluation among stored constraint vectors;
    /// `+∞` while no constraint exists.
    pub fn raw_upper_bound(&self, mu: &[f64]) -> f64 {
        let alpha = self.coefficient_values(mu);
        self.constraints
            .iter()
            .map(|c| Self::objective(&alpha, &c.y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Lower bound in native units plus a flag for the box-only fallback
    /// (taken when the linear program reports infeasibility, which can only
    /// stem from floating-point degeneracy — the true region is nonempty).
    pub fn raw_lower_bound(&self, mu: &[f64]) -> (f64, bool) {
        let alpha = self.coefficient_values(mu);
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for idx in nearest(&self.constraints, mu, self.config.m_alpha, |c| &c.mu) {
            let c = &self.constraints[idx];
            rows.push((self.coefficient_values(&c.mu), c.value));
        }
        for idx in nearest(self.train.points(), mu, self.config.m_plus, |p| p) {
            rows.push((self.coefficient_values(&self.train.points()[idx]), 0.0));
        }
        match min_linear_boxed(&alpha, &rows, &self.box_lower, &self.box_upper) {
            LpOutcome::Optimal { value, .. } => (value, false),
            LpOutcome::Infeasible => (self.box_only_bound(&alpha), true),
        }
    }

    fn box_only_bound(&self, alpha: &[f64]) -> f64 {
        alpha
            .iter()
            .zip(self.box_lower.iter().zip(&self.box_upper))
            .map(|(a, (lo, hi))| if *a >= 0.0 { a * lo } else { a * hi })
            .sum()
    }

    /// Stability lower bound in `β` units (square root applied in squared
    /// mode, clamped at zero).
    pub fn lower_bound(&self, mu: &[f64]) -> f64 {
        let (raw, _) = self.raw_lower_bound(mu);
        match self.mode {
            ScmMode::Coercive => raw,
            ScmMode::InfSupSquared => raw.max(0.0).sqrt(),
        }
    }

    /// Stability upper bound in `β` units.
    pub fn upper_bound(&self, mu: &[f64]) -> f64 {
        let raw = self.raw_upper_bound(mu);
        match self.mode {
            ScmMode::Coercive => raw,
            ScmMode::InfSupSquared => raw.max(0.0).sqrt(),
        }
    }

    /// Convergence metric `1 - (LB/UB)²`, clamped into `[0, 1]`.
    pub fn gap(&self, mu: &[f64]) -> f64 {
        let ub = self.upper_bound(mu);
        if !ub.is_finite() {
            return 1.0;
        }
        if ub <= 0.0 {
            return 0.0;
        }
        let lb = self.lower_bound(mu).max(0.0);
        (1.0 - (lb / ub).powi(2)).clamp(0.0, 1.0)
    }
}

fn coefficient_values<T: Scalar>(
    theta_a: &[ThetaFunction<T>],
    mode: ScmMode,
    mu: &[f64],
) -> Vec<f64> {
    let vals: Vec<T> = theta_a.iter().map(|t| t.eval(mu)).collect();
    match mode {
        ScmMode::Coercive => vals.iter().map(|v| v.re_f64()).collect(),
        ScmMode::InfSupSquared => {
            let q = vals.len();
            let mut alpha = Vec::new();
            for v in &vals {
                alpha.push(v.abs_f64().powi(2));
            }
            for i in 0..q {
                for j in (i + 1)..q {
                    let z = vals[i].conjugate() * vals[j];
                    alpha.push(z.re_f64());
                    if T::IS_COMPLEX {
                        alpha.push(z.im_f64());
                    }
                }
            }
            alpha
        }
    }
}

/// Indices of the (at most) `count` entries of `items` closest to `mu`.
fn nearest<S>(items: &[S], mu: &[f64], count: usize, point: impl Fn(&S) -> &[f64]) -> Vec<usize> {
    let count = count.min(items.len());
    if count == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(f64, usize)> = items
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d: f64 = point(s).iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
            (d, i)
        })
        .collect();
    let by_dist_then_idx =
        |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    scored.select_nth_unstable_by(count - 1, by_dist_then_idx);
    scored.truncate(count);
    scored.sort_by(by_dist_then_idx);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Greedy constraint selection until the worst training gap drops below the
/// tolerance or the iteration cap is hit.  A cap hit leaves the state usable
/// and marked unconverged.
pub fn scm_offline<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    train: &SampleSet,
    cfg: &ScmConfig,
) -> Result<ScmState<T>> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("constraint training set is empty".into()));
    }
    let terms = ScmTerms::build(model, frame, cfg.mode)?;
    let (box_lower, box_upper) = terms.boxes()?;
    let mut state = ScmState {
        mode: cfg.mode,
        theta_a: model.theta_a().to_vec(),
        box_lower,
        box_upper,
        constraints: Vec::new(),
        train: train.clone(),
        history: Vec::new(),
        converged: false,
        config: cfg.clone(),
    };

    let mut taken = vec![false; train.len()];
    for k in 1..=cfg.k_max {
        // Worst gap over the training set drives convergence; selection
        // skips points that are already exactness constraints (in exact
        // arithmetic their gap is zero, so a large residual gap there is
        // cancellation noise the linear program cannot reduce).  Ties
        // resolve to the lowest index.
        let mut worst = f64::NEG_INFINITY;
        let mut sel: Option<usize> = None;
        let mut sel_gap = f64::NEG_INFINITY;
        for (i, mu) in train.points().iter().enumerate() {
            let g = state.gap(mu);
            if g > worst {
                worst = g;
            }
            if !taken[i] && g > sel_gap {
                sel_gap = g;
                sel = Some(i);
            }
        }
        if worst <= cfg.gap_tol {
            state.converged = true;
            break;
        }
        // every training point is already a constraint: nothing left to add
        let Some(worst_idx) = sel else { break };
        taken[worst_idx] = true;
        let mu_sel = train.points()[worst_idx].clone();
        let alpha = state.coefficient_values(&mu_sel);
        let (value, y) = terms.exact_value(&alpha)?;
        state.constraints.push(ScmConstraint { mu: mu_sel.clone(), value, y });
        state.history.push(ScmHistoryEntry { k, mu: mu_sel, gap: worst });
    }
    Ok(state)
}

/// Parametric-coercivity lower bound
/// `β_LB(μ) = beta_ref · min_q ϑ_q(μ)/ϑ_q(μ_ref)`; requires every
/// coefficient positive at both parameters (and positive semidefinite
/// operator terms, which is the caller's responsibility).
pub fn min_theta_lower_bound<T: Scalar>(
    model: &TruthModel<T>,
    mu: &[f64],
    mu_ref: &[f64],
    beta_ref: f64,
) -> Result<f64> {
    if !(beta_ref > 0.0) {
        return Err(Error::NonpositiveBeta(beta_ref));
    }
    let mut worst = f64::INFINITY;
    for theta in model.theta_a() {
        let num = theta.eval(mu).re_f64();
        let den = theta.eval(mu_ref).re_f64();
        if !(num > 0.0) || !(den > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "min-θ bound needs positive coefficients, got {num} at μ and {den} at μ_ref"
            )));
        }
        worst = worst.min(num / den);
    }
    Ok(beta_ref * worst)
}
