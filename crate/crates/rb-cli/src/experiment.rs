//! Offline/online experiment driver: builds the configured problem, runs the
//! selected sampling strategy, persists artifacts with a manifest, and
//! evaluates estimators on a held-out test set into CSV reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rb_core::basis::{OrthoFrame, ReducedBasis};
use rb_core::estimator::{delta_hier, delta_std, ResidualData};
use rb_core::greedy::{
    build_lagrange_pair, snapshot_coordinate_map, strong_greedy, weak_greedy_hier,
    weak_greedy_std, BetaSource, GreedyTrace, TrainingSolves,
};
use rb_core::io::Container;
use rb_core::param::{random_sample, tensor_grid, SampleSet};
use rb_core::problems::{
    build_helmholtz_1d, build_thermal_block, HelmholtzConfig, ThermalBlockConfig,
};
use rb_core::reduced::ReducedModel;
use rb_core::saturation::{
    saturation_from_samples, truth_scale, two_level_errors, ThetaMethod, NOISE_FLOOR_REL,
};
use rb_core::scm::{min_theta_lower_bound, scm_offline, ScmState};
use rb_core::truth::TruthModel;
use rb_core::Scalar;

use crate::config::{
    BetaSourceSpec, ExperimentConfig, MRuleSpec, ProblemKind, SampleKind, SamplingKind,
};
use crate::report::{
    write_eval_csv, write_figure_dat, write_scatter_csv, write_scm_bounds_csv,
    write_scm_history_csv, write_theta_csv, write_theta_log_csv, write_trace_csv, EvalRow,
    ThetaLogRow, ThetaRow,
};
use crate::timing::median_time;

/// Tag used in file names for the two-level greedy's own estimator
/// configuration (which has no prefix-pair rule).
const HIER_TAG: &str = "hier";

// ---------------------------------------------------------------------------
// Layout and manifest
// ---------------------------------------------------------------------------

/// File layout under `<out root>/<experiment name>/`.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(out_root: &Path, name: &str) -> Self {
        Self { root: out_root.join(name) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn artifacts(&self) -> PathBuf {
        self.root.join("artifacts.rbx")
    }

    pub fn trace(&self) -> PathBuf {
        self.root.join("trace.csv")
    }

    pub fn theta_table(&self, tag: &str) -> PathBuf {
        self.root.join(format!("theta_{tag}.csv"))
    }

    pub fn eval_csv(&self, tag: &str) -> PathBuf {
        self.root.join(format!("eval_{tag}.csv"))
    }

    pub fn figure_dat(&self, tag: &str) -> PathBuf {
        self.root.join(format!("figure_{tag}.dat"))
    }

    pub fn scatter_csv(&self, tag: &str) -> PathBuf {
        self.root.join(format!("scatter_{tag}.csv"))
    }

    pub fn scm_history(&self) -> PathBuf {
        self.root.join("scm_history.csv")
    }

    pub fn scm_bounds(&self) -> PathBuf {
        self.root.join("scm_bounds.csv")
    }
}

/// Resolution order for the output root: command-line flag, `RBMOR_OUT`,
/// config `[output] dir`, then `./rbmor-out`.
pub fn resolve_out_root(cli_out: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Ok(v) = std::env::var("RBMOR_OUT") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    if let Some(d) = &cfg.output.dir {
        return d.clone();
    }
    PathBuf::from("rbmor-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub app_version: String,
    /// False while the offline phase is running; partial artifacts are
    /// thereby marked incomplete.
    pub completed: bool,
    pub offline_seconds: f64,
}

impl Manifest {
    fn read(path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

// ---------------------------------------------------------------------------
// Problem construction
// ---------------------------------------------------------------------------

pub enum Problem {
    Thermal(TruthModel<f64>),
    Wave(TruthModel<Complex<f64>>),
}

pub fn build_problem(cfg: &ExperimentConfig) -> anyhow::Result<Problem> {
    match cfg.problem.kind {
        ProblemKind::ThermalBlock => {
            let cells = cfg.problem.cells.expect("validated");
            let pc = ThermalBlockConfig::new(cells).map_err(anyhow::Error::new)?;
            Ok(Problem::Thermal(build_thermal_block::<f64>(&pc).map_err(anyhow::Error::new)?))
        }
        ProblemKind::Helmholtz => {
            let pc = HelmholtzConfig::new(
                cfg.problem.elements.expect("validated"),
                cfg.problem.degree.expect("validated"),
            )
            .map_err(anyhow::Error::new)?;
            Ok(Problem::Wave(
                build_helmholtz_1d::<Complex<f64>>(&pc).map_err(anyhow::Error::new)?,
            ))
        }
    }
}

fn make_frame<T: Scalar>(
    model: &TruthModel<T>,
    cfg: &ExperimentConfig,
) -> anyhow::Result<OrthoFrame<T>> {
    let frame = if model.x_gram().is_affine() {
        let mu_bar = cfg
            .problem
            .mu_bar
            .clone()
            .unwrap_or_else(|| cfg.domain().expect("validated").midpoint());
        OrthoFrame::new(model, Some(&mu_bar))
    } else {
        OrthoFrame::new(model, None)
    };
    frame.map_err(anyhow::Error::new)
}

fn make_train(cfg: &ExperimentConfig) -> anyhow::Result<SampleSet> {
    let dom = cfg.domain()?;
    let set = match cfg.training.kind {
        SampleKind::Grid => {
            tensor_grid(&dom, cfg.training.n_per_dim.as_ref().expect("validated"))
        }
        SampleKind::Random => random_sample(
            &dom,
            cfg.training.n.expect("validated"),
            cfg.training.seed.expect("validated"),
        ),
    };
    set.map_err(anyhow::Error::new)
}

fn make_test_set(cfg: &ExperimentConfig) -> anyhow::Result<SampleSet> {
    random_sample(&cfg.domain()?, cfg.test.n, cfg.test.seed).map_err(anyhow::Error::new)
}

// ---------------------------------------------------------------------------
// Offline phase
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OfflineOutcome {
    /// Artifacts for this config hash already exist and were left untouched.
    Skipped,
    /// Artifacts written; payload is the basis dimension.
    Completed { basis_dim: usize },
}

pub fn run_offline(
    cfg: &ExperimentConfig,
    out_root: &Path,
    force: bool,
) -> anyhow::Result<OfflineOutcome> {
    match build_problem(cfg)? {
        Problem::Thermal(m) => offline_t(&m, cfg, out_root, force),
        Problem::Wave(m) => offline_t(&m, cfg, out_root, force),
    }
}

fn offline_t<T: Scalar>(
    model: &TruthModel<T>,
    cfg: &ExperimentConfig,
    out_root: &Path,
    force: bool,
) -> anyhow::Result<OfflineOutcome> {
    let layout = Layout::new(out_root, &cfg.experiment.name);
    let hash = cfg.hash();
    if !force {
        if let Some(m) = Manifest::read(&layout.manifest()) {
            if m.completed && m.config_hash == hash && layout.artifacts().exists() {
                return Ok(OfflineOutcome::Skipped);
            }
        }
    }
    let mut manifest = Manifest {
        config_hash: hash,
        app_version: env!("CARGO_PKG_VERSION").to_string(),
        completed: false,
        offline_seconds: 0.0,
    };
    manifest.write(&layout.manifest())?;

    let t0 = Instant::now();
    let frame = make_frame(model, cfg)?;
    let train = make_train(cfg)?;

    // a converged stability state is a prerequisite of the residual greedy
    let scm_state: Option<ScmState<T>> = if cfg.estimators.beta_source == BetaSourceSpec::Scm {
        Some(scm_offline(model, &frame, &train, &cfg.scm.to_core()).map_err(anyhow::Error::new)?)
    } else {
        None
    };

    let mut container = Container::new();
    let sampling = &cfg.sampling;
    let (basis, trace, solves): (ReducedBasis<T>, GreedyTrace, TrainingSolves<T>) =
        match sampling.kind {
            SamplingKind::Strong => {
                let solves = TrainingSolves::compute(model, &train).map_err(anyhow::Error::new)?;
                let (basis, trace) =
                    strong_greedy(model, &frame, &train, &solves, sampling.n_max, sampling.tol)
                        .map_err(anyhow::Error::new)?;
                (basis, trace, solves)
            }
            SamplingKind::WeakStd => {
                let source = beta_source_from(cfg, scm_state.as_ref())?;
                let (basis, trace) = weak_greedy_std(
                    model,
                    &frame,
                    &train,
                    sampling.n_max,
                    sampling.tol,
                    &source,
                )
                .map_err(anyhow::Error::new)?;
                // training solves still back the saturation tables
                let solves = TrainingSolves::compute(model, &train).map_err(anyhow::Error::new)?;
                (basis, trace, solves)
            }
            SamplingKind::WeakHier => {
                let solves = TrainingSolves::compute(model, &train).map_err(anyhow::Error::new)?;
                let out = weak_greedy_hier(
                    model,
                    &frame,
                    &train,
                    &solves,
                    sampling.n_max,
                    sampling.tol,
                    sampling.theta_tol,
                    sampling.k_max,
                )
                .map_err(anyhow::Error::new)?;
                container.put_matrix("hier/map", &out.lagrange_map);
                let orders: Vec<i64> = out.orders.iter().map(|&k| i64::from(k)).collect();
                container.put_ints("hier/orders", &orders);
                container.put_reals("hier/theta", &[out.theta.theta]);
                container
                    .put_samples("hier/selected", &SampleSet::explicit(out.snapshot_params));
                (out.basis, out.trace, solves)
            }
        };

    let rm = ReducedModel::project(model, &basis).map_err(anyhow::Error::new)?;

    // saturation tables: prefix pairs per rule, or the greedy's own log
    match sampling.kind {
        SamplingKind::WeakHier => {
            let rows = theta_log_rows(&trace);
            write_theta_log_csv(&layout.theta_table(HIER_TAG), &rows)?;
            let flat: Vec<f64> = rows
                .iter()
                .flat_map(|r| {
                    [r.n as f64, f64::from(r.k_n), r.theta, f64::from(u8::from(r.valid))]
                })
                .collect();
            container.put_matrix(
                "theta_log",
                &DMatrix::from_row_slice(rows.len(), 4, &flat),
            );
        }
        _ => {
            for rule in &cfg.estimators.m_rules {
                let rows = theta_table_rows(model, &rm, &basis, &train, &solves, *rule)
                    .map_err(anyhow::Error::new)?;
                write_theta_csv(&layout.theta_table(rule.tag()), &rows)?;
                let flat: Vec<f64> = rows
                    .iter()
                    .flat_map(|r| {
                        [r.n as f64, r.m as f64, r.theta, f64::from(u8::from(r.valid))]
                    })
                    .collect();
                container.put_matrix(
                    &format!("theta_table/{}", rule.tag()),
                    &DMatrix::from_row_slice(rows.len(), 4, &flat),
                );
            }
        }
    }

    write_trace_csv(&layout.trace(), &trace, cfg.output.deterministic)?;

    container.put_basis("basis", &basis).map_err(anyhow::Error::new)?;
    container.put_reduced("reduced", &rm);
    container.put_samples("train", &train);
    container.put_samples(
        "selected",
        &SampleSet::explicit(
            trace
                .records
                .iter()
                .filter(|r| r.accepted)
                .map(|r| r.mu.clone())
                .collect(),
        ),
    );
    container.put_text("sampling", sampling_tag(sampling.kind));
    if let Some(state) = &scm_state {
        container.put_scm("scm", state);
        write_scm_history_csv(&layout.scm_history(), state)?;
    }
    container.save(&layout.artifacts()).map_err(anyhow::Error::new)?;

    manifest.completed = true;
    manifest.offline_seconds = t0.elapsed().as_secs_f64();
    manifest.write(&layout.manifest())?;
    Ok(OfflineOutcome::Completed { basis_dim: basis.dim() })
}

fn sampling_tag(kind: SamplingKind) -> &'static str {
    match kind {
        SamplingKind::Strong => "strong",
        SamplingKind::WeakStd => "weak_std",
        SamplingKind::WeakHier => "weak_hier",
    }
}

fn beta_source_from<'a, T: Scalar>(
    cfg: &ExperimentConfig,
    scm: Option<&'a ScmState<T>>,
) -> anyhow::Result<BetaSource<'a, T>> {
    Ok(match cfg.estimators.beta_source {
        BetaSourceSpec::Exact => BetaSource::ExactEig,
        BetaSourceSpec::Scm => {
            BetaSource::Scm(scm.expect("stability state computed for this source"))
        }
        BetaSourceSpec::MinTheta => BetaSource::MinTheta {
            mu_ref: cfg.estimators.mu_ref.clone().expect("validated"),
            beta_ref: cfg.estimators.beta_ref.expect("validated"),
        },
    })
}

/// Saturation constants of the nested prefix pairs `(N, N + offset)` over
/// the training set.
fn theta_table_rows<T: Scalar>(
    model: &TruthModel<T>,
    rm: &ReducedModel<T>,
    basis: &ReducedBasis<T>,
    train: &SampleSet,
    solves: &TrainingSolves<T>,
    rule: MRuleSpec,
) -> rb_core::Result<Vec<ThetaRow>> {
    let offset = rule.to_rule().offset();
    let mut rows = Vec::new();
    if basis.dim() < offset + 1 {
        return Ok(rows);
    }
    let floor = NOISE_FLOOR_REL * truth_scale(model, train, solves.all())?;
    for n in 1..=basis.dim() - offset {
        let (n, m) = build_lagrange_pair(basis, n, rule.to_rule())?;
        let (f, g) = two_level_errors(model, rm, basis, train, solves.all(), n, m)?;
        let sat = saturation_from_samples(train, &f, &g, ThetaMethod::TrainRatio, 0.0, floor)?;
        rows.push(ThetaRow { n, m, theta: sat.theta, valid: sat.valid });
    }
    Ok(rows)
}

fn theta_log_rows(trace: &GreedyTrace) -> Vec<ThetaLogRow> {
    trace
        .records
        .iter()
        .filter_map(|r| {
            let theta = r.theta?;
            Some(ThetaLogRow { n: r.n, k_n: r.k_n.unwrap_or(0), theta, valid: theta < 1.0 })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Online phase
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct EvalSummary {
    /// (file tag, rows) per estimator configuration.
    pub reports: Vec<(String, Vec<EvalRow>)>,
}

/// Loads artifacts and evaluates estimators on the held-out test set.  When
/// `with_scatter` is set, per-evaluation scatter files are written as well.
pub fn run_eval(
    cfg: &ExperimentConfig,
    out_root: &Path,
    with_scatter: bool,
) -> anyhow::Result<EvalSummary> {
    match build_problem(cfg)? {
        Problem::Thermal(m) => eval_t(&m, cfg, out_root, with_scatter),
        Problem::Wave(m) => eval_t(&m, cfg, out_root, with_scatter),
    }
}

struct LoadedArtifacts<T: Scalar> {
    basis: ReducedBasis<T>,
    rm: ReducedModel<T>,
    scm: Option<ScmState<T>>,
    selected: Vec<Vec<f64>>,
    /// Saturation constant per coarse dimension, from the stored tables
    /// (`None` entry: pair undefined or constant invalid).
    theta_by_n: std::collections::HashMap<(String, usize), f64>,
}

fn load_artifacts<T: Scalar>(
    model: &TruthModel<T>,
    cfg: &ExperimentConfig,
    layout: &Layout,
) -> anyhow::Result<LoadedArtifacts<T>> {
    let manifest = Manifest::read(&layout.manifest())
        .with_context(|| format!("no manifest under {}; run `offline` first", layout.root().display()))?;
    if !manifest.completed {
        bail!("offline artifacts under {} are marked incomplete", layout.root().display());
    }
    if manifest.config_hash != cfg.hash() {
        bail!(
            "artifacts under {} were built from a different config; rerun `offline` (or `offline --force`)",
            layout.root().display()
        );
    }
    let container = Container::load(&layout.artifacts()).map_err(anyhow::Error::new)?;
    let stored = container.get_text("sampling").map_err(anyhow::Error::new)?;
    if stored != sampling_tag(cfg.sampling.kind) {
        bail!("artifacts hold a {stored} run, config asks for {}", sampling_tag(cfg.sampling.kind));
    }
    let basis = container.get_basis::<T>("basis").map_err(anyhow::Error::new)?;
    let rm = container.get_reduced("reduced", model).map_err(anyhow::Error::new)?;
    let scm = if container.contains("scm/meta") {
        Some(container.get_scm("scm", model).map_err(anyhow::Error::new)?)
    } else {
        None
    };
    let selected_key =
        if cfg.sampling.kind == SamplingKind::WeakHier { "hier/selected" } else { "selected" };
    let selected = container
        .get_samples(selected_key)
        .map_err(anyhow::Error::new)?
        .points()
        .to_vec();

    let mut theta_by_n = std::collections::HashMap::new();
    match cfg.sampling.kind {
        SamplingKind::WeakHier => {
            let log = container.get_matrix::<f64>("theta_log").map_err(anyhow::Error::new)?;
            for i in 0..log.nrows() {
                if log[(i, 3)] != 0.0 {
                    theta_by_n.insert((HIER_TAG.to_string(), log[(i, 0)] as usize), log[(i, 2)]);
                }
            }
        }
        _ => {
            for rule in &cfg.estimators.m_rules {
                let table = container
                    .get_matrix::<f64>(&format!("theta_table/{}", rule.tag()))
                    .map_err(anyhow::Error::new)?;
                for i in 0..table.nrows() {
                    if table[(i, 3)] != 0.0 {
                        theta_by_n
                            .insert((rule.tag().to_string(), table[(i, 0)] as usize), table[(i, 2)]);
                    }
                }
            }
        }
    }
    Ok(LoadedArtifacts { basis, rm, scm, selected, theta_by_n })
}

fn beta_lower_bound<T: Scalar>(
    model: &TruthModel<T>,
    frame: &OrthoFrame<T>,
    cfg: &ExperimentConfig,
    scm: Option<&ScmState<T>>,
    mu: &[f64],
) -> anyhow::Result<f64> {
    Ok(match cfg.estimators.beta_source {
        BetaSourceSpec::Exact => {
            model.stability_constants_wrt(mu, frame.gram()).map_err(anyhow::Error::new)?.beta
        }
        BetaSourceSpec::Scm => scm
            .with_context(|| "no stability state in the artifacts")?
            .lower_bound(mu),
        BetaSourceSpec::MinTheta => min_theta_lower_bound(
            model,
            mu,
            cfg.estimators.mu_ref.as_ref().expect("validated"),
            cfg.estimators.beta_ref.expect("validated"),
        )
        .map_err(anyhow::Error::new)?,
    })
}

/// One estimator configuration evaluated per test parameter and coarse
/// dimension: (tag, coarse `n`, map for the coarse solve, fine `m`).
struct PairPlan<T: Scalar> {
    tag: String,
    /// (n reported, coarse map (None: plain prefix), fine dimension)
    pairs: Vec<(usize, Option<DMatrix<T>>, usize)>,
}

fn eval_t<T: Scalar>(
    model: &TruthModel<T>,
    cfg: &ExperimentConfig,
    out_root: &Path,
    with_scatter: bool,
) -> anyhow::Result<EvalSummary> {
    let layout = Layout::new(out_root, &cfg.experiment.name);
    let art = load_artifacts(model, cfg, &layout)?;
    let frame = make_frame(model, cfg)?;
    let rd = ResidualData::build(model, &art.basis, &frame).map_err(anyhow::Error::new)?;
    let test = make_test_set(cfg)?;

    // estimator configurations under evaluation
    let mut plans: Vec<PairPlan<T>> = Vec::new();
    match cfg.sampling.kind {
        SamplingKind::WeakHier => {
            let snapshots: Vec<DVector<T>> = art
                .selected
                .iter()
                .map(|mu| model.truth_solve(mu))
                .collect::<rb_core::Result<_>>()
                .map_err(anyhow::Error::new)?;
            let m = art.basis.dim();
            let pairs = (1..=snapshots.len())
                .map(|n| {
                    let map = snapshot_coordinate_map(&art.basis, &frame, &snapshots[..n]);
                    (n, Some(map), m)
                })
                .collect();
            plans.push(PairPlan { tag: HIER_TAG.to_string(), pairs });
        }
        _ => {
            for rule in &cfg.estimators.m_rules {
                let offset = rule.to_rule().offset();
                if art.basis.dim() < offset + 1 {
                    plans.push(PairPlan { tag: rule.tag().to_string(), pairs: Vec::new() });
                    continue;
                }
                let pairs =
                    (1..=art.basis.dim() - offset).map(|n| (n, None, n + offset)).collect();
                plans.push(PairPlan { tag: rule.tag().to_string(), pairs });
            }
        }
    }

    let mut summary = EvalSummary::default();
    for plan in &plans {
        let rows = eval_plan(model, cfg, &frame, &art, &rd, &test, plan)?;
        write_eval_csv(&layout.eval_csv(&plan.tag), &rows)?;
        write_figure_dat(&layout.figure_dat(&plan.tag), &rows)?;
        if with_scatter {
            write_scatter_csv(&layout.scatter_csv(&plan.tag), &rows)?;
        }
        summary.reports.push((plan.tag.clone(), rows));
    }
    Ok(summary)
}

fn eval_plan<T: Scalar>(
    model: &TruthModel<T>,
    cfg: &ExperimentConfig,
    frame: &OrthoFrame<T>,
    art: &LoadedArtifacts<T>,
    rd: &ResidualData<T>,
    test: &SampleSet,
    plan: &PairPlan<T>,
) -> anyhow::Result<Vec<EvalRow>> {
    let rm = &art.rm;
    // values first, in parallel over the test set
    let mut rows: Vec<EvalRow> = test
        .points()
        .par_iter()
        .map(|mu| -> anyhow::Result<Vec<EvalRow>> {
            let u = model.truth_solve(mu).map_err(anyhow::Error::new)?;
            let scale = model.x_norm(&u, Some(mu)).map_err(anyhow::Error::new)?;
            let beta = beta_lower_bound(model, frame, cfg, art.scm.as_ref(), mu)?;
            let mut out = Vec::with_capacity(plan.pairs.len());
            for (n, map, m) in &plan.pairs {
                let c_n = coarse_solve(rm, mu, *n, map.as_ref())?;
                let c_m = rm.solve(mu, *m).map_err(anyhow::Error::new)?;
                let err = model
                    .x_norm(&(u.clone() - art.basis.lift(&c_n)), Some(mu))
                    .map_err(anyhow::Error::new)?;
                let dual = rd.dual_norm_at(model, mu, &c_n);
                let d_std = delta_std(dual, beta).map_err(anyhow::Error::new)?;
                let d_hier = delta_hier(rm, mu, &c_n, &c_m).map_err(anyhow::Error::new)?;
                let theta = art.theta_by_n.get(&(plan.tag.clone(), *n)).copied();
                let d_cert = match theta {
                    Some(t) if t < 1.0 => d_hier / (1.0 - t),
                    _ => f64::NAN,
                };
                let eta = if err > NOISE_FLOOR_REL * scale { d_cert / err } else { f64::NAN };
                out.push(EvalRow {
                    mu: mu.clone(),
                    n: *n,
                    err,
                    delta_std: d_std,
                    delta_hier: d_hier,
                    delta_hier_cert: d_cert,
                    eta,
                    t_std: 0.0,
                    t_hier: 0.0,
                });
            }
            Ok(out)
        })
        .collect::<anyhow::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // timing pass: sequential, warm caches, medians — skipped when reports
    // must be byte-reproducible
    if !cfg.output.deterministic {
        let reps = cfg.output.timing_reps;
        let mut i = 0;
        for mu in test.points() {
            let beta_t = || {
                beta_lower_bound(model, frame, cfg, art.scm.as_ref(), mu)
                    .expect("measured after successful evaluation")
            };
            for (n, map, m) in &plan.pairs {
                let c_n = coarse_solve(rm, mu, *n, map.as_ref())?;
                rows[i].t_std = median_time(reps, || {
                    std::hint::black_box(rd.dual_norm_at(model, mu, &c_n) / beta_t());
                });
                rows[i].t_hier = median_time(reps, || {
                    let c_m = rm.solve(mu, *m).expect("measured after successful evaluation");
                    let d = delta_hier(rm, mu, &c_n, &c_m)
                        .expect("measured after successful evaluation");
                    std::hint::black_box(d);
                });
                i += 1;
            }
        }
    }
    Ok(rows)
}

fn coarse_solve<T: Scalar>(
    rm: &ReducedModel<T>,
    mu: &[f64],
    n: usize,
    map: Option<&DMatrix<T>>,
) -> anyhow::Result<DVector<T>> {
    match map {
        Some(map) => {
            debug_assert_eq!(map.ncols(), n);
            rm.solve_mapped(mu, map).map_err(anyhow::Error::new)
        }
        None => rm.solve(mu, n).map_err(anyhow::Error::new),
    }
}

// ---------------------------------------------------------------------------
// Saturation tables and stability study entry points
// ---------------------------------------------------------------------------

/// Re-emits the saturation tables from stored artifacts.
pub fn run_theta(cfg: &ExperimentConfig, out_root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let layout = Layout::new(out_root, &cfg.experiment.name);
    let container = Container::load(&layout.artifacts())
        .map_err(|e| anyhow::anyhow!("loading artifacts (run `offline` first): {e}"))?;
    let mut written = Vec::new();
    match cfg.sampling.kind {
        SamplingKind::WeakHier => {
            let log = container.get_matrix::<f64>("theta_log").map_err(anyhow::Error::new)?;
            let rows: Vec<ThetaLogRow> = (0..log.nrows())
                .map(|i| ThetaLogRow {
                    n: log[(i, 0)] as usize,
                    k_n: log[(i, 1)] as u32,
                    theta: log[(i, 2)],
                    valid: log[(i, 3)] != 0.0,
                })
                .collect();
            let path = layout.theta_table(HIER_TAG);
            write_theta_log_csv(&path, &rows)?;
            written.push(path);
        }
        _ => {
            for rule in &cfg.estimators.m_rules {
                let table = container
                    .get_matrix::<f64>(&format!("theta_table/{}", rule.tag()))
                    .map_err(anyhow::Error::new)?;
                let rows: Vec<ThetaRow> = (0..table.nrows())
                    .map(|i| ThetaRow {
                        n: table[(i, 0)] as usize,
                        m: table[(i, 1)] as usize,
                        theta: table[(i, 2)],
                        valid: table[(i, 3)] != 0.0,
                    })
                    .collect();
                let path = layout.theta_table(rule.tag());
                write_theta_csv(&path, &rows)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct ScmStudySummary {
    pub converged: bool,
    pub constraints: usize,
    pub worst_gap: f64,
}

/// Runs the stability-bound greedy on the configured training set and writes
/// its history and final bounds.  Non-convergence is a reported outcome, not
/// an error: the high-frequency wave window is expected to exhaust the
/// constraint budget.
pub fn run_scm_study(cfg: &ExperimentConfig, out_root: &Path) -> anyhow::Result<ScmStudySummary> {
    match build_problem(cfg)? {
        Problem::Thermal(m) => scm_study_t(&m, cfg, out_root),
        Problem::Wave(m) => scm_study_t(&m, cfg, out_root),
    }
}

fn scm_study_t<T: Scalar>(
    model: &TruthModel<T>,
    cfg: &ExperimentConfig,
    out_root: &Path,
) -> anyhow::Result<ScmStudySummary> {
    let layout = Layout::new(out_root, &cfg.experiment.name);
    let frame = make_frame(model, cfg)?;
    let train = make_train(cfg)?;
    let state =
        scm_offline(model, &frame, &train, &cfg.scm.to_core()).map_err(anyhow::Error::new)?;
    write_scm_history_csv(&layout.scm_history(), &state)?;
    write_scm_bounds_csv(&layout.scm_bounds(), &state, train.points())?;
    let worst_gap = train
        .points()
        .iter()
        .map(|mu| state.gap(mu))
        .fold(0.0f64, f64::max);
    Ok(ScmStudySummary {
        converged: state.converged(),
        constraints: state.constraints().len(),
        worst_gap,
    })
}
