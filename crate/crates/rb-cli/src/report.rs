//! CSV and plot-data emitters.  Every float is written as `{:.16e}`, which
//! round-trips `f64` exactly, so reports depend only on the computed values
//! — the backbone of the byte-identical-reruns guarantee.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

use rb_core::greedy::GreedyTrace;
use rb_core::scm::ScmState;
use rb_core::Scalar;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn mu_field(mu: &[f64]) -> String {
    mu.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// One evaluation row: estimators and the truth error at a test parameter
/// for one coarse dimension.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub mu: Vec<f64>,
    pub n: usize,
    pub err: f64,
    pub delta_std: f64,
    pub delta_hier: f64,
    pub delta_hier_cert: f64,
    /// `Δ_cert / err`; NaN when the truth error is at noise level (the bound
    /// is then undefined, not violated).
    pub eta: f64,
    pub t_std: f64,
    pub t_hier: f64,
}

/// Per-row schema plus one aggregate (mean) row per dimension, marked by
/// `mu = mean`.
pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> anyhow::Result<()> {
    let mut out = String::from("mu,N,err,delta_std,delta_hier,delta_hier_cert,eta,t_std,t_hier\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            mu_field(&r.mu),
            r.n,
            num(r.err),
            num(r.delta_std),
            num(r.delta_hier),
            num(r.delta_hier_cert),
            num(r.eta),
            num(r.t_std),
            num(r.t_hier),
        )?;
    }
    for m in mean_rows(rows) {
        writeln!(
            out,
            "mean,{},{},{},{},{},{},{},{}",
            m.n,
            num(m.err),
            num(m.delta_std),
            num(m.delta_hier),
            num(m.delta_hier_cert),
            num(m.eta),
            num(m.t_std),
            num(m.t_hier),
        )?;
    }
    write_file(path, &out)
}

/// Column means per dimension; the effectivity mean skips undefined entries.
pub fn mean_rows(rows: &[EvalRow]) -> Vec<EvalRow> {
    let mut dims: Vec<usize> = rows.iter().map(|r| r.n).collect();
    dims.sort_unstable();
    dims.dedup();
    dims.iter()
        .map(|&n| {
            let group: Vec<&EvalRow> = rows.iter().filter(|r| r.n == n).collect();
            let count = group.len() as f64;
            let mean = |f: &dyn Fn(&EvalRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / count;
            let etas: Vec<f64> =
                group.iter().map(|r| r.eta).filter(|e| e.is_finite()).collect();
            let eta = if etas.is_empty() {
                f64::NAN
            } else {
                etas.iter().sum::<f64>() / etas.len() as f64
            };
            EvalRow {
                mu: Vec::new(),
                n,
                err: mean(&|r| r.err),
                delta_std: mean(&|r| r.delta_std),
                delta_hier: mean(&|r| r.delta_hier),
                delta_hier_cert: mean(&|r| r.delta_hier_cert),
                eta,
                t_std: mean(&|r| r.t_std),
                t_hier: mean(&|r| r.t_hier),
            }
        })
        .collect()
}

/// Plot-data file: whitespace columns `N err std hier`, one row per
/// dimension, mean values over the test set.
pub fn write_figure_dat(path: &Path, rows: &[EvalRow]) -> anyhow::Result<()> {
    let mut out = String::from("N err std hier\n");
    for m in mean_rows(rows) {
        writeln!(out, "{} {} {} {}", m.n, num(m.err), num(m.delta_std), num(m.delta_hier))?;
    }
    write_file(path, &out)
}

/// Scatter file `time,eta`: per-evaluation online time of the two-level
/// estimate against its effectivity.
pub fn write_scatter_csv(path: &Path, rows: &[EvalRow]) -> anyhow::Result<()> {
    let mut out = String::from("time,eta\n");
    for r in rows {
        writeln!(out, "{},{}", num(r.t_hier), num(r.eta))?;
    }
    write_file(path, &out)
}

/// One saturation-table row for a nested pair.
#[derive(Debug, Clone)]
pub struct ThetaRow {
    pub n: usize,
    pub m: usize,
    pub theta: f64,
    pub valid: bool,
}

pub fn write_theta_csv(path: &Path, rows: &[ThetaRow]) -> anyhow::Result<()> {
    let mut out = String::from("N,M,Theta,valid\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, r.m, num(r.theta), r.valid)?;
    }
    write_file(path, &out)
}

/// Enrichment log of the two-level greedy: saturation estimate and
/// bookkeeping counter per accepted dimension.
#[derive(Debug, Clone)]
pub struct ThetaLogRow {
    pub n: usize,
    pub k_n: u32,
    pub theta: f64,
    pub valid: bool,
}

pub fn write_theta_log_csv(path: &Path, rows: &[ThetaLogRow]) -> anyhow::Result<()> {
    let mut out = String::from("N,K_N,Theta,valid\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, r.k_n, num(r.theta), r.valid)?;
    }
    write_file(path, &out)
}

/// Greedy trace export; `zero_times` replaces wall-clock columns with zero
/// for byte-stable reruns.
pub fn write_trace_csv(path: &Path, trace: &GreedyTrace, zero_times: bool) -> anyhow::Result<()> {
    let mut out = String::from("n,mu,selector,max_value,theta,k_n,t_offline,accepted\n");
    for r in &trace.records {
        let theta = r.theta.map(num).unwrap_or_default();
        let k_n = r.k_n.map(|k| k.to_string()).unwrap_or_default();
        let t = if zero_times { 0.0 } else { r.t_offline };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n,
            mu_field(&r.mu),
            r.selector.as_str(),
            num(r.max_value),
            theta,
            k_n,
            num(t),
            r.accepted,
        )?;
    }
    write_file(path, &out)
}

/// Constraint-selection history of the stability bound.
pub fn write_scm_history_csv<T: Scalar>(path: &Path, state: &ScmState<T>) -> anyhow::Result<()> {
    let mut out = String::from("k,mu,gap\n");
    for h in state.history() {
        writeln!(out, "{},{},{}", h.k, mu_field(&h.mu), num(h.gap))?;
    }
    write_file(path, &out)
}

/// Stability bounds over a sample set.
pub fn write_scm_bounds_csv<T: Scalar>(
    path: &Path,
    state: &ScmState<T>,
    points: &[Vec<f64>],
) -> anyhow::Result<()> {
    let mut out = String::from("mu,lower,upper,gap\n");
    for mu in points {
        writeln!(
            out,
            "{},{},{},{}",
            mu_field(mu),
            num(state.lower_bound(mu)),
            num(state.upper_bound(mu)),
            num(state.gap(mu)),
        )?;
    }
    write_file(path, &out)
}
