//! Small dense two-phase simplex used by the stability-constraint lower
//! bound.  Problems have tens of variables and constraints, so a plain
//! tableau with Bland's rule is both sufficient and cycle-free.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, y: Vec<f64> },
    Infeasible,
}

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-8;
const MAX_PIVOTS: usize = 20_000;

/// Minimizes `c . y` subject to `rows[i].0 . y >= rows[i].1` and
/// `lower <= y <= upper` componentwise (finite bounds).  Returns
/// `Infeasible` both for genuinely empty feasible sets and for numerical
/// breakdown; callers fall back to a bound that is always valid.
pub fn min_linear_boxed(
    c: &[f64],
    rows: &[(Vec<f64>, f64)],
    lower: &[f64],
    upper: &[f64],
) -> LpOutcome {
    let n = c.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    debug_assert!(lower.iter().zip(upper).all(|(l, u)| l <= u));

    // Shift to z = y - lower, scale every inequality to unit inf-norm.
    let d: Vec<f64> = upper.iter().zip(lower).map(|(u, l)| u - l).collect();
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        assert_eq!(a.len(), n);
        let shift: f64 = a.iter().zip(lower).map(|(ai, li)| ai * li).sum();
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            if *b - shift > FEAS_TOL {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        let coeffs = a.iter().map(|x| x / scale).collect();
        ineq.push((coeffs, (*b - shift) / scale));
    }

    let m_ineq = ineq.len();
    let m = m_ineq + n; // inequality rows plus box rows
    let n_struct = n + m_ineq + n; // z, surplus s, box slack w
    let artificial_rows: Vec<usize> =
        (0..m_ineq).filter(|&i| ineq[i].1 > 0.0).collect();
    let n_cols = n_struct + artificial_rows.len();

    let mut t = DMatrix::<f64>::zeros(m + 1, n_cols + 1);
    let mut basis = vec![0usize; m];
    let rhs_col = n_cols;
    let mut next_art = n_struct;
    for (i, (a, b)) in ineq.iter().enumerate() {
        if *b > 0.0 {
            for j in 0..n {
                t[(i, j)] = a[j];
            }
            t[(i, n + i)] = -1.0; // surplus
            t[(i, next_art)] = 1.0;
            t[(i, rhs_col)] = *b;
            basis[i] = next_art;
            next_art += 1;
        } else {
            // negate so the surplus variable starts basic and feasible
            for j in 0..n {
                t[(i, j)] = -a[j];
            }
            t[(i, n + i)] = 1.0;
            t[(i, rhs_col)] = -b;
            basis[i] = n + i;
        }
    }
    for j in 0..n {
        let r = m_ineq + j;
        t[(r, j)] = 1.0;
        t[(r, n + m_ineq + j)] = 1.0;
        t[(r, rhs_col)] = d[j].max(0.0);
        basis[r] = n + m_ineq + j;
    }

    // Phase 1: minimize the artificial sum.  The reduced-cost row is the unit
    // cost on each artificial column minus the artificial rows themselves, so
    // basic artificial columns start priced at zero.
    if !artificial_rows.is_empty() {
        for &r in &artificial_rows {
            for j in 0..=n_cols {
                let v = t[(r, j)];
                t[(m, j)] -= v;
            }
        }
        for col in n_struct..n_cols {
            t[(m, col)] += 1.0;
        }
        if !pivot_to_optimum(&mut t, &mut basis, n_cols, None) {
            return LpOutcome::Infeasible;
        }
        let infeas = -t[(m, rhs_col)];
        if infeas > FEAS_TOL {
            return LpOutcome::Infeasible;
        }
        // Degenerate artificials may linger in the basis at value zero; swap
        // each for any structural column its row touches so phase 2 cannot
        // reactivate them.
        for r in 0..m {
            if basis[r] >= n_struct {
                if let Some(e) = (0..n_struct).find(|&j| t[(r, j)].abs() > PIVOT_TOL) {
                    pivot(&mut t, &mut basis, r, e);
                }
            }
        }
    }

    // Phase 2: restore the true objective on z, block artificial columns.
    for j in 0..=n_cols {
        t[(m, j)] = 0.0;
    }
    for j in 0..n {
        t[(m, j)] = c[j];
    }
    for r in 0..m {
        let b = basis[r];
        let cost = t[(m, b)];
        if cost != 0.0 {
            for j in 0..=n_cols {
                let v = t[(r, j)];
                t[(m, j)] -= cost * v;
            }
        }
    }
    let blocked = n_struct; // columns >= n_struct never re-enter
    if !pivot_to_optimum(&mut t, &mut basis, n_cols, Some(blocked)) {
        return LpOutcome::Infeasible;
    }

    let mut z = vec![0.0f64; n];
    for r in 0..m {
        if basis[r] < n {
            z[basis[r]] = t[(r, rhs_col)];
        }
    }
    let y: Vec<f64> = z
        .iter()
        .zip(lower)
        .zip(&d)
        .map(|((zi, li), di)| (li + zi.clamp(0.0, di.max(0.0))).clamp(*li, li + di.max(0.0)))
        .collect();
    let value = c.iter().zip(&y).map(|(ci, yi)| ci * yi).sum();
    LpOutcome::Optimal { value, y }
}

/// Bland pivoting to optimality.  Returns false on breakdown (iteration cap
/// or a column with no positive entry, which the boxed problems here should
/// never produce).
fn pivot_to_optimum(
    t: &mut DMatrix<f64>,
    basis: &mut [usize],
    n_cols: usize,
    blocked_from: Option<usize>,
) -> bool {
    let m = basis.len();
    let rhs_col = n_cols;
    for _ in 0..MAX_PIVOTS {
        // entering: lowest-index column with negative reduced cost
        let limit = blocked_from.unwrap_or(n_cols);
        let Some(e) = (0..limit.min(n_cols)).find(|&j| t[(m, j)] < -PIVOT_TOL) else {
            return true;
        };
        // leaving: min ratio, ties to the smallest basis index
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = t[(r, e)];
            if a > PIVOT_TOL {
                let ratio = t[(r, rhs_col)] / a;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_TOL
                            || (ratio < lratio + PIVOT_TOL && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((lr, _)) = leave else {
            return false;
        };
        pivot(t, basis, lr, e);
    }
    false
}

/// Gauss-Jordan pivot on `(lr, e)`: normalizes the pivot row and clears the
/// entering column everywhere else, including the reduced-cost row.
fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], lr: usize, e: usize) {
    let m = basis.len();
    let n_cols = t.ncols() - 1;
    let p = t[(lr, e)];
    for j in 0..=n_cols {
        t[(lr, j)] /= p;
    }
    for r in 0..=m {
        if r != lr {
            let f = t[(r, e)];
            if f != 0.0 {
                for j in 0..=n_cols {
                    let v = t[(lr, j)];
                    t[(r, j)] -= f * v;
                }
            }
        }
    }
    basis[lr] = e;
}
