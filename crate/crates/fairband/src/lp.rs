//! Dense two-phase simplex for the small linear programs that show up in
//! the fairness analytics (maximum achievable utility gains, allocation
//! repair for the contextual fair program).
//!
//! Problems here have at most a few hundred variables, so a plain tableau
//! with Bland's rule is the right tool: no cycling, easy to audit.

/// `maximize objective . x` subject to `eq` rows holding with equality,
/// `ub` rows as `row . x <= rhs`, and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ub: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-9;

pub fn solve(lp: &LinearProgram) -> LpOutcome {
    let n = lp.objective.len();
    let num_slack = lp.ub.len();
    let m = lp.eq.len() + lp.ub.len();
    let total = n + num_slack + m; // structural + slack + artificial

    // Tableau rows: [structural | slack | artificial | rhs], rhs kept >= 0.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let build_row = |coeffs: &[f64], rhs: f64, slack: Option<usize>| {
        assert_eq!(coeffs.len(), n, "constraint width mismatch");
        let mut row = vec![0.0; total + 1];
        row[..n].copy_from_slice(coeffs);
        if let Some(j) = slack {
            row[n + j] = 1.0;
        }
        row[total] = rhs;
        if rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row
    };
    for (j, (coeffs, rhs)) in lp.ub.iter().enumerate() {
        rows.push(build_row(coeffs, *rhs, Some(j)));
    }
    for (coeffs, rhs) in &lp.eq {
        rows.push(build_row(coeffs, *rhs, None));
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row[n + num_slack + i] = 1.0;
        basis.push(n + num_slack + i);
    }

    // Phase 1: maximize -sum(artificials). With the artificials basic, the
    // reduced-cost row is the negated column sums, and the rhs cell tracks
    // the (non-positive) objective value.
    let mut phase1 = vec![0.0; total + 1];
    for row in &rows {
        for (j, v) in phase1.iter_mut().enumerate() {
            *v -= row[j];
        }
    }
    for j in n + num_slack..total {
        phase1[j] = 0.0;
    }
    if !run_simplex(&mut rows, &mut basis, &mut phase1, total) {
        return LpOutcome::Unbounded; // cannot happen: phase-1 objective is bounded
    }
    let rhs_scale = lp
        .eq
        .iter()
        .chain(&lp.ub)
        .map(|(_, b)| b.abs())
        .fold(1.0f64, f64::max);
    if phase1[total] < -1e-9 * rhs_scale {
        return LpOutcome::Infeasible;
    }
    // Pivot any artificial still in the basis out (degenerate rows).
    for i in 0..m {
        if basis[i] >= n + num_slack {
            if let Some(j) = (0..n + num_slack).find(|&j| rows[i][j].abs() > EPS) {
                pivot(&mut rows, &mut basis, &mut phase1, i, j, total);
            }
        }
    }

    // Phase 2: forbid artificial columns and maximize the real objective.
    for row in rows.iter_mut() {
        for j in n + num_slack..total {
            row[j] = 0.0;
        }
    }
    let mut obj = vec![0.0; total + 1];
    for j in 0..n {
        obj[j] = -lp.objective[j]; // reduced-cost convention: negative means improving
    }
    for i in 0..m {
        if basis[i] < n {
            let c = lp.objective[basis[i]];
            if c != 0.0 {
                for j in 0..=total {
                    obj[j] += c * rows[i][j];
                }
            }
        }
    }
    if !run_simplex(&mut rows, &mut basis, &mut obj, total) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = rows[i][total];
        }
    }
    let value = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    LpOutcome::Optimal { x, value }
}

/// Bland's rule simplex on a tableau in canonical form. Returns false on
/// unboundedness.
fn run_simplex(
    rows: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    total: usize,
) -> bool {
    let max_iters = 50 * (rows.len() + total + 1);
    for _ in 0..max_iters {
        let Some(enter) = (0..total).find(|&j| obj[j] < -EPS) else {
            return true; // optimal
        };
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if row[enter] > EPS {
                let ratio = row[total] / row[enter];
                let better = match leave {
                    None => true,
                    // Bland tie-break: smallest ratio, then smallest basis id.
                    Some((li, lr)) => {
                        ratio < lr - EPS || (ratio < lr + EPS && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((leave, _)) = leave else {
            return false; // unbounded direction
        };
        pivot_full(rows, basis, obj, leave, enter, total);
    }
    // Iteration-cap hit; Bland's rule makes this unreachable for sane input.
    true
}

fn pivot(
    rows: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    leave: usize,
    enter: usize,
    total: usize,
) {
    pivot_full(rows, basis, obj, leave, enter, total);
}

fn pivot_full(
    rows: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    leave: usize,
    enter: usize,
    total: usize,
) {
    let piv = rows[leave][enter];
    for v in rows[leave].iter_mut() {
        *v /= piv;
    }
    for i in 0..rows.len() {
        if i != leave {
            let f = rows[i][enter];
            if f != 0.0 {
                for j in 0..=total {
                    rows[i][j] -= f * rows[leave][j];
                }
            }
        }
    }
    let f = obj[enter];
    if f != 0.0 {
        for j in 0..=total {
            obj[j] -= f * rows[leave][j];
        }
    }
    basis[leave] = enter;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn optimal(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match solve(lp) {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn simple_bounded_max() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            eq: vec![],
            ub: vec![(vec![1.0, 2.0], 4.0), (vec![3.0, 1.0], 6.0)],
        };
        let (x, v) = optimal(&lp);
        assert_abs_diff_eq!(v, 2.8, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], 1.6, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 1.2, epsilon = 1e-9);
    }

    #[test]
    fn equality_constraints() {
        // max 2x + y on the segment x + y = 1.
        let lp = LinearProgram {
            objective: vec![2.0, 1.0],
            eq: vec![(vec![1.0, 1.0], 1.0)],
            ub: vec![],
        };
        let (x, v) = optimal(&lp);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn negative_rhs_handled() {
        // max -x s.t. -x <= -2  (i.e. x >= 2): optimum at x = 2.
        let lp = LinearProgram {
            objective: vec![-1.0],
            eq: vec![],
            ub: vec![(vec![-1.0], -2.0)],
        };
        let (x, v) = optimal(&lp);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let lp = LinearProgram {
            objective: vec![1.0],
            eq: vec![(vec![1.0], 2.0)],
            ub: vec![(vec![1.0], 1.0)],
        };
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram {
            objective: vec![1.0],
            eq: vec![],
            ub: vec![(vec![-1.0], 0.0)],
        };
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_equalities() {
        // Redundant pair of equalities must not confuse phase 1.
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            eq: vec![(vec![1.0, 1.0], 1.0), (vec![2.0, 2.0], 2.0)],
            ub: vec![],
        };
        let (x, v) = optimal(&lp);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-9);
    }
}
