//! The Nash bargaining program over exploration shares.
//!
//! Each globally suboptimal arm carries one simplex of shares: `q[g][a]`
//! is the fraction of arm `a`'s asymptotic pulls taken by group `g`. A
//! group's utility gain is its solo regret minus what it pays under the
//! shares, and the program maximizes the sum of log gains. The optimal
//! gain vector is unique (strict concavity in the gains); the maximizing
//! shares are not, so a second stage selects the minimum-euclidean-norm
//! solution among them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::analytics::InstanceAnalytics;
use crate::lp::{self, LinearProgram, LpOutcome};

const STAGE1_CAP: usize = 100_000;


#[derive(Debug, Clone, PartialEq, Error)]
pub enum NashError {
    #[error("no feasible point with positive gains: some group has no shared suboptimal arm")]
    Assumption1Violated,
    #[error("stage-1 welfare did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("min-norm constraint system is numerically singular (residual {residual})")]
    QpNumericallySingular { residual: f64 },
    #[error("utility polytope is empty")]
    Infeasible,
    #[error("price of fairness undefined: no cooperative gain exists")]
    UndefinedPoF,
}

/// Nash social welfare: finite sum of log gains, or the distinguished
/// negative-infinity outcome when some gain is non-positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Welfare {
    Finite(f64),
    NegInfinity,
}

impl Welfare {
    pub fn finite(self) -> Option<f64> {
        match self {
            Welfare::Finite(v) => Some(v),
            Welfare::NegInfinity => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub grad_residual: f64,
    pub qp_residual: f64,
}

/// Solution of the bargaining program.
#[derive(Debug, Clone, Serialize)]
pub struct NashSolution {
    /// Exploration shares, groups x arms; zero outside the support.
    pub q: Vec<Vec<f64>>,
    /// Per-group utility gains at `q`.
    pub s: Vec<f64>,
    pub welfare: Welfare,
    pub norm_sq: f64,
    pub stats: SolverStats,
}

/// Price-of-fairness report: total cooperative gain, gain retained by the
/// Nash solution, the fraction lost, and the instance-asymmetry bounds.
#[derive(Debug, Clone, Serialize)]
pub struct PoFReport {
    pub system: f64,
    pub fair: f64,
    pub pof: f64,
    pub r_asym: f64,
    pub bound_general: f64,
    /// `1/2` when every arm is either fully shared or exclusive.
    pub bound_topology: Option<f64>,
}

/// Flattened view of the program variables: one entry per
/// (globally suboptimal arm, group with access).
struct Program {
    /// (arm, group) per variable.
    vars: Vec<(usize, usize)>,
    /// Variable ranges forming each arm's simplex block.
    arm_blocks: Vec<(usize, std::ops::Range<usize>)>,
    /// Objective coefficients: `coeff[v] = gap[g][a] * J(a)`.
    coeff: Vec<f64>,
    /// Variables charged to each group.
    of_group: Vec<Vec<usize>>,
    /// Solo regret per group (the gain baseline).
    base: Vec<f64>,
}

impl Program {
    fn build(analytics: &InstanceAnalytics) -> Self {
        let mut vars = Vec::new();
        let mut arm_blocks = Vec::new();
        let mut coeff = Vec::new();
        let mut of_group = vec![Vec::new(); analytics.num_groups];
        for &a in &analytics.sub_global {
            let start = vars.len();
            for &g in &analytics.groups_of_arm[a] {
                let v = vars.len();
                vars.push((a, g));
                coeff.push(analytics.gap[g][a].unwrap() * analytics.j_max[a].unwrap());
                of_group[g].push(v);
            }
            arm_blocks.push((a, start..vars.len()));
        }
        Program {
            vars,
            arm_blocks,
            coeff,
            of_group,
            base: analytics.disagreement.clone(),
        }
    }

    fn gains(&self, q: &[f64]) -> Vec<f64> {
        self.of_group
            .iter()
            .zip(&self.base)
            .map(|(vs, &b)| b - vs.iter().map(|&v| self.coeff[v] * q[v]).sum::<f64>())
            .collect()
    }

    fn welfare_over(&self, gains: &[f64], active: &[bool]) -> f64 {
        gains
            .iter()
            .zip(active)
            .filter(|(_, &act)| act)
            .map(|(&s, _)| s.ln())
            .sum()
    }

    fn dense(&self, analytics: &InstanceAnalytics, q: &[f64]) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; analytics.num_arms]; analytics.num_groups];
        for (v, &(a, g)) in self.vars.iter().enumerate() {
            m[g][a] = q[v];
        }
        m
    }
}

/// The feasibility construction: for each shared suboptimal arm, split its
/// pulls between a minimal-OPT group and one other group so that both keep a
/// strictly positive slice of their solo pull budget.
pub fn feasible_init(analytics: &InstanceAnalytics) -> Result<Vec<Vec<f64>>, NashError> {
    if !analytics.assumption1 {
        return Err(NashError::Assumption1Violated);
    }
    let prog = Program::build(analytics);
    let q = feasible_init_flat(analytics, &prog);
    Ok(prog.dense(analytics, &q))
}

fn feasible_init_flat(analytics: &InstanceAnalytics, prog: &Program) -> Vec<f64> {
    let mut q = vec![0.0; prog.vars.len()];
    for (a, block) in &prog.arm_blocks {
        let a = *a;
        let owners = &analytics.groups_of_arm[a];
        if owners.len() == 1 {
            q[block.start] = 1.0;
            continue;
        }
        let g_main = analytics.gamma[a][0];
        // Counterpart with the largest pull constant (ties by id), so its
        // retained slice p/2 * J(a) is as robustly positive as possible.
        let g_other = owners
            .iter()
            .copied()
            .filter(|&g| g != g_main)
            .max_by(|&x, &y| {
                let jx = analytics.j_group[x][a].unwrap();
                let jy = analytics.j_group[y][a].unwrap();
                jx.partial_cmp(&jy).unwrap().then(y.cmp(&x))
            })
            .unwrap();
        let j_max = analytics.j_max[a].unwrap();
        let p = if j_max > 0.0 {
            analytics.j_group[g_other][a].unwrap() / j_max
        } else {
            1.0
        };
        for v in block.clone() {
            let (_, g) = prog.vars[v];
            q[v] = if g == g_main {
                1.0 - p / 2.0
            } else if g == g_other {
                p / 2.0
            } else {
                0.0
            };
        }
    }
    q
}

/// Exploration shares of a regret-optimal policy as a dense matrix: each arm
/// entirely with its minimal-OPT groups, split equally on ties. This is the
/// share set reported when no positive-gain point exists, and the fallback
/// the fair policy follows until its estimates separate: the simplex still
/// holds, so exclusive arms keep their owner as a permanent explore
/// candidate.
pub fn regret_optimal_share_matrix(analytics: &InstanceAnalytics) -> Vec<Vec<f64>> {
    let prog = Program::build(analytics);
    let q = regret_optimal_shares(analytics, &prog);
    prog.dense(analytics, &q)
}

fn regret_optimal_shares(analytics: &InstanceAnalytics, prog: &Program) -> Vec<f64> {
    let mut q = vec![0.0; prog.vars.len()];
    for (a, block) in &prog.arm_blocks {
        let gamma = &analytics.gamma[*a];
        for v in block.clone() {
            let (_, g) = prog.vars[v];
            if gamma.contains(&g) {
                q[v] = 1.0 / gamma.len() as f64;
            }
        }
    }
    q
}

/// Solves the bargaining program.
///
/// Stage 1 maximizes the log-gain objective over the product of per-arm
/// simplices by exponentiated-gradient ascent from the feasibility
/// construction; the optimal gain vector is unique. Stage 2 picks the
/// minimum-norm shares achieving those gains by projecting the origin onto
/// the affine constraint set and pinning one violated coordinate at a time.
///
/// `tol` is the relative welfare-change target (1e-8 is the default used
/// across the crate).
pub fn solve_nash(analytics: &InstanceAnalytics, tol: f64) -> Result<NashSolution, NashError> {
    assert!(tol > 0.0);
    let prog = Program::build(analytics);

    if !analytics.assumption1 {
        let q = regret_optimal_shares(analytics, &prog);
        let s = prog.gains(&q);
        let norm_sq = q.iter().map(|v| v * v).sum();
        return Ok(NashSolution {
            q: prog.dense(analytics, &q),
            s,
            welfare: Welfare::NegInfinity,
            norm_sq,
            stats: SolverStats::default(),
        });
    }

    let active = vec![true; analytics.num_groups];
    solve_active(analytics, &prog, tol, &active)
}

/// Bargaining restricted to `active` groups: inactive groups contribute no
/// log term and no gain constraint. This is how the empirical program of
/// PF-UCB treats groups whose estimated access set looks all-optimal.
///
/// Errors with [`NashError::Assumption1Violated`] when some active group has
/// no shared suboptimal arm (no feasible point gives it a positive gain).
pub fn solve_nash_restricted(
    analytics: &InstanceAnalytics,
    tol: f64,
    active: &[bool],
) -> Result<NashSolution, NashError> {
    assert_eq!(active.len(), analytics.num_groups);
    let feasible = (0..analytics.num_groups).all(|g| {
        !active[g]
            || analytics.sub_of_group[g]
                .iter()
                .any(|&a| analytics.groups_of_arm[a].len() >= 2)
    });
    if !feasible {
        return Err(NashError::Assumption1Violated);
    }
    let prog = Program::build(analytics);
    solve_active(analytics, &prog, tol, active)
}

fn solve_active(
    analytics: &InstanceAnalytics,
    prog: &Program,
    tol: f64,
    active: &[bool],
) -> Result<NashSolution, NashError> {
    if prog.vars.is_empty() {
        // No arm is globally suboptimal: every group's gain is a constant sum
        // of freed-up exploration.
        let s = prog.gains(&[]);
        let welfare = if s.iter().zip(active).all(|(&v, &act)| !act || v > 0.0) {
            Welfare::Finite(prog.welfare_over(&s, active))
        } else {
            Welfare::NegInfinity
        };
        return Ok(NashSolution {
            q: vec![vec![0.0; analytics.num_arms]; analytics.num_groups],
            s: s.clone(),
            welfare,
            norm_sq: 0.0,
            stats: SolverStats::default(),
        });
    }

    let q0 = feasible_init_flat(analytics, prog);
    {
        let gains = prog.gains(&q0);
        if gains.iter().zip(active).any(|(&s, &act)| act && s <= 0.0) {
            // Boundary estimates can zero out a pull constant and defeat the
            // split construction; callers treat this like infeasibility.
            return Err(NashError::Assumption1Violated);
        }
    }
    let (q_stage1, s_star, iterations, grad_residual) =
        stage1_mirror_descent(prog, q0, tol, active)?;
    let (q_min, qp_residual) = stage2_min_norm(prog, &s_star, &q_stage1, active)?;

    let s = prog.gains(&q_min);
    let welfare = if s.iter().zip(active).all(|(&v, &act)| !act || v > 0.0) {
        Welfare::Finite(prog.welfare_over(&s, active))
    } else {
        // Gains are bounded away from zero under Assumption 1; reaching this
        // would mean stage-2 drifted, which the residual check prevents.
        Welfare::NegInfinity
    };
    Ok(NashSolution {
        q: prog.dense(analytics, &q_min),
        norm_sq: q_min.iter().map(|v| v * v).sum(),
        s,
        welfare,
        stats: SolverStats {
            iterations,
            grad_residual,
            qp_residual,
        },
    })
}

/// Entropic mirror descent (exponentiated gradient, one multiplicative
/// update per arm simplex) from a strictly-positive-gain start. The log in
/// the objective is its own barrier: a monotone line search never lets any
/// gain cross zero.
fn stage1_mirror_descent(
    prog: &Program,
    q0: Vec<f64>,
    tol: f64,
    active: &[bool],
) -> Result<(Vec<f64>, Vec<f64>, usize, f64), NashError> {
    let n = prog.vars.len();
    let mut q = q0;
    let mut gains = prog.gains(&q);
    let mut welfare = prog.welfare_over(&gains, active);

    // Pull constants span many orders of magnitude across arms when two
    // means nearly tie, so a single global step size stalls. Normalize the
    // gradient per arm block instead (a block-diagonal mirror step with the
    // same fixed points) and let the line search own the global scale.
    let mut step = 0.25;
    let mut grad = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    let mut residual = f64::MAX;
    let mut flat_streak = 0usize;
    let mut last_scale = 1.0f64;

    for iter in 1..=STAGE1_CAP {
        let mut grad_scale: f64 = 0.0;
        for (g, vs) in prog.of_group.iter().enumerate() {
            for &v in vs {
                // Each variable belongs to exactly one group's gain; inactive
                // groups do not appear in the objective.
                grad[v] = if active[g] { -prog.coeff[v] / gains[g] } else { 0.0 };
                grad_scale = grad_scale.max(grad[v].abs());
            }
        }

        // Stationarity on each simplex: across the support the gradient must
        // match the block's q-weighted mean (the simplex multiplier); weight
        // deviations by q so vanishing coordinates do not count.
        residual = 0.0;
        for (_, block) in &prog.arm_blocks {
            let mean: f64 = block.clone().map(|v| q[v] * grad[v]).sum();
            let block_scale = block
                .clone()
                .map(|v| grad[v].abs())
                .fold(0.0f64, f64::max)
                .max(1e-300);
            for v in block.clone() {
                residual = residual.max((grad[v] - mean).abs() * q[v]);
                scaled[v] = grad[v] / block_scale;
            }
        }
        last_scale = grad_scale.max(1.0);
        if residual < 1e-12 * grad_scale {
            return Ok((q, gains, iter, residual));
        }

        let mut improved = false;
        let mut local = step;
        for _ in 0..80 {
            for (_, block) in &prog.arm_blocks {
                let mut sum = 0.0;
                for v in block.clone() {
                    let arg = (local * scaled[v]).clamp(-500.0, 500.0);
                    candidate[v] = (q[v] * arg.exp()).max(1e-300);
                    sum += candidate[v];
                }
                for v in block.clone() {
                    candidate[v] /= sum;
                }
            }
            let cand_gains = prog.gains(&candidate);
            if cand_gains.iter().zip(active).all(|(&s, &act)| !act || s > 0.0) {
                let cand_welfare = prog.welfare_over(&cand_gains, active);
                if cand_welfare >= welfare - 1e-15 {
                    let rel_change = (cand_welfare - welfare).abs() / (1.0 + welfare.abs());
                    q.copy_from_slice(&candidate);
                    gains = cand_gains;
                    welfare = cand_welfare;
                    improved = true;
                    flat_streak = if rel_change < tol * 1e-6 { flat_streak + 1 } else { 0 };
                    break;
                }
            }
            local *= 0.5;
        }
        if !improved || flat_streak >= 16 {
            // Either no acceptable step exists or the welfare has been flat
            // for many iterations: the objective is at f64 resolution, which
            // leaves a stationarity floor that grows with |welfare|.
            if residual <= 1e-5 * grad_scale.max(1.0) {
                return Ok((q, gains, iter, residual));
            }
            return Err(NashError::NotConverged { iterations: iter });
        }
        step = (local * 1.3).min(64.0);
    }
    if residual <= 1e-5 * last_scale {
        return Ok((q, gains, STAGE1_CAP, residual));
    }
    Err(NashError::NotConverged { iterations: STAGE1_CAP })
}

/// Project the origin onto the affine set fixing the simplex sums and the
/// optimal gains, pinning violated coordinates to zero one at a time.
fn stage2_min_norm(
    prog: &Program,
    s_star: &[f64],
    feasible_point: &[f64],
    active: &[bool],
) -> Result<(Vec<f64>, f64), NashError> {
    let n = prog.vars.len();
    let active_groups: Vec<usize> = (0..prog.base.len()).filter(|&g| active[g]).collect();
    let mut pinned: Vec<usize> = Vec::new();
    // Non-negative point satisfying every constraint pinned so far; starts
    // at the stage-1 iterate and moves to each crossing point as coordinates
    // get pinned, which keeps every pinned system provably consistent.
    let mut witness: Vec<f64> = feasible_point.to_vec();
    loop {
        let rows = prog.arm_blocks.len() + active_groups.len() + pinned.len();
        let mut a = DMatrix::zeros(rows, n);
        let mut b = DVector::zeros(rows);
        for (i, (_, block)) in prog.arm_blocks.iter().enumerate() {
            for v in block.clone() {
                a[(i, v)] = 1.0;
            }
            b[i] = 1.0;
        }
        let off = prog.arm_blocks.len();
        for (i, &g) in active_groups.iter().enumerate() {
            for &v in &prog.of_group[g] {
                a[(off + i, v)] = prog.coeff[v];
            }
            b[off + i] = prog.base[g] - s_star[g];
        }
        for (i, &v) in pinned.iter().enumerate() {
            a[(off + active_groups.len() + i, v)] = 1.0;
        }

        // Equilibrate: gain rows can be many orders of magnitude larger than
        // the simplex rows, which would wreck the rank decision. Row scaling
        // leaves the solution set (and the min-norm point) unchanged.
        for i in 0..rows {
            let norm = a.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                for j in 0..n {
                    a[(i, j)] /= norm;
                }
                b[i] /= norm;
            } else if b[i].abs() > 1e-9 {
                return Err(NashError::QpNumericallySingular { residual: b[i].abs() });
            }
        }

        let q = min_norm_solve(&a, &b)
            .ok_or(NashError::QpNumericallySingular { residual: f64::NAN })?;
        let residual = (&a * &q - &b).amax();
        if residual > 1e-6 * (1.0 + b.amax()) {
            return Err(NashError::QpNumericallySingular { residual });
        }

        // Find the violated coordinate last to turn non-negative on the
        // segment toward the witness; pin it, move the witness to the
        // crossing point, and re-project.
        let mut worst: Option<(usize, f64)> = None;
        for v in 0..n {
            if q[v] < -1e-10 {
                let p = witness[v];
                let alpha = if (q[v] - p).abs() > 1e-300 {
                    q[v] / (q[v] - p)
                } else {
                    1.0
                };
                if worst.is_none_or(|(_, wa)| alpha > wa) {
                    worst = Some((v, alpha));
                }
            }
        }
        match worst {
            Some((v, alpha)) if pinned.len() < n => {
                let alpha = alpha.clamp(0.0, 1.0);
                for (w, qv) in witness.iter_mut().zip(q.iter()) {
                    *w = qv + alpha * (*w - qv);
                    if *w < 0.0 {
                        *w = 0.0;
                    }
                }
                pinned.push(v);
            }
            _ => {
                let mut out: Vec<f64> = q.iter().copied().collect();
                for x in &mut out {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
                return Ok((out, residual));
            }
        }
    }
}

/// Minimum-norm solution of the (row-equilibrated) system `A q = b` through
/// the normal equations `A A^T y = b`, `q = A^T y`, with a symmetric
/// eigendecomposition. Redundant rows give machine-zero eigenvalues that are
/// simply dropped; this stays accurate on the clustered spectra these
/// constraint sets produce, where a bidiagonalization SVD loses digits.
fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let gram = a * a.transpose();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.max();
    if !(lmax.is_finite() && lmax > 0.0) {
        return if b.amax() <= 1e-12 {
            Some(DVector::zeros(a.ncols()))
        } else {
            None
        };
    }
    // Eigenvalues of the Gram matrix are squared singular values; anything
    // this far below the top is either an exactly redundant constraint or
    // numerical noise, and for a consistent system dropping it costs at most
    // the corresponding (tiny) share of b.
    let tol = 1e-13 * lmax;
    let mut y = DVector::zeros(a.nrows());
    for k in 0..a.nrows() {
        let lam = eig.eigenvalues[k];
        if lam > tol {
            let vk = eig.eigenvectors.column(k);
            y += vk * (vk.dot(b) / lam);
        }
    }
    Some(a.transpose() * y)
}

/// Per-group utility gains of a policy whose log-scaled per-group regrets are
/// `per_group_regret`: the drop relative to the disagreement point. Negative
/// entries are reported as-is; they flag an unfair policy.
pub fn util_gains(analytics: &InstanceAnalytics, per_group_regret: &[f64]) -> Vec<f64> {
    assert_eq!(per_group_regret.len(), analytics.num_groups);
    analytics
        .disagreement
        .iter()
        .zip(per_group_regret)
        .map(|(d, r)| d - r)
        .collect()
}

/// Sum of log gains, or negative infinity when some gain is non-positive.
pub fn nash_welfare(gains: &[f64]) -> Welfare {
    if gains.iter().all(|&g| g > 0.0) {
        Welfare::Finite(gains.iter().map(|&g| g.ln()).sum())
    } else {
        Welfare::NegInfinity
    }
}

/// Maximum achievable utility gain for one group over the utility polytope,
/// holding every other group at or above its disagreement point.
pub fn max_group_gain(analytics: &InstanceAnalytics, group: usize) -> Result<f64, NashError> {
    let prog = Program::build(analytics);
    if prog.vars.is_empty() {
        return Ok(prog.gains(&[])[group]);
    }
    let n = prog.vars.len();
    let mut objective = vec![0.0; n];
    for &v in &prog.of_group[group] {
        objective[v] = -prog.coeff[v];
    }
    let mut lp = LinearProgram {
        objective,
        ..Default::default()
    };
    for (_, block) in &prog.arm_blocks {
        let mut row = vec![0.0; n];
        for v in block.clone() {
            row[v] = 1.0;
        }
        lp.eq.push((row, 1.0));
    }
    for (h, vs) in prog.of_group.iter().enumerate() {
        // base_h - sum c q >= 0  <=>  sum c q <= base_h, scaled to unit
        // magnitude so huge pull constants cannot swamp the solver.
        let scale = vs
            .iter()
            .map(|&v| prog.coeff[v].abs())
            .fold(1.0f64, f64::max);
        let mut row = vec![0.0; n];
        for &v in vs {
            row[v] = prog.coeff[v] / scale;
        }
        lp.ub.push((row, prog.base[h] / scale));
    }
    match lp::solve(&lp) {
        LpOutcome::Optimal { value, .. } => Ok(prog.base[group] + value),
        LpOutcome::Infeasible => Err(NashError::Infeasible),
        LpOutcome::Unbounded => Err(NashError::Infeasible),
    }
}

/// Builds the price-of-fairness report from the analytics and a solved
/// bargaining program.
pub fn price_of_fairness(
    analytics: &InstanceAnalytics,
    nash: &NashSolution,
) -> Result<PoFReport, NashError> {
    let system = analytics.total_disagreement() - analytics.lower_bound;
    if system <= 0.0 {
        return Err(NashError::UndefinedPoF);
    }
    let fair: f64 = nash.s.iter().sum();
    let pof = (system - fair) / system;

    let g = analytics.num_groups as f64;
    let mut gains = Vec::with_capacity(analytics.num_groups);
    for h in 0..analytics.num_groups {
        gains.push(max_group_gain(analytics, h)?);
    }
    let max_gain = gains.iter().cloned().fold(f64::MIN, f64::max);
    let min_gain = gains.iter().cloned().fold(f64::MAX, f64::min);
    let r_asym = if max_gain > 0.0 { (min_gain / max_gain).max(0.0) } else { 0.0 };
    let bound_general = 1.0 - r_asym * (2.0 * g.sqrt() - 1.0) / g;

    let shared_or_exclusive = (0..analytics.num_arms).all(|a| {
        let d = analytics.groups_of_arm[a].len();
        d == 1 || d == analytics.num_groups
    });
    Ok(PoFReport {
        system,
        fair,
        pof,
        r_asym,
        bound_general,
        bound_topology: shared_or_exclusive.then_some(0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{analyze, regret_optimal_allocation};
    use crate::instance::{example_two_group, Group, GroupedInstance};
    use approx::assert_abs_diff_eq;

    // Frozen from an independent 40-digit evaluation plus a 1e-6 grid search
    // over the single free share of the example instance.
    const Q_B: f64 = 0.12139013083818259;
    const S_A: f64 = 0.29505562528595717;
    const S_B: f64 = 0.5901112505719143;
    const WELFARE: f64 = -1.7480355796924433;
    const RT_B: f64 = 1.180222501143829;

    #[test]
    fn feasible_init_matches_construction() {
        let a = analyze(&example_two_group()).unwrap();
        let q0 = feasible_init(&a).unwrap();
        // p(0) = J^B(0) / J(0); the other group keeps 1 - p/2.
        assert_abs_diff_eq!(q0[1][0], 0.12139013083818259, epsilon = 1e-10);
        assert_abs_diff_eq!(q0[0][0], 0.8786098691618174, epsilon = 1e-10);
        let prog = Program::build(&a);
        let flat = feasible_init_flat(&a, &prog);
        let gains = prog.gains(&flat);
        assert!(gains.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn feasible_init_requires_assumption1() {
        let inst = GroupedInstance::new(
            vec![0.2, 0.8],
            vec![Group { p: 1.0, arms: vec![0, 1] }],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        assert_eq!(feasible_init(&a).unwrap_err(), NashError::Assumption1Violated);
    }

    #[test]
    fn example_solution_matches_closed_form() {
        let a = analyze(&example_two_group()).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        assert_abs_diff_eq!(sol.q[1][0], Q_B, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.q[0][0], 1.0 - Q_B, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.s[0], S_A, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.s[1], S_B, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.welfare.finite().unwrap(), WELFARE, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_instance_splits_evenly() {
        let inst = GroupedInstance::new(
            vec![0.2, 0.9],
            vec![
                Group { p: 0.5, arms: vec![0, 1] },
                Group { p: 0.5, arms: vec![0, 1] },
            ],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        assert_abs_diff_eq!(sol.q[0][0], 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.q[1][0], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn exclusive_arms_force_neg_infinity() {
        // Each group privately owns its suboptimal arm: no bargaining room.
        let inst = GroupedInstance::new(
            vec![0.2, 0.3, 0.8],
            vec![
                Group { p: 0.5, arms: vec![0, 2] },
                Group { p: 0.5, arms: vec![1, 2] },
            ],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        assert!(!a.assumption1);
        let sol = solve_nash(&a, 1e-8).unwrap();
        assert_eq!(sol.welfare, Welfare::NegInfinity);
        assert_eq!(sol.q[0][0], 1.0);
        assert_eq!(sol.q[1][1], 1.0);
    }

    #[test]
    fn simplex_constraint_holds() {
        let a = analyze(&example_two_group()).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        for &arm in &a.sub_global {
            let total: f64 = (0..a.num_groups).map(|g| sol.q[g][arm]).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
        // No mass outside the support.
        assert_eq!(sol.q[0][1], 0.0);
        assert_eq!(sol.q[1][2], 0.0);
    }

    #[test]
    fn welfare_recomputable_from_q() {
        let a = analyze(&example_two_group()).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        let regret: Vec<f64> = (0..a.num_groups)
            .map(|g| {
                a.sub_global
                    .iter()
                    .map(|&arm| {
                        a.gap[g][arm].map_or(0.0, |d| d * a.j_max[arm].unwrap() * sol.q[g][arm])
                    })
                    .sum()
            })
            .collect();
        let gains = util_gains(&a, &regret);
        match nash_welfare(&gains) {
            Welfare::Finite(w) => {
                assert_abs_diff_eq!(w, sol.welfare.finite().unwrap(), epsilon = 1e-8)
            }
            Welfare::NegInfinity => panic!("expected finite welfare"),
        }
    }

    #[test]
    fn util_gain_examples() {
        let a = analyze(&example_two_group()).unwrap();
        // Disagreement regrets give all-zero gains.
        let zero = util_gains(&a, &a.disagreement);
        assert!(zero.iter().all(|&g| g.abs() < 1e-12));
        // Regret-optimal allocation: free ride for group 1.
        let gains = util_gains(&a, &regret_optimal_allocation(&a));
        assert_abs_diff_eq!(gains[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gains[1], RT_B, epsilon = 1e-10);
    }

    #[test]
    fn welfare_of_unit_gains_is_zero() {
        assert_eq!(nash_welfare(&[1.0, 1.0, 1.0]), Welfare::Finite(0.0));
        assert_eq!(nash_welfare(&[0.5, 0.0]), Welfare::NegInfinity);
        assert_eq!(nash_welfare(&[0.5, -0.2]), Welfare::NegInfinity);
        match nash_welfare(&[S_A, S_B]) {
            Welfare::Finite(w) => assert_abs_diff_eq!(w, WELFARE, epsilon = 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn max_gain_by_interval_enumeration() {
        let a = analyze(&example_two_group()).unwrap();
        // One free variable: s^0 maximal where s^1 hits zero, and vice versa.
        assert_abs_diff_eq!(max_group_gain(&a, 0).unwrap(), S_B, epsilon = 1e-8);
        assert_abs_diff_eq!(max_group_gain(&a, 1).unwrap(), RT_B, epsilon = 1e-8);
    }

    #[test]
    fn max_gain_single_group_is_zero() {
        let inst = GroupedInstance::new(
            vec![0.2, 0.8],
            vec![Group { p: 1.0, arms: vec![0, 1] }],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        assert_abs_diff_eq!(max_group_gain(&a, 0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pof_example_is_one_quarter() {
        let a = analyze(&example_two_group()).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        let report = price_of_fairness(&a, &sol).unwrap();
        assert_abs_diff_eq!(report.system, RT_B, epsilon = 1e-10);
        assert_abs_diff_eq!(report.pof, 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(report.r_asym, 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(report.bound_general, 0.5428932188134525, epsilon = 1e-7);
        // Arm 0 is fully shared, arms 1 and 2 exclusive.
        assert_eq!(report.bound_topology, Some(0.5));
        assert!(report.pof <= report.bound_general);
        assert!(report.pof <= 0.5);
    }

    #[test]
    fn pof_symmetric_instance_is_zero() {
        let inst = GroupedInstance::new(
            vec![0.2, 0.9],
            vec![
                Group { p: 0.5, arms: vec![0, 1] },
                Group { p: 0.5, arms: vec![0, 1] },
            ],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        let report = price_of_fairness(&a, &sol).unwrap();
        assert_abs_diff_eq!(report.pof, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn pof_undefined_without_cooperative_gain() {
        let inst = GroupedInstance::new(
            vec![0.2, 0.8],
            vec![Group { p: 1.0, arms: vec![0, 1] }],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        assert_eq!(price_of_fairness(&a, &sol).unwrap_err(), NashError::UndefinedPoF);
    }

    #[test]
    fn welfare_dominates_random_feasible_points() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let a = analyze(&example_two_group()).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        let y_star = sol.welfare.finite().unwrap();
        let prog = Program::build(&a);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let mut q = vec![0.0; prog.vars.len()];
            for (_, block) in &prog.arm_blocks {
                let mut sum = 0.0;
                for v in block.clone() {
                    q[v] = rng.random::<f64>();
                    sum += q[v];
                }
                for v in block.clone() {
                    q[v] /= sum;
                }
            }
            let gains = prog.gains(&q);
            if gains.iter().all(|&s| s > 0.0) {
                let w = prog.welfare_over(&gains, &[true, true]);
                assert!(w <= y_star + 1e-6);
            }
        }
    }

    #[test]
    fn min_norm_beats_same_gain_grid() {
        // Two interchangeable arms shared by the same two groups with equal
        // coefficients: the gains pin only the sums, leaving a line of
        // optimal q along which the norm varies.
        let inst = GroupedInstance::new(
            vec![0.3, 0.3f64.next_up(), 0.8],
            vec![
                Group { p: 0.5, arms: vec![0, 1, 2] },
                Group { p: 0.5, arms: vec![0, 1, 2] },
            ],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        let prog = Program::build(&a);
        // Grid over feasible q with gains matching the solution's.
        let s_star = sol.s.clone();
        let mut best_norm = f64::MAX;
        let n = 2000;
        for i in 0..=n {
            let x = i as f64 / n as f64; // group-0 share of arm 0
            // Choose group-0 share of arm 1 to keep group 0's gain fixed.
            let c0 = prog.coeff[0];
            let target: f64 = prog.base[0] - s_star[0];
            let c1 = prog.coeff[2];
            let y = (target - c0 * x) / c1;
            if !(0.0..=1.0).contains(&y) {
                continue;
            }
            let q = vec![x, 1.0 - x, y, 1.0 - y];
            let gains = prog.gains(&q);
            if (gains[0] - s_star[0]).abs() < 1e-9 && (gains[1] - s_star[1]).abs() < 1e-6 {
                let norm: f64 = q.iter().map(|v| v * v).sum();
                best_norm = best_norm.min(norm);
            }
        }
        assert!(
            sol.norm_sq <= best_norm + 1e-6,
            "solver norm {} vs grid best {}",
            sol.norm_sq,
            best_norm
        );
    }

    #[test]
    fn min_norm_first_order_stationarity() {
        let inst = GroupedInstance::new(
            vec![0.3, 0.3f64.next_up(), 0.8],
            vec![
                Group { p: 0.5, arms: vec![0, 1, 2] },
                Group { p: 0.5, arms: vec![0, 1, 2] },
            ],
        )
        .unwrap();
        let a = analyze(&inst).unwrap();
        let sol = solve_nash(&a, 1e-8).unwrap();
        let prog = Program::build(&a);
        let q: Vec<f64> = prog.vars.iter().map(|&(arm, g)| sol.q[g][arm]).collect();
        // Project the gradient of |q|^2 (= 2q) onto the null space of the
        // active constraints; it must vanish.
        let rows_cnt = prog.arm_blocks.len() + prog.base.len();
        let mut m = DMatrix::zeros(rows_cnt, q.len());
        for (i, (_, block)) in prog.arm_blocks.iter().enumerate() {
            for v in block.clone() {
                m[(i, v)] = 1.0;
            }
        }
        for (g, vs) in prog.of_group.iter().enumerate() {
            for &v in vs {
                m[(prog.arm_blocks.len() + g, v)] = prog.coeff[v];
            }
        }
        let grad = DVector::from_vec(q.clone()) * 2.0;
        // Solve M^T lambda ~ grad in least squares; the residual is the
        // projected gradient.
        let mt = m.transpose();
        let lambda = mt
            .clone()
            .svd(true, true)
            .solve(&grad, 1e-12)
            .expect("least squares");
        let resid = (&mt * lambda - grad).amax();
        assert!(resid < 1e-6, "projected gradient {resid}");
    }
}
