//! Closed-form quantities of a grouped instance: per-group optima, gaps,
//! suboptimal-arm sets, log-scaled pull-count constants, the per-group
//! solo regrets (the disagreement point) and the total-regret lower bound.

use serde::Serialize;

use crate::instance::{GroupedInstance, ModelError};
use crate::kl::bernoulli_kl_extended;

/// All analytic quantities derived from an instance.
///
/// Matrix entries are `None` where the quantity is undefined: gaps exist for
/// `a` in the group's access set, pull-count constants only for arms
/// suboptimal for that group. The struct is self-contained so downstream
/// solvers need no back-reference to the instance.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceAnalytics {
    pub num_groups: usize,
    pub num_arms: usize,
    pub arms_of_group: Vec<Vec<usize>>,
    pub groups_of_arm: Vec<Vec<usize>>,
    /// `OPT(g)`: best accessible mean per group.
    pub opt: Vec<f64>,
    /// `gap[g][a] = OPT(g) - mean(a)` for `a` in the group's access set.
    pub gap: Vec<Vec<Option<f64>>>,
    /// Arms strictly suboptimal for each group.
    pub sub_of_group: Vec<Vec<usize>>,
    /// Arms suboptimal for every group that can access them.
    pub sub_global: Vec<usize>,
    /// `gamma[a]`: groups attaining the smallest `OPT` among those with
    /// access to `a` (a set; ties are kept).
    pub gamma: Vec<Vec<usize>>,
    /// `j_group[g][a] = 1 / KL(mean(a), OPT(g))` for suboptimal `a`.
    pub j_group: Vec<Vec<Option<f64>>>,
    /// `j_max[a] = max_g j_group[g][a]`, defined on globally suboptimal arms.
    pub j_max: Vec<Option<f64>>,
    /// Log-scaled regret each group would pay running alone.
    pub disagreement: Vec<f64>,
    /// Log-scaled lower bound on total regret for any consistent policy.
    pub lower_bound: f64,
    pub assumption1: bool,
}

/// Computes all analytics for a validated instance.
pub fn analyze(inst: &GroupedInstance) -> Result<InstanceAnalytics, ModelError> {
    let analytics = compute_analytics(
        inst.arm_means(),
        &collect_arms(inst),
        0.0,
    );
    // Strict gap test means a zero divergence can only come from an internal
    // inconsistency; surface it instead of dividing by zero.
    for g in 0..analytics.num_groups {
        for &a in &analytics.sub_of_group[g] {
            if analytics.j_group[g][a].is_none_or(|j| !j.is_finite()) {
                return Err(ModelError::DegenerateKl { group: g, arm: a });
            }
        }
    }
    Ok(analytics)
}

/// Analytics over substituted means, as used by the empirical program of
/// PF-UCB: an arm counts as suboptimal for a group only when its gap exceeds
/// `kappa`, and boundary divergences degrade to `J = 0` instead of erroring.
pub fn empirical_analytics(
    inst: &GroupedInstance,
    means: &[f64],
    kappa: f64,
) -> InstanceAnalytics {
    assert_eq!(means.len(), inst.num_arms());
    compute_analytics(means, &collect_arms(inst), kappa)
}

fn collect_arms(inst: &GroupedInstance) -> Vec<Vec<usize>> {
    (0..inst.num_groups())
        .map(|g| inst.arms_of(g).to_vec())
        .collect()
}

fn compute_analytics(
    means: &[f64],
    arms_of_group: &[Vec<usize>],
    kappa: f64,
) -> InstanceAnalytics {
    let num_groups = arms_of_group.len();
    let num_arms = means.len();

    let mut groups_of_arm = vec![Vec::new(); num_arms];
    for (g, arms) in arms_of_group.iter().enumerate() {
        for &a in arms {
            groups_of_arm[a].push(g);
        }
    }

    let opt: Vec<f64> = arms_of_group
        .iter()
        .map(|arms| arms.iter().map(|&a| means[a]).fold(f64::MIN, f64::max))
        .collect();

    let mut gap = vec![vec![None; num_arms]; num_groups];
    let mut sub_of_group = vec![Vec::new(); num_groups];
    for (g, arms) in arms_of_group.iter().enumerate() {
        for &a in arms {
            let d = opt[g] - means[a];
            gap[g][a] = Some(d);
            if d > kappa {
                sub_of_group[g].push(a);
            }
        }
    }

    let is_sub = |g: usize, a: usize| gap[g][a].is_some_and(|d| d > kappa);
    let sub_global: Vec<usize> = (0..num_arms)
        .filter(|&a| {
            !groups_of_arm[a].is_empty() && groups_of_arm[a].iter().all(|&g| is_sub(g, a))
        })
        .collect();

    let gamma: Vec<Vec<usize>> = (0..num_arms)
        .map(|a| {
            let gs = &groups_of_arm[a];
            if gs.is_empty() {
                return Vec::new();
            }
            let min_opt = gs.iter().map(|&g| opt[g]).fold(f64::MAX, f64::min);
            gs.iter().copied().filter(|&g| opt[g] == min_opt).collect()
        })
        .collect();

    let mut j_group = vec![vec![None; num_arms]; num_groups];
    for g in 0..num_groups {
        for &a in &sub_of_group[g] {
            let kl = bernoulli_kl_extended(means[a], opt[g]);
            j_group[g][a] = Some(if kl.is_finite() { 1.0 / kl } else { 0.0 });
        }
    }

    let mut j_max = vec![None; num_arms];
    for &a in &sub_global {
        let j = groups_of_arm[a]
            .iter()
            .filter_map(|&g| j_group[g][a])
            .fold(f64::MIN, f64::max);
        j_max[a] = Some(j);
    }

    let disagreement: Vec<f64> = (0..num_groups)
        .map(|g| {
            sub_of_group[g]
                .iter()
                .map(|&a| gap[g][a].unwrap() * j_group[g][a].unwrap())
                .sum()
        })
        .collect();

    let lower_bound: f64 = sub_global
        .iter()
        .map(|&a| {
            let g = gamma[a][0];
            gap[g][a].unwrap() * j_max[a].unwrap()
        })
        .sum();

    let assumption1 = (0..num_groups).all(|g| {
        sub_of_group[g].iter().any(|&a| groups_of_arm[a].len() >= 2)
    });

    InstanceAnalytics {
        num_groups,
        num_arms,
        arms_of_group: arms_of_group.to_vec(),
        groups_of_arm,
        opt,
        gap,
        sub_of_group,
        sub_global,
        gamma,
        j_group,
        j_max,
        disagreement,
        lower_bound,
        assumption1,
    }
}

impl InstanceAnalytics {
    pub fn is_sub_global(&self, arm: usize) -> bool {
        self.j_max[arm].is_some()
    }

    /// Gap charged when arm `a` is pulled by a minimal-OPT group; equal
    /// across the whole of `gamma[a]`.
    pub fn gamma_gap(&self, arm: usize) -> Option<f64> {
        self.gamma[arm].first().and_then(|&g| self.gap[g][arm])
    }

    /// Sum of the per-group solo regrets.
    pub fn total_disagreement(&self) -> f64 {
        self.disagreement.iter().sum()
    }
}

/// Per-group log-scaled regret of a regret-optimal policy: each globally
/// suboptimal arm's `J(a)` pulls go entirely to the minimal-OPT groups,
/// split equally when the minimum is tied (the total is tie-invariant since
/// the gap is equal across the tie set).
pub fn regret_optimal_allocation(analytics: &InstanceAnalytics) -> Vec<f64> {
    let mut regret = vec![0.0; analytics.num_groups];
    for &a in &analytics.sub_global {
        let share = analytics.gamma_gap(a).unwrap() * analytics.j_max[a].unwrap()
            / analytics.gamma[a].len() as f64;
        for &g in &analytics.gamma[a] {
            regret[g] += share;
        }
    }
    regret
}
