//! Arm-selection policies: KL-UCB over the available arms, plain greedy,
//! and the proportionally fair index policy that follows the bargaining
//! shares of the empirical program.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::empirical_analytics;
use crate::instance::GroupedInstance;
use crate::kl::{kl_ucb_index, KlBudget};
use crate::nash::{regret_optimal_share_matrix, solve_nash_restricted, NashError};

/// Margin below which an empirical gap counts as zero, keeping estimated
/// pull constants finite when an arm estimate sits next to the estimated
/// group optimum.
pub const EMPIRICAL_KAPPA: f64 = 1e-6;

/// When the empirical bargaining program is re-solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ResolveSchedule {
    /// At powers of two and whenever any arm's pull count doubles. The
    /// shares drift continuously in the estimates, so refreshing on this
    /// schedule loses nothing measurable and avoids a convex solve per step.
    #[default]
    Doubling,
    /// Re-solve every step; conformance-test mode.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    KlUcb,
    PfUcb,
    Greedy,
}

impl PolicyKind {
    pub fn id(&self) -> &'static str {
        match self {
            PolicyKind::KlUcb => "klucb",
            PolicyKind::PfUcb => "pfucb",
            PolicyKind::Greedy => "greedy",
        }
    }
}

/// Why the fair policy pulled its arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PullReason {
    Explore,
    Greedy,
}

#[derive(Debug, Clone)]
struct ResolveSnapshot {
    t: u64,
    pulls: Vec<u64>,
    q_hat: Vec<Vec<f64>>,
}

/// Mutable per-run state: pull counts, reward sums, the clock, and the
/// cached solution of the empirical program.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub n_total: Vec<u64>,
    pub n_group: Vec<Vec<u64>>,
    pub sums: Vec<f64>,
    pub t: u64,
    snapshot: Option<ResolveSnapshot>,
}

impl PolicyState {
    pub fn new(num_groups: usize, num_arms: usize) -> Self {
        PolicyState {
            n_total: vec![0; num_arms],
            n_group: vec![vec![0; num_arms]; num_groups],
            sums: vec![0.0; num_arms],
            t: 1,
            snapshot: None,
        }
    }

    pub fn empirical_mean(&self, arm: usize) -> Option<f64> {
        (self.n_total[arm] > 0).then(|| self.sums[arm] / self.n_total[arm] as f64)
    }

    pub fn record(&mut self, group: usize, arm: usize, reward: f64) {
        self.n_group[group][arm] += 1;
        self.n_total[arm] += 1;
        self.sums[arm] += reward;
        self.t += 1;
        #[cfg(debug_assertions)]
        for a in 0..self.n_total.len() {
            let per_group: u64 = self.n_group.iter().map(|row| row[a]).sum();
            debug_assert_eq!(per_group, self.n_total[a], "pull accounting broke at arm {a}");
        }
    }

    /// Cached shares of the empirical program; zero for anything never
    /// resolved or outside the program's support.
    pub fn q_hat(&self, group: usize, arm: usize) -> f64 {
        self.snapshot
            .as_ref()
            .map_or(0.0, |s| s.q_hat[group][arm])
    }

    fn needs_resolve(&self, schedule: ResolveSchedule) -> bool {
        let Some(snap) = &self.snapshot else {
            return true;
        };
        match schedule {
            ResolveSchedule::EveryStep => true,
            ResolveSchedule::Doubling => {
                (self.t.is_power_of_two() && self.t > snap.t)
                    || self
                        .n_total
                        .iter()
                        .zip(&snap.pulls)
                        .any(|(&now, &then)| {
                            if then == 0 { now >= 1 } else { now >= 2 * then }
                        })
            }
        }
    }
}

fn ucb_index(state: &PolicyState, arm: usize, budget: KlBudget) -> f64 {
    match state.empirical_mean(arm) {
        // Unpulled arms carry maximal optimism so every group tries each of
        // its arms before the indices start to matter.
        None => 1.0,
        Some(mean) => kl_ucb_index(mean, state.n_total[arm], budget),
    }
}

/// Highest-index available arm; ties break toward the lowest arm id.
pub fn klucb_select(state: &PolicyState, available: &[usize]) -> usize {
    assert!(!available.is_empty());
    let budget = KlBudget::at(state.t);
    let mut best = available[0];
    let mut best_idx = f64::MIN;
    for &a in available {
        let idx = ucb_index(state, a, budget);
        if idx > best_idx {
            best = a;
            best_idx = idx;
        }
    }
    best
}

/// Greedy selection: an unpulled arm outranks every pulled one (optimism as
/// initialization), then the highest empirical mean; ties toward lowest id.
pub fn greedy_select(state: &PolicyState, available: &[usize]) -> usize {
    assert!(!available.is_empty());
    if let Some(&a) = available.iter().find(|&&a| state.n_total[a] == 0) {
        return a;
    }
    let mut best = available[0];
    let mut best_mean = f64::MIN;
    for &a in available {
        let mean = state.empirical_mean(a).unwrap();
        if mean > best_mean {
            best = a;
            best_mean = mean;
        }
    }
    best
}

/// One step of the fair index policy for the arriving group.
///
/// Across all groups, collect each group's UCB-argmax arm. If the arriving
/// group can access one of those arms and its own share of that arm's pulls
/// is at or below the cached bargaining share, pull it (uniformly at random
/// among candidates); otherwise fall back to the greedy arm.
pub fn pfucb_select<R: Rng>(
    state: &PolicyState,
    inst: &GroupedInstance,
    group: usize,
    rng: &mut R,
) -> (usize, PullReason) {
    let budget = KlBudget::at(state.t);
    let mut ucb_arms: Vec<usize> = Vec::with_capacity(inst.num_groups());
    for g in 0..inst.num_groups() {
        let mut best = inst.arms_of(g)[0];
        let mut best_idx = f64::MIN;
        for &a in inst.arms_of(g) {
            let idx = ucb_index(state, a, budget);
            if idx > best_idx {
                best = a;
                best_idx = idx;
            }
        }
        ucb_arms.push(best);
    }
    ucb_arms.sort_unstable();
    ucb_arms.dedup();

    let candidates: Vec<usize> = inst
        .arms_of(group)
        .iter()
        .copied()
        .filter(|&a| {
            ucb_arms.binary_search(&a).is_ok()
                && state.n_group[group][a] as f64
                    <= state.q_hat(group, a) * state.n_total[a] as f64
        })
        .collect();
    if !candidates.is_empty() {
        let pick = candidates[rng.random_range(0..candidates.len())];
        return (pick, PullReason::Explore);
    }
    (greedy_select(state, inst.arms_of(group)), PullReason::Greedy)
}

/// Re-solves the empirical bargaining program if the schedule calls for it.
///
/// Arms never pulled enter the program with a 0.5 placeholder mean. Groups
/// whose access set looks entirely optimal under the estimates (or whose
/// estimated solo regret is zero) drop out of the objective. When the
/// remaining program has no positive-gain point — some group's estimated
/// suboptimal arms are all exclusive, or boundary estimates defeat the split
/// construction — the shares fall back to the regret-optimal split, whose
/// intact simplex keeps every estimated-suboptimal arm explorable by its
/// minimal-optimum group. A zero-share fallback would instead freeze any arm
/// whose first rewards came up unlucky: greedy never retries the lowest
/// estimate, so the bad estimate could never separate.
pub fn resolve_empirical_program(
    state: &mut PolicyState,
    inst: &GroupedInstance,
    schedule: ResolveSchedule,
) {
    if !state.needs_resolve(schedule) {
        return;
    }
    let means: Vec<f64> = (0..inst.num_arms())
        .map(|a| state.empirical_mean(a).unwrap_or(0.5))
        .collect();
    let analytics = empirical_analytics(inst, &means, EMPIRICAL_KAPPA);
    let active: Vec<bool> = (0..analytics.num_groups)
        .map(|g| !analytics.sub_of_group[g].is_empty() && analytics.disagreement[g] > 0.0)
        .collect();
    let q_hat = if active.iter().any(|&a| a) {
        match solve_nash_restricted(&analytics, 1e-8, &active) {
            Ok(sol) => sol.q,
            Err(NashError::Assumption1Violated) => regret_optimal_share_matrix(&analytics),
            // Numerical failure on a transient estimate: keep the fallback
            // shares rather than aborting a million-step run.
            Err(_) => regret_optimal_share_matrix(&analytics),
        }
    } else {
        regret_optimal_share_matrix(&analytics)
    };
    state.snapshot = Some(ResolveSnapshot {
        t: state.t,
        pulls: state.n_total.clone(),
        q_hat,
    });
}
