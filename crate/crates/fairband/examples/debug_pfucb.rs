//! Trace PF-UCB state on the worked example.
use fairband::analytics::analyze;
use fairband::instance::example_two_group;
use fairband::kl::{kl_ucb_index, KlBudget};
use fairband::policy::*;
use fairband::sim::stream_rng;
use rand::Rng;

fn main() {
    let inst = example_two_group();
    let _a = analyze(&inst).unwrap();
    let horizon = 100_000u64;
    let seed = 0u64;
    let mut arrivals_rng = stream_rng(seed, "arrivals");
    let mut policy_rng = stream_rng(seed, "policy");
    let mut reward_rngs: Vec<_> = (0..3).map(|a| stream_rng(seed, &format!("rewards/arm-{a}"))).collect();
    let mut state = PolicyState::new(2, 3);
    let mut explore_pulls = [[0u64; 3]; 2];
    for t in 1..=horizon {
        let u: f64 = arrivals_rng.random();
        let group = if u < 0.5 { 0 } else { 1 };
        resolve_empirical_program(&mut state, &inst, ResolveSchedule::Doubling);
        let (arm, reason) = pfucb_select(&state, &inst, group, &mut policy_rng);
        if reason == PullReason::Explore {
            explore_pulls[group][arm] += 1;
        }
        let reward = if reward_rngs[arm].random::<f64>() < inst.mean(arm) { 1.0 } else { 0.0 };
        state.record(group, arm, reward);
        if t.is_power_of_two() && t >= 1024 {
            let means: Vec<f64> = (0..3).map(|a| state.empirical_mean(a).unwrap_or(-1.0)).collect();
            let budget = KlBudget::at(state.t);
            let idx: Vec<f64> = (0..3)
                .map(|a| match state.empirical_mean(a) {
                    None => 1.0,
                    Some(m) => kl_ucb_index(m, state.n_total[a], budget),
                })
                .collect();
            println!(
                "t={t}: N={:?} N^g={:?} means={:?}",
                state.n_total, state.n_group, means
            );
            println!(
                "   idx={idx:?} qhat=[{:.4},{:.4}] explore={:?}",
                state.q_hat(0, 0),
                state.q_hat(1, 0),
                explore_pulls
            );
        }
    }
}
