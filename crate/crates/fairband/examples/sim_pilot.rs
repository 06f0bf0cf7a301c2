//! Pilot the index policies on the worked example at desk scale.
use fairband::analytics::analyze;
use fairband::instance::example_two_group;
use fairband::nash::solve_nash;
use fairband::policy::PolicyKind;
use fairband::sim::{aggregate, run_many, SimConfig};

fn main() {
    let horizon: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    let n_seeds: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(50);
    let inst = example_two_group();
    let analytics = analyze(&inst).unwrap();
    let nash = solve_nash(&analytics, 1e-8).unwrap();
    let seeds: Vec<u64> = (0..n_seeds as u64).collect();
    for policy in [PolicyKind::KlUcb, PolicyKind::PfUcb] {
        let t0 = std::time::Instant::now();
        let traces = run_many(&inst, SimConfig::new(policy), horizon, &seeds);
        let report = aggregate(&traces, &analytics, Some(&nash), &[0.5, 0.5]).unwrap();
        println!(
            "{}: regret/logT = {:?} (lower_bound {:.4}, ratios {:?})",
            policy.id(),
            report.regret_rate_mean,
            analytics.lower_bound,
            report
                .regret_rate_mean
                .iter()
                .map(|r| r / analytics.lower_bound)
                .collect::<Vec<_>>()
        );
        println!(
            "  split arm0 = {:?} (target group1 {:.4})  gains {:?}",
            [report.split_fraction[0][0], report.split_fraction[1][0]],
            nash.q[1][0],
            report.empirical_gains
        );
        // Per-seed positive-gain counts for the fair policy.
        let log_t = (horizon as f64).ln();
        let both_pos = traces
            .iter()
            .filter(|tr| {
                (0..2).all(|g| analytics.disagreement[g] - tr.final_regret[g] / log_t > 0.0)
            })
            .count();
        println!("  seeds with both gains positive: {both_pos}/{n_seeds}  elapsed {:.1?}", t0.elapsed());
    }
}
