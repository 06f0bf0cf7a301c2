//! Grouped multi-armed bandits with a bargaining view of exploration.
//!
//! A grouped bandit ties every time step to a group that can only access a
//! subset of the arms. Sharing observations lets groups cut each other's
//! regret, which raises the question this crate is built around: who should
//! carry the burden of exploration, and at what price?
//!
//! The crate computes the relevant quantities exactly (gap constants,
//! disagreement points, regret lower bounds, the Nash bargaining solution
//! over exploration shares, the price of fairness), simulates index policies
//! that realise them (`KL-UCB`, `PF-UCB`), and extends the machinery to
//! grouped linear contextual bandits with a patient-dosing data pipeline.
//!
//! The guide under `book/` walks through the concepts chapter by chapter;
//! its code blocks compile and run as doc-tests of this crate.

pub mod analytics;
pub mod contextual;
pub mod gen;
pub mod instance;
pub mod kl;
pub mod lp;
pub mod nash;
pub mod policy;
pub mod sim;
pub mod warfarin;

mod guide;

pub use analytics::{analyze, regret_optimal_allocation, InstanceAnalytics};
pub use instance::{example_two_group, Group, GroupedInstance, ModelError, RawInstance};
pub use kl::{bernoulli_kl, kl_ucb_index, KlBudget, KlError};
pub use nash::{
    feasible_init, max_group_gain, nash_welfare, price_of_fairness, solve_nash, util_gains,
    NashError, NashSolution, PoFReport, Welfare,
};
