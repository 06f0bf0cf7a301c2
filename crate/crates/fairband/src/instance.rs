//! Grouped K-armed bandit instances: arm means plus the bipartite
//! group-to-arm access graph.
//!
//! Instances are immutable after validation; the reverse map (groups
//! connected to each arm) is derived once and cached.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the arrival-probability simplex check.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("group {group} has an empty arm set")]
    EmptyGroupArms { group: usize },
    #[error("arrival probabilities sum to {sum}, not 1")]
    ArrivalProbsNotSimplex { sum: f64 },
    #[error("arm {arm} mean {mean} outside the open interval (0, 1)")]
    MeanOutOfRange { arm: usize, mean: f64 },
    #[error("group {group} arrival probability {p} outside (0, 1]")]
    ArrivalProbOutOfRange { group: usize, p: f64 },
    #[error("arm {arm} is reachable by no group")]
    OrphanArm { arm: usize },
    #[error("group {group} references arm {arm} but there are only {k} arms")]
    ArmIdOutOfRange { group: usize, arm: usize, k: usize },
    #[error("arm {arm} has zero gap to OPT({group}) yet was classified suboptimal")]
    DegenerateKl { group: usize, arm: usize },
}

/// One group: arrival probability and the set of arms it can access.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub p: f64,
    pub arms: Vec<usize>,
}

/// Raw instance as read from JSON, prior to validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawInstance {
    pub arm_means: Vec<f64>,
    pub groups: Vec<Group>,
}

/// A validated grouped bandit instance.
///
/// `groups_of_arm` is the derived reverse adjacency; `has_ties` records
/// duplicate arm means (the skewed generator produces them by construction);
/// `assumption1` records whether every group owns a suboptimal arm shared
/// with at least one other group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedInstance {
    arm_means: Vec<f64>,
    groups: Vec<Group>,
    #[serde(skip)]
    groups_of_arm: Vec<Vec<usize>>,
    pub has_ties: bool,
    pub assumption1: bool,
}

impl GroupedInstance {
    /// Validates a raw instance and derives the cached maps and flags.
    pub fn validate(raw: RawInstance) -> Result<Self, ModelError> {
        let k = raw.arm_means.len();
        for (a, &m) in raw.arm_means.iter().enumerate() {
            if !(m > 0.0 && m < 1.0) {
                return Err(ModelError::MeanOutOfRange { arm: a, mean: m });
            }
        }
        let mut psum = 0.0;
        for (g, group) in raw.groups.iter().enumerate() {
            if group.arms.is_empty() {
                return Err(ModelError::EmptyGroupArms { group: g });
            }
            if !(group.p > 0.0 && group.p <= 1.0) {
                return Err(ModelError::ArrivalProbOutOfRange { group: g, p: group.p });
            }
            for &a in &group.arms {
                if a >= k {
                    return Err(ModelError::ArmIdOutOfRange { group: g, arm: a, k });
                }
            }
            psum += group.p;
        }
        if (psum - 1.0).abs() > SIMPLEX_TOL {
            return Err(ModelError::ArrivalProbsNotSimplex { sum: psum });
        }

        let mut groups = raw.groups;
        for group in &mut groups {
            group.arms.sort_unstable();
            group.arms.dedup();
        }

        let mut groups_of_arm = vec![Vec::new(); k];
        for (g, group) in groups.iter().enumerate() {
            for &a in &group.arms {
                groups_of_arm[a].push(g);
            }
        }
        if let Some(a) = groups_of_arm.iter().position(|gs| gs.is_empty()) {
            return Err(ModelError::OrphanArm { arm: a });
        }

        let mut sorted = raw.arm_means.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let has_ties = sorted.windows(2).any(|w| w[0] == w[1]);

        let mut inst = GroupedInstance {
            arm_means: raw.arm_means,
            groups,
            groups_of_arm,
            has_ties,
            assumption1: false,
        };
        inst.assumption1 = inst.check_assumption1();
        Ok(inst)
    }

    /// Builds and validates in one step.
    pub fn new(arm_means: Vec<f64>, groups: Vec<Group>) -> Result<Self, ModelError> {
        Self::validate(RawInstance { arm_means, groups })
    }

    fn check_assumption1(&self) -> bool {
        self.groups.iter().all(|group| {
            let opt = self.opt_of(&group.arms);
            group
                .arms
                .iter()
                .any(|&a| self.arm_means[a] < opt && self.groups_of_arm[a].len() >= 2)
        })
    }

    fn opt_of(&self, arms: &[usize]) -> f64 {
        arms.iter().map(|&a| self.arm_means[a]).fold(f64::MIN, f64::max)
    }

    pub fn num_arms(&self) -> usize {
        self.arm_means.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn arm_means(&self) -> &[f64] {
        &self.arm_means
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.arm_means[arm]
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn arms_of(&self, group: usize) -> &[usize] {
        &self.groups[group].arms
    }

    pub fn arrival_prob(&self, group: usize) -> f64 {
        self.groups[group].p
    }

    /// Groups connected to `arm` (the reverse adjacency), sorted ascending.
    pub fn groups_of_arm(&self, arm: usize) -> &[usize] {
        &self.groups_of_arm[arm]
    }

    /// Restriction to a single group: that group alone, arrival probability 1,
    /// arm ids preserved over the subset it can access.
    pub fn restrict_to(&self, group: usize) -> GroupedInstance {
        let arms = self.groups[group].arms.clone();
        let sub = Group { p: 1.0, arms };
        // Re-index arms densely so the restricted instance stands alone.
        let mut id_map = vec![usize::MAX; self.num_arms()];
        let mut means = Vec::new();
        for &a in &sub.arms {
            id_map[a] = means.len();
            means.push(self.arm_means[a]);
        }
        let remapped = Group {
            p: 1.0,
            arms: sub.arms.iter().map(|&a| id_map[a]).collect(),
        };
        GroupedInstance::new(means, vec![remapped]).expect("restriction of a valid instance")
    }

    /// Lossless JSON round-trip (serde_json prints shortest round-trip floats).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawInstance {
            arm_means: self.arm_means.clone(),
            groups: self.groups.clone(),
        })
        .expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let raw: RawInstance = serde_json::from_str(s).map_err(|e| e.to_string())?;
        Self::validate(raw).map_err(|e| e.to_string())
    }

    /// Stable identifier derived from the instance content; used to tie
    /// simulation traces back to the instance they ran on.
    pub fn content_id(&self) -> String {
        let mut h = 0xcbf29ce484222325u64;
        let mut absorb = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &m in &self.arm_means {
            absorb(&m.to_bits().to_le_bytes());
        }
        for g in &self.groups {
            absorb(&g.p.to_bits().to_le_bytes());
            for &a in &g.arms {
                absorb(&(a as u64).to_le_bytes());
            }
            absorb(b"|");
        }
        format!("{h:016x}")
    }
}

/// The worked 3-arm, 2-group instance used throughout the tests and the
/// guide: means (0.3, 0.5, 0.7), group 0 sees arms {0, 1}, group 1 sees
/// arms {0, 2}, equal arrivals.
pub fn example_two_group() -> GroupedInstance {
    GroupedInstance::new(
        vec![0.3, 0.5, 0.7],
        vec![
            Group { p: 0.5, arms: vec![0, 1] },
            Group { p: 0.5, arms: vec![0, 2] },
        ],
    )
    .expect("example instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_instance_flags() {
        let inst = example_two_group();
        assert!(inst.assumption1);
        assert!(!inst.has_ties);
        assert_eq!(inst.groups_of_arm(0), &[0, 1]);
        assert_eq!(inst.groups_of_arm(1), &[0]);
        assert_eq!(inst.groups_of_arm(2), &[1]);
    }

    #[test]
    fn single_group_fails_assumption1() {
        let inst = GroupedInstance::new(
            vec![0.2, 0.8],
            vec![Group { p: 1.0, arms: vec![0, 1] }],
        )
        .unwrap();
        assert!(!inst.assumption1, "no arm can be shared with a second group");
    }

    #[test]
    fn simplex_violation_rejected() {
        let err = GroupedInstance::new(
            vec![0.2, 0.8],
            vec![
                Group { p: 0.6, arms: vec![0] },
                Group { p: 0.6, arms: vec![1] },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ArrivalProbsNotSimplex { .. }));
    }

    #[test]
    fn orphan_arm_rejected() {
        let err = GroupedInstance::new(
            vec![0.2, 0.8, 0.5],
            vec![
                Group { p: 0.5, arms: vec![0] },
                Group { p: 0.5, arms: vec![1] },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::OrphanArm { arm: 2 }));
    }

    #[test]
    fn boundary_mean_rejected() {
        for bad in [0.0, 1.0, -0.1, 1.5] {
            let err = GroupedInstance::new(
                vec![bad, 0.5],
                vec![Group { p: 1.0, arms: vec![0, 1] }],
            )
            .unwrap_err();
            assert!(matches!(err, ModelError::MeanOutOfRange { .. }));
        }
    }

    #[test]
    fn ties_flagged_not_rejected() {
        let inst = GroupedInstance::new(
            vec![0.4, 0.4, 0.9],
            vec![
                Group { p: 0.5, arms: vec![0, 2] },
                Group { p: 0.5, arms: vec![1, 2] },
            ],
        )
        .unwrap();
        assert!(inst.has_ties);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let inst = GroupedInstance::new(
            vec![0.1234567890123456789, 1.0f64.next_down(), 0.5f64.next_up()],
            vec![
                Group { p: 1.0 / 3.0, arms: vec![0, 1] },
                Group { p: 1.0 - 1.0 / 3.0, arms: vec![1, 2] },
            ],
        )
        .unwrap();
        let back = GroupedInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst.arm_means(), back.arm_means());
        assert_eq!(inst.groups(), back.groups());
        assert_eq!(inst.content_id(), back.content_id());
    }

    #[test]
    fn restriction_keeps_means() {
        let inst = example_two_group();
        let sub = inst.restrict_to(1);
        assert_eq!(sub.num_groups(), 1);
        assert_eq!(sub.arm_means(), &[0.3, 0.7]);
        assert_eq!(sub.arrival_prob(0), 1.0);
    }
}
