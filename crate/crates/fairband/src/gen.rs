//! Random instance generators and the batch driver that tabulates the
//! price of fairness over many draws.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::analyze;
use crate::instance::{Group, GroupedInstance};
use crate::nash::{price_of_fairness, solve_nash};
use crate::sim::stream_rng;

/// Means are clipped into this interval so every divergence stays finite.
pub const MEAN_CLIP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// Fixed arm count, each group-arm edge present independently with
    /// `edge_prob`, arm means i.i.d. uniform.
    Iid,
    /// One private arm per minor group plus a shared mid arm; the last group
    /// sees everything. Means come from three sorted uniforms, so the
    /// private arms tie by construction.
    Skewed,
}

impl GeneratorKind {
    pub fn id(&self) -> &'static str {
        match self {
            GeneratorKind::Iid => "iid",
            GeneratorKind::Skewed => "skewed",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub groups: usize,
    /// Arm count for the i.i.d. kind (the skewed kind forces groups + 1).
    pub arms: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn iid(groups: usize, seed: u64) -> Self {
        GeneratorConfig { kind: GeneratorKind::Iid, groups, arms: 10, edge_prob: 0.5, seed }
    }

    pub fn skewed(groups: usize, seed: u64) -> Self {
        GeneratorConfig { kind: GeneratorKind::Skewed, groups, arms: 0, edge_prob: 0.0, seed }
    }
}

/// A generated instance together with how many draws were rejected before a
/// valid one appeared (the i.i.d. kind resamples on empty access sets,
/// orphan arms, and bargaining-infeasible topologies).
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: GroupedInstance,
    pub rejected: u64,
}

pub fn generate(config: &GeneratorConfig) -> Generated {
    let mut rng = stream_rng(config.seed, &format!("generator/{}", config.kind.id()));
    match config.kind {
        GeneratorKind::Iid => gen_iid(config, &mut rng),
        GeneratorKind::Skewed => Generated { instance: gen_skewed(config, &mut rng), rejected: 0 },
    }
}

fn uniform_mean<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>().clamp(MEAN_CLIP, 1.0 - MEAN_CLIP)
}

fn gen_iid<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> Generated {
    assert!(config.groups >= 1 && config.arms >= 1);
    let mut rejected = 0;
    loop {
        let means: Vec<f64> = (0..config.arms).map(|_| uniform_mean(rng)).collect();
        let groups: Vec<Group> = (0..config.groups)
            .map(|_| Group {
                p: 1.0 / config.groups as f64,
                arms: (0..config.arms)
                    .filter(|_| rng.random::<f64>() < config.edge_prob)
                    .collect(),
            })
            .collect();
        if groups.iter().any(|g| g.arms.is_empty()) {
            rejected += 1;
            continue;
        }
        match GroupedInstance::new(means, groups) {
            Ok(inst) if inst.assumption1 => return Generated { instance: inst, rejected },
            _ => rejected += 1,
        }
    }
}

fn gen_skewed<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> GroupedInstance {
    let g = config.groups;
    assert!(g >= 2, "skewed construction needs at least two groups");
    let mut draws = [uniform_mean(rng), uniform_mean(rng), uniform_mean(rng)];
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let [low, mid, high] = draws;
    // Arms 0..g-1 share the low mean; arm g-1 is the mid arm every minor
    // group can reach; arm g is the high arm only the last group sees.
    let mut means = vec![low; g - 1];
    means.push(mid);
    means.push(high);
    let mut groups: Vec<Group> = (0..g - 1)
        .map(|i| Group { p: 1.0 / g as f64, arms: vec![i, g - 1] })
        .collect();
    groups.push(Group { p: 1.0 / g as f64, arms: (0..=g).collect() });
    let inst = GroupedInstance::new(means, groups).expect("skewed construction is valid");
    debug_assert!(inst.assumption1, "holds by construction for g >= 2");
    inst
}

/// One row of the price-of-fairness table.
#[derive(Debug, Clone, Serialize)]
pub struct PofRow {
    pub kind: String,
    pub groups: usize,
    pub samples: usize,
    pub median: f64,
    pub p95: f64,
    pub rejected: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PofTable {
    pub format_version: u32,
    pub master_seed: u64,
    pub rows: Vec<PofRow>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn mix_seed(master: u64, salt: &str, index: usize) -> u64 {
    let mut rng = stream_rng(master, &format!("{salt}/{index}"));
    rng.random()
}

/// Generates `n` instances per (kind, group-count) cell, solves the
/// bargaining program on each, and reports the median and 95th percentile
/// of the price of fairness. Every cell is reproducible from the master
/// seed alone; each instance's bound check runs as it is produced.
pub fn pof_table(
    kinds: &[GeneratorKind],
    group_counts: &[usize],
    n: usize,
    master_seed: u64,
) -> PofTable {
    let mut rows = Vec::new();
    for &kind in kinds {
        for &groups in group_counts {
            let salt = format!("pof-table/{}/{}", kind.id(), groups);
            let results: Vec<(f64, u64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let seed = mix_seed(master_seed, &salt, i);
                    let config = match kind {
                        GeneratorKind::Iid => GeneratorConfig::iid(groups, seed),
                        GeneratorKind::Skewed => GeneratorConfig::skewed(groups, seed),
                    };
                    let generated = generate(&config);
                    let analytics = analyze(&generated.instance)
                        .unwrap_or_else(|e| panic!("generated instance (seed {seed}): {e}"));
                    let nash = solve_nash(&analytics, 1e-8)
                        .unwrap_or_else(|e| panic!("nash solve (seed {seed}): {e}"));
                    let report = price_of_fairness(&analytics, &nash)
                        .unwrap_or_else(|e| panic!("pof (seed {seed}): {e}"));
                    assert!(
                        report.pof <= report.bound_general + 1e-9,
                        "bound violated on seed {seed}: {} > {}",
                        report.pof,
                        report.bound_general
                    );
                    (report.pof, generated.rejected)
                })
                .collect();
            let mut pofs: Vec<f64> = results.iter().map(|r| r.0).collect();
            pofs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            rows.push(PofRow {
                kind: kind.id().to_string(),
                groups,
                samples: n,
                median: percentile(&pofs, 0.5),
                p95: percentile(&pofs, 0.95),
                rejected: results.iter().map(|r| r.1).sum(),
            });
        }
    }
    PofTable { format_version: 1, master_seed, rows }
}

/// Writes the table as CSV (human-readable six-digit cells).
pub fn write_pof_csv<W: std::io::Write>(table: &PofTable, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "groups", "samples", "median", "p95", "rejected", "seed"])?;
    for row in &table.rows {
        w.write_record(&[
            row.kind.clone(),
            row.groups.to_string(),
            row.samples.to_string(),
            format!("{:.6}", row.median),
            format!("{:.6}", row.p95),
            row.rejected.to_string(),
            table.master_seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
