//! Pilot run of the price-of-fairness table at full scale.
use fairband::gen::{pof_table, GeneratorKind};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let t0 = std::time::Instant::now();
    let table = pof_table(
        &[GeneratorKind::Iid, GeneratorKind::Skewed],
        &[3, 5, 10, 50],
        n,
        20250809,
    );
    for row in &table.rows {
        println!(
            "{:7} G={:<3} median={:.3} p95={:.3} rejected={}",
            row.kind, row.groups, row.median, row.p95, row.rejected
        );
    }
    println!("elapsed: {:.1?}", t0.elapsed());
}
