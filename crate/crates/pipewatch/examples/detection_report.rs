//! Per-node detection table for the no-leak blockage study: run all ten
//! bundled sensors, tag each one downstream or upstream of the blocked
//! pipe by pre-event flow direction, and print true/false positives.
//!
//! Run with: cargo run --release --example detection_report -- [seed]

use pipewatch::data;
use pipewatch::eval::{downstream_report, median_tp, run_pipeline_in_memory, FlowTag, RunConfig};

fn main() -> pipewatch::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let network = data::hanoi_like();
    let scenario = data::blockage_study_scenario();

    let mut cfg = RunConfig::new("bundled");
    cfg.seed = seed;
    println!(
        "running {} sensors over {} steps (P07 blocked on [2000, 3000))...",
        scenario.sensor_nodes.len(),
        scenario.horizon_steps
    );
    let start = std::time::Instant::now();
    let artifacts = run_pipeline_in_memory(&cfg, &scenario, &network)?;
    println!("done in {:.1?}", start.elapsed());

    let rows = downstream_report(&artifacts, &network, "P07")?;
    println!("{:<10} {:<12} {:>6} {:>6}", "sensor", "tag", "TP", "FP");
    for r in &rows {
        println!(
            "{:<10} {:<12} {:>6} {:>6}",
            r.sensor_id, r.tag, r.true_positives, r.false_positives
        );
    }
    println!(
        "median TP downstream {:?} vs upstream {:?}",
        median_tp(&rows, FlowTag::Downstream),
        median_tp(&rows, FlowTag::Upstream)
    );
    Ok(())
}
