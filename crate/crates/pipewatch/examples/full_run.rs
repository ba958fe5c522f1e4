//! End-to-end run on the bundled one-year timeline: train on the warm-up
//! segment, stream the year through the detector, adapt on drift alarms,
//! and summarise what happened.
//!
//! Run with: cargo run --release --example full_run

use pipewatch::data;
use pipewatch::eval::{run_pipeline_in_memory, RunConfig};

fn main() -> pipewatch::Result<()> {
    let network = data::hanoi_like();
    let scenario = data::paper_timeline_scenario();

    let mut cfg = RunConfig::new("bundled paper timeline");
    cfg.sensors = Some(vec!["N13".into()]);
    cfg.seed = 1;

    println!(
        "streaming {} steps from sensor N13 (blockages 2000-3000 / 8000-9000, leak 5000-15000)",
        scenario.horizon_steps
    );
    let start = std::time::Instant::now();
    let artifacts = run_pipeline_in_memory(&cfg, &scenario, &network)?;
    let elapsed = start.elapsed();

    let run = &artifacts.sensors[0];
    let s = &run.summary;
    println!("finished in {elapsed:.1?}");
    println!();
    println!("confusion over labeled steps:");
    println!(
        "  TP {}  FP {}  FN {}  TN {}",
        s.true_positives, s.false_positives, s.false_negatives, s.true_negatives
    );
    println!(
        "mean G-mean over blockage windows: {}",
        s.mean_gmean_blockage
            .map(|g| format!("{g:.3}"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("drift alarms at steps {:?}", s.drift_alarm_steps);
    println!("retrains at steps    {:?}", s.retrain_steps);
    println!(
        "drift alarms on stationary segments: {}",
        s.false_alarms_stationary
    );

    // G-mean sampled along the year, to see the drops and recoveries.
    println!();
    println!("G-mean trajectory (every 500 steps):");
    for row in run.metrics.iter().step_by(500) {
        let marker = if row.truth == 1 { " [blockage]" } else { "" };
        println!("  step {:>6}: {:.3}{marker}", row.step, row.g_mean);
    }
    Ok(())
}
