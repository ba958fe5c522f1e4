//! DD1 false-alarm margin probe: stream an event-free year through the
//! pipeline and report the smallest Bonferroni p* seen per seed, which is
//! the distance to a spurious drift alarm on stationary data.
//!
//! Run with: cargo run --release --example stationary_margin -- [sensor] [seeds]

use pipewatch::data;
use pipewatch::eval::{run_pipeline_in_memory, RunConfig};

fn main() -> pipewatch::Result<()> {
    let sensor = std::env::args().nth(1).unwrap_or_else(|| "N13".into());
    let seeds: u64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let network = data::hanoi_like();
    let mut scenario = data::paper_timeline_scenario();
    scenario.blockage_events.clear();
    scenario.leak_events.clear();
    scenario.horizon_steps = 8000;

    println!("sensor {sensor}, stationary {} steps", scenario.horizon_steps);
    println!("seed   min_p*      warns  alarms  anom_frac");
    for seed in 1..=seeds {
        let mut cfg = RunConfig::new("bundled");
        cfg.sensors = Some(vec![sensor.clone()]);
        cfg.seed = seed;
        let artifacts = run_pipeline_in_memory(&cfg, &scenario, &network)?;
        let run = &artifacts.sensors[0];
        let min_p = run
            .drift_log
            .iter()
            .filter_map(|r| r.p_star)
            .fold(f64::INFINITY, f64::min);
        let warns = run
            .drift_log
            .iter()
            .filter(|r| r.action == pipewatch::drift::DriftAction::Warn)
            .count();
        let alarms = run.summary.drift_alarm_steps.len();
        let anom = run.summary.false_positives as f64
            / (run.detection_log.len().max(1)) as f64;
        println!(
            "{seed:>4}   {min_p:10.3e} {warns:>5}  {alarms:>5}   {anom:.4}"
        );
    }
    Ok(())
}
