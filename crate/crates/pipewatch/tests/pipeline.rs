//! Cross-module integration: generator, preprocessing, detector, and drift
//! machinery working together on shortened streams.

use pipewatch::data;
use pipewatch::detector::update_threshold;
use pipewatch::eval::{run_pipeline_in_memory, RunConfig};
use pipewatch::neural::{windows_from_series, LstmVae, ModelConfig};
use pipewatch::preprocess::stl_decompose;
use pipewatch::scenario::{BlockageEvent, LeakEvent, Scenario};
use pipewatch::hydronet::LeakSpec;

fn quiet_scenario(horizon: usize) -> Scenario {
    let mut scn = data::paper_timeline_scenario();
    scn.horizon_steps = horizon;
    scn.blockage_events.clear();
    scn.leak_events.clear();
    scn
}

#[test]
fn no_event_run_is_quiet() {
    let network = data::hanoi_like();
    let scenario = quiet_scenario(3000);
    let mut cfg = RunConfig::new("quiet");
    cfg.sensors = Some(vec!["N13".into()]);
    cfg.seed = 4;
    let artifacts = run_pipeline_in_memory(&cfg, &scenario, &network).unwrap();
    let run = &artifacts.sensors[0];
    let s = &run.summary;
    assert!(s.drift_alarm_steps.is_empty(), "alarms: {:?}", s.drift_alarm_steps);
    assert!(s.retrain_steps.is_empty());
    let rate = s.false_positives as f64 / run.detection_log.len() as f64;
    assert!(rate < 0.05, "anomaly rate {rate}");
}

#[test]
fn one_prediction_row_per_step_after_warmup() {
    let network = data::hanoi_like();
    let scenario = quiet_scenario(1600);
    let mut cfg = RunConfig::new("rows");
    cfg.sensors = Some(vec!["N10".into()]);
    cfg.seed = 2;
    let artifacts = run_pipeline_in_memory(&cfg, &scenario, &network).unwrap();
    let run = &artifacts.sensors[0];
    assert_eq!(run.detection_log.len(), 1600 - cfg.warmup_steps);
    for (i, row) in run.detection_log.iter().enumerate() {
        assert_eq!(row.step, cfg.warmup_steps + i);
    }
    assert_eq!(run.metrics.len(), run.detection_log.len());
    assert_eq!(run.drift_log.len(), run.detection_log.len());
}

#[test]
fn blockage_residuals_depart_from_seasonal_band() {
    // Residualized values during a blockage sit far outside the band the
    // anomaly-free historical year predicts.
    let network = data::hanoi_like();
    let mut scenario = quiet_scenario(2200);
    scenario.blockage_events = vec![BlockageEvent {
        pipe_id: "P07".into(),
        start_step: 1700,
        end_step: 2200,
    }];
    let live = scenario.generate(&network).unwrap();
    let hist = scenario.generate_historical(&network).unwrap();
    let sensor = live.sensor_index("N10").unwrap();
    let d = stl_decompose(&hist.column(sensor), 336).unwrap();
    let res: Vec<f64> = live
        .column(sensor)
        .iter()
        .enumerate()
        .map(|(t, &x)| d.residualize(x, t))
        .collect();
    let dev = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        r.map(|t| (res[t] - d.seasonal[t % d.len()]).abs()).sum::<f64>() / n
    };
    let quiet = dev(1000..1700);
    let blocked = dev(1700..2200);
    assert!(
        blocked > 4.0 * quiet,
        "blockage deviation {blocked} vs quiet {quiet}"
    );
}

#[test]
fn trained_model_flags_injected_spike() {
    // A +10-sigma spike at the end of an otherwise training-like window
    // scores above the adaptive threshold.
    let network = data::hanoi_like();
    let scenario = quiet_scenario(1400);
    let live = scenario.generate(&network).unwrap();
    let hist = scenario.generate_historical(&network).unwrap();
    let sensor = live.sensor_index("N13").unwrap();
    let d = stl_decompose(&hist.column(sensor), 336).unwrap();
    let res: Vec<f64> = live
        .column(sensor)
        .iter()
        .enumerate()
        .map(|(t, &x)| d.residualize(x, t))
        .collect();

    let windows = windows_from_series(&res[..1000], 10);
    let mut model = LstmVae::new(ModelConfig::default(), 8);
    let report = model.train(&windows, 100).unwrap();
    let threshold = update_threshold(&report.final_losses, 0).unwrap();

    // Scores on clean held-out windows stay at or around theta.
    let clean = &res[1200 - 9..=1200];
    assert!(model.score(clean) < 3.0 * threshold.theta);

    let mean = res[..1000].iter().sum::<f64>() / 1000.0;
    let sigma = (res[..1000].iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 1000.0)
        .sqrt();
    let mut spiked = clean.to_vec();
    *spiked.last_mut().unwrap() += 10.0 * sigma;
    assert!(
        model.score(&spiked) > threshold.theta,
        "spiked score {} vs theta {}",
        model.score(&spiked),
        threshold.theta
    );

    // Training windows score at or below the max-loss threshold by
    // construction.
    for w in windows.iter().step_by(97) {
        assert!(model.score(w) <= threshold.theta + 1e-12);
    }
}

#[test]
fn leak_drift_triggers_alarm_and_threshold_update() {
    let network = data::hanoi_like();
    let mut scenario = quiet_scenario(6600);
    scenario.leak_events = vec![LeakEvent {
        leak: LeakSpec {
            node_id: "N14".into(),
            hole_diameter: 0.089,
            discharge_coefficient: 0.75,
        },
        start_step: 5000,
        end_step: 6600,
    }];
    let mut cfg = RunConfig::new("leak");
    cfg.sensors = Some(vec!["N13".into()]);
    cfg.seed = 6;
    let artifacts = run_pipeline_in_memory(&cfg, &scenario, &network).unwrap();
    let run = &artifacts.sensors[0];
    let s = &run.summary;
    assert!(
        s.drift_alarm_steps.iter().any(|&a| (5000..6300).contains(&a)),
        "no alarm after leak onset: {:?}",
        s.drift_alarm_steps
    );
    assert!(!s.retrain_steps.is_empty());

    // The retrain replaced theta.
    let retrain = s.retrain_steps[0];
    let theta_before = run
        .detection_log
        .iter()
        .find(|r| r.step == retrain)
        .unwrap()
        .theta;
    let theta_after = run
        .detection_log
        .iter()
        .find(|r| r.step == retrain + 1)
        .unwrap()
        .theta;
    assert_ne!(theta_before, theta_after);

    // Distinct inputs encode to distinct latent means on a trained model;
    // rebuild the sensor-level model to check the encoder directly.
    let hist = scenario.generate_historical(&network).unwrap();
    let live = scenario.generate(&network).unwrap();
    let sensor = live.sensor_index("N13").unwrap();
    let d = stl_decompose(&hist.column(sensor), 336).unwrap();
    let res: Vec<f64> = live
        .column(sensor)
        .iter()
        .enumerate()
        .map(|(t, &x)| d.residualize(x, t))
        .collect();
    let mut model = LstmVae::new(ModelConfig::default(), 6);
    model.train(&windows_from_series(&res[..1000], 10), 50).unwrap();
    let w = &res[1100 - 9..=1100];
    let shifted: Vec<f64> = w.iter().map(|x| x + 5.0).collect();
    let a = model.encode(w);
    let b = model.encode(&shifted);
    let dist: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    assert!(dist > 0.0, "encodings must separate distinct inputs");
}
