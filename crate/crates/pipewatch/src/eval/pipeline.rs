//! End-to-end per-sensor loop: residualize, window, score, classify,
//! track, route encodings through drift detection, and retrain on alarms.

use super::{PrequentialTracker, RunConfig};
use crate::detector::{update_threshold, Detector};
use crate::drift::{
    calibrate_distance_threshold, execute_retrain, AlarmSource, DriftAction, DriftState,
    InstanceKind,
};
use crate::error::{Error, Result};
use crate::hydronet::Network;
use crate::neural::{loss, windows_from_series, LstmVae};
use crate::preprocess::stl_decompose;
use crate::scenario::{splitmix64, LabeledStream, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRow {
    pub step: usize,
    pub score: f64,
    pub theta: f64,
    pub prediction: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRow {
    pub step: usize,
    pub p_star: Option<f64>,
    pub dis: Option<f64>,
    pub flag_warn: bool,
    pub flag_alarm: bool,
    pub alarm_source: AlarmSource,
    pub action: DriftAction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub truth: u8,
    pub prediction: u8,
    pub g_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorSummary {
    pub sensor_id: String,
    /// Mean per-step G-mean over labeled blockage steps; absent without
    /// blockage steps after warm-up.
    pub mean_gmean_blockage: Option<f64>,
    pub drift_alarm_steps: Vec<usize>,
    pub retrain_steps: Vec<usize>,
    /// Drift alarms raised on steps labeled neither anomalous nor drifting.
    pub false_alarms_stationary: usize,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub final_g_mean: f64,
    /// DD2 threshold after each training round (warm-up fit first).
    pub dis_thresholds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SensorRun {
    pub summary: SensorSummary,
    pub detection_log: Vec<DetectionRow>,
    pub drift_log: Vec<DriftRow>,
    pub metrics: Vec<MetricRow>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub sensors: Vec<SensorRun>,
}

/// Load the scenario named by the config, generate both streams, and run
/// every selected sensor. Writes per-sensor logs and `summary.json` into
/// `out_dir` when given.
pub fn run_pipeline(
    cfg: &RunConfig,
    scenario_base: &Path,
    out_dir: Option<&Path>,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let scenario_path = scenario_base.join(&cfg.scenario);
    let scenario = Scenario::from_json_file(&scenario_path)?;
    let network = scenario.load_network(&scenario_path)?;
    let artifacts = run_pipeline_in_memory(cfg, &scenario, &network)?;
    if let Some(dir) = out_dir {
        write_artifacts(&artifacts, dir)?;
    }
    Ok(artifacts)
}

/// As [`run_pipeline`] with the scenario and network already in hand.
/// The run seed replaces the scenario's own; data noise and model
/// initialisation both derive from it.
pub fn run_pipeline_in_memory(
    cfg: &RunConfig,
    scenario: &Scenario,
    network: &Network,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut scenario = scenario.clone();
    scenario.rng_seed = splitmix64(cfg.seed ^ 0xA11CE);

    let live = scenario.generate(network)?;
    let historical = scenario.generate_historical(network)?;

    let selected: Vec<String> = match &cfg.sensors {
        Some(list) => {
            for s in list {
                if live.sensor_index(s).is_none() {
                    return Err(Error::UnknownNode(s.clone()));
                }
            }
            list.clone()
        }
        None => scenario.sensor_nodes.clone(),
    };

    let mut sensors = Vec::with_capacity(selected.len());
    for id in &selected {
        let idx = live.sensor_index(id).expect("checked above");
        sensors.push(run_sensor(cfg, &live, &historical, idx)?);
    }
    Ok(RunArtifacts {
        config: cfg.clone(),
        sensors,
    })
}

fn model_seed(run_seed: u64, sensor_idx: usize, round: u64) -> u64 {
    splitmix64(run_seed ^ ((sensor_idx as u64) << 40) ^ (round << 8) ^ 0xD0DE)
}

/// One sensor's full stream pass.
fn run_sensor(
    cfg: &RunConfig,
    live: &LabeledStream,
    historical: &LabeledStream,
    sensor_idx: usize,
) -> Result<SensorRun> {
    let sensor_id = live.sensor_ids[sensor_idx].clone();
    let series = live.column(sensor_idx);
    let hist_series = historical.column(sensor_idx);
    let warmup = cfg.warmup_steps;
    if series.len() <= warmup {
        return Err(Error::InvalidConfig(format!(
            "stream of {} steps does not outlast the {} warm-up steps",
            series.len(),
            warmup
        )));
    }

    let decomposition = stl_decompose(&hist_series, cfg.stl_period)?;
    let residualize = |x: f64, t: usize| -> f64 {
        if cfg.subtract_trend_only {
            decomposition.residualize_trend_only(x, t)
        } else {
            decomposition.residualize(x, t)
        }
    };

    // Warm-up fit on the leading anomaly-free segment.
    let timestep = cfg.model.timestep;
    let warm_values: Vec<f64> = (0..warmup).map(|t| residualize(series[t], t)).collect();
    let warm_windows = windows_from_series(&warm_values, timestep);
    if warm_windows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut round: u64 = 0;
    let mut model = LstmVae::new(cfg.model.clone(), model_seed(cfg.seed, sensor_idx, round));
    let report = model.train(&warm_windows, cfg.epochs)?;
    let mut threshold = update_threshold(&report.final_losses, round)?;
    let dis_threshold = cfg.drift.dis_threshold.or_else(|| {
        calibrate_distance_threshold(
            &model,
            &warm_windows,
            &report.final_losses,
            threshold.theta,
            cfg.drift.w_distance,
        )
    });
    let mut drift_state = DriftState::new(dis_threshold.unwrap_or(f64::INFINITY));
    let mut detector = Detector::new(timestep, cfg.classify_rule);
    let mut enc_scale = latent_spread(&model, &warm_windows);
    let mut dither =
        ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ ((sensor_idx as u64) << 16) ^ 0xD117));
    let mut tracker = PrequentialTracker::new(cfg.fading_factor);

    let mut window: VecDeque<f64> = warm_values[warmup - timestep..].iter().copied().collect();
    let mut window_buf = vec![0.0; timestep];
    let collect_target = cfg.drift.post_alarm_collect.max(timestep);
    let mut pending: Option<Vec<f64>> = None;

    let mut detection_log = Vec::with_capacity(series.len() - warmup);
    let mut drift_log = Vec::with_capacity(series.len() - warmup);
    let mut metrics = Vec::with_capacity(series.len() - warmup);
    let mut summary = SensorSummary {
        sensor_id,
        mean_gmean_blockage: None,
        drift_alarm_steps: Vec::new(),
        retrain_steps: Vec::new(),
        false_alarms_stationary: 0,
        true_positives: 0,
        false_positives: 0,
        false_negatives: 0,
        true_negatives: 0,
        final_g_mean: 0.0,
        dis_thresholds: vec![drift_state.dis_threshold],
    };
    let mut blockage_g_sum = 0.0;
    let mut blockage_g_count = 0usize;

    for t in warmup..series.len() {
        let r = residualize(series[t], t);

        // A pending post-alarm collection fills before anything else.
        let mut retrain_data: Option<Vec<f64>> = None;
        if let Some(data) = pending.as_mut() {
            data.push(r);
            if data.len() >= collect_target {
                retrain_data = pending.take();
            }
        }

        window.pop_front();
        window.push_back(r);
        for (b, v) in window_buf.iter_mut().zip(window.iter()) {
            *b = *v;
        }

        let out = model.infer(&window_buf);
        let parts = loss(
            &window_buf,
            &out.reconstruction,
            &out.mu,
            &out.log_var,
            cfg.model.beta,
        );
        let score = parts.total;
        let prediction = detector.observe(score, threshold.theta);
        let truth = live.anomaly_label[t];
        let g = tracker.update(truth, prediction as u8);

        detection_log.push(DetectionRow {
            step: t,
            score,
            theta: threshold.theta,
            prediction: prediction as u8,
        });
        metrics.push(MetricRow {
            step: t,
            truth,
            prediction: prediction as u8,
            g_mean: g,
        });
        match (truth, prediction) {
            (1, true) => summary.true_positives += 1,
            (0, true) => summary.false_positives += 1,
            (1, false) => summary.false_negatives += 1,
            (0, false) => summary.true_negatives += 1,
            _ => unreachable!(),
        }
        if truth == 1 {
            blockage_g_sum += g;
            blockage_g_count += 1;
        }

        let kind = if prediction {
            InstanceKind::Anomalous
        } else {
            InstanceKind::Normal
        };
        // KS buffers receive jittered encodings (see RunConfig); the DD2
        // distance buffers keep the raw latent mean.
        let encoding: Vec<f64> = if kind == InstanceKind::Normal && cfg.encoding_jitter > 0.0 {
            out.mu
                .iter()
                .zip(&enc_scale)
                .map(|(m, s)| {
                    let e: f64 = StandardNormal.sample(&mut dither);
                    m + cfg.encoding_jitter * s * e
                })
                .collect()
        } else {
            out.mu.clone()
        };
        let obs = drift_state.step(&cfg.drift, kind, &encoding, r);
        drift_log.push(DriftRow {
            step: t,
            p_star: obs.p_star,
            dis: obs.dis,
            flag_warn: obs.flag_warn,
            flag_alarm: obs.flag_alarm,
            alarm_source: obs.alarm_source,
            action: obs.action,
        });

        match obs.action {
            DriftAction::RetrainFromWarnBuffer => {
                summary.drift_alarm_steps.push(t);
                if live.anomaly_label[t] == 0 && live.drift_label[t] == 0 {
                    summary.false_alarms_stationary += 1;
                }
                // A short warn phase leaves too little data for a robust
                // refit; top the buffer up with post-alarm instances first.
                let buffer = drift_state.warn_buffer();
                if buffer.len() >= collect_target {
                    retrain_data = Some(buffer);
                } else {
                    let mut seeded = Vec::with_capacity(collect_target);
                    seeded.extend_from_slice(&buffer);
                    pending = Some(seeded);
                }
            }
            DriftAction::RetrainAfterCollect => {
                summary.drift_alarm_steps.push(t);
                if live.anomaly_label[t] == 0 && live.drift_label[t] == 0 {
                    summary.false_alarms_stationary += 1;
                }
                pending = Some(Vec::with_capacity(collect_target));
            }
            DriftAction::Warn | DriftAction::None => {}
        }

        if let Some(data) = retrain_data {
            round += 1;
            let seed = model_seed(cfg.seed, sensor_idx, round);
            let (new_model, new_threshold, retrain_report) = execute_retrain_with_report(
                cfg,
                &mut drift_state,
                &data,
                seed,
                round,
            )
            .map_err(|e| e.at_step(t))?;
            model = new_model;
            threshold = new_threshold;
            let retrain_windows = windows_from_series(&data, timestep);
            drift_state.dis_threshold = cfg
                .drift
                .dis_threshold
                .or_else(|| {
                    calibrate_distance_threshold(
                        &model,
                        &retrain_windows,
                        &retrain_report,
                        threshold.theta,
                        cfg.drift.w_distance,
                    )
                })
                .unwrap_or(f64::INFINITY);
            detector.reset();
            enc_scale = latent_spread(&model, &retrain_windows);
            summary.retrain_steps.push(t);
            summary.dis_thresholds.push(drift_state.dis_threshold);
        }
    }

    summary.final_g_mean = tracker.g_mean();
    if blockage_g_count > 0 {
        summary.mean_gmean_blockage = Some(blockage_g_sum / blockage_g_count as f64);
    }
    Ok(SensorRun {
        summary,
        detection_log,
        drift_log,
        metrics,
    })
}

/// Per-dimension standard deviation of the latent means over a window set.
fn latent_spread(model: &LstmVae, windows: &[Vec<f64>]) -> Vec<f64> {
    let dims = model.config.latent;
    let mut mean = vec![0.0; dims];
    let mut m2 = vec![0.0; dims];
    for w in windows {
        let mu = model.encode(w);
        for d in 0..dims {
            mean[d] += mu[d];
            m2[d] += mu[d] * mu[d];
        }
    }
    let n = windows.len().max(1) as f64;
    (0..dims)
        .map(|d| {
            let m = mean[d] / n;
            ((m2[d] / n - m * m).max(0.0)).sqrt()
        })
        .collect()
}

fn execute_retrain_with_report(
    cfg: &RunConfig,
    state: &mut DriftState,
    data: &[f64],
    seed: u64,
    round: u64,
) -> Result<(LstmVae, crate::detector::ThresholdState, Vec<f64>)> {
    let (model, threshold) = execute_retrain(&cfg.model, &cfg.drift, state, data, seed, round)?;
    // Re-score for calibration with the trained model.
    let windows = windows_from_series(data, cfg.model.timestep);
    let losses: Vec<f64> = windows.iter().map(|w| model.score(w)).collect();
    Ok((model, threshold, losses))
}

// ---- file output ----

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_artifacts(artifacts: &RunArtifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for sensor in &artifacts.sensors {
        let id = &sensor.summary.sensor_id;
        let mut w = std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("detection_{id}.csv")),
        )?);
        writeln!(w, "step,score,theta,prediction")?;
        for r in &sensor.detection_log {
            writeln!(w, "{},{},{},{}", r.step, r.score, r.theta, r.prediction)?;
        }

        let mut w = std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("drift_{id}.csv")),
        )?);
        writeln!(w, "step,p_star,dis,flag_warn,flag_alarm,alarm_source,action")?;
        for r in &sensor.drift_log {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.step,
                fmt_opt(r.p_star),
                fmt_opt(r.dis),
                r.flag_warn as u8,
                r.flag_alarm as u8,
                r.alarm_source,
                r.action
            )?;
        }

        let mut w = std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("metrics_{id}.csv")),
        )?);
        writeln!(w, "step,truth,prediction,g_mean")?;
        for r in &sensor.metrics {
            writeln!(w, "{},{},{},{}", r.step, r.truth, r.prediction, r.g_mean)?;
        }
    }
    let summary = SummaryFile {
        scenario: artifacts.config.scenario.clone(),
        seed: artifacts.config.seed,
        config: artifacts.config.clone(),
        sensors: artifacts.sensors.iter().map(|s| s.summary.clone()).collect(),
    };
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct SummaryFile {
    pub scenario: String,
    pub seed: u64,
    pub config: RunConfig,
    pub sensors: Vec<SensorSummary>,
}
