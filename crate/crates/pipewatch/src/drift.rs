//! Dual drift detection and retraining orchestration.
//!
//! DD1 runs a two-sample KS test per latent dimension between a frozen
//! reference window of normal-classified encodings (`ref_n`) and a sliding
//! window of recent ones (`mov_n`), with Bonferroni combination across
//! dimensions and a two-level warn/alarm decision. DD2 compares the frozen
//! and sliding anomaly-encoding matrices (`ref_an`, `mov_an`) by element-wise
//! Euclidean distance. A warning buffers raw residualized values into
//! `mov_warn` for retraining; warnings expire if no alarm follows within
//! `expiry_time` steps.

use crate::detector::{update_threshold, ThresholdState};
use crate::error::{Error, Result};
use crate::neural::{windows_from_series, LstmVae, ModelConfig};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftConfig {
    #[serde(default = "default_w_drift")]
    pub w_drift: usize,
    #[serde(default = "default_w_distance")]
    pub w_distance: usize,
    #[serde(default = "default_w_warn")]
    pub w_warn: usize,
    #[serde(default = "default_p_warn")]
    pub p_warn: f64,
    #[serde(default = "default_p_alarm")]
    pub p_alarm: f64,
    /// Fixed DD2 threshold; `None` means calibrate from training data.
    #[serde(default)]
    pub dis_threshold: Option<f64>,
    #[serde(default = "default_expiry")]
    pub expiry_time: usize,
    #[serde(default = "default_retrain_epochs")]
    pub retrain_epochs: usize,
    #[serde(default = "default_post_alarm")]
    pub post_alarm_collect: usize,
    /// Use the conventional two-sample n*m/(n+m) effective size instead of
    /// W^2/(2W). The two coincide for equal window sizes.
    #[serde(default)]
    pub conventional_n_eff: bool,
    /// Admit every k-th normal-classified encoding into the KS buffers, so
    /// a W_drift-entry window spans k*W_drift steps. At the default
    /// sampling this stretches each window across a full weekly cycle,
    /// which keeps the reference and moving windows phase-balanced.
    #[serde(default = "default_dd1_stride")]
    pub dd1_stride: usize,
}

fn default_dd1_stride() -> usize {
    2
}

fn default_w_drift() -> usize {
    200
}
fn default_w_distance() -> usize {
    50
}
fn default_w_warn() -> usize {
    1000
}
fn default_p_warn() -> f64 {
    0.01
}
fn default_p_alarm() -> f64 {
    0.0001
}
fn default_expiry() -> usize {
    100
}
fn default_retrain_epochs() -> usize {
    500
}
fn default_post_alarm() -> usize {
    500
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            w_drift: default_w_drift(),
            w_distance: default_w_distance(),
            w_warn: default_w_warn(),
            p_warn: default_p_warn(),
            p_alarm: default_p_alarm(),
            dis_threshold: None,
            expiry_time: default_expiry(),
            retrain_epochs: default_retrain_epochs(),
            post_alarm_collect: default_post_alarm(),
            conventional_n_eff: false,
            dd1_stride: default_dd1_stride(),
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_warn <= self.p_alarm {
            return Err(Error::InvalidConfig(format!(
                "p_warn {} must exceed p_alarm {}",
                self.p_warn, self.p_alarm
            )));
        }
        if self.w_drift == 0 || self.w_distance == 0 || self.w_warn == 0 {
            return Err(Error::InvalidConfig("zero-sized drift window".into()));
        }
        if self.dd1_stride == 0 {
            return Err(Error::InvalidConfig("dd1_stride must be positive".into()));
        }
        Ok(())
    }
}

/// KS statistic and the asymptotic p-value of the alternating series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS test. `w_drift` fixes the effective sample size as
/// `W^2/(2W)` (or `n*m/(n+m)` with `conventional` set); the p-value sums
/// `2 * sum_i (-1)^(i-1) exp(-2 i^2 gamma^2)` until terms drop below 1e-12
/// or 100 terms, clamped to [0, 1]. A zero statistic yields p = 1.
pub fn ks_two_sample(
    reference: &[f64],
    moving: &[f64],
    w_drift: usize,
    conventional: bool,
) -> Result<KsResult> {
    if reference.is_empty() || moving.is_empty() {
        return Err(Error::EmptySample);
    }
    let statistic = ks_statistic(reference, moving);
    let n_eff = if conventional {
        let n = reference.len() as f64;
        let m = moving.len() as f64;
        n * m / (n + m)
    } else {
        let w = w_drift as f64;
        w * w / (2.0 * w)
    };
    Ok(KsResult {
        statistic,
        p_value: ks_p_value(statistic, n_eff),
    })
}

/// Max absolute ECDF gap over the pooled evaluation points.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut ia = 0;
    let mut ib = 0;
    let mut best = 0.0f64;
    while ia < sa.len() || ib < sb.len() {
        let point = match (sa.get(ia), sb.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while ia < sa.len() && sa[ia] <= point {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= point {
            ib += 1;
        }
        let gap = (ia as f64 / na - ib as f64 / nb).abs();
        if gap > best {
            best = gap;
        }
    }
    best
}

fn ks_p_value(statistic: f64, n_eff: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    let root = n_eff.sqrt();
    let gamma = (root + 0.12 + 0.11 / root) * statistic;
    let mut sum = 0.0;
    for i in 1..=100u32 {
        let term = (-2.0 * (i as f64) * (i as f64) * gamma * gamma).exp();
        let signed = if i % 2 == 1 { term } else { -term };
        sum += signed;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Element-wise Euclidean distance between two equally shaped encoding
/// matrices, plus the alarm decision against the offline threshold.
pub fn distance_test(
    ref_an: &[Vec<f64>],
    mov_an: &[Vec<f64>],
    w_distance: usize,
    dis_threshold: f64,
) -> Result<(f64, bool)> {
    if ref_an.len() != w_distance || mov_an.len() != w_distance {
        return Err(Error::BufferNotFull {
            have: ref_an.len().min(mov_an.len()),
            need: w_distance,
        });
    }
    let mut acc = 0.0;
    for (r, m) in ref_an.iter().zip(mov_an) {
        debug_assert_eq!(r.len(), m.len());
        for (x, y) in r.iter().zip(m) {
            acc += (x - y) * (x - y);
        }
    }
    let dis = acc.sqrt();
    Ok((dis, dis > dis_threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AlarmSource {
    None,
    Dd1,
    Dd2,
}

impl std::fmt::Display for AlarmSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlarmSource::None => write!(f, "none"),
            AlarmSource::Dd1 => write!(f, "DD1"),
            AlarmSource::Dd2 => write!(f, "DD2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftAction {
    None,
    /// DD1 warning raised or re-armed this step.
    Warn,
    /// DD1 alarm: retrain on the warn buffer (caller falls back to
    /// post-alarm collection when the buffer holds less than one window).
    RetrainFromWarnBuffer,
    /// DD2 alarm: collect `post_alarm_collect` instances, then retrain.
    RetrainAfterCollect,
}

impl std::fmt::Display for DriftAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriftAction::None => write!(f, "none"),
            DriftAction::Warn => write!(f, "warn"),
            DriftAction::RetrainFromWarnBuffer => write!(f, "retrain_from_warnbuf"),
            DriftAction::RetrainAfterCollect => write!(f, "retrain_after_collect"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Normal,
    Anomalous,
}

/// Per-step test outcome for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftObservation {
    pub p_star: Option<f64>,
    pub dis: Option<f64>,
    pub flag_warn: bool,
    pub flag_alarm: bool,
    pub alarm_source: AlarmSource,
    pub action: DriftAction,
}

/// The five memory buffers and flags of one sensor's drift detector.
#[derive(Debug, Clone)]
pub struct DriftState {
    ref_n: Vec<Vec<f64>>,
    mov_n: VecDeque<Vec<f64>>,
    ref_an: Vec<Vec<f64>>,
    mov_an: VecDeque<Vec<f64>>,
    mov_warn: VecDeque<f64>,
    normal_seen: usize,
    pub flag_warn: bool,
    pub flag_alarm: bool,
    pub warn_age: usize,
    pub alarm_source: AlarmSource,
    pub dis_threshold: f64,
}

impl DriftState {
    pub fn new(dis_threshold: f64) -> DriftState {
        DriftState {
            ref_n: Vec::new(),
            mov_n: VecDeque::new(),
            ref_an: Vec::new(),
            mov_an: VecDeque::new(),
            mov_warn: VecDeque::new(),
            normal_seen: 0,
            flag_warn: false,
            flag_alarm: false,
            warn_age: 0,
            alarm_source: AlarmSource::None,
            dis_threshold,
        }
    }

    pub fn warn_buffer(&self) -> Vec<f64> {
        self.mov_warn.iter().copied().collect()
    }

    pub fn buffer_fill(&self) -> [usize; 5] {
        [
            self.ref_n.len(),
            self.mov_n.len(),
            self.ref_an.len(),
            self.mov_an.len(),
            self.mov_warn.len(),
        ]
    }

    /// Clear the moving windows and flags, drop both references for
    /// refilling, keep the calibrated DD2 threshold unless the caller
    /// replaces it.
    pub fn reset_after_retrain(&mut self) {
        self.ref_n.clear();
        self.mov_n.clear();
        self.ref_an.clear();
        self.mov_an.clear();
        self.mov_warn.clear();
        self.normal_seen = 0;
        self.flag_warn = false;
        self.flag_alarm = false;
        self.warn_age = 0;
        self.alarm_source = AlarmSource::None;
    }

    /// Advance the state machine by one classified instance.
    ///
    /// Normal instances route their encoding into `ref_n` until it is full
    /// and into the sliding `mov_n` afterwards; DD1 runs once both hold
    /// `w_drift` entries. Anomalous instances do the same with `ref_an` /
    /// `mov_an` and DD2. While an alarm is pending the detectors idle and
    /// the caller owns retraining.
    pub fn step(
        &mut self,
        cfg: &DriftConfig,
        kind: InstanceKind,
        encoding: &[f64],
        raw_value: f64,
    ) -> DriftObservation {
        let mut obs = DriftObservation {
            p_star: None,
            dis: None,
            flag_warn: self.flag_warn,
            flag_alarm: self.flag_alarm,
            alarm_source: self.alarm_source,
            action: DriftAction::None,
        };
        if self.flag_alarm {
            return obs;
        }

        // Expire a stale warning before looking at the new instance.
        if self.flag_warn {
            self.warn_age += 1;
            if self.warn_age > cfg.expiry_time {
                self.flag_warn = false;
                self.mov_warn.clear();
            }
        }

        let mut fresh_warn = false;
        match kind {
            InstanceKind::Normal => {
                let admit = self.normal_seen % cfg.dd1_stride == 0;
                self.normal_seen += 1;
                if admit {
                    if self.ref_n.len() < cfg.w_drift {
                        self.ref_n.push(encoding.to_vec());
                    } else {
                        if self.mov_n.len() == cfg.w_drift {
                            self.mov_n.pop_front();
                        }
                        self.mov_n.push_back(encoding.to_vec());
                    }
                }
                if admit && self.ref_n.len() == cfg.w_drift && self.mov_n.len() == cfg.w_drift {
                    let p_star = self.dd1_p_star(cfg, encoding.len());
                    obs.p_star = Some(p_star);
                    if p_star < cfg.p_alarm {
                        self.flag_alarm = true;
                        self.alarm_source = AlarmSource::Dd1;
                        obs.action = DriftAction::RetrainFromWarnBuffer;
                    } else if p_star < cfg.p_warn {
                        self.flag_warn = true;
                        self.warn_age = 0;
                        fresh_warn = true;
                        obs.action = DriftAction::Warn;
                    }
                }
            }
            InstanceKind::Anomalous => {
                if self.ref_an.len() < cfg.w_distance {
                    self.ref_an.push(encoding.to_vec());
                } else {
                    if self.mov_an.len() == cfg.w_distance {
                        self.mov_an.pop_front();
                    }
                    self.mov_an.push_back(encoding.to_vec());
                }
                if self.ref_an.len() == cfg.w_distance && self.mov_an.len() == cfg.w_distance {
                    let mov: Vec<Vec<f64>> = self.mov_an.iter().cloned().collect();
                    let (dis, alarm) =
                        distance_test(&self.ref_an, &mov, cfg.w_distance, self.dis_threshold)
                            .expect("buffers checked full");
                    obs.dis = Some(dis);
                    if alarm {
                        self.flag_alarm = true;
                        self.alarm_source = AlarmSource::Dd2;
                        obs.action = DriftAction::RetrainAfterCollect;
                    }
                }
            }
        }

        // The warning mechanism buffers raw values of normal-classified
        // instances while the warn flag stands without an alarm; the buffer
        // trains the replacement model, so anomaly-classified values stay
        // out of it.
        if (self.flag_warn || fresh_warn) && !self.flag_alarm && kind == InstanceKind::Normal {
            if self.mov_warn.len() == cfg.w_warn {
                self.mov_warn.pop_front();
            }
            self.mov_warn.push_back(raw_value);
        }

        obs.flag_warn = self.flag_warn;
        obs.flag_alarm = self.flag_alarm;
        obs.alarm_source = self.alarm_source;
        obs
    }

    /// Per-dimension KS p-values, Bonferroni-combined: smallest p times the
    /// dimension count, capped at one.
    fn dd1_p_star(&self, cfg: &DriftConfig, dims: usize) -> f64 {
        let mut p_min = f64::INFINITY;
        let mut col_ref = Vec::with_capacity(self.ref_n.len());
        let mut col_mov = Vec::with_capacity(self.mov_n.len());
        for d in 0..dims {
            col_ref.clear();
            col_mov.clear();
            col_ref.extend(self.ref_n.iter().map(|e| e[d]));
            col_mov.extend(self.mov_n.iter().map(|e| e[d]));
            let ks = ks_two_sample(&col_ref, &col_mov, cfg.w_drift, cfg.conventional_n_eff)
                .expect("buffers are full");
            p_min = p_min.min(ks.p_value);
        }
        (p_min * dims as f64).min(1.0)
    }
}

/// Instantiate and fit a replacement model on drift-era values, derive the
/// new threshold from its training losses, and reset the drift buffers for
/// refilling.
pub fn execute_retrain(
    model_cfg: &ModelConfig,
    drift_cfg: &DriftConfig,
    state: &mut DriftState,
    training_values: &[f64],
    seed: u64,
    training_round: u64,
) -> Result<(LstmVae, ThresholdState)> {
    let windows = windows_from_series(training_values, model_cfg.timestep);
    if windows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut model = LstmVae::new(model_cfg.clone(), seed);
    let report = model.train(&windows, drift_cfg.retrain_epochs)?;
    let threshold = update_threshold(&report.final_losses, training_round)?;
    state.reset_after_retrain();
    Ok((model, threshold))
}

/// Offline DD2 threshold: encodings of training windows the fresh model
/// would call anomalous (none exist under a max-loss threshold, so the
/// highest-loss windows stand in), kept in arrival order, cut into
/// consecutive `w_distance`-row blocks; the threshold is three times the
/// largest distance between successive blocks. `None` when fewer than two
/// blocks exist.
pub fn calibrate_distance_threshold(
    model: &LstmVae,
    windows: &[Vec<f64>],
    losses: &[f64],
    theta: f64,
    w_distance: usize,
) -> Option<f64> {
    debug_assert_eq!(windows.len(), losses.len());
    let mut candidates: Vec<usize> = (0..windows.len()).filter(|&i| losses[i] > theta).collect();
    let take = (4 * w_distance).min(windows.len());
    if candidates.len() < 2 * w_distance {
        let mut by_loss: Vec<usize> = (0..windows.len()).collect();
        by_loss.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
        candidates = by_loss.into_iter().take(take).collect();
        candidates.sort_unstable();
    }
    let blocks = candidates.len() / w_distance;
    if blocks < 2 {
        return None;
    }
    let encodings: Vec<Vec<f64>> = candidates
        .iter()
        .map(|&i| model.encode(&windows[i]))
        .collect();
    let mut max_dis = 0.0f64;
    for b in 0..blocks - 1 {
        let a = &encodings[b * w_distance..(b + 1) * w_distance];
        let c = &encodings[(b + 1) * w_distance..(b + 2) * w_distance];
        let (dis, _) = distance_test(a, c, w_distance, f64::INFINITY).expect("full blocks");
        max_dis = max_dis.max(dis);
    }
    Some(3.0 * max_dis)
}


#[cfg(test)]
mod property_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn p_value_always_in_unit_interval(
            a in proptest::collection::vec(-1e3f64..1e3, 1..80),
            b in proptest::collection::vec(-1e3f64..1e3, 1..80),
            conventional in proptest::bool::ANY,
        ) {
            let ks = ks_two_sample(&a, &b, 200, conventional).unwrap();
            prop_assert!((0.0..=1.0).contains(&ks.p_value));
            prop_assert!((0.0..=1.0).contains(&ks.statistic));
        }

        #[test]
        fn distance_symmetric_and_zero_iff_equal(
            rows in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 2), 4),
            perturb in 1e-6f64..1.0,
        ) {
            let mut other = rows.clone();
            other[0][0] += perturb;
            let (ab, _) = distance_test(&rows, &other, 4, f64::INFINITY).unwrap();
            let (ba, _) = distance_test(&other, &rows, 4, f64::INFINITY).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab > 0.0);
            let (same, _) = distance_test(&rows, &rows, 4, f64::INFINITY).unwrap();
            prop_assert_eq!(same, 0.0);
        }
    }
}
