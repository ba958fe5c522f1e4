//! Prequential evaluation, run configuration, the per-sensor pipeline, and
//! the per-node detection report.

mod config;
mod pipeline;
mod report;

pub use config::RunConfig;
pub use pipeline::{
    run_pipeline, run_pipeline_in_memory, write_artifacts as write_run_dir, DetectionRow,
    DriftRow, MetricRow, RunArtifacts, SensorRun, SensorSummary,
};
pub use report::{downstream_report, median_tp, report_from_run_dir, FlowTag, ReportRow};

/// Test-then-train counters with exponential fading. Counters decay by the
/// fading factor before every increment; recalls fall back to 1 while a
/// class has effectively no mass.
#[derive(Debug, Clone)]
pub struct PrequentialTracker {
    alpha: f64,
    tp: f64,
    p: f64,
    tn: f64,
    n: f64,
}

const COUNTER_EPS: f64 = 1e-12;

impl PrequentialTracker {
    pub fn new(alpha: f64) -> PrequentialTracker {
        PrequentialTracker {
            alpha,
            tp: 0.0,
            p: 0.0,
            tn: 0.0,
            n: 0.0,
        }
    }

    /// Fold in one (truth, prediction) pair and return the current G-mean.
    pub fn update(&mut self, truth: u8, prediction: u8) -> f64 {
        self.tp *= self.alpha;
        self.p *= self.alpha;
        self.tn *= self.alpha;
        self.n *= self.alpha;
        if truth == 1 {
            self.p += 1.0;
            if prediction == 1 {
                self.tp += 1.0;
            }
        } else {
            self.n += 1.0;
            if prediction == 0 {
                self.tn += 1.0;
            }
        }
        self.g_mean()
    }

    pub fn recall_positive(&self) -> f64 {
        if self.p > COUNTER_EPS {
            self.tp / self.p
        } else {
            1.0
        }
    }

    pub fn recall_negative(&self) -> f64 {
        if self.n > COUNTER_EPS {
            self.tn / self.n
        } else {
            1.0
        }
    }

    pub fn g_mean(&self) -> f64 {
        (self.recall_positive() * self.recall_negative()).sqrt()
    }

    pub fn counters(&self) -> (f64, f64, f64, f64) {
        (self.tp, self.p, self.tn, self.n)
    }
}
