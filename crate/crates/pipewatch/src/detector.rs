//! Per-sensor anomaly decision: eval-mode loss scored against the adaptive
//! max-training-loss threshold.
//!
//! A point is flagged only when its own score exceeds the threshold *and*
//! the mean score across the current window span does, which keeps isolated
//! noise spikes quiet while firing through a sustained excursion. The
//! pointwise and positive-exceedance-mass variants stay available behind
//! [`ClassifyRule`].

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Adaptive anomaly threshold: the maximum final training loss of the
/// current model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdState {
    pub theta: f64,
    /// Which (re)training produced this threshold; 0 is the warm-up fit.
    pub training_round: u64,
}

/// `theta = max(training losses)`.
pub fn update_threshold(training_losses: &[f64], training_round: u64) -> Result<ThresholdState> {
    if training_losses.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    debug_assert!(training_losses.iter().all(|l| l.is_finite()));
    let theta = training_losses.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(ThresholdState {
        theta,
        training_round,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyRule {
    /// Score above theta and windowed mean score above theta.
    #[default]
    WindowedMean,
    /// Score above theta alone.
    Pointwise,
    /// Score above theta and the summed positive exceedance over the
    /// window above theta.
    SummedExceedance,
}

/// Pure decision given the trailing score history (most recent last,
/// current score excluded), the current score, and theta.
pub fn classify(
    score: f64,
    theta: f64,
    history: &[f64],
    span: usize,
    rule: ClassifyRule,
) -> bool {
    if score <= theta {
        return false;
    }
    match rule {
        ClassifyRule::Pointwise => true,
        ClassifyRule::WindowedMean => {
            let take = span.saturating_sub(1).min(history.len());
            let tail = &history[history.len() - take..];
            let sum: f64 = tail.iter().sum::<f64>() + score;
            sum / (tail.len() + 1) as f64 > theta
        }
        ClassifyRule::SummedExceedance => {
            let take = span.saturating_sub(1).min(history.len());
            let tail = &history[history.len() - take..];
            let mass: f64 = tail
                .iter()
                .chain(std::iter::once(&score))
                .map(|s| (s - theta).max(0.0))
                .sum();
            mass > theta
        }
    }
}

/// Stateful wrapper that owns the trailing score window for one sensor.
#[derive(Debug, Clone)]
pub struct Detector {
    pub rule: ClassifyRule,
    pub span: usize,
    history: VecDeque<f64>,
}

impl Detector {
    pub fn new(span: usize, rule: ClassifyRule) -> Detector {
        Detector {
            rule,
            span,
            history: VecDeque::with_capacity(span),
        }
    }

    /// Classify the current score and append it to the history.
    pub fn observe(&mut self, score: f64, theta: f64) -> bool {
        let hist: Vec<f64> = self.history.iter().copied().collect();
        let decision = classify(score, theta, &hist, self.span, self.rule);
        if self.history.len() == self.span {
            self.history.pop_front();
        }
        self.history.push_back(score);
        decision
    }

    /// Forget the history; scores from a replaced model are not comparable.
    pub fn reset(&mut self) {
        self.history.clear();
    }
}
