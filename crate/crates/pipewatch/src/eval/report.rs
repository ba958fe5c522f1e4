//! Per-node detection report with downstream/upstream tags derived from
//! pre-event flow directions.

use super::pipeline::SummaryFile;
use super::RunArtifacts;
use crate::error::{Error, Result};
use crate::hydronet::{solve_steady_state, Network, PipeStatus};
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowTag {
    Downstream,
    Upstream,
}

impl std::fmt::Display for FlowTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowTag::Downstream => write!(f, "downstream"),
            FlowTag::Upstream => write!(f, "upstream"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub sensor_id: String,
    pub tag: FlowTag,
    pub true_positives: u64,
    pub false_positives: u64,
}

/// Junctions reached by pre-event flow after passing the given pipe: solve
/// the all-open network at base demands, orient every pipe by its flow
/// sign, and walk forward from the pipe's receiving endpoint.
pub fn downstream_junctions(network: &Network, blocked_pipe: &str) -> Result<HashSet<String>> {
    let mut open_net = network.clone();
    for p in &mut open_net.pipes {
        p.status = PipeStatus::Open;
    }
    let state = solve_steady_state(&open_net, &[], None)?;
    let pipe_idx = open_net
        .pipe_index(blocked_pipe)
        .ok_or_else(|| Error::UnknownPipe(blocked_pipe.to_string()))?;

    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    for (i, pipe) in open_net.pipes.iter().enumerate() {
        if i == pipe_idx {
            continue;
        }
        let q = state.pipe_flows[i];
        if q.abs() < 1e-9 {
            continue;
        }
        let (src, dst) = if q > 0.0 {
            (&pipe.endpoints[0], &pipe.endpoints[1])
        } else {
            (&pipe.endpoints[1], &pipe.endpoints[0])
        };
        adjacency.entry(src.as_str()).or_default().push(dst.as_str());
    }

    let blocked = &open_net.pipes[pipe_idx];
    let q = state.pipe_flows[pipe_idx];
    let start = if q >= 0.0 {
        blocked.endpoints[1].as_str()
    } else {
        blocked.endpoints[0].as_str()
    };
    let mut reached: HashSet<String> = HashSet::new();
    let mut stack = vec![start];
    reached.insert(start.to_string());
    while let Some(v) = stack.pop() {
        for &w in adjacency.get(v).map(|v| v.as_slice()).unwrap_or(&[]) {
            if reached.insert(w.to_string()) {
                stack.push(w);
            }
        }
    }
    Ok(reached)
}

/// Tally per-sensor true/false positives from a finished run and tag each
/// sensor by its position relative to the blocked pipe.
pub fn downstream_report(
    artifacts: &RunArtifacts,
    network: &Network,
    blocked_pipe: &str,
) -> Result<Vec<ReportRow>> {
    let downstream = downstream_junctions(network, blocked_pipe)?;
    let mut rows = Vec::with_capacity(artifacts.sensors.len());
    for sensor in &artifacts.sensors {
        let s = &sensor.summary;
        rows.push(ReportRow {
            sensor_id: s.sensor_id.clone(),
            tag: if downstream.contains(&s.sensor_id) {
                FlowTag::Downstream
            } else {
                FlowTag::Upstream
            },
            true_positives: s.true_positives,
            false_positives: s.false_positives,
        });
    }
    Ok(rows)
}

/// Rebuild a report from a `detect` output directory. The blocked pipe
/// defaults to the scenario's first blockage event.
pub fn report_from_run_dir(
    run_dir: &Path,
    blocked_pipe: Option<&str>,
) -> Result<Vec<ReportRow>> {
    let summary: SummaryFile =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("summary.json"))?)?;
    let scenario_path = run_dir.join(&summary.scenario);
    let scenario = if scenario_path.exists() {
        Scenario::from_json_file(&scenario_path)?
    } else {
        // The scenario path in the config was relative to the config file;
        // fall back on it verbatim.
        Scenario::from_json_file(&summary.scenario)?
    };
    let network = scenario.load_network(if scenario_path.exists() {
        scenario_path.clone()
    } else {
        Path::new(&summary.scenario).to_path_buf()
    })?;

    let pipe = match blocked_pipe {
        Some(p) => p.to_string(),
        None => scenario
            .blockage_events
            .first()
            .map(|b| b.pipe_id.clone())
            .ok_or_else(|| {
                Error::InvalidScenario("no blockage event to report against".into())
            })?,
    };
    let downstream = downstream_junctions(&network, &pipe)?;

    let mut rows = Vec::new();
    for s in &summary.sensors {
        rows.push(ReportRow {
            sensor_id: s.sensor_id.clone(),
            tag: if downstream.contains(&s.sensor_id) {
                FlowTag::Downstream
            } else {
                FlowTag::Upstream
            },
            true_positives: s.true_positives,
            false_positives: s.false_positives,
        });
    }
    Ok(rows)
}

/// Median helper used by report consumers; midpoint convention for even
/// counts.
pub fn median_tp(rows: &[ReportRow], tag: FlowTag) -> Option<f64> {
    let mut vals: Vec<u64> = rows
        .iter()
        .filter(|r| r.tag == tag)
        .map(|r| r.true_positives)
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_unstable();
    let mid = vals.len() / 2;
    Some(if vals.len() % 2 == 1 {
        vals[mid] as f64
    } else {
        (vals[mid - 1] + vals[mid]) as f64 / 2.0
    })
}
