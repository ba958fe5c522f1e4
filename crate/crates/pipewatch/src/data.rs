//! Bundled desk-scale assets: a Hanoi-like looped network (32 nodes, 34
//! pipes, one 100 m reservoir) and the matching one-year fault timeline.

use crate::hydronet::Network;
use crate::scenario::{BlockageEvent, DemandPattern, LeakEvent, Scenario};
use crate::hydronet::LeakSpec;

pub const HANOI_LIKE_JSON: &str = include_str!("../data/hanoi_like.json");

/// The bundled looped network. Topology follows the classic 32-node
/// benchmark; lengths, diameters, and demands are plausible rather than
/// calibrated against any published solution.
pub fn hanoi_like() -> Network {
    Network::from_json_str(HANOI_LIKE_JSON).expect("bundled network is valid")
}

/// One-year timeline: pipe P07 blocked over [2000, 3000) and [8000, 9000),
/// an 8.9 cm leak at N14 over [5000, 15000), N(0, 0.01) sensor noise,
/// 30-minute sampling.
pub fn paper_timeline_scenario() -> Scenario {
    Scenario {
        network: "hanoi_like.json".into(),
        horizon_steps: 17520,
        step_minutes: 30,
        blockage_events: vec![
            BlockageEvent {
                pipe_id: "P07".into(),
                start_step: 2000,
                end_step: 3000,
            },
            BlockageEvent {
                pipe_id: "P07".into(),
                start_step: 8000,
                end_step: 9000,
            },
        ],
        leak_events: vec![LeakEvent {
            leak: LeakSpec {
                node_id: "N14".into(),
                hole_diameter: 0.089,
                discharge_coefficient: 0.75,
            },
            start_step: 5000,
            end_step: 15000,
        }],
        noise_std: 0.1,
        sensor_nodes: sensor_set(),
        rng_seed: 42,
        demand: DemandPattern::default(),
    }
}

/// The ten analysis nodes used by the bundled reports.
pub fn sensor_set() -> Vec<String> {
    ["N23", "N29", "N31", "N16", "N25", "N13", "N10", "N06", "N03", "N22"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// 5000-step variant without the leak, used for the per-node blockage
/// detection reports: P07 blocked over [2000, 3000) only.
pub fn blockage_study_scenario() -> Scenario {
    let mut scn = paper_timeline_scenario();
    scn.horizon_steps = 5000;
    scn.blockage_events.truncate(1);
    scn.leak_events.clear();
    scn
}
