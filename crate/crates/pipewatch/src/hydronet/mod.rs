//! Looped pipe-network hydraulics: network model, leak orifices, blockages,
//! and a damped-Newton steady-state solver (Hazen-Williams head loss).
//!
//! All quantities are SI: heads and elevations in metres, demands and flows
//! in cubic metres per second, lengths and diameters in metres. Roughness is
//! the dimensionless Hazen-Williams C.

mod solver;

pub use solver::{solve_steady_state, solve_with_guess, HydraulicState, SOLVER_TOLERANCE};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// Standard gravity, m/s^2.
pub const GRAVITY: f64 = 9.81;

/// SI Hazen-Williams resistance coefficient (EPANET convention).
pub const HAZEN_WILLIAMS_COEFF: f64 = 10.667;

/// Hazen-Williams head-loss exponent.
pub const HW_EXPONENT: f64 = 1.852;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Junction {
    pub id: String,
    pub elevation: f64,
    pub base_demand: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reservoir {
    pub id: String,
    pub fixed_head: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipeStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pipe {
    pub id: String,
    /// `[from, to]` node ids; positive flow runs from the first to the second.
    pub endpoints: [String; 2],
    pub length: f64,
    pub diameter: f64,
    /// Hazen-Williams C.
    pub roughness: f64,
    #[serde(default = "default_status")]
    pub status: PipeStatus,
}

fn default_status() -> PipeStatus {
    PipeStatus::Open
}

impl Pipe {
    pub fn is_open(&self) -> bool {
        self.status == PipeStatus::Open
    }

    /// Hazen-Williams resistance r so that headloss = r * |q|^1.852.
    pub fn resistance(&self) -> f64 {
        HAZEN_WILLIAMS_COEFF * self.length
            / (self.roughness.powf(HW_EXPONENT) * self.diameter.powf(4.871))
    }
}

/// A pressure-dependent orifice leak attached to a junction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakSpec {
    pub node_id: String,
    /// Hole diameter in metres.
    pub hole_diameter: f64,
    /// Orifice discharge coefficient, in (0, 1].
    #[serde(default = "default_discharge")]
    pub discharge_coefficient: f64,
}

fn default_discharge() -> f64 {
    0.75
}

/// Orifice outflow for a given pressure head, m^3/s.
///
/// Clamps to zero when the pressure head is non-positive; a depressurised
/// node cannot leak.
pub fn leak_flow(pressure_head: f64, leak: &LeakSpec) -> f64 {
    let area = std::f64::consts::PI * leak.hole_diameter * leak.hole_diameter / 4.0;
    leak.discharge_coefficient * area * (2.0 * GRAVITY * pressure_head.max(0.0)).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub junctions: Vec<Junction>,
    pub reservoirs: Vec<Reservoir>,
    pub pipes: Vec<Pipe>,
}

impl Network {
    pub fn from_json_str(s: &str) -> Result<Network> {
        let net: Network = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Network> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn junction_index(&self, id: &str) -> Option<usize> {
        self.junctions.iter().position(|j| j.id == id)
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipes.iter().position(|p| p.id == id)
    }

    fn node_ids(&self) -> HashMap<&str, ()> {
        let mut ids = HashMap::new();
        for j in &self.junctions {
            ids.insert(j.id.as_str(), ());
        }
        for r in &self.reservoirs {
            ids.insert(r.id.as_str(), ());
        }
        ids
    }

    /// Structural validation: positive geometry, sane roughness, resolvable
    /// endpoints, at least one reservoir, connectivity over open pipes.
    pub fn validate(&self) -> Result<()> {
        if self.reservoirs.is_empty() {
            return Err(Error::InvalidNetwork("no reservoir".into()));
        }
        let ids = self.node_ids();
        if ids.len() != self.junctions.len() + self.reservoirs.len() {
            return Err(Error::InvalidNetwork("duplicate node id".into()));
        }
        for j in &self.junctions {
            if j.base_demand < 0.0 || !j.base_demand.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "junction `{}` has negative demand",
                    j.id
                )));
            }
        }
        for p in &self.pipes {
            if p.length <= 0.0 || p.diameter <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "pipe `{}` has non-positive length or diameter",
                    p.id
                )));
            }
            if !(50.0..=160.0).contains(&p.roughness) {
                return Err(Error::InvalidNetwork(format!(
                    "pipe `{}` roughness {} outside [50, 160]",
                    p.id, p.roughness
                )));
            }
            if p.endpoints[0] == p.endpoints[1] {
                return Err(Error::InvalidNetwork(format!("pipe `{}` is a self-loop", p.id)));
            }
            for end in &p.endpoints {
                if !ids.contains_key(end.as_str()) {
                    return Err(Error::UnknownNode(end.clone()));
                }
            }
        }
        self.check_connected()
    }

    /// Every junction must reach a reservoir through open pipes.
    pub fn check_connected(&self) -> Result<()> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, j) in self.junctions.iter().enumerate() {
            index.insert(j.id.as_str(), i);
        }
        let n = self.junctions.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        // Reservoir-adjacent junctions seed the search.
        let mut reached = vec![false; n];
        let mut stack = Vec::new();
        for p in self.pipes.iter().filter(|p| p.is_open()) {
            let a = index.get(p.endpoints[0].as_str()).copied();
            let b = index.get(p.endpoints[1].as_str()).copied();
            match (a, b) {
                (Some(a), Some(b)) => {
                    adj[a].push(b);
                    adj[b].push(a);
                }
                (Some(a), None) => {
                    if !reached[a] {
                        reached[a] = true;
                        stack.push(a);
                    }
                }
                (None, Some(b)) => {
                    if !reached[b] {
                        reached[b] = true;
                        stack.push(b);
                    }
                }
                (None, None) => {}
            }
        }
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !reached[w] {
                    reached[w] = true;
                    stack.push(w);
                }
            }
        }
        match reached.iter().position(|r| !r) {
            None => Ok(()),
            Some(i) => Err(Error::Disconnected(self.junctions[i].id.clone())),
        }
    }

    /// Returns a copy of the network with the given pipe closed; the original
    /// is untouched. Closing an already-closed pipe is a no-op.
    pub fn apply_blockage(&self, pipe_id: &str) -> Result<Network> {
        let idx = self
            .pipe_index(pipe_id)
            .ok_or_else(|| Error::UnknownPipe(pipe_id.to_string()))?;
        let mut net = self.clone();
        net.pipes[idx].status = PipeStatus::Closed;
        Ok(net)
    }

    /// Copy with the given pipe reopened.
    pub fn reopen_pipe(&self, pipe_id: &str) -> Result<Network> {
        let idx = self
            .pipe_index(pipe_id)
            .ok_or_else(|| Error::UnknownPipe(pipe_id.to_string()))?;
        let mut net = self.clone();
        net.pipes[idx].status = PipeStatus::Open;
        Ok(net)
    }
}
