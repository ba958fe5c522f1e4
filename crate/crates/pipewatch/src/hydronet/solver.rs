//! Damped-Newton steady-state solver over junction heads.
//!
//! Pipe flows follow the Hazen-Williams law inverted for flow,
//! `q = sign(dh) * (|dh|/r)^(1/1.852)`, with the relation linearised below
//! `|dh| = 1e-8` m where dq/dh is singular. Leak outflows enter the nodal
//! balance with the exact orifice formula; only their Jacobian entry is
//! capped near zero pressure head.

use super::{leak_flow, LeakSpec, Network, HW_EXPONENT};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Convergence target for the max-norm junction imbalance, m^3/s.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

const MAX_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 20;
/// Below this head difference the flow law is linearised.
const DH_LINEAR: f64 = 1e-8;
/// Below this pressure head the leak Jacobian entry is capped.
const LEAK_P_LINEAR: f64 = 1e-6;

/// Converged hydraulic solution. Vectors are indexed like the network's
/// `junctions` / `pipes` / the `leaks` argument; closed pipes carry zero flow.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    pub junction_heads: Vec<f64>,
    pub pipe_flows: Vec<f64>,
    pub leak_outflows: Vec<f64>,
    /// Max-norm junction mass-balance residual at the solution, m^3/s.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl HydraulicState {
    /// Head at any node id (junction or reservoir).
    pub fn node_head(&self, net: &Network, id: &str) -> Option<f64> {
        if let Some(i) = net.junction_index(id) {
            return Some(self.junction_heads[i]);
        }
        net.reservoirs
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.fixed_head)
    }

    /// Pressure head (head minus elevation) at a junction.
    pub fn pressure_head(&self, net: &Network, id: &str) -> Option<f64> {
        let i = net.junction_index(id)?;
        Some(self.junction_heads[i] - net.junctions[i].elevation)
    }
}

#[derive(Clone, Copy)]
enum NodeRef {
    Junction(usize),
    Reservoir(usize),
}

struct System<'a> {
    net: &'a Network,
    /// Open pipes as (pipe index, from, to, resistance).
    open: Vec<(usize, NodeRef, NodeRef, f64)>,
    /// (junction index, leak index) pairs.
    leak_at: Vec<(usize, usize)>,
    leaks: &'a [LeakSpec],
    demands: Vec<f64>,
}

fn node_ref(net: &Network, id: &str) -> Result<NodeRef> {
    if let Some(i) = net.junction_index(id) {
        return Ok(NodeRef::Junction(i));
    }
    net.reservoirs
        .iter()
        .position(|r| r.id == id)
        .map(NodeRef::Reservoir)
        .ok_or_else(|| Error::UnknownNode(id.to_string()))
}

impl<'a> System<'a> {
    fn head(&self, h: &DVector<f64>, nr: NodeRef) -> f64 {
        match nr {
            NodeRef::Junction(i) => h[i],
            NodeRef::Reservoir(i) => self.net.reservoirs[i].fixed_head,
        }
    }

    /// Signed pipe flow and its derivative with respect to the head drop.
    fn flow(&self, dh: f64, r: f64) -> (f64, f64) {
        let inv = 1.0 / HW_EXPONENT;
        if dh.abs() < DH_LINEAR {
            let slope = (DH_LINEAR / r).powf(inv) / DH_LINEAR;
            (dh * slope, slope)
        } else {
            let q_abs = (dh.abs() / r).powf(inv);
            (q_abs.copysign(dh), q_abs / (HW_EXPONENT * dh.abs()))
        }
    }

    /// Junction imbalances: inflow - demand - leak.
    fn residual(&self, h: &DVector<f64>) -> DVector<f64> {
        let n = self.net.junctions.len();
        let mut f = DVector::from_element(n, 0.0);
        for j in 0..n {
            f[j] -= self.demands[j];
        }
        for &(_, a, b, r) in &self.open {
            let dh = self.head(h, a) - self.head(h, b);
            let (q, _) = self.flow(dh, r);
            if let NodeRef::Junction(i) = a {
                f[i] -= q;
            }
            if let NodeRef::Junction(i) = b {
                f[i] += q;
            }
        }
        for &(j, l) in &self.leak_at {
            let p = h[j] - self.net.junctions[j].elevation;
            f[j] -= leak_flow(p, &self.leaks[l]);
        }
        f
    }

    fn jacobian(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let n = self.net.junctions.len();
        let mut jac = DMatrix::from_element(n, n, 0.0);
        for &(_, a, b, r) in &self.open {
            let dh = self.head(h, a) - self.head(h, b);
            let (_, g) = self.flow(dh, r);
            // dF_a/dh_a -= g, dF_a/dh_b += g, dF_b/dh_a += g, dF_b/dh_b -= g
            if let NodeRef::Junction(i) = a {
                jac[(i, i)] -= g;
                if let NodeRef::Junction(k) = b {
                    jac[(i, k)] += g;
                }
            }
            if let NodeRef::Junction(i) = b {
                jac[(i, i)] -= g;
                if let NodeRef::Junction(k) = a {
                    jac[(i, k)] += g;
                }
            }
        }
        for &(j, l) in &self.leak_at {
            let p = h[j] - self.net.junctions[j].elevation;
            if p > 0.0 {
                let leak = &self.leaks[l];
                let area = std::f64::consts::PI * leak.hole_diameter * leak.hole_diameter / 4.0;
                let coeff = leak.discharge_coefficient * area * (2.0 * super::GRAVITY).sqrt();
                jac[(j, j)] -= coeff / (2.0 * p.max(LEAK_P_LINEAR).sqrt());
            }
        }
        jac
    }
}

/// Solve for steady-state heads and flows.
///
/// `demand_multiplier`, when given, scales each junction's base demand and
/// must be indexed like `net.junctions`. Closed pipes are removed from the
/// incidence structure; the remaining graph must still connect every
/// junction to a reservoir.
pub fn solve_steady_state(
    net: &Network,
    leaks: &[LeakSpec],
    demand_multiplier: Option<&[f64]>,
) -> Result<HydraulicState> {
    solve_with_guess(net, leaks, demand_multiplier, None)
}

/// As [`solve_steady_state`], warm-started from previous junction heads.
pub fn solve_with_guess(
    net: &Network,
    leaks: &[LeakSpec],
    demand_multiplier: Option<&[f64]>,
    initial_heads: Option<&[f64]>,
) -> Result<HydraulicState> {
    net.check_connected()?;
    let n = net.junctions.len();
    if let Some(m) = demand_multiplier {
        if m.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "demand multiplier length {} != junction count {}",
                m.len(),
                n
            )));
        }
    }

    let mut open = Vec::new();
    for (i, p) in net.pipes.iter().enumerate() {
        if p.is_open() {
            open.push((
                i,
                node_ref(net, &p.endpoints[0])?,
                node_ref(net, &p.endpoints[1])?,
                p.resistance(),
            ));
        }
    }
    let mut leak_at = Vec::new();
    for (l, leak) in leaks.iter().enumerate() {
        let j = net
            .junction_index(&leak.node_id)
            .ok_or_else(|| Error::UnknownNode(leak.node_id.clone()))?;
        leak_at.push((j, l));
    }
    let demands: Vec<f64> = net
        .junctions
        .iter()
        .enumerate()
        .map(|(j, junc)| junc.base_demand * demand_multiplier.map_or(1.0, |m| m[j]))
        .collect();

    let sys = System {
        net,
        open,
        leak_at,
        leaks,
        demands,
    };

    let start = net
        .reservoirs
        .iter()
        .map(|r| r.fixed_head)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut h = match initial_heads {
        Some(g) if g.len() == n => DVector::from_column_slice(g),
        _ => DVector::from_element(n, start),
    };

    let mut f = sys.residual(&h);
    let mut norm = f.amax();
    for iter in 0..MAX_ITERATIONS {
        if norm <= SOLVER_TOLERANCE {
            return Ok(finish(&sys, net, leaks, h, norm, iter));
        }
        let jac = sys.jacobian(&h);
        let step = jac
            .lu()
            .solve(&(-&f))
            .ok_or(Error::NonConvergence {
                iterations: iter,
                residual: norm,
            })?;

        let mut alpha = 1.0;
        let mut best = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &h + alpha * &step;
            let f_trial = sys.residual(&trial);
            let n_trial = f_trial.amax();
            if n_trial < norm {
                best = Some((trial, f_trial, n_trial));
                break;
            }
            if best.is_none() {
                best = Some((trial.clone(), f_trial, n_trial));
            }
            alpha *= 0.5;
        }
        let (h1, f1, n1) = best.expect("at least one trial step");
        h = h1;
        f = f1;
        norm = n1;
    }
    if norm <= SOLVER_TOLERANCE {
        return Ok(finish(&sys, net, leaks, h, norm, MAX_ITERATIONS));
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: norm,
    })
}

fn finish(
    sys: &System,
    net: &Network,
    leaks: &[LeakSpec],
    h: DVector<f64>,
    norm: f64,
    iterations: usize,
) -> HydraulicState {
    let mut pipe_flows = vec![0.0; net.pipes.len()];
    for &(p, a, b, r) in &sys.open {
        let dh = sys.head(&h, a) - sys.head(&h, b);
        pipe_flows[p] = sys.flow(dh, r).0;
    }
    let leak_outflows = sys
        .leak_at
        .iter()
        .map(|&(j, l)| leak_flow(h[j] - net.junctions[j].elevation, &leaks[l]))
        .collect();
    HydraulicState {
        junction_heads: h.iter().copied().collect(),
        pipe_flows,
        leak_outflows,
        residual_norm: norm,
        iterations,
    }
}
