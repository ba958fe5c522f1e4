//! Steady-state hydraulics on the bundled looped network: solve the base
//! case, close a pipe, and show how heads redistribute; then attach an
//! orifice leak and show its footprint.
//!
//! Run with: cargo run --release --example solve_network

use pipewatch::data;
use pipewatch::hydronet::{solve_steady_state, LeakSpec};

fn main() -> pipewatch::Result<()> {
    let net = data::hanoi_like();
    println!(
        "network: {} junctions, {} reservoirs, {} pipes",
        net.junctions.len(),
        net.reservoirs.len(),
        net.pipes.len()
    );

    let base = solve_steady_state(&net, &[], None)?;
    println!(
        "base solve: {} iterations, residual {:.2e} m3/s",
        base.iterations, base.residual_norm
    );

    let blocked_net = net.apply_blockage("P07")?;
    let blocked = solve_steady_state(&blocked_net, &[], None)?;

    let leak = LeakSpec {
        node_id: "N14".into(),
        hole_diameter: 0.089,
        discharge_coefficient: 0.75,
    };
    let leaking = solve_steady_state(&net, &[leak.clone()], None)?;
    println!(
        "leak at N14 (8.9 cm hole) discharges {:.4} m3/s",
        leaking.leak_outflows[0]
    );

    println!();
    println!("{:<8} {:>10} {:>14} {:>12}", "node", "head [m]", "P07 closed", "N14 leaking");
    for id in ["N03", "N06", "N10", "N13", "N14", "N16", "N23", "N29"] {
        let h = base.node_head(&net, id).unwrap();
        let hb = blocked.node_head(&blocked_net, id).unwrap();
        let hl = leaking.node_head(&net, id).unwrap();
        println!(
            "{id:<8} {h:>10.3} {:>+14.3} {:>+12.3}",
            hb - h,
            hl - h
        );
    }

    // Total pipe flow into the network equals total demand plus leakage.
    let total_demand: f64 = net.junctions.iter().map(|j| j.base_demand).sum();
    let inflow = leaking.pipe_flows[0];
    println!();
    println!(
        "inflow {:.4} = demand {:.4} + leak {:.4} (mass balance)",
        inflow, total_demand, leaking.leak_outflows[0]
    );
    Ok(())
}
