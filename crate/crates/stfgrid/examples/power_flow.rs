//! Newton power flow, solved two ways on the same cases.
//!
//! The tableau formulation iterates on the full (V, v, i) state with power
//! balances appended; the Ybus formulation iterates on bus voltages alone.
//! Both start flat and must land on the same operating point — the second
//! route exists precisely to cross-check the first.
//!
//! Run with `cargo run --example power_flow`.

use std::time::Instant;

use stfgrid::io::matpower::load_matpower;
use stfgrid::powerflow::{solve_powerflow_stf, solve_powerflow_ybus, PowerFlowOptions};

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("cases");
    let options = PowerFlowOptions::default();

    for name in ["case9", "case14", "case118"] {
        let parsed = load_matpower(dir.join(format!("{name}.m"))).unwrap();

        let started = Instant::now();
        let stf = solve_powerflow_stf(&parsed.network, &parsed.spec, &options).unwrap();
        let stf_ms = started.elapsed().as_secs_f64() * 1e3;

        let started = Instant::now();
        let ybus = solve_powerflow_ybus(&parsed.network, &parsed.spec, &options).unwrap();
        let ybus_ms = started.elapsed().as_secs_f64() * 1e3;

        let max_dv = stf
            .v_bus
            .iter()
            .zip(&ybus.v_bus)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);

        println!("== {name} ({} buses) ==", parsed.network.n_buses());
        println!("  stf : {} iterations, {stf_ms:7.2} ms, residual {:.2e}", stf.iterations, stf.residuals.max());
        println!("  ybus: {} iterations, {ybus_ms:7.2} ms, residual {:.2e}", ybus.iterations, ybus.residuals.max());
        println!("  max voltage difference between formulations: {max_dv:.3e} pu");

        println!("  first buses (stf): ");
        for j in 0..4.min(parsed.network.n_buses()) {
            let v = stf.v_bus[j];
            println!(
                "    bus {:>3}: {:.6} pu ∠ {:>8.4}°",
                parsed.case.external_id(j),
                v.norm(),
                v.arg().to_degrees()
            );
        }
        println!();
    }
}
