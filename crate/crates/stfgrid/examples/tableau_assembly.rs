//! Assembling and solving sparse tableau systems.
//!
//! Walks through the two ways a tableau comes to life: hand-written custom
//! stamps (a textbook source / transformer / impedance loop) and the
//! built-in element catalog (a three-bus ring of lines), then shows the
//! sparsity that makes the formulation worthwhile on a real case.
//!
//! Run with `cargo run --example tableau_assembly`.

use num_complex::Complex64;
use stfgrid::fixtures::{fig2_circuit, three_bus_network};
use stfgrid::io::matpower::load_matpower;
use stfgrid::tableau::{assemble_tableau, build_incidence, residuals, solve_linear_tableau};

fn main() {
    textbook_circuit();
    three_bus();
    case_sparsity();
}

/// A 1:2 step-up transformer between the buses, a 0.5j-ohm impedance at bus
/// 1, and a unit voltage source at bus 0 — four ports, ten tableau rows.
fn textbook_circuit() {
    let z = Complex64::new(0.0, 0.5);
    let e = Complex64::ONE;
    let network = fig2_circuit(1.0, 2.0, z, e);
    let injections = vec![Complex64::ZERO; 2];
    let system = assemble_tableau(&network, &injections).unwrap();
    let layout = system.layout();

    println!("== textbook two-bus circuit ==");
    println!("tableau is {} x {} ({} nonzeros):", layout.dim(), layout.dim(), system.nnz());
    for row in system.to_dense() {
        let cells: Vec<String> = row
            .iter()
            .map(|v| {
                if v.im == 0.0 {
                    format!("{:5.1}", v.re)
                } else {
                    format!("{:4.1}j", v.im)
                }
            })
            .collect();
        println!("  [{}]", cells.join(" "));
    }

    let x = solve_linear_tableau(&system).unwrap();
    println!("bus voltages: V0 = {:.3}, V1 = {:.3}", x[layout.bus_col(0)], x[layout.bus_col(1)]);
    let res = residuals(&system, &x).unwrap();
    println!(
        "residual max-norms: kcl {:.2e}, kvl {:.2e}, element {:.2e}",
        res.kcl_max(),
        res.kvl_max(),
        res.elem_max()
    );
    println!();
}

fn three_bus() {
    let network = three_bus_network();
    let incidence = build_incidence(&network).unwrap();
    println!("== three-bus ring of lines ==");
    println!("incidence matrix A ({} buses x {} ports):", incidence.n_buses(), incidence.n_ports());
    for row in incidence.to_dense() {
        println!("  {row:?}");
    }

    // With injections the tableau solves directly; here a current from bus 0
    // to bus 1. No element pins a voltage, so only the lines' charging
    // shunts tie the network to ground and magnitudes come out small;
    // power-flow runs anchor voltages through bus specs instead.
    let injections = vec![
        Complex64::new(0.5, 0.0),
        Complex64::new(-0.5, 0.0),
        Complex64::ZERO,
    ];
    let system = assemble_tableau(&network, &injections).unwrap();
    let layout = system.layout();
    println!("tableau dimension: {} (= N + 2P = 3 + 12)", layout.dim());
    let x = solve_linear_tableau(&system).unwrap();
    for bus in 0..3 {
        let v: Complex64 = x[layout.bus_col(bus)];
        println!("  V{bus} = {:.4} ∠ {:.3}°", v.norm(), v.arg().to_degrees());
    }
    println!();
}

fn case_sparsity() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("cases");
    let parsed = load_matpower(dir.join("case118.m")).unwrap();
    let injections = vec![Complex64::ZERO; parsed.network.n_buses()];
    let system = assemble_tableau(&parsed.network, &injections).unwrap();
    let d = system.layout().dim();
    let density = 100.0 * system.nnz() as f64 / (d as f64 * d as f64);
    println!("== case118 ==");
    println!("tableau {d} x {d}, {} nonzeros, {density:.3}% dense", system.nnz());
}
