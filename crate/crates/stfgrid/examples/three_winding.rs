//! Three-winding transformers as native three-port elements.
//!
//! Bus-branch tools approximate a three-winding bank with a star of
//! two-winding branches around a fictitious midpoint bus. The tableau keeps
//! the bank as one three-port element with its defining physics:
//!
//!   voltage ratios   v_a/N_a = v_b/N_b = v_c/N_c
//!   ampere turns     N_a·i_a + N_b·i_b + N_c·i_c = 0
//!
//! Run with `cargo run --example three_winding`.

use stfgrid::fixtures::{three_winding_network, THREE_WINDING_RATIOS};
use stfgrid::powerflow::{solve_powerflow_stf, PowerFlowOptions};
use stfgrid::tableau::build_incidence;

fn main() {
    let (network, spec) = three_winding_network();
    let (na, nb, nc) = THREE_WINDING_RATIOS;
    let incidence = build_incidence(&network).unwrap();

    println!("network: line 0-1, then a {na}:{nb}:{nc} bank on buses 1, 2, 3");
    println!("ports: {} (line contributes 2, the bank 3)\n", incidence.n_ports());

    let sol = solve_powerflow_stf(&network, &spec, &PowerFlowOptions::default()).unwrap();
    for (j, v) in sol.v_bus.iter().enumerate() {
        println!("bus {j}: {:.5} pu ∠ {:>7.4}°", v.norm(), v.arg().to_degrees());
    }

    // The bank's ports are 2, 3, 4 (after the line's two).
    let (va, vb, vc) = (sol.v_port[2], sol.v_port[3], sol.v_port[4]);
    let (ia, ib, ic) = (sol.i_port[2], sol.i_port[3], sol.i_port[4]);

    println!("\nwinding voltages: |v_a| = {:.5}, |v_b| = {:.5}, |v_c| = {:.5}", va.norm(), vb.norm(), vc.norm());
    println!("winding currents: |i_a| = {:.5}, |i_b| = {:.5}, |i_c| = {:.5}", ia.norm(), ib.norm(), ic.norm());

    let ratio_ab = (va / na - vb / nb).norm();
    let ratio_bc = (vb / nb - vc / nc).norm();
    let ampere_turn = (na * ia + nb * ib + nc * ic).norm();
    println!("\nvoltage-ratio residuals: |v_a/N_a - v_b/N_b| = {ratio_ab:.2e}, |v_b/N_b - v_c/N_c| = {ratio_bc:.2e}");
    println!("ampere-turn residual: |N_a·i_a + N_b·i_b + N_c·i_c| = {ampere_turn:.2e}");

    // The secondary and tertiary share the stepped-down voltage.
    println!(
        "\nstep-down check: |V2|/|V1| = {:.4} (ratio N_b/N_a = {:.4})",
        sol.v_bus[2].norm() / sol.v_bus[1].norm(),
        nb / na
    );
}
