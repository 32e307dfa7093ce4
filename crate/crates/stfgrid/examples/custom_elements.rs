//! Extending the element catalog with hand-written stamps.
//!
//! Any device expressible as affine constraints on its port voltages and
//! currents, `Fv·v + Fi·i = us`, drops into the tableau unchanged. Here a
//! constant-voltage source — a stamp no admittance matrix can hold — feeds
//! an RL impedance through an ideal transformer, and the resulting linear
//! tableau solves in one factorization.
//!
//! Run with `cargo run --example custom_elements`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use stfgrid::netmodel::{BusId, ElementStamp, Network, NetworkElement};
use stfgrid::tableau::{assemble_tableau, solve_linear_tableau};

fn main() {
    let zero = Complex64::ZERO;
    let one = Complex64::ONE;

    // One-port Thevenin source. Port currents flow from bus into element,
    // so the delivered current is −i and the terminal law v = e − z·(−i)
    // stamps as v − z_src·i = e.
    let e = Complex64::new(1.05, 0.0);
    let z_src = Complex64::new(0.002, 0.01);
    let source = ElementStamp::new(
        DMatrix::from_element(1, 1, one),
        DMatrix::from_element(1, 1, -z_src),
        DVector::from_element(1, e),
    )
    .unwrap();

    // One-port RL load: v − z_load·i = 0.
    let z_load = Complex64::new(0.8, 0.6);
    let load = ElementStamp::new(
        DMatrix::from_element(1, 1, one),
        DMatrix::from_element(1, 1, -z_load),
        DVector::from_element(1, zero),
    )
    .unwrap();

    // Two-port ideal transformer in raw turns form:
    //   n2·v_a − n1·v_b = 0,  n1·i_a + n2·i_b = 0.
    let (n1, n2) = (5.0, 1.0);
    let transformer = ElementStamp::new(
        DMatrix::from_row_slice(2, 2, &[
            Complex64::new(n2, 0.0), Complex64::new(-n1, 0.0),
            zero, zero,
        ]),
        DMatrix::from_row_slice(2, 2, &[
            zero, zero,
            Complex64::new(n1, 0.0), Complex64::new(n2, 0.0),
        ]),
        DVector::from_element(2, zero),
    )
    .unwrap();

    let network = Network::builder(1.0)
        .simple_bus(0)
        .simple_bus(1)
        .element(NetworkElement::custom(source, vec![BusId(0)]).unwrap())
        .element(NetworkElement::custom(transformer, vec![BusId(0), BusId(1)]).unwrap())
        .element(NetworkElement::custom(load, vec![BusId(1)]).unwrap())
        .finalize()
        .unwrap();

    let system = assemble_tableau(&network, &[zero, zero]).unwrap();
    let layout = system.layout();
    let x = solve_linear_tableau(&system).unwrap();

    let v0: Complex64 = x[layout.bus_col(0)];
    let v1: Complex64 = x[layout.bus_col(1)];
    println!("primary bus:   V = {:.4} pu ∠ {:.3}°", v0.norm(), v0.arg().to_degrees());
    println!("secondary bus: V = {:.4} pu ∠ {:.3}° (ratio {:.3}, turns {:.1})",
        v1.norm(), v1.arg().to_degrees(), v0.norm() / v1.norm(), n1 / n2);

    // Port currents live behind the v block: load port is the last one.
    let i_load: Complex64 = x[layout.port_i_col(3)];
    let s_load = v1 * i_load.conj();
    println!("load draws {:.4} + {:.4}j pu through the 5:1 transformer", s_load.re, s_load.im);

    // Hand analysis of the same loop for comparison: the transformer maps
    // the load to n²·z_load on the primary side.
    let n = n1 / n2;
    let i_primary = e / (z_src + n * n * z_load);
    println!("hand-computed primary current: {:.4} pu (tableau: {:.4} pu)",
        i_primary.norm(), x[layout.port_i_col(1)].norm() );
}
