//! Power-network modeling on the sparse tableau formulation.
//!
//! The crate builds electric networks from a small catalog of branch models
//! (plus user-supplied stamps), assembles the full sparse tableau `T·x = u`
//! over bus voltages, port voltages, and port currents, and solves AC power
//! flow and AC optimal power flow directly on that tableau. Networks whose
//! elements are all invertible in their current blocks can also be reduced
//! to a classical bus-admittance matrix, which doubles as an independent
//! cross-check of every tableau solve.
//!
//! Start with [`netmodel::NetworkBuilder`] to describe a network, or with
//! [`io::matpower`] / [`io::nodebreaker`] to load one from disk. The
//! `examples/` directory walks through each capability end to end.

pub mod cli;
pub mod fixtures;
pub mod io;
pub mod netmodel;
pub mod opf;
pub mod powerflow;
pub mod reduction;
pub mod sparse;
pub mod tableau;
