//! Reduction of a tableau network to the classical bus-admittance matrix.
//!
//! An element with equations `Fv·v + Fi·i = 0` and invertible `Fi` admits a
//! local admittance `Y_loc = −Fi⁻¹·Fv` mapping its port voltages to its port
//! currents; scattering every local block through the incidence map yields
//! `Ybus = −A·Fi⁻¹·Fv·Aᵀ` block by block, without ever forming the full
//! tableau. The reduction exists exactly when every `Fi` block is invertible
//! and no element carries an internal source.
//!
//! [`direct_ybus`] rebuilds the same matrix from raw element parameters with
//! the textbook branch formulas and shares no code with the stamp route, so
//! agreement between the two is a meaningful consistency check rather than a
//! tautology.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::netmodel::{ElementId, ElementKind, ElementParams, Network, SwitchState};
use crate::sparse::{self, ct, CTriplet};

/// Why a particular element blocks the reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IrreducibleCause {
    /// `Fi` is singular: the element pins voltages or couples windings in a
    /// way no admittance can express (ideal transformers, breakers, star
    /// points of three-winding banks).
    SingularCurrentBlock,
    /// The element injects independently of its port variables (`us ≠ 0`),
    /// which a homogeneous `Ybus·V = I` cannot absorb.
    InternalSource,
}

impl std::fmt::Display for IrreducibleCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SingularCurrentBlock => write!(f, "singular current block"),
            Self::InternalSource => write!(f, "internal source"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReductionError {
    #[error("element {element} ({kind}) is not reducible: {cause}")]
    NotReducible { element: ElementId, kind: ElementKind, cause: IrreducibleCause },
    #[error("element {element} ({kind}) has no closed-form admittance")]
    NoDirectFormula { element: ElementId, kind: ElementKind },
}

/// Per-element verdict inside a [`ReducibilityReport`].
#[derive(Clone, Copy, Debug)]
pub struct ElementReducibility {
    pub element: ElementId,
    pub kind: ElementKind,
    /// `None` when the element reduces cleanly.
    pub cause: Option<IrreducibleCause>,
}

/// Outcome of [`assess_reducibility`]: one entry per element, in element
/// order.
#[derive(Clone, Debug)]
pub struct ReducibilityReport {
    entries: Vec<ElementReducibility>,
}

impl ReducibilityReport {
    pub fn is_reducible(&self) -> bool {
        self.entries.iter().all(|e| e.cause.is_none())
    }

    pub fn entries(&self) -> &[ElementReducibility] {
        &self.entries
    }

    pub fn blockers(&self) -> impl Iterator<Item = &ElementReducibility> {
        self.entries.iter().filter(|e| e.cause.is_some())
    }
}

fn element_cause(el: &crate::netmodel::NetworkElement) -> Option<IrreducibleCause> {
    let stamp = el.stamp();
    if stamp.fi_rank() < stamp.arity() {
        Some(IrreducibleCause::SingularCurrentBlock)
    } else if stamp.has_source() {
        Some(IrreducibleCause::InternalSource)
    } else {
        None
    }
}

/// Checks every element's `Fi` block and source vector without building
/// anything.
pub fn assess_reducibility(network: &Network) -> ReducibilityReport {
    let entries = network
        .elements()
        .iter()
        .enumerate()
        .map(|(k, el)| ElementReducibility {
            element: ElementId(k),
            kind: el.kind(),
            cause: element_cause(el),
        })
        .collect();
    ReducibilityReport { entries }
}

/// Sparse N×N bus-admittance matrix. Entries are kept combined (sorted,
/// duplicates summed, exact zeros dropped).
#[derive(Clone, Debug)]
pub struct YbusMatrix {
    n: usize,
    entries: Vec<CTriplet>,
}

impl YbusMatrix {
    fn from_triplets(n: usize, raw: &[CTriplet]) -> Self {
        let entries = sparse::combined_entries(raw)
            .into_iter()
            .map(|(r, c, z)| ct(r, c, z))
            .collect();
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[CTriplet] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries
            .iter()
            .find(|t| t.row == row && t.col == col)
            .map_or(Complex64::ZERO, |t| t.val)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for t in &self.entries {
            m[(t.row, t.col)] += t.val;
        }
        m
    }

    /// `I = Ybus·V`.
    pub fn nodal_currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        sparse::matvec_complex(self.n, &self.entries, v)
    }

    /// Largest entrywise magnitude difference against another matrix of the
    /// same size.
    pub fn max_abs_diff(&self, other: &YbusMatrix) -> f64 {
        assert_eq!(self.n, other.n, "Ybus size mismatch");
        let a = self.to_dense();
        let b = other.to_dense();
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn write_matrix_market(&self, w: &mut impl Write) -> io::Result<()> {
        let entries = sparse::combined_entries(&self.entries);
        sparse::write_matrix_market_complex(w, self.n, self.n, &entries)
    }
}

/// Blockwise Lemma-1 reduction: per element, `Y_loc = −Fi⁻¹·Fv`, scattered
/// through the attachment buses.
pub fn reduce_to_ybus(network: &Network) -> Result<YbusMatrix, ReductionError> {
    let mut raw = Vec::new();
    for (k, el) in network.elements().iter().enumerate() {
        let id = ElementId(k);
        if let Some(cause) = element_cause(el) {
            return Err(ReductionError::NotReducible { element: id, kind: el.kind(), cause });
        }
        let stamp = el.stamp();
        let y_loc = -stamp
            .fi()
            .clone()
            .try_inverse()
            .expect("full-rank Fi at the working tolerance")
            * stamp.fv();
        for (r, &bus_r) in el.attachment().iter().enumerate() {
            for (c, &bus_c) in el.attachment().iter().enumerate() {
                let y = y_loc[(r, c)];
                if y != Complex64::ZERO {
                    raw.push(ct(bus_r.0, bus_c.0, y));
                }
            }
        }
    }
    Ok(YbusMatrix::from_triplets(network.n_buses(), &raw))
}

/// Textbook-formula route to the same admittance matrix, computed from raw
/// element parameters. Lines and tap branches use the standard two-port
/// admittance of a π section behind an off-nominal complex tap `t`:
///
/// ```text
/// Yff = (ys + jB/2) / (t·t*)    Yft = −ys / t*
/// Ytf = −ys / t                 Ytt =  ys + jB/2
/// ```
///
/// Elements without a closed-form admittance (ideal transformers, breakers,
/// three-winding banks, custom stamps) make the call fail, mirroring the
/// stamp route's verdict.
pub fn direct_ybus(network: &Network) -> Result<YbusMatrix, ReductionError> {
    let mut raw = Vec::new();
    for (k, el) in network.elements().iter().enumerate() {
        let id = ElementId(k);
        let att = el.attachment();
        match *el.params() {
            ElementParams::Line { r, x, b } => {
                push_branch(&mut raw, att[0].0, att[1].0, r, x, b, Complex64::ONE);
            }
            ElementParams::TapTransformer { t, r, x, b } => {
                push_branch(&mut raw, att[0].0, att[1].0, r, x, b, t);
            }
            ElementParams::Shunt { y_sh } => {
                raw.push(ct(att[0].0, att[0].0, y_sh));
            }
            ElementParams::Breaker { switch_state: SwitchState::Open } => {
                // An open switch is simply absent from a bus-branch model.
            }
            ElementParams::Breaker { switch_state: SwitchState::Closed } => {
                // An ideal short has no finite admittance.
                return Err(ReductionError::NoDirectFormula { element: id, kind: el.kind() });
            }
            ElementParams::IdealTransformer { .. }
            | ElementParams::ThreeWinding { .. }
            | ElementParams::Custom => {
                return Err(ReductionError::NoDirectFormula { element: id, kind: el.kind() });
            }
        }
    }
    Ok(YbusMatrix::from_triplets(network.n_buses(), &raw))
}

fn push_branch(
    raw: &mut Vec<CTriplet>,
    f: usize,
    t_bus: usize,
    r: f64,
    x: f64,
    b: f64,
    tap: Complex64,
) {
    let ys = Complex64::ONE / Complex64::new(r, x);
    let ysh = Complex64::new(0.0, b / 2.0);
    raw.push(ct(f, f, (ys + ysh) / (tap * tap.conj())));
    raw.push(ct(f, t_bus, -ys / tap.conj()));
    raw.push(ct(t_bus, f, -ys / tap));
    raw.push(ct(t_bus, t_bus, ys + ysh));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{BusId, ElementStamp, Network, NetworkElement};
    use nalgebra::{dmatrix, dvector};

    fn net(elements: Vec<NetworkElement>, n_buses: usize) -> Network {
        let mut b = Network::builder(100.0);
        for id in 0..n_buses {
            b = b.simple_bus(id);
        }
        for el in elements {
            b = b.element(el);
        }
        b.finalize().unwrap()
    }

    fn line(f: usize, t: usize, r: f64, x: f64, b: f64) -> NetworkElement {
        NetworkElement::from_params(
            ElementParams::Line { r, x, b },
            vec![BusId(f), BusId(t)],
        )
        .unwrap()
    }

    #[test]
    fn single_line_reduces_to_pi_model() {
        // Hand nodal analysis of one π section: Ydiag = 1/Z + jB/2,
        // Yoff = −1/Z.
        let (r, x, b) = (0.02, 0.2, 0.1);
        let y = reduce_to_ybus(&net(vec![line(0, 1, r, x, b)], 2)).unwrap();
        let ys = Complex64::ONE / Complex64::new(r, x);
        let yd = ys + Complex64::new(0.0, b / 2.0);
        assert!((y.get(0, 0) - yd).norm() < 1e-14);
        assert!((y.get(1, 1) - yd).norm() < 1e-14);
        assert!((y.get(0, 1) + ys).norm() < 1e-14);
        assert!((y.get(1, 0) + ys).norm() < 1e-14);
    }

    #[test]
    fn tap_transformer_reduces_to_standard_branch_model() {
        let t = Complex64::from_polar(0.98, 3.0_f64.to_radians());
        let (r, x, b) = (0.005, 0.12, 0.02);
        let el = NetworkElement::from_params(
            ElementParams::TapTransformer { t, r, x, b },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let reduced = reduce_to_ybus(&net(vec![el], 2)).unwrap();
        let ys = Complex64::ONE / Complex64::new(r, x);
        let ysh = Complex64::new(0.0, b / 2.0);
        assert!((reduced.get(0, 0) - (ys + ysh) / (t * t.conj())).norm() < 1e-12);
        assert!((reduced.get(0, 1) + ys / t.conj()).norm() < 1e-12);
        assert!((reduced.get(1, 0) + ys / t).norm() < 1e-12);
        assert!((reduced.get(1, 1) - (ys + ysh)).norm() < 1e-12);
    }

    #[test]
    fn reduce_and_direct_agree_on_mixed_network() {
        let t = Complex64::from_polar(1.05, -2.0_f64.to_radians());
        let tap = NetworkElement::from_params(
            ElementParams::TapTransformer { t, r: 0.0, x: 0.08, b: 0.0 },
            vec![BusId(1), BusId(2)],
        )
        .unwrap();
        let shunt = NetworkElement::from_params(
            ElementParams::Shunt { y_sh: Complex64::new(0.0, 0.19) },
            vec![BusId(2)],
        )
        .unwrap();
        let network = net(
            vec![line(0, 1, 0.01, 0.1, 0.04), line(0, 2, 0.02, 0.25, 0.06), tap, shunt],
            3,
        );
        let a = reduce_to_ybus(&network).unwrap();
        let b = direct_ybus(&network).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn ideal_transformer_blocks_reduction() {
        let el = NetworkElement::from_params(
            ElementParams::IdealTransformer { t: Complex64::new(2.0, 0.0) },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let network = net(vec![line(0, 1, 0.0, 0.1, 0.0), el], 2);
        match reduce_to_ybus(&network) {
            Err(ReductionError::NotReducible { element, cause, .. }) => {
                assert_eq!(element, ElementId(1));
                assert_eq!(cause, IrreducibleCause::SingularCurrentBlock);
            }
            other => panic!("expected NotReducible, got {other:?}"),
        }
        assert!(!assess_reducibility(&network).is_reducible());
    }

    #[test]
    fn breakers_and_three_winding_block_reduction() {
        for el in [
            NetworkElement::from_params(
                ElementParams::Breaker { switch_state: SwitchState::Closed },
                vec![BusId(0), BusId(1)],
            )
            .unwrap(),
            NetworkElement::from_params(
                ElementParams::ThreeWinding { na: 1.0, nb: 1.0, nc: 1.0 },
                vec![BusId(0), BusId(1), BusId(1)],
            )
            .unwrap(),
        ] {
            let network = net(vec![line(0, 1, 0.0, 0.1, 0.0), el], 2);
            assert!(matches!(
                reduce_to_ybus(&network),
                Err(ReductionError::NotReducible {
                    cause: IrreducibleCause::SingularCurrentBlock,
                    ..
                })
            ));
            assert!(matches!(
                direct_ybus(&network),
                Err(ReductionError::NoDirectFormula { .. })
            ));
        }
    }

    #[test]
    fn internal_source_blocks_reduction() {
        // A Thevenin-like stamp: v − Z·i = E, invertible Fi but us ≠ 0.
        let stamp = ElementStamp::new(
            dmatrix![Complex64::ONE],
            dmatrix![Complex64::new(0.0, -0.5)],
            dvector![Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let el = NetworkElement::custom(stamp, vec![BusId(0)]).unwrap();
        let network = net(vec![line(0, 1, 0.0, 0.1, 0.0), el], 2);
        match reduce_to_ybus(&network) {
            Err(ReductionError::NotReducible { element, cause, .. }) => {
                assert_eq!(element, ElementId(1));
                assert_eq!(cause, IrreducibleCause::InternalSource);
            }
            other => panic!("expected NotReducible, got {other:?}"),
        }
    }

    #[test]
    fn report_lists_every_element_in_order() {
        let brk = NetworkElement::from_params(
            ElementParams::Breaker { switch_state: SwitchState::Closed },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let network = net(vec![line(0, 1, 0.01, 0.1, 0.0), brk], 2);
        let report = assess_reducibility(&network);
        assert_eq!(report.entries().len(), 2);
        assert!(report.entries()[0].cause.is_none());
        assert_eq!(
            report.entries()[1].cause,
            Some(IrreducibleCause::SingularCurrentBlock)
        );
        assert_eq!(report.blockers().count(), 1);
    }

    #[test]
    fn open_breaker_reduces_to_nothing() {
        // γ=0 gives Fv=0, Fi=I: invertible, zero local admittance. The
        // reduced matrix is that of the remaining network alone.
        let brk = NetworkElement::from_params(
            ElementParams::Breaker { switch_state: SwitchState::Open },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let with = net(vec![line(0, 1, 0.01, 0.1, 0.0), brk], 2);
        let without = net(vec![line(0, 1, 0.01, 0.1, 0.0)], 2);
        assert!(assess_reducibility(&with).is_reducible());
        let ya = reduce_to_ybus(&with).unwrap();
        let yb = reduce_to_ybus(&without).unwrap();
        assert!(ya.max_abs_diff(&yb) == 0.0);
    }

    #[test]
    fn parallel_lines_sum_their_admittances() {
        let network = net(
            vec![line(0, 1, 0.0, 0.2, 0.0), line(0, 1, 0.0, 0.2, 0.0)],
            2,
        );
        let y = reduce_to_ybus(&network).unwrap();
        // Two j5 S susceptances in parallel.
        assert!((y.get(0, 1) - Complex64::new(0.0, 10.0)).norm() < 1e-13);
    }
}
