//! Incidence construction and sparse tableau assembly.
//!
//! The tableau keeps every network equation explicit rather than eliminating
//! port variables: with N buses and P element ports the unknowns are
//! `x = (V, v, i)` (bus voltages, port voltages, port currents) and
//!
//! ```text
//!       [ 0    0    A  ] [V]   [I]          KCL    I − A·i = 0
//!  T =  [ −Aᵀ  I    0  ] [v] = [0]          KVL    v − Aᵀ·V = 0
//!       [ 0    Fv   Fi ] [i]   [us]         element rows
//! ```
//!
//! All arithmetic in this module is complex; realification is the business of
//! the power-flow and OPF layers.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::netmodel::{BusId, ElementId, Network};
use crate::sparse::{self, ct, CTriplet, ComplexLu};

#[derive(Debug, thiserror::Error)]
pub enum TableauError {
    #[error("element {element} port attached to unknown bus {bus}")]
    DanglingPort { element: ElementId, bus: BusId },
    #[error("expected {expected} injections, got {got}")]
    InjectionLength { expected: usize, got: usize },
    #[error("injection at bus {0} is not finite")]
    NonFiniteInjection(BusId),
    #[error("vector length {got} does not match tableau dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tableau is singular (diagnostic index {index}); \
             look for floating subnetworks or redundant breaker paths")]
    SingularTableau { index: usize },
}

/// Bus-by-port incidence. Column `p` holds a single 1 in the row of the bus
/// that element port attaches to; both ports of an element orient their
/// current from bus into element, so every entry is +1.
#[derive(Clone, Debug)]
pub struct IncidenceMatrix {
    n_buses: usize,
    port_bus: Vec<BusId>,
    element_offsets: Vec<usize>,
}

impl IncidenceMatrix {
    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    /// Total port count P (the column count).
    pub fn n_ports(&self) -> usize {
        self.port_bus.len()
    }

    /// The bus each port column attaches to.
    pub fn port_bus(&self) -> &[BusId] {
        &self.port_bus
    }

    /// Column of `(element, port)`.
    pub fn column(&self, element: ElementId, port: usize) -> usize {
        self.element_offsets[element.0] + port
    }

    /// First port column of each element (one past the end sentinel last).
    pub fn element_offsets(&self) -> &[usize] {
        &self.element_offsets
    }

    /// `A · i`: accumulates port currents into their buses.
    pub fn scatter(&self, port_vals: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.n_buses];
        for (p, val) in port_vals.iter().enumerate() {
            out[self.port_bus[p].0] += val;
        }
        out
    }

    /// `Aᵀ · V`: reads each port's bus voltage.
    pub fn gather(&self, bus_vals: &[Complex64]) -> Vec<Complex64> {
        self.port_bus.iter().map(|b| bus_vals[b.0]).collect()
    }

    pub fn triplets(&self) -> Vec<CTriplet> {
        self.port_bus
            .iter()
            .enumerate()
            .map(|(p, b)| ct(b.0, p, Complex64::ONE))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_ports()]; self.n_buses];
        for (p, b) in self.port_bus.iter().enumerate() {
            a[b.0][p] = 1.0;
        }
        a
    }
}

/// Builds the incidence matrix of a finalized network.
pub fn build_incidence(network: &Network) -> Result<IncidenceMatrix, TableauError> {
    let n = network.n_buses();
    let mut port_bus = Vec::with_capacity(network.port_count());
    let mut element_offsets = Vec::with_capacity(network.elements().len() + 1);
    for (k, el) in network.elements().iter().enumerate() {
        element_offsets.push(port_bus.len());
        for &bus in el.attachment() {
            if bus.0 >= n {
                return Err(TableauError::DanglingPort { element: ElementId(k), bus });
            }
            port_bus.push(bus);
        }
    }
    element_offsets.push(port_bus.len());
    Ok(IncidenceMatrix { n_buses: n, port_bus, element_offsets })
}

/// Index bookkeeping for the tableau unknowns and rows.
#[derive(Clone, Copy, Debug)]
pub struct TableauLayout {
    pub n_buses: usize,
    pub n_ports: usize,
}

impl TableauLayout {
    pub fn dim(&self) -> usize {
        self.n_buses + 2 * self.n_ports
    }

    pub fn bus_col(&self, bus: usize) -> usize {
        bus
    }

    pub fn port_v_col(&self, port: usize) -> usize {
        self.n_buses + port
    }

    pub fn port_i_col(&self, port: usize) -> usize {
        self.n_buses + self.n_ports + port
    }

    pub fn kcl_row(&self, bus: usize) -> usize {
        bus
    }

    pub fn kvl_row(&self, port: usize) -> usize {
        self.n_buses + port
    }

    /// Element rows are grouped per element in element order, one row per
    /// port, so the row of (element, local row r) reuses the port numbering.
    pub fn elem_row(&self, port_ordinal: usize) -> usize {
        self.n_buses + self.n_ports + port_ordinal
    }
}

/// The assembled sparse system `T·x = u` plus its index maps.
#[derive(Clone, Debug)]
pub struct TableauSystem {
    layout: TableauLayout,
    incidence: IncidenceMatrix,
    triplets: Vec<CTriplet>,
    u: Vec<Complex64>,
}

impl TableauSystem {
    pub fn layout(&self) -> TableauLayout {
        self.layout
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn u(&self) -> &[Complex64] {
        &self.u
    }

    /// Raw coordinate entries of T (duplicates absent by construction).
    pub fn triplets(&self) -> &[CTriplet] {
        &self.triplets
    }

    pub fn nnz(&self) -> usize {
        sparse::combined_entries(&self.triplets).len()
    }

    /// Splits a solution vector into (V, v, i) views.
    pub fn split<'a>(
        &self,
        x: &'a [Complex64],
    ) -> (&'a [Complex64], &'a [Complex64], &'a [Complex64]) {
        let (n, p) = (self.layout.n_buses, self.layout.n_ports);
        let (v_bus, rest) = x.split_at(n);
        let (v_port, i_port) = rest.split_at(p);
        (v_bus, v_port, i_port)
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let d = self.layout.dim();
        let mut t = vec![vec![Complex64::ZERO; d]; d];
        for tr in &self.triplets {
            t[tr.row][tr.col] += tr.val;
        }
        t
    }

    /// Debug dump of T in MatrixMarket coordinate format.
    pub fn write_matrix_market(&self, w: &mut impl Write) -> io::Result<()> {
        let entries = sparse::combined_entries(&self.triplets);
        let d = self.layout.dim();
        sparse::write_matrix_market_complex(w, d, d, &entries)
    }
}

/// Assembles the tableau of a network with the given bus current injections.
pub fn assemble_tableau(
    network: &Network,
    injections: &[Complex64],
) -> Result<TableauSystem, TableauError> {
    let incidence = build_incidence(network)?;
    let n = incidence.n_buses();
    let p = incidence.n_ports();
    if injections.len() != n {
        return Err(TableauError::InjectionLength { expected: n, got: injections.len() });
    }
    if let Some(j) = injections.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(TableauError::NonFiniteInjection(BusId(j)));
    }
    let layout = TableauLayout { n_buses: n, n_ports: p };
    let mut triplets = Vec::with_capacity(3 * p + network.elements().len() * 8);
    let mut u = vec![Complex64::ZERO; layout.dim()];
    u[..n].copy_from_slice(injections);

    // KCL block row: A in the i columns.
    for (port, bus) in incidence.port_bus().iter().enumerate() {
        triplets.push(ct(layout.kcl_row(bus.0), layout.port_i_col(port), Complex64::ONE));
    }
    // KVL block row: −Aᵀ in the V columns, identity in the v columns.
    for (port, bus) in incidence.port_bus().iter().enumerate() {
        triplets.push(ct(layout.kvl_row(port), layout.bus_col(bus.0), -Complex64::ONE));
        triplets.push(ct(layout.kvl_row(port), layout.port_v_col(port), Complex64::ONE));
    }
    // Element block row: block-diagonal Fv (v columns) and Fi (i columns).
    for (k, el) in network.elements().iter().enumerate() {
        let base = incidence.column(ElementId(k), 0);
        let stamp = el.stamp();
        let arity = stamp.arity();
        for r in 0..arity {
            let row = layout.elem_row(base + r);
            for c in 0..arity {
                let fv = stamp.fv()[(r, c)];
                if fv != Complex64::ZERO {
                    triplets.push(ct(row, layout.port_v_col(base + c), fv));
                }
                let fi = stamp.fi()[(r, c)];
                if fi != Complex64::ZERO {
                    triplets.push(ct(row, layout.port_i_col(base + c), fi));
                }
            }
            u[row] = stamp.us()[r];
        }
    }
    Ok(TableauSystem { layout, incidence, triplets, u })
}

/// Residual vectors of the three tableau block rows at a candidate `x`.
#[derive(Clone, Debug)]
pub struct TableauResiduals {
    /// `u_I − A·i` per bus.
    pub kcl: Vec<Complex64>,
    /// `v − Aᵀ·V` per port.
    pub kvl: Vec<Complex64>,
    /// `Fv·v + Fi·i − us` per element row.
    pub elem: Vec<Complex64>,
}

impl TableauResiduals {
    pub fn kcl_max(&self) -> f64 {
        max_norm(&self.kcl)
    }

    pub fn kvl_max(&self) -> f64 {
        max_norm(&self.kvl)
    }

    pub fn elem_max(&self) -> f64 {
        max_norm(&self.elem)
    }

    pub fn max(&self) -> f64 {
        self.kcl_max().max(self.kvl_max()).max(self.elem_max())
    }
}

pub(crate) fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Evaluates the three residual families at `x`.
pub fn residuals(
    system: &TableauSystem,
    x: &[Complex64],
) -> Result<TableauResiduals, TableauError> {
    let layout = system.layout();
    let d = layout.dim();
    if x.len() != d {
        return Err(TableauError::DimensionMismatch { expected: d, got: x.len() });
    }
    let tx = sparse::matvec_complex(d, &system.triplets, x);
    let (n, p) = (layout.n_buses, layout.n_ports);
    let kcl = (0..n).map(|j| system.u[j] - tx[j]).collect();
    let kvl = (0..p).map(|q| tx[n + q] - system.u[n + q]).collect();
    let elem = (0..p).map(|q| tx[n + p + q] - system.u[n + p + q]).collect();
    Ok(TableauResiduals { kcl, kvl, elem })
}

/// Sparse-LU solve of a purely linear tableau. The factorization uses partial
/// pivoting; the result is rejected (as singular) unless the max-norm
/// residual is below `1e-9 · (1 + ‖u‖∞)`.
pub fn solve_linear_tableau(system: &TableauSystem) -> Result<Vec<Complex64>, TableauError> {
    let d = system.layout().dim();
    let lu = ComplexLu::factor(d, &system.triplets)
        .map_err(|e| singular(e, d))?;
    let x = lu.solve(&system.u).map_err(|e| singular(e, d))?;
    let scale = 1.0 + max_norm(&system.u);
    let resid = lu.residual_inf(&x, &system.u);
    if resid > 1e-9 * scale {
        return Err(TableauError::SingularTableau { index: d });
    }
    Ok(x)
}

fn singular(err: sparse::SolveError, dim: usize) -> TableauError {
    match err {
        sparse::SolveError::Singular { index } => TableauError::SingularTableau { index },
        sparse::SolveError::Shape => TableauError::DimensionMismatch { expected: dim, got: 0 },
    }
}
