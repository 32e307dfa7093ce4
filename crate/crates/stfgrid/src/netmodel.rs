//! Domain model: buses, elements, generators, loads, and the per-element
//! constitutive stamps `(Fv, Fi, us)`.
//!
//! Every element contributes `p` algebraic constraints on its port voltages
//! and currents, `Fv·v + Fi·i = us`, where `p` is the port arity. Two-port
//! elements (lines, transformers, breakers) use ports `a`, `b`; three-winding
//! transformers add port `c`; shunts are one-ports. The stamps here are the
//! only place element physics is encoded; assembly, reduction, and the
//! solvers consume them unchanged.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;

/// Relative singular-value cutoff for rank decisions on stamps and for the
/// ABCD conversion inside [`cascade`].
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetModelError {
    #[error("non-finite parameter: {0}")]
    NonFinite(&'static str),
    #[error("ideal transformer gain must be nonzero")]
    ZeroGain,
    #[error("breaker state must be 0 or 1, got {0}")]
    NonBinaryGamma(u8),
    #[error("three-winding turn counts must be positive")]
    NonPositiveTurns,
    #[error("stamp rows are rank deficient: rank {rank} < arity {arity}")]
    RankDeficientStamp { rank: usize, arity: usize },
    #[error("stamp dimensions inconsistent with arity {arity}")]
    BadStampShape { arity: usize },
    #[error("attachment lists {got} buses but stamp arity is {expected}")]
    AttachmentMismatch { expected: usize, got: usize },
    #[error("element has no ABCD transmission form")]
    NotCascadable,
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(BusId),
    #[error("bus ids must be dense 0..N-1")]
    NonDenseBusIds,
    #[error("bus {0}: voltage bounds must satisfy 0 < v_min <= v_max")]
    InvalidVoltageBounds(BusId),
    #[error("generator at bus {0}: bounds must satisfy min <= max")]
    InvalidGeneratorBounds(BusId),
    #[error("generator at bus {0}: quadratic cost coefficient must be nonnegative")]
    NonConvexCost(BusId),
    #[error("network has no buses")]
    EmptyNetwork,
    #[error("network has no generator")]
    NoGenerator,
    #[error("network is not connected over closed elements ({islanded} of {total} buses unreachable)")]
    Disconnected { islanded: usize, total: usize },
}

/// Dense ordinal key of a bus, `0..N-1` after finalization.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BusId(pub usize);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordinal key of an element within its network (insertion order).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ElementId(pub usize);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct Bus {
    pub id: BusId,
    /// Nominal voltage, informational only (all math is per-unit).
    pub base_kv: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Bus {
    pub fn new(id: BusId, base_kv: f64, v_min: f64, v_max: f64) -> Result<Self, NetModelError> {
        if !(base_kv.is_finite() && v_min.is_finite() && v_max.is_finite()) {
            return Err(NetModelError::NonFinite("bus"));
        }
        if !(v_min > 0.0 && v_min <= v_max) {
            return Err(NetModelError::InvalidVoltageBounds(id));
        }
        Ok(Self { id, base_kv, v_min, v_max })
    }
}

/// The constitutive matrices of one element: `Fv·v + Fi·i = us`.
///
/// Invariant (checked at construction): the rows of `[Fv | Fi]` have full
/// rank `p`, i.e. the element states exactly `p` independent constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementStamp {
    fv: DMatrix<Complex64>,
    fi: DMatrix<Complex64>,
    us: DVector<Complex64>,
}

impl ElementStamp {
    pub fn new(
        fv: DMatrix<Complex64>,
        fi: DMatrix<Complex64>,
        us: DVector<Complex64>,
    ) -> Result<Self, NetModelError> {
        let p = fv.nrows();
        if !(1..=3).contains(&p) {
            return Err(NetModelError::BadStampShape { arity: p });
        }
        if fv.ncols() != p || fi.nrows() != p || fi.ncols() != p || us.len() != p {
            return Err(NetModelError::BadStampShape { arity: p });
        }
        let finite = fv.iter().chain(fi.iter()).chain(us.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(NetModelError::NonFinite("stamp"));
        }
        let stamp = Self { fv, fi, us };
        let rank = stamp.row_rank();
        if rank < p {
            return Err(NetModelError::RankDeficientStamp { rank, arity: p });
        }
        Ok(stamp)
    }

    pub fn arity(&self) -> usize {
        self.fv.nrows()
    }

    pub fn fv(&self) -> &DMatrix<Complex64> {
        &self.fv
    }

    pub fn fi(&self) -> &DMatrix<Complex64> {
        &self.fi
    }

    pub fn us(&self) -> &DVector<Complex64> {
        &self.us
    }

    pub fn has_source(&self) -> bool {
        self.us.iter().any(|z| *z != Complex64::ZERO)
    }

    /// Rank of `[Fv | Fi]` at the relative tolerance [`RANK_TOL`].
    pub fn row_rank(&self) -> usize {
        let p = self.arity();
        let mut joined = DMatrix::<Complex64>::zeros(p, 2 * p);
        joined.view_mut((0, 0), (p, p)).copy_from(&self.fv);
        joined.view_mut((0, p), (p, p)).copy_from(&self.fi);
        rank_at_tol(&joined)
    }

    /// Rank of the `Fi` block alone; the element is eliminable into Ybus
    /// exactly when this equals the arity.
    pub fn fi_rank(&self) -> usize {
        rank_at_tol(&self.fi)
    }
}

pub(crate) fn rank_at_tol(m: &DMatrix<Complex64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= RANK_TOL * smax).count()
}

/// Stamp of a π-model transmission line with series `Z = R + jX` and total
/// line charging `Y = jB` split across the two ends:
/// `Fv = [[1, -(1+ZY/2)], [0, -Y(1+ZY/4)]]`, `Fi = [[0, Z], [1, 1+ZY/2]]`.
pub fn line_stamp(r: f64, x: f64, b: f64) -> Result<ElementStamp, NetModelError> {
    if !(r.is_finite() && x.is_finite() && b.is_finite()) {
        return Err(NetModelError::NonFinite("line R/X/B"));
    }
    let z = Complex64::new(r, x);
    let y = Complex64::new(0.0, b);
    let zy = z * y;
    let one = Complex64::ONE;
    let fv = DMatrix::from_row_slice(2, 2, &[
        one, -(one + zy / 2.0),
        Complex64::ZERO, -y * (one + zy / 4.0),
    ]);
    let fi = DMatrix::from_row_slice(2, 2, &[
        Complex64::ZERO, z,
        one, one + zy / 2.0,
    ]);
    ElementStamp::new(fv, fi, DVector::zeros(2))
}

/// Stamp of an ideal transformer with complex voltage gain `T` (port a is the
/// `T`-side): `v_a = T·v_b` and `i_a = -i_b / conj(T)` (power-invariant).
pub fn ideal_transformer_stamp(t: Complex64) -> Result<ElementStamp, NetModelError> {
    if !(t.re.is_finite() && t.im.is_finite()) {
        return Err(NetModelError::NonFinite("transformer gain"));
    }
    if t == Complex64::ZERO {
        return Err(NetModelError::ZeroGain);
    }
    let one = Complex64::ONE;
    let fv = DMatrix::from_row_slice(2, 2, &[
        one, -t,
        Complex64::ZERO, Complex64::ZERO,
    ]);
    let fi = DMatrix::from_row_slice(2, 2, &[
        Complex64::ZERO, Complex64::ZERO,
        one, one / t.conj(),
    ]);
    ElementStamp::new(fv, fi, DVector::zeros(2))
}

/// Stamp of a circuit breaker with switch position `gamma`:
/// closed (γ=1) forces `v_a = v_b` and `i_a + i_b = 0`; open (γ=0) forces
/// both port currents to zero and leaves the voltages free.
pub fn breaker_stamp(gamma: u8) -> Result<ElementStamp, NetModelError> {
    if gamma > 1 {
        return Err(NetModelError::NonBinaryGamma(gamma));
    }
    let g = Complex64::new(f64::from(gamma), 0.0);
    let one = Complex64::ONE;
    let fv = DMatrix::from_row_slice(2, 2, &[
        g, -g,
        Complex64::ZERO, Complex64::ZERO,
    ]);
    let fi = DMatrix::from_row_slice(2, 2, &[
        one - g, Complex64::ZERO,
        g, one,
    ]);
    ElementStamp::new(fv, fi, DVector::zeros(2))
}

/// Stamp of an ideal three-winding transformer with turn counts
/// `Na : Nb : Nc`: equal volts-per-turn on all windings plus the ampere-turn
/// balance `Na·i_a + Nb·i_b + Nc·i_c = 0`.
pub fn three_winding_stamp(na: f64, nb: f64, nc: f64) -> Result<ElementStamp, NetModelError> {
    if !(na.is_finite() && nb.is_finite() && nc.is_finite()) {
        return Err(NetModelError::NonFinite("three-winding turns"));
    }
    if na <= 0.0 || nb <= 0.0 || nc <= 0.0 {
        return Err(NetModelError::NonPositiveTurns);
    }
    let c = |v: f64| Complex64::new(v, 0.0);
    let z = Complex64::ZERO;
    let fv = DMatrix::from_row_slice(3, 3, &[
        c(1.0 / na), c(-1.0 / nb), z,
        z, c(1.0 / nb), c(-1.0 / nc),
        z, z, z,
    ]);
    let fi = DMatrix::from_row_slice(3, 3, &[
        z, z, z,
        z, z, z,
        c(na), c(nb), c(nc),
    ]);
    ElementStamp::new(fv, fi, DVector::zeros(3))
}

/// Stamp of a one-port bus shunt with admittance `y_sh`: `i = y_sh · v`.
pub fn shunt_stamp(y_sh: Complex64) -> Result<ElementStamp, NetModelError> {
    if !(y_sh.re.is_finite() && y_sh.im.is_finite()) {
        return Err(NetModelError::NonFinite("shunt admittance"));
    }
    let fv = DMatrix::from_row_slice(1, 1, &[-y_sh]);
    let fi = DMatrix::from_row_slice(1, 1, &[Complex64::ONE]);
    ElementStamp::new(fv, fi, DVector::zeros(1))
}

/// Affine ABCD form of a two-port: `[v_a; i_a] = M·[v_b; -i_b] + m`.
struct Abcd {
    m: Matrix2<Complex64>,
    offset: Vector2<Complex64>,
}

fn to_abcd(stamp: &ElementStamp) -> Result<Abcd, NetModelError> {
    if stamp.arity() != 2 {
        return Err(NetModelError::NotCascadable);
    }
    // Split the two constraint rows into the (v_a, i_a) block P and the
    // (v_b, i_b) block Q: P·[v_a; i_a] = us - Q·[v_b; i_b].
    let p = Matrix2::new(
        stamp.fv[(0, 0)], stamp.fi[(0, 0)],
        stamp.fv[(1, 0)], stamp.fi[(1, 0)],
    );
    let q = Matrix2::new(
        stamp.fv[(0, 1)], stamp.fi[(0, 1)],
        stamp.fv[(1, 1)], stamp.fi[(1, 1)],
    );
    let sv = DMatrix::from_iterator(2, 2, p.iter().cloned())
        .svd(false, false)
        .singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    if smax == 0.0 || smin < RANK_TOL * smax {
        return Err(NetModelError::NotCascadable);
    }
    let p_inv = p.try_inverse().ok_or(NetModelError::NotCascadable)?;
    let minus_pq = -p_inv * q;
    // Negating the second column rewrites the map onto [v_b; -i_b].
    let m = Matrix2::new(
        minus_pq[(0, 0)], -minus_pq[(0, 1)],
        minus_pq[(1, 0)], -minus_pq[(1, 1)],
    );
    let us = Vector2::new(stamp.us[0], stamp.us[1]);
    Ok(Abcd { m, offset: p_inv * us })
}

fn stamp_from_abcd(abcd: &Abcd) -> Result<ElementStamp, NetModelError> {
    let (a, b) = (abcd.m[(0, 0)], abcd.m[(0, 1)]);
    let (c, d) = (abcd.m[(1, 0)], abcd.m[(1, 1)]);
    let one = Complex64::ONE;
    let z = Complex64::ZERO;
    let fv = DMatrix::from_row_slice(2, 2, &[one, -a, z, -c]);
    let fi = DMatrix::from_row_slice(2, 2, &[z, b, one, d]);
    let us = DVector::from_column_slice(&[abcd.offset[0], abcd.offset[1]]);
    ElementStamp::new(fv, fi, us)
}

/// Chains two two-ports, port b of `first` feeding port a of `second`;
/// the result maps port a of `first` to port b of `second`. This is the
/// transmission-matrix product, so e.g. a tap transformer is
/// `cascade(ideal_transformer_stamp(T), line_stamp(R, X, B))`.
pub fn cascade(
    first: &ElementStamp,
    second: &ElementStamp,
) -> Result<ElementStamp, NetModelError> {
    let f = to_abcd(first)?;
    let s = to_abcd(second)?;
    let combined = Abcd {
        m: f.m * s.m,
        offset: f.m * s.offset + f.offset,
    };
    stamp_from_abcd(&combined)
}

/// Physical parameters that generated an element's stamp. `Custom` covers
/// raw-stamp elements (e.g. fixed-voltage sources in textbook circuits) that
/// have no named parameter set; parsers never produce it.
#[derive(Clone, Debug, PartialEq)]
pub enum ElementParams {
    Line { r: f64, x: f64, b: f64 },
    /// `t` is the complex voltage gain of the a-side winding.
    IdealTransformer { t: Complex64 },
    /// Ideal transformer in cascade with a line: MATPOWER-style branch with
    /// off-nominal tap and/or phase shift on the a ("from") side.
    TapTransformer { t: Complex64, r: f64, x: f64, b: f64 },
    Breaker { switch_state: SwitchState },
    ThreeWinding { na: f64, nb: f64, nc: f64 },
    Shunt { y_sh: Complex64 },
    Custom,
}

/// Breaker switch position; the stamp parameter γ is 1 when closed.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SwitchState {
    Open,
    Closed,
}

impl SwitchState {
    pub fn gamma(self) -> u8 {
        match self {
            SwitchState::Open => 0,
            SwitchState::Closed => 1,
        }
    }

    pub fn from_gamma(gamma: u8) -> Result<Self, NetModelError> {
        match gamma {
            0 => Ok(SwitchState::Open),
            1 => Ok(SwitchState::Closed),
            g => Err(NetModelError::NonBinaryGamma(g)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ElementKind {
    Line,
    IdealTransformer,
    TapTransformer,
    Breaker,
    ThreeWinding,
    Shunt,
    Custom,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ElementKind::Line => "line",
            ElementKind::IdealTransformer => "ideal_xfmr",
            ElementKind::TapTransformer => "tap_xfmr",
            ElementKind::Breaker => "breaker",
            ElementKind::ThreeWinding => "three_winding",
            ElementKind::Shunt => "shunt",
            ElementKind::Custom => "custom",
        };
        f.write_str(name)
    }
}

/// One network element: its generating parameters, the stamp, the ordered
/// port-to-bus attachment (ports a, b, c by position), and an optional
/// per-port current rating used by OPF line limits.
#[derive(Clone, Debug)]
pub struct NetworkElement {
    params: ElementParams,
    stamp: ElementStamp,
    attachment: Vec<BusId>,
    i_max: Option<f64>,
}

impl NetworkElement {
    /// Builds the element whose stamp is derived from `params`.
    pub fn from_params(
        params: ElementParams,
        attachment: Vec<BusId>,
    ) -> Result<Self, NetModelError> {
        let stamp = match &params {
            ElementParams::Line { r, x, b } => line_stamp(*r, *x, *b)?,
            ElementParams::IdealTransformer { t } => ideal_transformer_stamp(*t)?,
            ElementParams::TapTransformer { t, r, x, b } => {
                cascade(&ideal_transformer_stamp(*t)?, &line_stamp(*r, *x, *b)?)?
            }
            ElementParams::Breaker { switch_state } => breaker_stamp(switch_state.gamma())?,
            ElementParams::ThreeWinding { na, nb, nc } => three_winding_stamp(*na, *nb, *nc)?,
            ElementParams::Shunt { y_sh } => shunt_stamp(*y_sh)?,
            ElementParams::Custom => return Err(NetModelError::BadStampShape { arity: 0 }),
        };
        Self::with_stamp(params, stamp, attachment)
    }

    /// Builds an element from a raw stamp (kind `Custom`).
    pub fn custom(stamp: ElementStamp, attachment: Vec<BusId>) -> Result<Self, NetModelError> {
        Self::with_stamp(ElementParams::Custom, stamp, attachment)
    }

    fn with_stamp(
        params: ElementParams,
        stamp: ElementStamp,
        attachment: Vec<BusId>,
    ) -> Result<Self, NetModelError> {
        if attachment.len() != stamp.arity() {
            return Err(NetModelError::AttachmentMismatch {
                expected: stamp.arity(),
                got: attachment.len(),
            });
        }
        Ok(Self { params, stamp, attachment, i_max: None })
    }

    /// Attaches a per-port current-magnitude rating (per-unit).
    pub fn with_rating(mut self, i_max: f64) -> Self {
        self.i_max = Some(i_max);
        self
    }

    pub fn kind(&self) -> ElementKind {
        match self.params {
            ElementParams::Line { .. } => ElementKind::Line,
            ElementParams::IdealTransformer { .. } => ElementKind::IdealTransformer,
            ElementParams::TapTransformer { .. } => ElementKind::TapTransformer,
            ElementParams::Breaker { .. } => ElementKind::Breaker,
            ElementParams::ThreeWinding { .. } => ElementKind::ThreeWinding,
            ElementParams::Shunt { .. } => ElementKind::Shunt,
            ElementParams::Custom => ElementKind::Custom,
        }
    }

    pub fn params(&self) -> &ElementParams {
        &self.params
    }

    pub fn stamp(&self) -> &ElementStamp {
        &self.stamp
    }

    pub fn arity(&self) -> usize {
        self.stamp.arity()
    }

    /// Ports in order a, b(, c) with their bus attachments.
    pub fn attachment(&self) -> &[BusId] {
        &self.attachment
    }

    pub fn i_max(&self) -> Option<f64> {
        self.i_max
    }

    /// True when this element electrically couples its buses (an open breaker
    /// does not); used by the connectivity check.
    pub fn is_coupling(&self) -> bool {
        !matches!(
            self.params,
            ElementParams::Breaker { switch_state: SwitchState::Open }
        )
    }
}

/// Quadratic generator cost `alpha·P² + beta·P + gamma_cost` with `P` in MW
/// (conversion from per-unit happens inside cost evaluation). `gamma_cost`
/// is named to avoid the clash with the breaker switch parameter γ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostCurve {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_cost: f64,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostCurve,
}

impl Generator {
    pub fn new(
        bus: BusId,
        p_min: f64,
        p_max: f64,
        q_min: f64,
        q_max: f64,
        cost: CostCurve,
    ) -> Result<Self, NetModelError> {
        let vals = [p_min, p_max, q_min, q_max, cost.alpha, cost.beta, cost.gamma_cost];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(NetModelError::NonFinite("generator"));
        }
        if p_min > p_max || q_min > q_max {
            return Err(NetModelError::InvalidGeneratorBounds(bus));
        }
        if cost.alpha < 0.0 {
            return Err(NetModelError::NonConvexCost(bus));
        }
        Ok(Self { bus, p_min, p_max, q_min, q_max, cost })
    }
}

#[derive(Clone, Debug)]
pub struct Load {
    pub bus: BusId,
    /// Complex power demand `P_d + jQ_d`, per-unit.
    pub s_d: Complex64,
}

/// A finalized power network. Immutable after construction; shareable
/// read-only across threads.
#[derive(Clone, Debug)]
pub struct Network {
    buses: Vec<Bus>,
    elements: Vec<NetworkElement>,
    generators: Vec<Generator>,
    loads: Vec<Load>,
    base_mva: f64,
}

impl Network {
    pub fn builder(base_mva: f64) -> NetworkBuilder {
        NetworkBuilder {
            base_mva,
            buses: Vec::new(),
            elements: Vec::new(),
            generators: Vec::new(),
            loads: Vec::new(),
        }
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn elements(&self) -> &[NetworkElement] {
        &self.elements
    }

    pub fn element(&self, id: ElementId) -> Option<&NetworkElement> {
        self.elements.get(id.0)
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Total port count P = Σ element arity.
    pub fn port_count(&self) -> usize {
        self.elements.iter().map(NetworkElement::arity).sum()
    }

    /// Net fixed complex-power draw per bus from loads (positive = demand).
    pub fn demand_per_bus(&self) -> Vec<Complex64> {
        let mut s = vec![Complex64::ZERO; self.n_buses()];
        for load in &self.loads {
            s[load.bus.0] += load.s_d;
        }
        s
    }

    /// On-demand solvability checks: at least one generator and connectivity
    /// over closed (coupling) elements.
    pub fn validate(&self) -> Result<(), NetModelError> {
        if self.generators.is_empty() {
            return Err(NetModelError::NoGenerator);
        }
        self.check_connected()
    }

    /// Breadth-first reachability over elements that electrically couple
    /// their buses; open breakers do not conduct.
    pub fn check_connected(&self) -> Result<(), NetModelError> {
        let n = self.n_buses();
        if n == 0 {
            return Err(NetModelError::EmptyNetwork);
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in &self.elements {
            if !el.is_coupling() {
                continue;
            }
            let att = el.attachment();
            for i in 0..att.len() {
                for j in (i + 1)..att.len() {
                    adjacency[att[i].0].push(att[j].0);
                    adjacency[att[j].0].push(att[i].0);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(b) = queue.pop_front() {
            for &next in &adjacency[b] {
                if !seen[next] {
                    seen[next] = true;
                    reached += 1;
                    queue.push_back(next);
                }
            }
        }
        if reached != n {
            return Err(NetModelError::Disconnected { islanded: n - reached, total: n });
        }
        Ok(())
    }
}

pub struct NetworkBuilder {
    base_mva: f64,
    buses: Vec<Bus>,
    elements: Vec<NetworkElement>,
    generators: Vec<Generator>,
    loads: Vec<Load>,
}

impl NetworkBuilder {
    pub fn bus(mut self, bus: Bus) -> Self {
        self.buses.push(bus);
        self
    }

    /// Adds a bus with default 1 kV base and wide voltage bounds; test and
    /// example fixtures mostly do not care about bounds.
    pub fn simple_bus(self, id: usize) -> Self {
        self.bus(Bus::new(BusId(id), 1.0, 0.5, 1.5).expect("valid bus"))
    }

    pub fn element(mut self, element: NetworkElement) -> Self {
        self.elements.push(element);
        self
    }

    pub fn generator(mut self, generator: Generator) -> Self {
        self.generators.push(generator);
        self
    }

    pub fn load(mut self, bus: usize, s_d: Complex64) -> Self {
        self.loads.push(Load { bus: BusId(bus), s_d });
        self
    }

    pub fn finalize(mut self) -> Result<Network, NetModelError> {
        if self.buses.is_empty() {
            return Err(NetModelError::EmptyNetwork);
        }
        self.buses.sort_by_key(|b| b.id);
        for (want, bus) in self.buses.iter().enumerate() {
            if bus.id.0 != want {
                return Err(if self.buses.iter().filter(|b| b.id == bus.id).count() > 1 {
                    NetModelError::DuplicateBusId(bus.id)
                } else {
                    NetModelError::NonDenseBusIds
                });
            }
        }
        let n = self.buses.len();
        let known = |b: BusId| b.0 < n;
        for el in &self.elements {
            if let Some(&bad) = el.attachment().iter().find(|b| !known(**b)) {
                return Err(NetModelError::UnknownBus(bad));
            }
        }
        if let Some(g) = self.generators.iter().find(|g| !known(g.bus)) {
            return Err(NetModelError::UnknownBus(g.bus));
        }
        if let Some(l) = self.loads.iter().find(|l| !known(l.bus)) {
            return Err(NetModelError::UnknownBus(l.bus));
        }
        if !self.base_mva.is_finite() || self.base_mva <= 0.0 {
            return Err(NetModelError::NonFinite("base MVA"));
        }
        Ok(Network {
            buses: self.buses,
            elements: self.elements,
            generators: self.generators,
            loads: self.loads,
            base_mva: self.base_mva,
        })
    }
}
