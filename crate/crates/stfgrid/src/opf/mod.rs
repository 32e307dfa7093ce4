//! AC optimal power flow directly on the sparse tableau.
//!
//! The decision vector keeps the full tableau state — bus voltages `V`, port
//! voltages `v`, port currents `i`, and bus injection currents `I` — in
//! rectangular coordinates, plus a `(P_g, Q_g)` pair per generator. All
//! network physics stays linear (the tableau rows themselves); the only
//! nonlinear equalities are the per-bus power balances `S_g − S_d = V∘I*`,
//! and the only nonlinear inequalities are squared voltage- and
//! current-magnitude bounds. Generator cost is quadratic in MW.
//!
//! [`build_opf`] assembles the NLP, [`solve_opf`] runs the interior-point
//! method from [`nlp`], and [`check_feasibility`] re-evaluates every
//! constraint family from raw network data as an independent audit.

pub mod nlp;
pub mod oracle;

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::netmodel::{BusId, Generator, NetModelError, Network};
use crate::sparse::{rt, CTriplet, RTriplet};
use crate::tableau::{self, IncidenceMatrix, TableauError};
use nlp::{IpmOptions, KktError, NlpError, NlpModel};

/// Solver and problem options. All fields have defaults so a config file may
/// set any subset.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpfOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub barrier_init: f64,
    pub print_level: u8,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, barrier_init: 1.0, print_level: 0 }
    }
}

impl OpfOptions {
    pub fn from_toml_str(text: &str) -> Result<Self, OpfError> {
        toml::from_str(text).map_err(|e| OpfError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OpfError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| OpfError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    fn ipm(&self) -> IpmOptions {
        IpmOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            barrier_init: self.barrier_init,
            print_level: self.print_level,
            ..IpmOptions::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OpfError {
    #[error("element {element} has an unusable current rating ({i_max})")]
    MissingLimits { element: usize, i_max: f64 },
    #[error("network is islanded: {islanded} of {total} buses unreachable")]
    IslandedNetwork { islanded: usize, total: usize },
    #[error("network has no dispatchable generator")]
    NoGenerator,
    #[error("invalid network: {0}")]
    Network(NetModelError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Reduction(#[from] crate::reduction::ReductionError),
    #[error("bad solver options: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] NlpError),
}

impl From<NetModelError> for OpfError {
    fn from(err: NetModelError) -> Self {
        match err {
            NetModelError::Disconnected { islanded, total } => {
                OpfError::IslandedNetwork { islanded, total }
            }
            NetModelError::NoGenerator => OpfError::NoGenerator,
            other => OpfError::Network(other),
        }
    }
}

/// `Σ_j α_j (base·P_j)² + β_j (base·P_j) + γ_j` in $/h, with `p_g` per unit.
pub fn cost_eval(generators: &[Generator], base_mva: f64, p_g: &[f64]) -> f64 {
    assert_eq!(generators.len(), p_g.len(), "one dispatch entry per generator");
    generators
        .iter()
        .zip(p_g)
        .map(|(g, &p)| {
            let mw = base_mva * p;
            g.cost.alpha * mw * mw + g.cost.beta * mw + g.cost.gamma_cost
        })
        .sum()
}

/// The STF optimal power flow NLP.
///
/// Variable order: `[Re ζ | Im ζ | P_g | Q_g]` with `ζ = (V, v, i, I)`.
/// Equality order: realified tableau rows, then per-bus (P, Q) balances,
/// then the reference-angle pin. Inequality order: P_g hi/lo, Q_g hi/lo,
/// |V|² hi/lo, port current limits.
pub struct OpfProblem {
    network: Network,
    incidence: IncidenceMatrix,
    reference: BusId,
    /// Complex linear tableau rows over ζ and their right-hand side.
    linear: Vec<CTriplet>,
    linear_rhs: Vec<Complex64>,
    /// The same rows realified once; they are constant in z.
    linear_real: Vec<RTriplet>,
    demand: Vec<Complex64>,
    gens_at_bus: Vec<Vec<usize>>,
    rated_ports: Vec<(usize, f64)>,
    z0: Vec<f64>,
}

impl OpfProblem {
    fn n_buses(&self) -> usize {
        self.network.n_buses()
    }

    fn n_ports(&self) -> usize {
        self.incidence.n_ports()
    }

    fn n_gens(&self) -> usize {
        self.network.generators().len()
    }

    /// Complex state length `2N + 2P`; real voltage/current block is twice this.
    fn complex_len(&self) -> usize {
        2 * self.n_buses() + 2 * self.n_ports()
    }

    fn col_v_re(&self, bus: usize) -> usize {
        bus
    }

    fn col_v_im(&self, bus: usize) -> usize {
        self.complex_len() + bus
    }

    fn col_i_inj_re(&self, bus: usize) -> usize {
        self.n_buses() + 2 * self.n_ports() + bus
    }

    fn col_i_inj_im(&self, bus: usize) -> usize {
        self.complex_len() + self.col_i_inj_re(bus)
    }

    fn col_i_port_re(&self, port: usize) -> usize {
        self.n_buses() + self.n_ports() + port
    }

    fn col_i_port_im(&self, port: usize) -> usize {
        self.complex_len() + self.col_i_port_re(port)
    }

    fn col_pg(&self, gen: usize) -> usize {
        2 * self.complex_len() + gen
    }

    fn col_qg(&self, gen: usize) -> usize {
        2 * self.complex_len() + self.n_gens() + gen
    }

    /// Row base of the per-bus power-balance block.
    fn balance_row(&self, bus: usize) -> usize {
        2 * (self.n_buses() + 2 * self.n_ports()) + 2 * bus
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn reference(&self) -> BusId {
        self.reference
    }

    /// Deduplicated `(row, col)` sparsity of the stacked constraint Jacobian
    /// (equalities first, then inequalities).
    pub fn jacobian_pattern(&self) -> Vec<(usize, usize)> {
        let z = self.initial_point();
        let mut cells: Vec<(usize, usize)> = self
            .eq_jacobian(&z)
            .iter()
            .map(|t| (t.row, t.col))
            .chain(self.ineq_jacobian(&z).iter().map(|t| (t.row + self.n_eq(), t.col)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Deduplicated sparsity of the Lagrangian Hessian.
    pub fn hessian_pattern(&self) -> Vec<(usize, usize)> {
        let z = self.initial_point();
        let ones_eq = vec![1.0; self.n_eq()];
        let ones_in = vec![1.0; self.n_ineq()];
        let mut cells: Vec<(usize, usize)> = self
            .lagrangian_hessian(&z, &ones_eq, &ones_in)
            .iter()
            .map(|t| (t.row, t.col))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Splits a raw decision vector into the structured solution pieces.
    fn decode(&self, z: &[f64]) -> DecodedState {
        let n = self.n_buses();
        let p = self.n_ports();
        let ng = self.n_gens();
        let l = self.complex_len();
        let cx = |c: usize| Complex64::new(z[c], z[l + c]);
        DecodedState {
            v_bus: (0..n).map(cx).collect(),
            v_port: (0..p).map(|k| cx(n + k)).collect(),
            i_port: (0..p).map(|k| cx(n + p + k)).collect(),
            i_inj: (0..n).map(|j| cx(n + 2 * p + j)).collect(),
            pg: (0..ng).map(|g| z[self.col_pg(g)]).collect(),
            qg: (0..ng).map(|g| z[self.col_qg(g)]).collect(),
        }
    }
}

struct DecodedState {
    v_bus: Vec<Complex64>,
    v_port: Vec<Complex64>,
    i_port: Vec<Complex64>,
    i_inj: Vec<Complex64>,
    pg: Vec<f64>,
    qg: Vec<f64>,
}

/// Assembles the STF OPF problem. `reference` is the bus whose voltage angle
/// is pinned to zero (its imaginary part is fixed).
pub fn build_opf(
    network: &Network,
    reference: BusId,
    _options: &OpfOptions,
) -> Result<OpfProblem, OpfError> {
    network.validate()?;
    if reference.0 >= network.n_buses() {
        return Err(OpfError::Network(NetModelError::UnknownBus(reference)));
    }
    let incidence = tableau::build_incidence(network)?;
    let n = incidence.n_buses();
    let p = incidence.n_ports();

    let mut rated_ports = Vec::new();
    for (k, el) in network.elements().iter().enumerate() {
        if let Some(i_max) = el.i_max() {
            if !i_max.is_finite() || i_max <= 0.0 {
                return Err(OpfError::MissingLimits { element: k, i_max });
            }
            for port in 0..el.arity() {
                rated_ports.push((incidence.column(crate::netmodel::ElementId(k), port), i_max));
            }
        }
    }

    // Complex linear rows over ζ = (V, v, i, I): KCL `A·i − I = 0`,
    // KVL `v − Aᵀ·V = 0`, element `Fv·v + Fi·i = us`.
    let col_v = |j: usize| j;
    let col_pv = |k: usize| n + k;
    let col_pi = |k: usize| n + p + k;
    let col_inj = |j: usize| n + 2 * p + j;
    let mut linear = Vec::new();
    let mut linear_rhs = vec![Complex64::ZERO; n + 2 * p];
    for (port, bus) in incidence.port_bus().iter().enumerate() {
        linear.push(crate::sparse::ct(bus.0, col_pi(port), Complex64::ONE));
        linear.push(crate::sparse::ct(n + port, col_pv(port), Complex64::ONE));
        linear.push(crate::sparse::ct(n + port, col_v(bus.0), -Complex64::ONE));
    }
    for j in 0..n {
        linear.push(crate::sparse::ct(j, col_inj(j), -Complex64::ONE));
    }
    for (k, el) in network.elements().iter().enumerate() {
        let offset = incidence.element_offsets()[k];
        let stamp = el.stamp();
        let arity = el.arity();
        for r in 0..arity {
            let row = n + p + offset + r;
            for c in 0..arity {
                let fv = stamp.fv()[(r, c)];
                if fv != Complex64::ZERO {
                    linear.push(crate::sparse::ct(row, col_pv(offset + c), fv));
                }
                let fi = stamp.fi()[(r, c)];
                if fi != Complex64::ZERO {
                    linear.push(crate::sparse::ct(row, col_pi(offset + c), fi));
                }
            }
            linear_rhs[n + p + offset + r] = stamp.us()[r];
        }
    }
    let complex_len = 2 * n + 2 * p;
    let mut linear_real = Vec::new();
    for t in &linear {
        crate::sparse::realify_entry(&mut linear_real, n + 2 * p, complex_len, t.row, t.col, t.val);
    }

    let demand = network.demand_per_bus();
    let mut gens_at_bus: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (g, gen) in network.generators().iter().enumerate() {
        gens_at_bus[gen.bus.0].push(g);
    }

    let z0 = initial_state(network, &incidence);

    Ok(OpfProblem {
        network: network.clone(),
        incidence,
        reference,
        linear,
        linear_rhs,
        linear_real,
        demand,
        gens_at_bus,
        rated_ports,
        z0,
    })
}

/// Flat-start decision vector: `V = 1∠0`, dispatch at box midpoints, and
/// `(v, i)` from one linear tableau solve at the flat injections — the bus
/// currents that sustain the flat profile, found per element from its stamp
/// (minimum-norm where the current block is singular). The solved state is
/// consistent with every linear row, so only the power balances start
/// violated. The injection variables are seeded as `I = A·i`.
fn initial_state(network: &Network, incidence: &IncidenceMatrix) -> Vec<f64> {
    let n = incidence.n_buses();
    let p = incidence.n_ports();
    let ng = network.generators().len();
    let l = 2 * n + 2 * p;

    let flat_v = vec![Complex64::ONE; n];
    let v_flat_ports = incidence.gather(&flat_v);
    let mut i_flat = vec![Complex64::ZERO; p];
    for (k, el) in network.elements().iter().enumerate() {
        let offset = incidence.element_offsets()[k];
        let stamp = el.stamp();
        let arity = el.arity();
        let v_loc = nalgebra::DVector::from_fn(arity, |r, _| v_flat_ports[offset + r]);
        let rhs = stamp.us() - stamp.fv() * v_loc;
        let sol = stamp
            .fi()
            .clone()
            .svd(true, true)
            .solve(&rhs, crate::netmodel::RANK_TOL)
            .unwrap_or_else(|_| nalgebra::DVector::zeros(arity));
        for (r, val) in sol.iter().enumerate() {
            i_flat[offset + r] = *val;
        }
    }
    let injections = incidence.scatter(&i_flat);

    let (v_port, i_port) = match tableau::assemble_tableau(network, &injections)
        .and_then(|sys| tableau::solve_linear_tableau(&sys))
    {
        Ok(x) => (x[n..n + p].to_vec(), x[n + p..n + 2 * p].to_vec()),
        Err(_) => (v_flat_ports, i_flat),
    };
    let i_inj = incidence.scatter(&i_port);

    let mut z = vec![0.0; 2 * l + 2 * ng];
    for j in 0..n {
        z[j] = 1.0;
        z[n + 2 * p + j] = i_inj[j].re;
        z[l + n + 2 * p + j] = i_inj[j].im;
    }
    for k in 0..p {
        z[n + k] = v_port[k].re;
        z[l + n + k] = v_port[k].im;
        z[n + p + k] = i_port[k].re;
        z[l + n + p + k] = i_port[k].im;
    }
    for (g, gen) in network.generators().iter().enumerate() {
        z[2 * l + g] = 0.5 * (gen.p_min + gen.p_max);
        z[2 * l + ng + g] = 0.5 * (gen.q_min + gen.q_max);
    }
    z
}

impl NlpModel for OpfProblem {
    fn n_vars(&self) -> usize {
        2 * self.complex_len() + 2 * self.n_gens()
    }

    fn n_eq(&self) -> usize {
        2 * (self.n_buses() + 2 * self.n_ports()) + 2 * self.n_buses() + 1
    }

    fn n_ineq(&self) -> usize {
        4 * self.n_gens() + 2 * self.n_buses() + self.rated_ports.len()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.z0.clone()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let base = self.network.base_mva();
        self.network
            .generators()
            .iter()
            .enumerate()
            .map(|(g, gen)| {
                let mw = base * z[self.col_pg(g)];
                gen.cost.alpha * mw * mw + gen.cost.beta * mw + gen.cost.gamma_cost
            })
            .sum()
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let base = self.network.base_mva();
        let mut out = vec![0.0; self.n_vars()];
        for (g, gen) in self.network.generators().iter().enumerate() {
            let c = self.col_pg(g);
            out[c] = 2.0 * gen.cost.alpha * base * base * z[c] + gen.cost.beta * base;
        }
        out
    }

    fn eq_constraints(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n_buses();
        let r_cx = n + 2 * self.n_ports();
        let l = self.complex_len();
        let mut g = vec![0.0; self.n_eq()];
        for t in &self.linear {
            let x = Complex64::new(z[t.col], z[l + t.col]);
            let term = t.val * x;
            g[t.row] += term.re;
            g[r_cx + t.row] += term.im;
        }
        for (row, rhs) in self.linear_rhs.iter().enumerate() {
            g[row] -= rhs.re;
            g[r_cx + row] -= rhs.im;
        }
        for j in 0..n {
            let (e, f) = (z[self.col_v_re(j)], z[self.col_v_im(j)]);
            let (c, d) = (z[self.col_i_inj_re(j)], z[self.col_i_inj_im(j)]);
            let pg: f64 = self.gens_at_bus[j].iter().map(|&gi| z[self.col_pg(gi)]).sum();
            let qg: f64 = self.gens_at_bus[j].iter().map(|&gi| z[self.col_qg(gi)]).sum();
            g[self.balance_row(j)] = pg - self.demand[j].re - (e * c + f * d);
            g[self.balance_row(j) + 1] = qg - self.demand[j].im - (f * c - e * d);
        }
        g[self.n_eq() - 1] = z[self.col_v_im(self.reference.0)];
        g
    }

    fn ineq_constraints(&self, z: &[f64]) -> Vec<f64> {
        let ng = self.n_gens();
        let n = self.n_buses();
        let mut h = Vec::with_capacity(self.n_ineq());
        let gens = self.network.generators();
        h.extend(gens.iter().enumerate().map(|(g, gen)| z[self.col_pg(g)] - gen.p_max));
        h.extend(gens.iter().enumerate().map(|(g, gen)| gen.p_min - z[self.col_pg(g)]));
        h.extend(gens.iter().enumerate().map(|(g, gen)| z[self.col_qg(g)] - gen.q_max));
        h.extend(gens.iter().enumerate().map(|(g, gen)| gen.q_min - z[self.col_qg(g)]));
        debug_assert_eq!(h.len(), 4 * ng);
        for j in 0..n {
            let m2 = z[self.col_v_re(j)].powi(2) + z[self.col_v_im(j)].powi(2);
            h.push(m2 - self.network.buses()[j].v_max.powi(2));
        }
        for j in 0..n {
            let m2 = z[self.col_v_re(j)].powi(2) + z[self.col_v_im(j)].powi(2);
            h.push(self.network.buses()[j].v_min.powi(2) - m2);
        }
        for &(port, i_max) in &self.rated_ports {
            let m2 = z[self.col_i_port_re(port)].powi(2) + z[self.col_i_port_im(port)].powi(2);
            h.push(m2 - i_max * i_max);
        }
        h
    }

    fn eq_jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
        let n = self.n_buses();
        let mut out = self.linear_real.clone();
        for j in 0..n {
            let (e, f) = (z[self.col_v_re(j)], z[self.col_v_im(j)]);
            let (c, d) = (z[self.col_i_inj_re(j)], z[self.col_i_inj_im(j)]);
            let pr = self.balance_row(j);
            out.push(rt(pr, self.col_v_re(j), -c));
            out.push(rt(pr, self.col_v_im(j), -d));
            out.push(rt(pr, self.col_i_inj_re(j), -e));
            out.push(rt(pr, self.col_i_inj_im(j), -f));
            out.push(rt(pr + 1, self.col_v_re(j), d));
            out.push(rt(pr + 1, self.col_v_im(j), -c));
            out.push(rt(pr + 1, self.col_i_inj_re(j), -f));
            out.push(rt(pr + 1, self.col_i_inj_im(j), e));
            for &gi in &self.gens_at_bus[j] {
                out.push(rt(pr, self.col_pg(gi), 1.0));
                out.push(rt(pr + 1, self.col_qg(gi), 1.0));
            }
        }
        out.push(rt(self.n_eq() - 1, self.col_v_im(self.reference.0), 1.0));
        out
    }

    fn ineq_jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
        let ng = self.n_gens();
        let n = self.n_buses();
        let mut out = Vec::new();
        for g in 0..ng {
            out.push(rt(g, self.col_pg(g), 1.0));
            out.push(rt(ng + g, self.col_pg(g), -1.0));
            out.push(rt(2 * ng + g, self.col_qg(g), 1.0));
            out.push(rt(3 * ng + g, self.col_qg(g), -1.0));
        }
        for j in 0..n {
            let (e, f) = (z[self.col_v_re(j)], z[self.col_v_im(j)]);
            let hi = 4 * ng + j;
            let lo = 4 * ng + n + j;
            out.push(rt(hi, self.col_v_re(j), 2.0 * e));
            out.push(rt(hi, self.col_v_im(j), 2.0 * f));
            out.push(rt(lo, self.col_v_re(j), -2.0 * e));
            out.push(rt(lo, self.col_v_im(j), -2.0 * f));
        }
        for (t, &(port, _)) in self.rated_ports.iter().enumerate() {
            let row = 4 * ng + 2 * n + t;
            out.push(rt(row, self.col_i_port_re(port), 2.0 * z[self.col_i_port_re(port)]));
            out.push(rt(row, self.col_i_port_im(port), 2.0 * z[self.col_i_port_im(port)]));
        }
        out
    }

    fn lagrangian_hessian(&self, _z: &[f64], lam_eq: &[f64], lam_ineq: &[f64]) -> Vec<RTriplet> {
        let base = self.network.base_mva();
        let ng = self.n_gens();
        let n = self.n_buses();
        let mut out = Vec::new();
        for (g, gen) in self.network.generators().iter().enumerate() {
            let c = self.col_pg(g);
            out.push(rt(c, c, 2.0 * gen.cost.alpha * base * base));
        }
        // Power-balance cross terms: ∂²(e·c + f·d) and ∂²(f·c − e·d).
        for j in 0..n {
            let lp = lam_eq[self.balance_row(j)];
            let lq = lam_eq[self.balance_row(j) + 1];
            let (e, f) = (self.col_v_re(j), self.col_v_im(j));
            let (c, d) = (self.col_i_inj_re(j), self.col_i_inj_im(j));
            if lp != 0.0 {
                out.push(rt(e, c, -lp));
                out.push(rt(c, e, -lp));
                out.push(rt(f, d, -lp));
                out.push(rt(d, f, -lp));
            }
            if lq != 0.0 {
                out.push(rt(f, c, -lq));
                out.push(rt(c, f, -lq));
                out.push(rt(e, d, lq));
                out.push(rt(d, e, lq));
            }
        }
        for j in 0..n {
            let w = 2.0 * (lam_ineq[4 * ng + j] - lam_ineq[4 * ng + n + j]);
            if w != 0.0 {
                out.push(rt(self.col_v_re(j), self.col_v_re(j), w));
                out.push(rt(self.col_v_im(j), self.col_v_im(j), w));
            }
        }
        for (t, &(port, _)) in self.rated_ports.iter().enumerate() {
            let w = 2.0 * lam_ineq[4 * ng + 2 * n + t];
            if w != 0.0 {
                out.push(rt(self.col_i_port_re(port), self.col_i_port_re(port), w));
                out.push(rt(self.col_i_port_im(port), self.col_i_port_im(port), w));
            }
        }
        out
    }
}

/// A converged OPF operating point with its duals.
#[derive(Clone, Debug)]
pub struct OpfSolution {
    pub v_bus: Vec<Complex64>,
    pub v_port: Vec<Complex64>,
    pub i_port: Vec<Complex64>,
    pub i_inj: Vec<Complex64>,
    /// Per-generator real dispatch, pu.
    pub pg: Vec<f64>,
    /// Per-generator reactive dispatch, pu.
    pub qg: Vec<f64>,
    /// Objective in $/h.
    pub objective: f64,
    pub lam_eq: Vec<f64>,
    pub lam_ineq: Vec<f64>,
    pub iterations: usize,
    pub kkt: KktError,
}

impl OpfSolution {
    /// Equality multipliers of the per-bus real-power balances, $/MWh.
    /// These are the locational marginal prices of the dispatch.
    pub fn lmp(&self, problem: &OpfProblem) -> Vec<f64> {
        let base = problem.network.base_mva();
        (0..problem.n_buses())
            .map(|j| -self.lam_eq[problem.balance_row(j)] / base)
            .collect()
    }

    /// Per-bus (real, reactive) balance multipliers in $/MWh and $/MVArh.
    pub fn bus_prices(&self, problem: &OpfProblem) -> Vec<(f64, f64)> {
        let base = problem.network.base_mva();
        (0..problem.n_buses())
            .map(|j| {
                let row = problem.balance_row(j);
                (-self.lam_eq[row] / base, -self.lam_eq[row + 1] / base)
            })
            .collect()
    }
}

pub fn solve_opf(problem: &OpfProblem, options: &OpfOptions) -> Result<OpfSolution, OpfError> {
    let nlp = nlp::solve_nlp(problem, &options.ipm())?;
    let state = problem.decode(&nlp.z);
    if options.print_level >= 1 {
        log::info!(
            "opf converged in {} iterations, objective {:.2} $/h",
            nlp.iterations,
            nlp.objective
        );
    }
    Ok(OpfSolution {
        v_bus: state.v_bus,
        v_port: state.v_port,
        i_port: state.i_port,
        i_inj: state.i_inj,
        pg: state.pg,
        qg: state.qg,
        objective: nlp.objective,
        lam_eq: nlp.lam_eq,
        lam_ineq: nlp.lam_ineq,
        iterations: nlp.iterations,
        kkt: nlp.kkt,
    })
}

/// Constraint families of the OPF, mirroring the problem's block structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintFamily {
    Kcl,
    Kvl,
    Element,
    PowerBalance,
    GeneratorLimit,
    VoltageLimit,
    CurrentLimit,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ConstraintFamily::Kcl => "KCL",
            ConstraintFamily::Kvl => "KVL",
            ConstraintFamily::Element => "element",
            ConstraintFamily::PowerBalance => "power balance",
            ConstraintFamily::GeneratorLimit => "generator limit",
            ConstraintFamily::VoltageLimit => "voltage limit",
            ConstraintFamily::CurrentLimit => "current limit",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FamilyViolation {
    pub family: ConstraintFamily,
    pub violation: f64,
    pub pass: bool,
}

/// Per-family worst-case constraint violations of an operating point.
#[derive(Clone, Debug)]
pub struct FeasibilityReport {
    pub tol: f64,
    pub families: Vec<FamilyViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.families.iter().all(|f| f.pass)
    }

    pub fn violation(&self, family: ConstraintFamily) -> f64 {
        self.families
            .iter()
            .find(|f| f.family == family)
            .map(|f| f.violation)
            .expect("every family is always reported")
    }

    /// Families exceeding the tolerance.
    pub fn flagged(&self) -> Vec<ConstraintFamily> {
        self.families.iter().filter(|f| !f.pass).map(|f| f.family).collect()
    }
}

/// Audits an operating point against the raw network data, independently of
/// the NLP assembly: every family is re-evaluated from stamps, incidence,
/// demands, and limits.
pub fn check_feasibility(
    solution: &OpfSolution,
    network: &Network,
    tol: f64,
) -> Result<FeasibilityReport, OpfError> {
    let incidence = tableau::build_incidence(network)?;
    let n = incidence.n_buses();
    let abs_max = |acc: f64, z: &Complex64| acc.max(z.norm());

    let scattered = incidence.scatter(&solution.i_port);
    let kcl = scattered
        .iter()
        .zip(&solution.i_inj)
        .map(|(a, b)| a - b)
        .fold(0.0, |acc, z| abs_max(acc, &z));

    let gathered = incidence.gather(&solution.v_bus);
    let kvl = gathered
        .iter()
        .zip(&solution.v_port)
        .map(|(a, b)| b - a)
        .fold(0.0, |acc, z| abs_max(acc, &z));

    let mut element: f64 = 0.0;
    for (k, el) in network.elements().iter().enumerate() {
        let offset = incidence.element_offsets()[k];
        let stamp = el.stamp();
        for r in 0..el.arity() {
            let mut res = -stamp.us()[r];
            for c in 0..el.arity() {
                res += stamp.fv()[(r, c)] * solution.v_port[offset + c]
                    + stamp.fi()[(r, c)] * solution.i_port[offset + c];
            }
            element = element.max(res.norm());
        }
    }

    let demand = network.demand_per_bus();
    let mut s_gen = vec![Complex64::ZERO; n];
    for (g, gen) in network.generators().iter().enumerate() {
        s_gen[gen.bus.0] += Complex64::new(solution.pg[g], solution.qg[g]);
    }
    let power_balance = (0..n)
        .map(|j| s_gen[j] - demand[j] - solution.v_bus[j] * solution.i_inj[j].conj())
        .fold(0.0, |acc, z| abs_max(acc, &z));

    let gen_limit = network
        .generators()
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            (solution.pg[g] - gen.p_max)
                .max(gen.p_min - solution.pg[g])
                .max(solution.qg[g] - gen.q_max)
                .max(gen.q_min - solution.qg[g])
        })
        .fold(0.0_f64, f64::max);

    let voltage_limit = network
        .buses()
        .iter()
        .enumerate()
        .map(|(j, bus)| {
            let vm = solution.v_bus[j].norm();
            (vm - bus.v_max).max(bus.v_min - vm)
        })
        .fold(0.0_f64, f64::max);

    let mut current_limit: f64 = 0.0;
    for (k, el) in network.elements().iter().enumerate() {
        if let Some(i_max) = el.i_max() {
            let offset = incidence.element_offsets()[k];
            for port in 0..el.arity() {
                current_limit = current_limit.max(solution.i_port[offset + port].norm() - i_max);
            }
        }
    }

    let families = vec![
        (ConstraintFamily::Kcl, kcl),
        (ConstraintFamily::Kvl, kvl),
        (ConstraintFamily::Element, element),
        (ConstraintFamily::PowerBalance, power_balance),
        (ConstraintFamily::GeneratorLimit, gen_limit),
        (ConstraintFamily::VoltageLimit, voltage_limit),
        (ConstraintFamily::CurrentLimit, current_limit),
    ]
    .into_iter()
    .map(|(family, raw)| {
        let violation = raw.max(0.0);
        FamilyViolation { family, violation, pass: violation <= tol }
    })
    .collect();
    Ok(FeasibilityReport { tol, families })
}
