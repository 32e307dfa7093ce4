//! AC power flow directly on the sparse tableau, plus a Ybus-based solver
//! used as an independent cross-check.
//!
//! The tableau route keeps all of `(V, v, i)` and the bus injection currents
//! `I` as unknowns, realified into Cartesian pairs, and runs a damped Newton
//! on the stacked system
//!
//! ```text
//! A·i − I = 0         v − Aᵀ·V = 0        Fv·v + Fi·i = us      (linear)
//! per bus: PQ  S_j − V_j·Ī_j = 0
//!          PV  P_j − Re(V_j·Ī_j) = 0,  e_j² + f_j² = |V_j|²
//!          slack  V_j = V_slack                                 (spec rows)
//! ```
//!
//! The injection rows use the multiplied-through form `S − V·Ī` rather than
//! the current quotient `I − S̄/V̄`, which has the same roots for `V ≠ 0` but
//! no singularity near a cold start.
//!
//! The Ybus route solves the classical polar mismatch equations on the
//! reduced admittance matrix and recovers port quantities afterwards by
//! back-substituting through each element's equations; it shares no residual,
//! Jacobian, or coordinate choice with the tableau route.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::netmodel::{BusId, NetModelError, Network};
use crate::reduction::{reduce_to_ybus, ReductionError};
use crate::sparse::{self, rt, RTriplet, RealLu};
use crate::tableau::{build_incidence, max_norm, IncidenceMatrix};

/// Per-bus boundary condition for power flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BusSpec {
    /// Fixed complex voltage; injection fully free.
    Slack { v: Complex64 },
    /// Fixed active injection and voltage magnitude; reactive free.
    Pv { p: f64, vm: f64 },
    /// Fixed complex injection.
    Pq { s: Complex64 },
}

#[derive(Debug, thiserror::Error)]
pub enum PowerFlowError {
    #[error("spec covers {got} buses, network has {expected}")]
    SpecLength { expected: usize, got: usize },
    #[error("no slack bus in spec")]
    NoSlack,
    #[error("more than one slack bus (buses {0} and {1})")]
    MultipleSlack(BusId, BusId),
    #[error("PV bus {0} hosts no generator")]
    PvWithoutGenerator(BusId),
    #[error("spec value at bus {0} is not finite")]
    NonFiniteSpec(BusId),
    #[error("did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error(transparent)]
    Network(#[from] NetModelError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

/// Solver knobs. Tolerance applies to the max-norm of the full residual
/// (per-unit quantities throughout).
#[derive(Clone, Copy, Debug)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

/// Max-norm residuals of a candidate operating point, one per equation
/// family.
#[derive(Clone, Copy, Debug)]
pub struct ResidualReport {
    pub kcl: f64,
    pub kvl: f64,
    pub element: f64,
    /// Worst violation of the bus boundary conditions: |S − V·Ī| at PQ,
    /// max(|ΔP|, |Δ|V||) at PV, |V − V_spec| at slack.
    pub injection: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.kcl.max(self.kvl).max(self.element).max(self.injection)
    }
}

#[derive(Clone, Debug)]
pub struct PowerFlowSolution {
    pub v_bus: Vec<Complex64>,
    pub v_port: Vec<Complex64>,
    pub i_port: Vec<Complex64>,
    pub i_inj: Vec<Complex64>,
    pub iterations: usize,
    pub residuals: ResidualReport,
}

impl PowerFlowSolution {
    /// Complex power injected at each bus, `S_j = V_j·Ī_j`.
    pub fn bus_power(&self) -> Vec<Complex64> {
        self.v_bus
            .iter()
            .zip(&self.i_inj)
            .map(|(v, i)| v * i.conj())
            .collect()
    }
}

/// `S_j − V_j·Ī_j` per bus: zero exactly at points satisfying the power
/// balance.
pub fn injection_residual(
    v: &[Complex64],
    i_inj: &[Complex64],
    s: &[Complex64],
) -> Vec<Complex64> {
    assert_eq!(v.len(), i_inj.len());
    assert_eq!(v.len(), s.len());
    v.iter()
        .zip(i_inj)
        .zip(s)
        .map(|((vj, ij), sj)| sj - vj * ij.conj())
        .collect()
}

fn validate_spec(network: &Network, spec: &[BusSpec]) -> Result<usize, PowerFlowError> {
    let n = network.n_buses();
    if spec.len() != n {
        return Err(PowerFlowError::SpecLength { expected: n, got: spec.len() });
    }
    let mut slack = None;
    for (j, s) in spec.iter().enumerate() {
        let bus = BusId(j);
        let finite = match *s {
            BusSpec::Slack { v } => {
                if let Some(first) = slack {
                    return Err(PowerFlowError::MultipleSlack(first, bus));
                }
                slack = Some(bus);
                v.re.is_finite() && v.im.is_finite()
            }
            BusSpec::Pv { p, vm } => {
                if !network.generators().iter().any(|g| g.bus == bus) {
                    return Err(PowerFlowError::PvWithoutGenerator(bus));
                }
                p.is_finite() && vm.is_finite() && vm > 0.0
            }
            BusSpec::Pq { s } => s.re.is_finite() && s.im.is_finite(),
        };
        if !finite {
            return Err(PowerFlowError::NonFiniteSpec(bus));
        }
    }
    let slack = slack.ok_or(PowerFlowError::NoSlack)?;
    network.check_connected()?;
    Ok(slack.0)
}

/// The realified STF power-flow system: complex unknowns `(V, v, i, I)` of
/// total complex dimension `L = 2N + 2P`, realified to `2L`, with `N + 2P`
/// complex linear rows followed by two real spec rows per bus.
///
/// Exposed as a type (rather than buried in the solver) so derivative tests
/// can difference the exact residual the solver works with.
pub struct StfPfSystem<'a> {
    network: &'a Network,
    spec: &'a [BusSpec],
    incidence: IncidenceMatrix,
    n: usize,
    p: usize,
}

impl<'a> StfPfSystem<'a> {
    pub fn new(network: &'a Network, spec: &'a [BusSpec]) -> Result<Self, PowerFlowError> {
        validate_spec(network, spec)?;
        let incidence = build_incidence(network).expect("finalized network has valid ports");
        let n = network.n_buses();
        let p = incidence.n_ports();
        Ok(Self { network, spec, incidence, n, p })
    }

    /// Complex unknown count `L`.
    pub fn complex_dim(&self) -> usize {
        2 * self.n + 2 * self.p
    }

    /// Real unknown count `2L` (also the equation count).
    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim()
    }

    fn v_idx(&self, bus: usize) -> usize {
        bus
    }

    fn vp_idx(&self, port: usize) -> usize {
        self.n + port
    }

    fn ip_idx(&self, port: usize) -> usize {
        self.n + self.p + port
    }

    fn iinj_idx(&self, bus: usize) -> usize {
        self.n + 2 * self.p + bus
    }

    /// Complex linear row count `R = N + 2P`; real spec rows start at `2R`.
    fn linear_rows(&self) -> usize {
        self.n + 2 * self.p
    }

    /// Packs complex values into the `[Re ζ; Im ζ]` layout.
    fn pack(&self, zeta: &[Complex64]) -> Vec<f64> {
        let l = self.complex_dim();
        let mut z = vec![0.0; 2 * l];
        for (k, c) in zeta.iter().enumerate() {
            z[k] = c.re;
            z[l + k] = c.im;
        }
        z
    }

    /// Recovers `(V, v, i, I)` from a real iterate.
    pub fn unpack(&self, z: &[f64]) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let l = self.complex_dim();
        let c = |k: usize| Complex64::new(z[k], z[l + k]);
        let v_bus = (0..self.n).map(|j| c(self.v_idx(j))).collect();
        let v_port = (0..self.p).map(|q| c(self.vp_idx(q))).collect();
        let i_port = (0..self.p).map(|q| c(self.ip_idx(q))).collect();
        let i_inj = (0..self.n).map(|j| c(self.iinj_idx(j))).collect();
        (v_bus, v_port, i_port, i_inj)
    }

    /// Magnitude-informed flat start: slack at its fixed phasor, PV at set
    /// magnitude, PQ at 1 p.u., all at the slack angle; `v = Aᵀ·V`, currents
    /// zero. The linear rows are exact after the first full Newton step.
    pub fn flat_start(&self) -> Vec<f64> {
        let slack_angle = self
            .spec
            .iter()
            .find_map(|s| match s {
                BusSpec::Slack { v } => Some(v.arg()),
                _ => None,
            })
            .unwrap_or(0.0);
        let mut zeta = vec![Complex64::ZERO; self.complex_dim()];
        for (j, s) in self.spec.iter().enumerate() {
            zeta[self.v_idx(j)] = match *s {
                BusSpec::Slack { v } => v,
                BusSpec::Pv { vm, .. } => Complex64::from_polar(vm, slack_angle),
                BusSpec::Pq { .. } => Complex64::from_polar(1.0, slack_angle),
            };
        }
        for (q, bus) in self.incidence.port_bus().iter().enumerate() {
            zeta[self.vp_idx(q)] = zeta[self.v_idx(bus.0)];
        }
        self.pack(&zeta)
    }

    /// Full residual at a real iterate, ordered `[Re linear; Im linear;
    /// spec pairs]`.
    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.real_dim());
        let (v_bus, v_port, i_port, i_inj) = self.unpack(z);
        let r_cplx = self.linear_residual_complex(&v_bus, &v_port, &i_port, &i_inj);
        let rr = self.linear_rows();
        let mut r = vec![0.0; self.real_dim()];
        for (k, c) in r_cplx.iter().enumerate() {
            r[k] = c.re;
            r[rr + k] = c.im;
        }
        let base = 2 * rr;
        for (j, s) in self.spec.iter().enumerate() {
            let (e, f) = (v_bus[j].re, v_bus[j].im);
            let (c, d) = (i_inj[j].re, i_inj[j].im);
            let (r0, r1) = match *s {
                BusSpec::Pq { s } => (s.re - (e * c + f * d), s.im - (f * c - e * d)),
                BusSpec::Pv { p, vm } => (p - (e * c + f * d), e * e + f * f - vm * vm),
                BusSpec::Slack { v } => (e - v.re, f - v.im),
            };
            r[base + 2 * j] = r0;
            r[base + 2 * j + 1] = r1;
        }
        r
    }

    fn linear_residual_complex(
        &self,
        v_bus: &[Complex64],
        v_port: &[Complex64],
        i_port: &[Complex64],
        i_inj: &[Complex64],
    ) -> Vec<Complex64> {
        let mut r = Vec::with_capacity(self.linear_rows());
        let ai = self.incidence.scatter(i_port);
        r.extend((0..self.n).map(|j| ai[j] - i_inj[j]));
        r.extend(
            self.incidence
                .port_bus()
                .iter()
                .enumerate()
                .map(|(q, bus)| v_port[q] - v_bus[bus.0]),
        );
        for (k, el) in self.network.elements().iter().enumerate() {
            let base = self.incidence.column(crate::netmodel::ElementId(k), 0);
            let stamp = el.stamp();
            let a = stamp.arity();
            for row in 0..a {
                let mut acc = -stamp.us()[row];
                for col in 0..a {
                    acc += stamp.fv()[(row, col)] * v_port[base + col]
                        + stamp.fi()[(row, col)] * i_port[base + col];
                }
                r.push(acc);
            }
        }
        r
    }

    /// Jacobian triplets at a real iterate. The linear block is constant;
    /// only the PQ/PV spec rows depend on `z`.
    pub fn jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
        let l = self.complex_dim();
        let rr = self.linear_rows();
        let mut out = Vec::with_capacity(8 * rr);
        // KCL: A·i − I.
        for (q, bus) in self.incidence.port_bus().iter().enumerate() {
            sparse::realify_entry(&mut out, rr, l, bus.0, self.ip_idx(q), Complex64::ONE);
        }
        for j in 0..self.n {
            sparse::realify_entry(&mut out, rr, l, j, self.iinj_idx(j), -Complex64::ONE);
        }
        // KVL: v − Aᵀ·V.
        for (q, bus) in self.incidence.port_bus().iter().enumerate() {
            sparse::realify_entry(&mut out, rr, l, self.n + q, self.vp_idx(q), Complex64::ONE);
            sparse::realify_entry(&mut out, rr, l, self.n + q, self.v_idx(bus.0), -Complex64::ONE);
        }
        // Element rows.
        for (k, el) in self.network.elements().iter().enumerate() {
            let base = self.incidence.column(crate::netmodel::ElementId(k), 0);
            let stamp = el.stamp();
            let a = stamp.arity();
            for row in 0..a {
                let r = self.n + self.p + base + row;
                for col in 0..a {
                    let fv = stamp.fv()[(row, col)];
                    if fv != Complex64::ZERO {
                        sparse::realify_entry(&mut out, rr, l, r, self.vp_idx(base + col), fv);
                    }
                    let fi = stamp.fi()[(row, col)];
                    if fi != Complex64::ZERO {
                        sparse::realify_entry(&mut out, rr, l, r, self.ip_idx(base + col), fi);
                    }
                }
            }
        }
        // Spec rows, two per bus.
        let base = 2 * rr;
        for (j, s) in self.spec.iter().enumerate() {
            let (r0, r1) = (base + 2 * j, base + 2 * j + 1);
            let ce = self.v_idx(j);
            let cc = self.iinj_idx(j);
            let (e_col, f_col) = (ce, l + ce);
            let (c_col, d_col) = (cc, l + cc);
            let e = z[e_col];
            let f = z[f_col];
            let c = z[c_col];
            let d = z[d_col];
            match *s {
                BusSpec::Pq { .. } => {
                    out.extend([
                        rt(r0, e_col, -c),
                        rt(r0, f_col, -d),
                        rt(r0, c_col, -e),
                        rt(r0, d_col, -f),
                        rt(r1, e_col, d),
                        rt(r1, f_col, -c),
                        rt(r1, c_col, -f),
                        rt(r1, d_col, e),
                    ]);
                }
                BusSpec::Pv { .. } => {
                    out.extend([
                        rt(r0, e_col, -c),
                        rt(r0, f_col, -d),
                        rt(r0, c_col, -e),
                        rt(r0, d_col, -f),
                        rt(r1, e_col, 2.0 * e),
                        rt(r1, f_col, 2.0 * f),
                    ]);
                }
                BusSpec::Slack { .. } => {
                    out.extend([rt(r0, e_col, 1.0), rt(r1, f_col, 1.0)]);
                }
            }
        }
        out
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton power flow on the full sparse tableau.
pub fn solve_powerflow_stf(
    network: &Network,
    spec: &[BusSpec],
    options: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let sys = StfPfSystem::new(network, spec)?;
    let dim = sys.real_dim();
    let mut z = sys.flat_start();
    let mut r = sys.residual(&z);
    let mut rnorm = inf_norm(&r);
    for iteration in 0..=options.max_iter {
        if rnorm < options.tol {
            let (v_bus, v_port, i_port, i_inj) = sys.unpack(&z);
            return Ok(build_solution(network, spec, &sys.incidence, v_bus, v_port, i_port, i_inj, iteration));
        }
        if iteration == options.max_iter {
            break;
        }
        let jac = sys.jacobian(&z);
        let lu = RealLu::factor(dim, &jac)
            .map_err(|_| PowerFlowError::SingularJacobian { iteration })?;
        let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
        let dz = lu
            .solve(&neg_r)
            .map_err(|_| PowerFlowError::SingularJacobian { iteration })?;
        // Step halving: insist on a residual decrease, up to 8 halvings;
        // past that, take the smallest step and let the iteration cap decide.
        let mut alpha = 1.0;
        let mut accepted = None;
        for halving in 0..=8 {
            let z_try: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + alpha * b).collect();
            let r_try = sys.residual(&z_try);
            let norm_try = inf_norm(&r_try);
            if norm_try < rnorm || halving == 8 {
                accepted = Some((z_try, r_try, norm_try));
                break;
            }
            alpha *= 0.5;
        }
        let (z_new, r_new, norm_new) = accepted.expect("loop always accepts by the 8th halving");
        z = z_new;
        r = r_new;
        rnorm = norm_new;
    }
    Err(PowerFlowError::NonConvergence { iterations: options.max_iter, residual: rnorm })
}

/// Newton power flow in polar coordinates on the reduced Ybus, with port
/// quantities recovered by per-element back-substitution.
pub fn solve_powerflow_ybus(
    network: &Network,
    spec: &[BusSpec],
    options: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let slack = validate_spec(network, spec)?;
    let ybus = reduce_to_ybus(network)?;
    let y = ybus.to_dense();
    let n = network.n_buses();

    let non_slack: Vec<usize> = (0..n).filter(|&j| j != slack).collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&j| matches!(spec[j], BusSpec::Pq { .. }))
        .collect();
    let p_spec: Vec<f64> = non_slack
        .iter()
        .map(|&j| match spec[j] {
            BusSpec::Pv { p, .. } => p,
            BusSpec::Pq { s } => s.re,
            BusSpec::Slack { .. } => unreachable!(),
        })
        .collect();
    let q_spec: Vec<f64> = pq
        .iter()
        .map(|&j| match spec[j] {
            BusSpec::Pq { s } => s.im,
            _ => unreachable!(),
        })
        .collect();

    let slack_v = match spec[slack] {
        BusSpec::Slack { v } => v,
        _ => unreachable!(),
    };
    let mut vm: Vec<f64> = spec
        .iter()
        .map(|s| match *s {
            BusSpec::Slack { v } => v.norm(),
            BusSpec::Pv { vm, .. } => vm,
            BusSpec::Pq { .. } => 1.0,
        })
        .collect();
    let mut va = vec![slack_v.arg(); n];

    let n_th = non_slack.len();
    let n_vm = pq.len();
    let dim = n_th + n_vm;
    let mut iterations = options.max_iter;
    for iteration in 0..=options.max_iter {
        let v: Vec<Complex64> = vm
            .iter()
            .zip(&va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        let i_bus = ybus.nodal_currents(&v);
        let s_calc: Vec<Complex64> =
            v.iter().zip(&i_bus).map(|(vj, ij)| vj * ij.conj()).collect();
        let mut g = DVector::zeros(dim);
        for (row, &j) in non_slack.iter().enumerate() {
            g[row] = p_spec[row] - s_calc[j].re;
        }
        for (row, &j) in pq.iter().enumerate() {
            g[n_th + row] = q_spec[row] - s_calc[j].im;
        }
        if g.amax() < options.tol {
            iterations = iteration;
            break;
        }
        if iteration == options.max_iter {
            return Err(PowerFlowError::NonConvergence {
                iterations: options.max_iter,
                residual: g.amax(),
            });
        }
        // Complex voltage sensitivities of S = diag(V)·conj(Y·V):
        //   ∂S/∂θ  = j·diag(V)·conj(diag(I) − Y·diag(V))
        //   ∂S/∂|V| = diag(V/|V|)·conj(diag(I)) + diag(V)·conj(Y·diag(V/|V|))
        let mut ds_dva = DMatrix::<Complex64>::zeros(n, n);
        let mut ds_dvm = DMatrix::<Complex64>::zeros(n, n);
        for jrow in 0..n {
            let vnorm_j = v[jrow] / vm[jrow];
            for k in 0..n {
                let vnorm_k = v[k] / vm[k];
                let mut a = -y[(jrow, k)] * v[k];
                let mut m = y[(jrow, k)] * vnorm_k;
                if jrow == k {
                    a += i_bus[jrow];
                    m = m.conj() * v[jrow] + vnorm_j * i_bus[jrow].conj();
                    ds_dva[(jrow, k)] = Complex64::I * v[jrow] * a.conj();
                    ds_dvm[(jrow, k)] = m;
                    continue;
                }
                ds_dva[(jrow, k)] = Complex64::I * v[jrow] * a.conj();
                ds_dvm[(jrow, k)] = v[jrow] * m.conj();
            }
        }
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for (row, &j) in non_slack.iter().enumerate() {
            for (col, &k) in non_slack.iter().enumerate() {
                jac[(row, col)] = ds_dva[(j, k)].re;
            }
            for (col, &k) in pq.iter().enumerate() {
                jac[(row, n_th + col)] = ds_dvm[(j, k)].re;
            }
        }
        for (row, &j) in pq.iter().enumerate() {
            for (col, &k) in non_slack.iter().enumerate() {
                jac[(n_th + row, col)] = ds_dva[(j, k)].im;
            }
            for (col, &k) in pq.iter().enumerate() {
                jac[(n_th + row, n_th + col)] = ds_dvm[(j, k)].im;
            }
        }
        let dx = jac
            .lu()
            .solve(&g)
            .ok_or(PowerFlowError::SingularJacobian { iteration })?;
        for (row, &j) in non_slack.iter().enumerate() {
            va[j] += dx[row];
        }
        for (row, &j) in pq.iter().enumerate() {
            vm[j] += dx[n_th + row];
        }
    }

    let v_bus: Vec<Complex64> = vm
        .iter()
        .zip(&va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    let incidence = build_incidence(network).expect("finalized network has valid ports");
    let (v_port, i_port, i_inj) = back_substitute(network, &incidence, &v_bus);
    Ok(build_solution(network, spec, &incidence, v_bus, v_port, i_port, i_inj, iterations))
}

/// Recovers `(v, i, I)` from bus voltages: `v = Aᵀ·V`, then per element
/// `i = Fi⁻¹·(us − Fv·v)`, then `I = A·i`.
fn back_substitute(
    network: &Network,
    incidence: &IncidenceMatrix,
    v_bus: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let v_port = incidence.gather(v_bus);
    let mut i_port = vec![Complex64::ZERO; incidence.n_ports()];
    for (k, el) in network.elements().iter().enumerate() {
        let base = incidence.column(crate::netmodel::ElementId(k), 0);
        let stamp = el.stamp();
        let a = stamp.arity();
        let fi_inv = stamp
            .fi()
            .clone()
            .try_inverse()
            .expect("reducible network has invertible Fi blocks");
        let v_loc = DVector::from_fn(a, |r, _| v_port[base + r]);
        let rhs = stamp.us() - stamp.fv() * v_loc;
        let i_loc = fi_inv * rhs;
        for r in 0..a {
            i_port[base + r] = i_loc[r];
        }
    }
    let i_inj = incidence.scatter(&i_port);
    (v_port, i_port, i_inj)
}

#[allow(clippy::too_many_arguments)]
fn build_solution(
    network: &Network,
    spec: &[BusSpec],
    incidence: &IncidenceMatrix,
    v_bus: Vec<Complex64>,
    v_port: Vec<Complex64>,
    i_port: Vec<Complex64>,
    i_inj: Vec<Complex64>,
    iterations: usize,
) -> PowerFlowSolution {
    let ai = incidence.scatter(&i_port);
    let kcl: Vec<Complex64> = ai.iter().zip(&i_inj).map(|(a, b)| a - b).collect();
    let kvl: Vec<Complex64> = incidence
        .port_bus()
        .iter()
        .enumerate()
        .map(|(q, bus)| v_port[q] - v_bus[bus.0])
        .collect();
    let mut elem = Vec::with_capacity(incidence.n_ports());
    for (k, el) in network.elements().iter().enumerate() {
        let base = incidence.column(crate::netmodel::ElementId(k), 0);
        let stamp = el.stamp();
        let a = stamp.arity();
        for row in 0..a {
            let mut acc = -stamp.us()[row];
            for col in 0..a {
                acc += stamp.fv()[(row, col)] * v_port[base + col]
                    + stamp.fi()[(row, col)] * i_port[base + col];
            }
            elem.push(acc);
        }
    }
    let injection = spec
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let sj = v_bus[j] * i_inj[j].conj();
            match *s {
                BusSpec::Pq { s } => (s - sj).norm(),
                BusSpec::Pv { p, vm } => (p - sj.re).abs().max((v_bus[j].norm() - vm).abs()),
                BusSpec::Slack { v } => (v_bus[j] - v).norm(),
            }
        })
        .fold(0.0, f64::max);
    let residuals = ResidualReport {
        kcl: max_norm(&kcl),
        kvl: max_norm(&kvl),
        element: max_norm(&elem),
        injection,
    };
    PowerFlowSolution { v_bus, v_port, i_port, i_inj, iterations, residuals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{CostCurve, ElementParams, Generator, NetworkElement};
    use crate::reduction::YbusMatrix;

    fn line(f: usize, t: usize, r: f64, x: f64, b: f64) -> NetworkElement {
        NetworkElement::from_params(
            ElementParams::Line { r, x, b },
            vec![BusId(f), BusId(t)],
        )
        .unwrap()
    }

    fn gen_at(bus: usize) -> Generator {
        Generator::new(
            BusId(bus),
            0.0,
            10.0,
            -10.0,
            10.0,
            CostCurve { alpha: 0.0, beta: 1.0, gamma_cost: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn injection_residual_examples() {
        let one = Complex64::ONE;
        // Flat no-load.
        assert_eq!(
            injection_residual(&[one], &[Complex64::ZERO], &[Complex64::ZERO]),
            vec![Complex64::ZERO]
        );
        // S = V·I* exactly.
        let i = Complex64::new(1.0, -0.5);
        let s = Complex64::new(1.0, 0.5);
        assert_eq!(injection_residual(&[one], &[i], &[s]), vec![Complex64::ZERO]);
        // Multiplied-through residual equals the quotient form scaled by −V:
        // S − V·Ī = −V·(I − S̄/V̄)̄ ... verified numerically.
        let v = Complex64::new(0.9, 0.2);
        let i = Complex64::new(0.3, -0.7);
        let s = Complex64::new(0.5, 0.1);
        let ours = injection_residual(&[v], &[i], &[s])[0];
        let quotient = i - (s / v).conj();
        assert!((ours - (-v * quotient.conj())).norm() < 1e-14);
    }

    #[test]
    fn flat_network_converges_immediately() {
        // Slack plus PV at 1 p.u., zero injections, lossless uncharged line:
        // the flat start is the solution.
        let net = Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .element(line(0, 1, 0.0, 0.1, 0.0))
            .generator(gen_at(1))
            .finalize()
            .unwrap();
        let spec = [
            BusSpec::Slack { v: Complex64::ONE },
            BusSpec::Pv { p: 0.0, vm: 1.0 },
        ];
        let sol = solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()).unwrap();
        assert!(sol.iterations <= 1);
        assert!((sol.v_bus[1] - Complex64::ONE).norm() < 1e-12);
        assert!(max_norm(&sol.i_port) < 1e-12);
    }

    /// Gauss-Seidel sweep on the classical two-bus problem, used as an
    /// independent oracle for the tableau solver.
    fn gauss_seidel_two_bus(y: &YbusMatrix, s2: Complex64) -> Complex64 {
        let v1 = Complex64::ONE;
        let mut v2 = Complex64::ONE;
        for _ in 0..20_000 {
            let next = (s2.conj() / v2.conj() - y.get(1, 0) * v1) / y.get(1, 1);
            if (next - v2).norm() < 1e-14 {
                return next;
            }
            v2 = next;
        }
        v2
    }

    #[test]
    fn two_bus_matches_gauss_seidel() {
        let net = Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .element(line(0, 1, 0.0, 0.1, 0.0))
            .load(1, Complex64::new(0.5, 0.2))
            .finalize()
            .unwrap();
        let spec = [
            BusSpec::Slack { v: Complex64::ONE },
            BusSpec::Pq { s: Complex64::new(-0.5, -0.2) },
        ];
        let sol = solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()).unwrap();
        let y = reduce_to_ybus(&net).unwrap();
        let v2 = gauss_seidel_two_bus(&y, Complex64::new(-0.5, -0.2));
        assert!((sol.v_bus[1].norm() - v2.norm()).abs() < 1e-8);
        assert!((sol.v_bus[1] - v2).norm() < 1e-8);
        assert!(sol.residuals.max() < 1e-8);
    }

    fn mixed_three_bus() -> (Network, Vec<BusSpec>) {
        let t = Complex64::from_polar(1.02, 1.5_f64.to_radians());
        let tap = NetworkElement::from_params(
            ElementParams::TapTransformer { t, r: 0.005, x: 0.08, b: 0.0 },
            vec![BusId(0), BusId(2)],
        )
        .unwrap();
        let shunt = NetworkElement::from_params(
            ElementParams::Shunt { y_sh: Complex64::new(0.0, 0.15) },
            vec![BusId(2)],
        )
        .unwrap();
        let net = Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .simple_bus(2)
            .element(line(0, 1, 0.01, 0.12, 0.04))
            .element(line(1, 2, 0.02, 0.22, 0.06))
            .element(tap)
            .element(shunt)
            .generator(gen_at(1))
            .load(2, Complex64::new(0.9, 0.3))
            .finalize()
            .unwrap();
        let spec = vec![
            BusSpec::Slack { v: Complex64::from_polar(1.03, 0.0) },
            BusSpec::Pv { p: 0.4, vm: 1.01 },
            BusSpec::Pq { s: Complex64::new(-0.9, -0.3) },
        ];
        (net, spec)
    }

    #[test]
    fn stf_and_ybus_routes_agree() {
        let (net, spec) = mixed_three_bus();
        let opts = PowerFlowOptions::default();
        let a = solve_powerflow_stf(&net, &spec, &opts).unwrap();
        let b = solve_powerflow_ybus(&net, &spec, &opts).unwrap();
        for (x, y) in a.v_bus.iter().zip(&b.v_bus) {
            assert!((x - y).norm() < 1e-6, "voltage mismatch {x} vs {y}");
        }
        for (x, y) in a.i_port.iter().zip(&b.i_port) {
            assert!((x - y).norm() < 1e-6);
        }
        assert!(a.residuals.max() < 1e-8);
        assert!(b.residuals.max() < 1e-7);
        assert!(a.iterations <= 10 && b.iterations <= 10);
    }

    #[test]
    fn power_balance_books_square() {
        // Total generation equals total load plus losses; losses match the
        // sum of element port powers.
        let (net, spec) = mixed_three_bus();
        let sol = solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()).unwrap();
        let s_bus: Complex64 = sol.bus_power().iter().sum();
        let s_ports: Complex64 = sol
            .v_port
            .iter()
            .zip(&sol.i_port)
            .map(|(v, i)| v * i.conj())
            .sum();
        assert!((s_bus - s_ports).norm() < 1e-8);
    }

    #[test]
    fn spec_validation_errors() {
        let (net, mut spec) = mixed_three_bus();
        assert!(matches!(
            solve_powerflow_stf(&net, &spec[..2], &PowerFlowOptions::default()),
            Err(PowerFlowError::SpecLength { .. })
        ));
        spec[1] = BusSpec::Slack { v: Complex64::ONE };
        assert!(matches!(
            solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()),
            Err(PowerFlowError::MultipleSlack(..))
        ));
        spec[0] = BusSpec::Pq { s: Complex64::ZERO };
        spec[1] = BusSpec::Pq { s: Complex64::ZERO };
        assert!(matches!(
            solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()),
            Err(PowerFlowError::NoSlack)
        ));
        let (net2, mut spec2) = mixed_three_bus();
        spec2[2] = BusSpec::Pv { p: 0.1, vm: 1.0 };
        assert!(matches!(
            solve_powerflow_stf(&net2, &spec2, &PowerFlowOptions::default()),
            Err(PowerFlowError::PvWithoutGenerator(BusId(2)))
        ));
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let brk = NetworkElement::from_params(
            ElementParams::Breaker { switch_state: crate::netmodel::SwitchState::Open },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let net = Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .element(brk)
            .finalize()
            .unwrap();
        let spec = [BusSpec::Slack { v: Complex64::ONE }, BusSpec::Pq { s: Complex64::ZERO }];
        assert!(matches!(
            solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()),
            Err(PowerFlowError::Network(NetModelError::Disconnected { .. }))
        ));
    }

    #[test]
    fn nonconvergence_reports_residual() {
        // A load far beyond the line's transfer capability has no solution.
        let net = Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .element(line(0, 1, 0.0, 1.0, 0.0))
            .load(1, Complex64::new(50.0, 0.0))
            .finalize()
            .unwrap();
        let spec = [
            BusSpec::Slack { v: Complex64::ONE },
            BusSpec::Pq { s: Complex64::new(-50.0, 0.0) },
        ];
        match solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()) {
            Err(PowerFlowError::NonConvergence { residual, .. }) => assert!(residual > 1e-3),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }
}
