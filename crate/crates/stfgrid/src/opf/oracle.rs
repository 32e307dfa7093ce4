//! Ybus-based OPF formulations used to cross-check the tableau problem.
//!
//! Two independent models of the same dispatch problem:
//!
//! * [`RectIvModel`] — rectangular current-voltage form over
//!   `[Re V, Im V, Re I, Im I, P_g, Q_g]` with the nodal relation
//!   `I = Y_bus·V` as linear equalities. Current limits are expressed on the
//!   same physical element ports as the tableau problem, recovered through
//!   each element's local admittance, so both problems constrain identical
//!   quantities.
//! * [`PolarModel`] — classic polar form over `[θ, V_m, P_g, Q_g]` with
//!   power-mismatch equalities and box bounds only (no current limits); use
//!   it where line limits are inactive.
//!
//! Both build their admittance data with the closed-form per-branch Ybus
//! rather than tableau reduction, and share only the interior-point solver
//! with the primary formulation — constraint systems are assembled from
//! scratch here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::netmodel::{Bus, BusId, ElementId, Generator, Network};
use crate::reduction::{direct_ybus, IrreducibleCause, ReductionError};
use crate::sparse::{rt, CTriplet, RTriplet};
use super::nlp::{solve_nlp, NlpModel};
use super::{OpfError, OpfOptions};

/// Converged oracle operating point.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub v_bus: Vec<Complex64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Generator data shared by both oracle models.
struct DispatchData {
    base: f64,
    gens: Vec<Generator>,
    buses: Vec<Bus>,
    demand: Vec<Complex64>,
    gens_at_bus: Vec<Vec<usize>>,
    reference: usize,
}

impl DispatchData {
    fn new(network: &Network, reference: BusId) -> Result<Self, OpfError> {
        network.validate()?;
        if reference.0 >= network.n_buses() {
            return Err(OpfError::Network(crate::netmodel::NetModelError::UnknownBus(reference)));
        }
        let mut gens_at_bus: Vec<Vec<usize>> = vec![Vec::new(); network.n_buses()];
        for (g, gen) in network.generators().iter().enumerate() {
            gens_at_bus[gen.bus.0].push(g);
        }
        Ok(Self {
            base: network.base_mva(),
            gens: network.generators().to_vec(),
            buses: network.buses().to_vec(),
            demand: network.demand_per_bus(),
            gens_at_bus,
            reference: reference.0,
        })
    }

    fn n(&self) -> usize {
        self.buses.len()
    }

    fn ng(&self) -> usize {
        self.gens.len()
    }

    fn objective(&self, pg: impl Fn(usize) -> f64) -> f64 {
        self.gens
            .iter()
            .enumerate()
            .map(|(g, gen)| {
                let mw = self.base * pg(g);
                gen.cost.alpha * mw * mw + gen.cost.beta * mw + gen.cost.gamma_cost
            })
            .sum()
    }

    fn gradient_into(&self, out: &mut [f64], col_pg: impl Fn(usize) -> usize, z: &[f64]) {
        for (g, gen) in self.gens.iter().enumerate() {
            let c = col_pg(g);
            out[c] = 2.0 * gen.cost.alpha * self.base * self.base * z[c] + gen.cost.beta * self.base;
        }
    }

    /// Generator box rows in the canonical hi/lo, P-then-Q order.
    fn box_constraints(&self, z: &[f64], col_pg: impl Fn(usize) -> usize, col_qg: impl Fn(usize) -> usize) -> Vec<f64> {
        let mut h = Vec::with_capacity(4 * self.ng());
        h.extend(self.gens.iter().enumerate().map(|(g, gen)| z[col_pg(g)] - gen.p_max));
        h.extend(self.gens.iter().enumerate().map(|(g, gen)| gen.p_min - z[col_pg(g)]));
        h.extend(self.gens.iter().enumerate().map(|(g, gen)| z[col_qg(g)] - gen.q_max));
        h.extend(self.gens.iter().enumerate().map(|(g, gen)| gen.q_min - z[col_qg(g)]));
        h
    }

    fn box_jacobian(&self, out: &mut Vec<RTriplet>, col_pg: impl Fn(usize) -> usize, col_qg: impl Fn(usize) -> usize) {
        let ng = self.ng();
        for g in 0..ng {
            out.push(rt(g, col_pg(g), 1.0));
            out.push(rt(ng + g, col_pg(g), -1.0));
            out.push(rt(2 * ng + g, col_qg(g), 1.0));
            out.push(rt(3 * ng + g, col_qg(g), -1.0));
        }
    }

    fn midpoints(&self) -> Vec<(f64, f64)> {
        self.gens
            .iter()
            .map(|g| (0.5 * (g.p_min + g.p_max), 0.5 * (g.q_min + g.q_max)))
            .collect()
    }
}

/// One port-current limit expressed through bus voltages:
/// `i = Σ_c w_c V_c`, constrained as `|i|² ≤ i_max²`.
struct CurrentRow {
    i_max: f64,
    weights: Vec<(usize, Complex64)>,
}

impl CurrentRow {
    /// Rectangular components of the port current at `z` (bus-voltage blocks
    /// at `ev`/`fv` column offsets 0 and `n`).
    fn current(&self, z: &[f64], n: usize) -> (f64, f64) {
        let mut er = 0.0;
        let mut fr = 0.0;
        for &(bus, w) in &self.weights {
            let (e, f) = (z[bus], z[n + bus]);
            er += w.re * e - w.im * f;
            fr += w.im * e + w.re * f;
        }
        (er, fr)
    }
}

/// Builds the per-port current rows of every rated element from its local
/// admittance `Y_loc = −Fi⁻¹·Fv`.
fn current_rows(network: &Network) -> Result<Vec<CurrentRow>, OpfError> {
    let mut rows = Vec::new();
    for (k, el) in network.elements().iter().enumerate() {
        let Some(i_max) = el.i_max() else { continue };
        if !i_max.is_finite() || i_max <= 0.0 {
            return Err(OpfError::MissingLimits { element: k, i_max });
        }
        let fi_inv = el.stamp().fi().clone().try_inverse().ok_or_else(|| {
            ReductionError::NotReducible {
                element: ElementId(k),
                kind: el.kind(),
                cause: IrreducibleCause::SingularCurrentBlock,
            }
        })?;
        let y_loc = -fi_inv * el.stamp().fv();
        for port in 0..el.arity() {
            let weights = (0..el.arity())
                .map(|c| (el.attachment()[c].0, y_loc[(port, c)]))
                .collect();
            rows.push(CurrentRow { i_max, weights });
        }
    }
    Ok(rows)
}

/// Rectangular current-voltage OPF on the bus admittance matrix.
///
/// Variables `[e_V | f_V | e_I | f_I | P_g | Q_g]`; equalities are the
/// realified `Y·V − I = 0` rows, per-bus power balances, and the reference
/// pin `f_V[ref] = 0`.
pub struct RectIvModel {
    data: DispatchData,
    ybus: Vec<CTriplet>,
    current: Vec<CurrentRow>,
}

pub fn build_rect_iv(network: &Network, reference: BusId) -> Result<RectIvModel, OpfError> {
    let data = DispatchData::new(network, reference)?;
    let ybus = direct_ybus(network)?.entries().to_vec();
    let current = current_rows(network)?;
    Ok(RectIvModel { data, ybus, current })
}

impl RectIvModel {
    fn n(&self) -> usize {
        self.data.n()
    }

    fn col_ev(&self, j: usize) -> usize {
        j
    }

    fn col_fv(&self, j: usize) -> usize {
        self.n() + j
    }

    fn col_ei(&self, j: usize) -> usize {
        2 * self.n() + j
    }

    fn col_fi(&self, j: usize) -> usize {
        3 * self.n() + j
    }

    fn col_pg(&self, g: usize) -> usize {
        4 * self.n() + g
    }

    fn col_qg(&self, g: usize) -> usize {
        4 * self.n() + self.data.ng() + g
    }

    fn balance_row(&self, j: usize) -> usize {
        2 * self.n() + 2 * j
    }

    pub fn solve(&self, options: &OpfOptions) -> Result<OracleSolution, OpfError> {
        let nlp = solve_nlp(self, &options.ipm())?;
        let n = self.n();
        Ok(OracleSolution {
            v_bus: (0..n).map(|j| Complex64::new(nlp.z[j], nlp.z[n + j])).collect(),
            pg: (0..self.data.ng()).map(|g| nlp.z[self.col_pg(g)]).collect(),
            qg: (0..self.data.ng()).map(|g| nlp.z[self.col_qg(g)]).collect(),
            objective: nlp.objective,
            iterations: nlp.iterations,
        })
    }
}

impl NlpModel for RectIvModel {
    fn n_vars(&self) -> usize {
        4 * self.n() + 2 * self.data.ng()
    }

    fn n_eq(&self) -> usize {
        4 * self.n() + 1
    }

    fn n_ineq(&self) -> usize {
        4 * self.data.ng() + 2 * self.n() + self.current.len()
    }

    fn initial_point(&self) -> Vec<f64> {
        let n = self.n();
        let ng = self.data.ng();
        let mut z = vec![0.0; self.n_vars()];
        for j in 0..n {
            z[self.col_ev(j)] = 1.0;
        }
        // I = Y·1 keeps the linear rows exactly satisfied at the start.
        for t in &self.ybus {
            z[self.col_ei(t.row)] += t.val.re;
            z[self.col_fi(t.row)] += t.val.im;
        }
        for (g, (pm, qm)) in self.data.midpoints().into_iter().enumerate() {
            z[4 * n + g] = pm;
            z[4 * n + ng + g] = qm;
        }
        z
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.data.objective(|g| z[self.col_pg(g)])
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars()];
        self.data.gradient_into(&mut out, |g| self.col_pg(g), z);
        out
    }

    fn eq_constraints(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut g = vec![0.0; self.n_eq()];
        for t in &self.ybus {
            let v = Complex64::new(z[self.col_ev(t.col)], z[self.col_fv(t.col)]);
            let term = t.val * v;
            g[t.row] += term.re;
            g[n + t.row] += term.im;
        }
        for j in 0..n {
            g[j] -= z[self.col_ei(j)];
            g[n + j] -= z[self.col_fi(j)];
        }
        for j in 0..n {
            let (e, f) = (z[self.col_ev(j)], z[self.col_fv(j)]);
            let (c, d) = (z[self.col_ei(j)], z[self.col_fi(j)]);
            let pg: f64 = self.data.gens_at_bus[j].iter().map(|&gi| z[self.col_pg(gi)]).sum();
            let qg: f64 = self.data.gens_at_bus[j].iter().map(|&gi| z[self.col_qg(gi)]).sum();
            g[self.balance_row(j)] = pg - self.data.demand[j].re - (e * c + f * d);
            g[self.balance_row(j) + 1] = qg - self.data.demand[j].im - (f * c - e * d);
        }
        g[self.n_eq() - 1] = z[self.col_fv(self.data.reference)];
        g
    }

    fn ineq_constraints(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut h = self.data.box_constraints(z, |g| self.col_pg(g), |g| self.col_qg(g));
        for j in 0..n {
            let m2 = z[self.col_ev(j)].powi(2) + z[self.col_fv(j)].powi(2);
            h.push(m2 - self.data.buses[j].v_max.powi(2));
        }
        for j in 0..n {
            let m2 = z[self.col_ev(j)].powi(2) + z[self.col_fv(j)].powi(2);
            h.push(self.data.buses[j].v_min.powi(2) - m2);
        }
        for row in &self.current {
            let (er, fr) = row.current(z, n);
            h.push(er * er + fr * fr - row.i_max * row.i_max);
        }
        h
    }

    fn eq_jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
        let n = self.n();
        let mut out = Vec::new();
        for t in &self.ybus {
            if t.val.re != 0.0 {
                out.push(rt(t.row, self.col_ev(t.col), t.val.re));
                out.push(rt(n + t.row, self.col_fv(t.col), t.val.re));
            }
            if t.val.im != 0.0 {
                out.push(rt(t.row, self.col_fv(t.col), -t.val.im));
                out.push(rt(n + t.row, self.col_ev(t.col), t.val.im));
            }
        }
        for j in 0..n {
            out.push(rt(j, self.col_ei(j), -1.0));
            out.push(rt(n + j, self.col_fi(j), -1.0));
        }
        for j in 0..n {
            let (e, f) = (z[self.col_ev(j)], z[self.col_fv(j)]);
            let (c, d) = (z[self.col_ei(j)], z[self.col_fi(j)]);
            let pr = self.balance_row(j);
            out.push(rt(pr, self.col_ev(j), -c));
            out.push(rt(pr, self.col_fv(j), -d));
            out.push(rt(pr, self.col_ei(j), -e));
            out.push(rt(pr, self.col_fi(j), -f));
            out.push(rt(pr + 1, self.col_ev(j), d));
            out.push(rt(pr + 1, self.col_fv(j), -c));
            out.push(rt(pr + 1, self.col_ei(j), -f));
            out.push(rt(pr + 1, self.col_fi(j), e));
            for &gi in &self.data.gens_at_bus[j] {
                out.push(rt(pr, self.col_pg(gi), 1.0));
                out.push(rt(pr + 1, self.col_qg(gi), 1.0));
            }
        }
        out.push(rt(self.n_eq() - 1, self.col_fv(self.data.reference), 1.0));
        out
    }

    fn ineq_jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
        let n = self.n();
        let ng = self.data.ng();
        let mut out = Vec::new();
        self.data.box_jacobian(&mut out, |g| self.col_pg(g), |g| self.col_qg(g));
        for j in 0..n {
            let (e, f) = (z[self.col_ev(j)], z[self.col_fv(j)]);
            let hi = 4 * ng + j;
            let lo = 4 * ng + n + j;
            out.push(rt(hi, self.col_ev(j), 2.0 * e));
            out.push(rt(hi, self.col_fv(j), 2.0 * f));
            out.push(rt(lo, self.col_ev(j), -2.0 * e));
            out.push(rt(lo, self.col_fv(j), -2.0 * f));
        }
        for (t, row) in self.current.iter().enumerate() {
            let (er, fr) = row.current(z, n);
            let r = 4 * ng + 2 * n + t;
            for &(bus, w) in &row.weights {
                out.push(rt(r, self.col_ev(bus), 2.0 * (er * w.re + fr * w.im)));
                out.push(rt(r, self.col_fv(bus), 2.0 * (fr * w.re - er * w.im)));
            }
        }
        out
    }

    fn lagrangian_hessian(&self, _z: &[f64], lam_eq: &[f64], lam_ineq: &[f64]) -> Vec<RTriplet> {
        let n = self.n();
        let ng = self.data.ng();
        let base = self.data.base;
        let mut out = Vec::new();
        for (g, gen) in self.data.gens.iter().enumerate() {
            let c = self.col_pg(g);
            out.push(rt(c, c, 2.0 * gen.cost.alpha * base * base));
        }
        for j in 0..n {
            let lp = lam_eq[self.balance_row(j)];
            let lq = lam_eq[self.balance_row(j) + 1];
            let (e, f) = (self.col_ev(j), self.col_fv(j));
            let (c, d) = (self.col_ei(j), self.col_fi(j));
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
                out.push(rt(self.col_ev(j), self.col_ev(j), w));
                out.push(rt(self.col_fv(j), self.col_fv(j), w));
            }
        }
        // Current rows: h = (Σ aᵀx)² + (Σ bᵀx)² has constant Hessian
        // 2(aaᵀ + bbᵀ) over the touched voltage columns.
        for (t, row) in self.current.iter().enumerate() {
            let lam = lam_ineq[4 * ng + 2 * n + t];
            if lam == 0.0 {
                continue;
            }
            for &(ba, wa) in &row.weights {
                for &(bb, wb) in &row.weights {
                    let aa = wa.re * wb.re + wa.im * wb.im;
                    let ab = -wa.re * wb.im + wa.im * wb.re;
                    // d²h/de_a de_b and d²h/df_a df_b share the coefficient;
                    // the e–f cross blocks pick up the skew part.
                    out.push(rt(self.col_ev(ba), self.col_ev(bb), 2.0 * lam * aa));
                    out.push(rt(self.col_fv(ba), self.col_fv(bb), 2.0 * lam * aa));
                    out.push(rt(self.col_ev(ba), self.col_fv(bb), 2.0 * lam * ab));
                    out.push(rt(self.col_fv(bb), self.col_ev(ba), 2.0 * lam * ab));
                }
            }
        }
        out
    }
}

/// Polar power-mismatch OPF on the bus admittance matrix, box bounds only.
pub struct PolarModel {
    data: DispatchData,
    ybus: DMatrix<Complex64>,
}

pub fn build_polar(network: &Network, reference: BusId) -> Result<PolarModel, OpfError> {
    let data = DispatchData::new(network, reference)?;
    let ybus = direct_ybus(network)?.to_dense();
    Ok(PolarModel { data, ybus })
}

impl PolarModel {
    fn n(&self) -> usize {
        self.data.n()
    }

    fn col_th(&self, j: usize) -> usize {
        j
    }

    fn col_vm(&self, j: usize) -> usize {
        self.n() + j
    }

    fn col_pg(&self, g: usize) -> usize {
        2 * self.n() + g
    }

    fn col_qg(&self, g: usize) -> usize {
        2 * self.n() + self.data.ng() + g
    }

    fn voltages(&self, z: &[f64]) -> DVector<Complex64> {
        DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|j| Complex64::from_polar(z[self.col_vm(j)], z[self.col_th(j)])),
        )
    }

    /// Complex injections `S = V ∘ (Y·V)*` at `z`.
    fn injections(&self, z: &[f64]) -> DVector<Complex64> {
        let v = self.voltages(z);
        let i = &self.ybus * &v;
        v.zip_map(&i, |vj, ij| vj * ij.conj())
    }

    pub fn solve(&self, options: &OpfOptions) -> Result<OracleSolution, OpfError> {
        let nlp = solve_nlp(self, &options.ipm())?;
        Ok(OracleSolution {
            v_bus: (0..self.n())
                .map(|j| Complex64::from_polar(nlp.z[self.col_vm(j)], nlp.z[self.col_th(j)]))
                .collect(),
            pg: (0..self.data.ng()).map(|g| nlp.z[self.col_pg(g)]).collect(),
            qg: (0..self.data.ng()).map(|g| nlp.z[self.col_qg(g)]).collect(),
            objective: nlp.objective,
            iterations: nlp.iterations,
        })
    }

    /// Complex sensitivities of injections to angle and magnitude.
    fn ds_dv(&self, z: &[f64]) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let n = self.n();
        let v = self.voltages(z);
        let ibus = &self.ybus * &v;
        let vnorm = DVector::from_iterator(
            n,
            (0..n).map(|j| Complex64::from_polar(1.0, z[self.col_th(j)])),
        );
        let diag_v = DMatrix::from_diagonal(&v);
        let diag_vnorm = DMatrix::from_diagonal(&vnorm);
        let y_diag_v = &self.ybus * &diag_v;
        let ds_dva =
            (&diag_v * (DMatrix::from_diagonal(&ibus) - &y_diag_v).map(|x| x.conj())) * Complex64::i();
        let ds_dvm = &diag_v * (&self.ybus * &diag_vnorm).map(|x| x.conj())
            + DMatrix::from_diagonal(&ibus.map(|x| x.conj())) * &diag_vnorm;
        (ds_dva, ds_dvm)
    }

    /// Second derivatives of `Σ_j lam_j·S_j` with respect to `[θ; V_m]`,
    /// returned as the four dense blocks `(Gaa, Gav, Gva, Gvv)`.
    fn d2s(&self, z: &[f64], lam: &[f64]) -> [DMatrix<Complex64>; 4] {
        let n = self.n();
        let v = self.voltages(z);
        let ibus = &self.ybus * &v;
        let diag_v = DMatrix::from_diagonal(&v);
        let diag_lam =
            DMatrix::from_diagonal(&DVector::from_iterator(n, lam.iter().map(|&l| Complex64::new(l, 0.0))));
        let a = &diag_lam * &diag_v;
        let b = &self.ybus * &diag_v;
        let c = &a * b.map(|x| x.conj());
        let d = self.ybus.adjoint() * &diag_v;
        let d_lam = &d * DVector::from_iterator(n, lam.iter().map(|&l| Complex64::new(l, 0.0)));
        let e = diag_v.map(|x| x.conj()) * (&d * &diag_lam - DMatrix::from_diagonal(&d_lam));
        let f = &c - &a * DMatrix::from_diagonal(&ibus.map(|x| x.conj()));
        let g = DMatrix::from_diagonal(&v.map(|x| Complex64::new(1.0 / x.norm(), 0.0)));
        let gaa = &e + &f;
        let gva = (&g * (&e - &f)) * Complex64::i();
        let gav = gva.transpose();
        let gvv = &g * (&c + c.transpose()) * &g;
        [gaa, gav, gva, gvv]
    }
}

impl NlpModel for PolarModel {
    fn n_vars(&self) -> usize {
        2 * self.n() + 2 * self.data.ng()
    }

    fn n_eq(&self) -> usize {
        2 * self.n() + 1
    }

    fn n_ineq(&self) -> usize {
        4 * self.data.ng() + 2 * self.n()
    }

    fn initial_point(&self) -> Vec<f64> {
        let n = self.n();
        let ng = self.data.ng();
        let mut z = vec![0.0; self.n_vars()];
        for j in 0..n {
            z[self.col_vm(j)] = 1.0;
        }
        for (g, (pm, qm)) in self.data.midpoints().into_iter().enumerate() {
            z[2 * n + g] = pm;
            z[2 * n + ng + g] = qm;
        }
        z
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.data.objective(|g| z[self.col_pg(g)])
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars()];
        self.data.gradient_into(&mut out, |g| self.col_pg(g), z);
        out
    }

    fn eq_constraints(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let s = self.injections(z);
        let mut g = vec![0.0; self.n_eq()];
        for j in 0..n {
            let pg: f64 = self.data.gens_at_bus[j].iter().map(|&gi| z[self.col_pg(gi)]).sum();
            let qg: f64 = self.data.gens_at_bus[j].iter().map(|&gi| z[self.col_qg(gi)]).sum();
            g[2 * j] = pg - self.data.demand[j].re - s[j].re;
            g[2 * j + 1] = qg - self.data.demand[j].im - s[j].im;
        }
        g[self.n_eq() - 1] = z[self.col_th(self.data.reference)];
        g
    }

    fn ineq_constraints(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut h = self.data.box_constraints(z, |g| self.col_pg(g), |g| self.col_qg(g));
        for j in 0..n {
            h.push(z[self.col_vm(j)] - self.data.buses[j].v_max);
        }
        for j in 0..n {
            h.push(self.data.buses[j].v_min - z[self.col_vm(j)]);
        }
        h
    }

    fn eq_jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
        let n = self.n();
        let (ds_dva, ds_dvm) = self.ds_dv(z);
        let mut out = Vec::new();
        for j in 0..n {
            for k in 0..n {
                let dva = ds_dva[(j, k)];
                let dvm = ds_dvm[(j, k)];
                if dva != Complex64::ZERO {
                    out.push(rt(2 * j, self.col_th(k), -dva.re));
                    out.push(rt(2 * j + 1, self.col_th(k), -dva.im));
                }
                if dvm != Complex64::ZERO {
                    out.push(rt(2 * j, self.col_vm(k), -dvm.re));
                    out.push(rt(2 * j + 1, self.col_vm(k), -dvm.im));
                }
            }
            for &gi in &self.data.gens_at_bus[j] {
                out.push(rt(2 * j, self.col_pg(gi), 1.0));
                out.push(rt(2 * j + 1, self.col_qg(gi), 1.0));
            }
        }
        out.push(rt(self.n_eq() - 1, self.col_th(self.data.reference), 1.0));
        out
    }

    fn ineq_jacobian(&self, _z: &[f64]) -> Vec<RTriplet> {
        let n = self.n();
        let ng = self.data.ng();
        let mut out = Vec::new();
        self.data.box_jacobian(&mut out, |g| self.col_pg(g), |g| self.col_qg(g));
        for j in 0..n {
            out.push(rt(4 * ng + j, self.col_vm(j), 1.0));
            out.push(rt(4 * ng + n + j, self.col_vm(j), -1.0));
        }
        out
    }

    fn lagrangian_hessian(&self, z: &[f64], lam_eq: &[f64], _lam_ineq: &[f64]) -> Vec<RTriplet> {
        let n = self.n();
        let base = self.data.base;
        let mut out = Vec::new();
        for (g, gen) in self.data.gens.iter().enumerate() {
            let c = self.col_pg(g);
            out.push(rt(c, c, 2.0 * gen.cost.alpha * base * base));
        }
        // Balance rows contribute −∇²(Σ λP_j P_j) − ∇²(Σ λQ_j Q_j); the
        // complex blocks are evaluated once per multiplier family.
        let lam_p: Vec<f64> = (0..n).map(|j| lam_eq[2 * j]).collect();
        let lam_q: Vec<f64> = (0..n).map(|j| lam_eq[2 * j + 1]).collect();
        let hp = self.d2s(z, &lam_p);
        let hq = self.d2s(z, &lam_q);
        let block_col = |b: usize, k: usize| if b == 0 { self.col_th(k) } else { self.col_vm(k) };
        for (idx, (bp, bq)) in hp.iter().zip(&hq).enumerate() {
            let (br, bc) = (idx / 2, idx % 2);
            for j in 0..n {
                for k in 0..n {
                    let val = -(bp[(j, k)].re + bq[(j, k)].im);
                    if val != 0.0 {
                        out.push(rt(block_col(br, j), block_col(bc, k), val));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{CostCurve, ElementParams, NetworkElement};
    use crate::opf::{build_opf, solve_opf};

    fn line(a: usize, b: usize, r: f64, x: f64) -> NetworkElement {
        NetworkElement::from_params(
            ElementParams::Line { r, x, b: 0.02 },
            vec![BusId(a), BusId(b)],
        )
        .unwrap()
    }

    fn gen(bus: usize, p_max: f64, beta: f64) -> Generator {
        Generator::new(
            BusId(bus),
            0.0,
            p_max,
            -2.0,
            2.0,
            CostCurve { alpha: 0.02, beta, gamma_cost: 1.0 },
        )
        .unwrap()
    }

    /// Two-path network where the cheap generator's direct line can be rated.
    fn three_bus(rating: Option<f64>) -> Network {
        let mut direct = line(0, 2, 0.02, 0.12);
        if let Some(r) = rating {
            direct = direct.with_rating(r);
        }
        Network::builder(1.0)
            .simple_bus(0)
            .simple_bus(1)
            .simple_bus(2)
            .element(direct)
            .element(line(0, 1, 0.02, 0.1))
            .element(line(1, 2, 0.02, 0.1))
            .generator(gen(0, 2.0, 5.0))
            .generator(gen(1, 2.0, 15.0))
            .load(2, Complex64::new(0.9, 0.2))
            .finalize()
            .unwrap()
    }

    #[test]
    fn three_formulations_agree_without_limits() {
        let net = three_bus(None);
        let opts = OpfOptions::default();
        let stf = solve_opf(&build_opf(&net, BusId(0), &opts).unwrap(), &opts).unwrap();
        let rect = build_rect_iv(&net, BusId(0)).unwrap().solve(&opts).unwrap();
        let polar = build_polar(&net, BusId(0)).unwrap().solve(&opts).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(stf.objective, rect.objective) < 1e-6, "stf {} rect {}", stf.objective, rect.objective);
        assert!(rel(stf.objective, polar.objective) < 1e-6, "stf {} polar {}", stf.objective, polar.objective);
        for j in 0..3 {
            assert!((stf.v_bus[j] - rect.v_bus[j]).norm() < 1e-5);
            assert!((stf.v_bus[j] - polar.v_bus[j]).norm() < 1e-5);
        }
    }

    #[test]
    fn binding_current_limit_matches_rect_iv() {
        let opts = OpfOptions::default();
        let unconstrained =
            solve_opf(&build_opf(&three_bus(None), BusId(0), &opts).unwrap(), &opts).unwrap();
        // Rate the direct line below its unconstrained loading so the limit
        // must bind at the constrained optimum.
        let flow = unconstrained.i_port[0].norm().max(unconstrained.i_port[1].norm());
        let rating = 0.7 * flow;
        let net = three_bus(Some(rating));
        let stf = solve_opf(&build_opf(&net, BusId(0), &opts).unwrap(), &opts).unwrap();
        let rect = build_rect_iv(&net, BusId(0)).unwrap().solve(&opts).unwrap();
        let i_direct = stf.i_port[0].norm().max(stf.i_port[1].norm());
        assert!(i_direct <= rating + 1e-6);
        assert!(i_direct > rating - 1e-3, "limit should bind, |i| = {i_direct} vs {rating}");
        assert!(stf.objective > unconstrained.objective + 1e-4);
        let rel = (stf.objective - rect.objective).abs() / rect.objective;
        assert!(rel < 1e-6, "stf {} rect {}", stf.objective, rect.objective);
    }
}
