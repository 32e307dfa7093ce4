//! Primal-dual interior-point solver for sparse nonlinear programs
//!
//!   minimize f(z)   subject to   g(z) = 0,   h(z) ≤ 0.
//!
//! Inequalities get slacks `h(z) + s = 0, s > 0` and a logarithmic barrier;
//! each iteration solves the slack-eliminated (reduced) KKT system
//!
//! ```text
//! [ H + Jhᵀ S⁻¹Λ Jh   Jgᵀ ] [dz ]   [ −r_d − Jhᵀ(μS⁻¹e − λh + S⁻¹Λ r_h) ]
//! [ Jg                 0  ] [dλg] = [ −g                                 ]
//! ```
//!
//! with `ds = −r_h − Jh·dz` and `dλh = S⁻¹(μe − SΛe − Λ·ds)` recovered
//! afterwards, a 0.995 fraction-to-boundary rule applied separately to the
//! primal (s) and dual (λh) iterates, and the monotone barrier update
//! `μ ← min(μ, max(μ/10, 0.1·sᵀλh/m))`. Convergence uses the scaled KKT
//! measures common to power-system interior-point codes: feasibility,
//! dual infeasibility, and complementarity each below `tol`.
//!
//! The reduced system is factored with sparse partial-pivoting LU; one retry
//! with diagonal regularization (±1e-8) precedes a numerical-failure verdict.

use crate::sparse::{rt, RTriplet, RealLu};

/// A smooth NLP with sparse first and second derivatives. Jacobians are in
/// triplet form (duplicates summed); the Lagrangian Hessian must include the
/// objective term and be given as the full symmetric matrix.
pub trait NlpModel {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn initial_point(&self) -> Vec<f64>;
    fn objective(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    fn eq_constraints(&self, z: &[f64]) -> Vec<f64>;
    fn ineq_constraints(&self, z: &[f64]) -> Vec<f64>;
    fn eq_jacobian(&self, z: &[f64]) -> Vec<RTriplet>;
    fn ineq_jacobian(&self, z: &[f64]) -> Vec<RTriplet>;
    /// `∇²f + Σ λg_r ∇²g_r + Σ λh_r ∇²h_r` at `z`.
    fn lagrangian_hessian(&self, z: &[f64], lam_eq: &[f64], lam_ineq: &[f64]) -> Vec<RTriplet>;
}

#[derive(Clone, Copy, Debug)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub barrier_init: f64,
    /// Unscaled primal violation additionally required at convergence, so a
    /// success certificate always means a truly feasible point.
    pub primal_feas_tol: f64,
    /// 0 silent, 1 per-solve summary, 2 per-iteration trace (via `log`).
    pub print_level: u8,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, barrier_init: 1.0, primal_feas_tol: 1e-7, print_level: 0 }
    }
}

/// Scaled KKT error components at an iterate.
#[derive(Clone, Copy, Debug)]
pub struct KktError {
    pub feasibility: f64,
    pub gradient: f64,
    pub complementarity: f64,
}

impl KktError {
    pub fn max(&self) -> f64 {
        self.feasibility.max(self.gradient).max(self.complementarity)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NlpError {
    #[error("no convergence in {iterations} iterations (KKT error {kkt:.3e})")]
    MaxIterations { iterations: usize, kkt: f64 },
    #[error("iterates stalled at infeasible point (constraint violation {feasibility:.3e})")]
    Infeasible { iterations: usize, feasibility: f64 },
    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },
}

#[derive(Clone, Debug)]
pub struct NlpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub lam_eq: Vec<f64>,
    pub lam_ineq: Vec<f64>,
    pub slacks: Vec<f64>,
    pub iterations: usize,
    pub kkt: KktError,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `Jᵀ·diag(d)·J` for a triplet Jacobian, grouped by row.
fn jt_d_j(n_rows: usize, j: &[RTriplet], d: &[f64]) -> Vec<RTriplet> {
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
    for t in j {
        by_row[t.row].push((t.col, t.val));
    }
    let mut out = Vec::new();
    for (r, entries) in by_row.iter().enumerate() {
        let w = d[r];
        if w == 0.0 {
            continue;
        }
        for &(ca, va) in entries {
            for &(cb, vb) in entries {
                out.push(rt(ca, cb, w * va * vb));
            }
        }
    }
    out
}

/// `Jᵀ·x` for a triplet Jacobian.
fn jt_x(n_cols: usize, j: &[RTriplet], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n_cols];
    for t in j {
        out[t.col] += t.val * x[t.row];
    }
    out
}

/// `J·x`.
fn j_x(n_rows: usize, j: &[RTriplet], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n_rows];
    for t in j {
        out[t.row] += t.val * x[t.col];
    }
    out
}

/// Longest step in `[0, 1]` keeping `v + α·dv ≥ (1 − ftb)·v` elementwise.
fn fraction_to_boundary(v: &[f64], dv: &[f64], ftb: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (x, dx) in v.iter().zip(dv) {
        if *dx < 0.0 {
            alpha = alpha.min(-ftb * x / dx);
        }
    }
    alpha.max(0.0)
}

pub fn solve_nlp(model: &impl NlpModel, options: &IpmOptions) -> Result<NlpSolution, NlpError> {
    let n = model.n_vars();
    let m_eq = model.n_eq();
    let m_in = model.n_ineq();
    let kdim = n + m_eq;

    let mut z = model.initial_point();
    assert_eq!(z.len(), n, "model initial point has wrong length");
    let mut mu = options.barrier_init;
    let h0 = model.ineq_constraints(&z);
    let mut s: Vec<f64> = h0.iter().map(|&h| (-h).max(0.1)).collect();
    let mut lam_h: Vec<f64> = s.iter().map(|&si| mu / si).collect();
    let mut lam_g = vec![0.0; m_eq];

    let mut iterations = 0;
    let mut last_kkt = KktError { feasibility: f64::INFINITY, gradient: f64::INFINITY, complementarity: f64::INFINITY };
    for iteration in 0..=options.max_iter {
        iterations = iteration;
        let g = model.eq_constraints(&z);
        let h = model.ineq_constraints(&z);
        let grad = model.gradient(&z);
        let jg = model.eq_jacobian(&z);
        let jh = model.ineq_jacobian(&z);

        // r_d = ∇f + Jgᵀλg + Jhᵀλh,  r_h = h + s,  gap = sᵀλh.
        let mut r_d = grad.clone();
        for (a, b) in r_d.iter_mut().zip(jt_x(n, &jg, &lam_g)) {
            *a += b;
        }
        for (a, b) in r_d.iter_mut().zip(jt_x(n, &jh, &lam_h)) {
            *a += b;
        }
        let r_h: Vec<f64> = h.iter().zip(&s).map(|(a, b)| a + b).collect();
        let gap: f64 = s.iter().zip(&lam_h).map(|(a, b)| a * b).sum();

        let viol_eq = inf_norm(&g);
        let viol_in = h.iter().fold(0.0_f64, |m, &x| m.max(x));
        let kkt = KktError {
            feasibility: viol_eq.max(viol_in)
                / (1.0 + inf_norm(&z).max(inf_norm(&s))),
            gradient: inf_norm(&r_d) / (1.0 + inf_norm(&lam_g).max(inf_norm(&lam_h))),
            complementarity: gap / (1.0 + inf_norm(&z)),
        };
        last_kkt = kkt;
        if !kkt.max().is_finite() {
            return Err(NlpError::NumericalFailure {
                iteration,
                message: "non-finite iterate".to_string(),
            });
        }
        if options.print_level >= 2 {
            log::debug!(
                "ipm iter {iteration}: f={:.6e} feas={:.3e} grad={:.3e} comp={:.3e} mu={:.3e} viol_eq={:.3e} znorm={:.3e}",
                model.objective(&z),
                kkt.feasibility,
                kkt.gradient,
                kkt.complementarity,
                mu,
                viol_eq,
                inf_norm(&z)
            );
        }
        if kkt.max() < options.tol && viol_eq.max(viol_in.max(0.0)) < options.primal_feas_tol {
            let objective = model.objective(&z);
            if options.print_level >= 1 {
                log::info!("ipm converged in {iteration} iterations, objective {objective:.6e}");
            }
            return Ok(NlpSolution {
                z,
                objective,
                lam_eq: lam_g,
                lam_ineq: lam_h,
                slacks: s,
                iterations: iteration,
                kkt,
            });
        }
        if iteration == options.max_iter {
            break;
        }

        let hess = model.lagrangian_hessian(&z, &lam_g, &lam_h);

        // rhs1 = −r_d − Jhᵀ(μ·S⁻¹e − λh + S⁻¹Λ·r_h).
        let w: Vec<f64> = (0..m_in)
            .map(|r| mu / s[r] - lam_h[r] + lam_h[r] * r_h[r] / s[r])
            .collect();
        let jhw = jt_x(n, &jh, &w);
        let mut rhs = vec![0.0; kdim];
        for c in 0..n {
            rhs[c] = -r_d[c] - jhw[c];
        }
        for r in 0..m_eq {
            rhs[n + r] = -g[r];
        }

        // Assemble the reduced KKT matrix; factor, retrying once with a
        // diagonal shift if the factorization or solve rejects it.
        let d_sl: Vec<f64> = (0..m_in).map(|r| lam_h[r] / s[r]).collect();
        let mut base_entries = hess;
        base_entries.extend(jt_d_j(m_in, &jh, &d_sl));
        for t in &jg {
            base_entries.push(rt(t.row + n, t.col, t.val));
            base_entries.push(rt(t.col, t.row + n, t.val));
        }
        let mut step = None;
        for reg in [0.0, 1e-8] {
            let mut entries = base_entries.clone();
            if reg > 0.0 {
                for c in 0..n {
                    entries.push(rt(c, c, reg));
                }
                for r in 0..m_eq {
                    entries.push(rt(n + r, n + r, -reg));
                }
            }
            if let Ok(lu) = RealLu::factor(kdim, &entries) {
                if let Ok(sol) = lu.solve(&rhs) {
                    step = Some(sol);
                    break;
                }
            }
        }
        let Some(sol) = step else {
            return Err(NlpError::NumericalFailure {
                iteration,
                message: "singular KKT system".to_string(),
            });
        };
        let dz = &sol[..n];
        let dlam_g = &sol[n..];

        let jh_dz = j_x(m_in, &jh, dz);
        let ds: Vec<f64> = (0..m_in).map(|r| -r_h[r] - jh_dz[r]).collect();
        let dlam_h: Vec<f64> = (0..m_in)
            .map(|r| (mu - s[r] * lam_h[r] - lam_h[r] * ds[r]) / s[r])
            .collect();

        let alpha_p = fraction_to_boundary(&s, &ds, 0.995);
        let alpha_d = fraction_to_boundary(&lam_h, &dlam_h, 0.995);
        if options.print_level >= 2 {
            log::debug!(
                "  step: alpha_p={:.3e} alpha_d={:.3e} |dz|={:.3e}",
                alpha_p,
                alpha_d,
                inf_norm(dz)
            );
        }
        for (zc, dzc) in z.iter_mut().zip(dz) {
            *zc += alpha_p * dzc;
        }
        for (sc, dsc) in s.iter_mut().zip(&ds) {
            *sc += alpha_p * dsc;
        }
        for (lc, dlc) in lam_g.iter_mut().zip(dlam_g) {
            *lc += alpha_d * dlc;
        }
        for (lc, dlc) in lam_h.iter_mut().zip(&dlam_h) {
            *lc += alpha_d * dlc;
        }
        if m_in > 0 {
            let gap_new: f64 = s.iter().zip(&lam_h).map(|(a, b)| a * b).sum();
            mu = mu.min((mu / 10.0).max(0.1 * gap_new / m_in as f64));
        }
    }

    // Distinguish "ran out of iterations while still honestly working" from
    // "parked at a point that violates the constraints".
    if last_kkt.feasibility > 1e-2 {
        return Err(NlpError::Infeasible { iterations, feasibility: last_kkt.feasibility });
    }
    Err(NlpError::MaxIterations { iterations, kkt: last_kkt.max() })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x−a)² + (y−b)²  s.t.  x + y = 1,  x ≤ xmax.
    struct ToyQp {
        a: f64,
        b: f64,
        xmax: Option<f64>,
    }

    impl NlpModel for ToyQp {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            usize::from(self.xmax.is_some())
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn objective(&self, z: &[f64]) -> f64 {
            (z[0] - self.a).powi(2) + (z[1] - self.b).powi(2)
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            vec![2.0 * (z[0] - self.a), 2.0 * (z[1] - self.b)]
        }
        fn eq_constraints(&self, z: &[f64]) -> Vec<f64> {
            vec![z[0] + z[1] - 1.0]
        }
        fn ineq_constraints(&self, z: &[f64]) -> Vec<f64> {
            self.xmax.map(|m| vec![z[0] - m]).unwrap_or_default()
        }
        fn eq_jacobian(&self, _z: &[f64]) -> Vec<RTriplet> {
            vec![rt(0, 0, 1.0), rt(0, 1, 1.0)]
        }
        fn ineq_jacobian(&self, _z: &[f64]) -> Vec<RTriplet> {
            if self.xmax.is_some() {
                vec![rt(0, 0, 1.0)]
            } else {
                Vec::new()
            }
        }
        fn lagrangian_hessian(&self, _z: &[f64], _le: &[f64], _li: &[f64]) -> Vec<RTriplet> {
            vec![rt(0, 0, 2.0), rt(1, 1, 2.0)]
        }
    }

    #[test]
    fn equality_only_qp() {
        let m = ToyQp { a: 1.0, b: 2.0, xmax: None };
        let sol = solve_nlp(&m, &IpmOptions::default()).unwrap();
        assert!((sol.z[0] - 0.0).abs() < 1e-6);
        assert!((sol.z[1] - 1.0).abs() < 1e-6);
        // Multiplier: ∇f + λ∇g = 0 at optimum → λ = −2(x−a) = 2.
        assert!((sol.lam_eq[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn active_inequality_binds() {
        let m = ToyQp { a: 0.5, b: 0.5, xmax: Some(0.3) };
        let sol = solve_nlp(&m, &IpmOptions::default()).unwrap();
        assert!((sol.z[0] - 0.3).abs() < 1e-6);
        assert!((sol.z[1] - 0.7).abs() < 1e-6);
        assert!(sol.lam_ineq[0] > 1e-3, "active constraint needs positive multiplier");
    }

    #[test]
    fn inactive_inequality_is_ignored() {
        let m = ToyQp { a: 0.5, b: 0.5, xmax: Some(5.0) };
        let sol = solve_nlp(&m, &IpmOptions::default()).unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-6);
        assert!((sol.z[1] - 0.5).abs() < 1e-6);
        assert!(sol.lam_ineq[0] < 1e-5);
    }

    /// min x² + y²  s.t.  x·y = 1 (nonconvex feasible set, curved Jacobian).
    struct Hyperbola;

    impl NlpModel for Hyperbola {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![1.5, 1.5]
        }
        fn objective(&self, z: &[f64]) -> f64 {
            z[0] * z[0] + z[1] * z[1]
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            vec![2.0 * z[0], 2.0 * z[1]]
        }
        fn eq_constraints(&self, z: &[f64]) -> Vec<f64> {
            vec![z[0] * z[1] - 1.0]
        }
        fn ineq_constraints(&self, _z: &[f64]) -> Vec<f64> {
            Vec::new()
        }
        fn eq_jacobian(&self, z: &[f64]) -> Vec<RTriplet> {
            vec![rt(0, 0, z[1]), rt(0, 1, z[0])]
        }
        fn ineq_jacobian(&self, _z: &[f64]) -> Vec<RTriplet> {
            Vec::new()
        }
        fn lagrangian_hessian(&self, _z: &[f64], le: &[f64], _li: &[f64]) -> Vec<RTriplet> {
            vec![
                rt(0, 0, 2.0),
                rt(1, 1, 2.0),
                rt(0, 1, le[0]),
                rt(1, 0, le[0]),
            ]
        }
    }

    #[test]
    fn nonlinear_equality() {
        let sol = solve_nlp(&Hyperbola, &IpmOptions::default()).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-5);
        assert!((sol.z[1] - 1.0).abs() < 1e-5);
        assert!((sol.objective - 2.0).abs() < 1e-5);
    }

    /// Inconsistent equalities: x = 0 and x = 1.
    struct Inconsistent;

    impl NlpModel for Inconsistent {
        fn n_vars(&self) -> usize {
            1
        }
        fn n_eq(&self) -> usize {
            2
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.5]
        }
        fn objective(&self, _z: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _z: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
        fn eq_constraints(&self, z: &[f64]) -> Vec<f64> {
            vec![z[0], z[0] - 1.0]
        }
        fn ineq_constraints(&self, _z: &[f64]) -> Vec<f64> {
            Vec::new()
        }
        fn eq_jacobian(&self, _z: &[f64]) -> Vec<RTriplet> {
            vec![rt(0, 0, 1.0), rt(1, 0, 1.0)]
        }
        fn ineq_jacobian(&self, _z: &[f64]) -> Vec<RTriplet> {
            Vec::new()
        }
        fn lagrangian_hessian(&self, _z: &[f64], _le: &[f64], _li: &[f64]) -> Vec<RTriplet> {
            Vec::new()
        }
    }

    #[test]
    fn inconsistent_equalities_fail_loudly() {
        let opts = IpmOptions { max_iter: 30, ..Default::default() };
        match solve_nlp(&Inconsistent, &opts) {
            Err(NlpError::Infeasible { .. })
            | Err(NlpError::NumericalFailure { .. })
            | Err(NlpError::MaxIterations { .. }) => {}
            Ok(sol) => panic!("impossible problem reported success at {:?}", sol.z),
        }
    }
}
