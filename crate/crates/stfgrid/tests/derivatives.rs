//! Central finite-difference validation of every hand-coded derivative:
//! the power-flow Newton Jacobian, and the objective gradients, constraint
//! Jacobians, and Lagrangian Hessians of all three OPF formulations.
//!
//! Checks run at 20 random interior points per fixture with a fixed seed;
//! the gate everywhere is relative error < 1e-5 against central differences.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stfgrid::fixtures::three_bus_network;
use stfgrid::io::matpower::load_matpower;
use stfgrid::netmodel::{BusId, Network};
use stfgrid::opf::nlp::NlpModel;
use stfgrid::opf::oracle::{build_polar, build_rect_iv};
use stfgrid::opf::{build_opf, OpfOptions};
use stfgrid::powerflow::{BusSpec, StfPfSystem};
use stfgrid::sparse::RTriplet;

const POINTS: usize = 20;
const FD_STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;

fn case(name: &str) -> (Network, Vec<BusSpec>) {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("cases");
    let parsed = load_matpower(dir.join(format!("{name}.m"))).unwrap();
    (parsed.network, parsed.spec)
}

fn dense(rows: usize, cols: usize, trips: &[RTriplet]) -> Vec<f64> {
    let mut m = vec![0.0; rows * cols];
    for t in trips {
        m[t.row * cols + t.col] += t.val;
    }
    m
}

fn rel_err(fd: &[f64], analytic: &[f64]) -> f64 {
    let scale = 1.0 + analytic.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    fd.iter()
        .zip(analytic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale
}

/// Central difference of a vector-valued function, one column per variable.
fn fd_jacobian(mut f: impl FnMut(&[f64]) -> Vec<f64>, z: &[f64], rows: usize) -> Vec<f64> {
    let n = z.len();
    let mut jac = vec![0.0; rows * n];
    let mut zp = z.to_vec();
    for k in 0..n {
        let h = FD_STEP * (1.0 + z[k].abs());
        zp[k] = z[k] + h;
        let fp = f(&zp);
        zp[k] = z[k] - h;
        let fm = f(&zp);
        zp[k] = z[k];
        for r in 0..rows {
            jac[r * n + k] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

fn perturbed<R: rand::Rng>(rng: &mut R, z0: &[f64], radius: f64) -> Vec<f64> {
    z0.iter().map(|&v| v + rng.random_range(-radius..radius)).collect()
}

// ---------------------------------------------------------------------------
// Power-flow Newton Jacobian.

fn check_pf_jacobian(network: &Network, spec: &[BusSpec], seed: u64) {
    let sys = StfPfSystem::new(network, spec).unwrap();
    let z0 = sys.flat_start();
    let dim = sys.real_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..POINTS {
        let z = perturbed(&mut rng, &z0, 0.05);
        let analytic = dense(dim, dim, &sys.jacobian(&z));
        let fd = fd_jacobian(|p| sys.residual(p), &z, dim);
        let err = rel_err(&fd, &analytic);
        assert!(err < REL_TOL, "pf jacobian off by {err:.3e}");
    }
}

#[test]
fn pf_jacobian_matches_fd_case9() {
    let (network, spec) = case("case9");
    check_pf_jacobian(&network, &spec, 11);
}

#[test]
fn pf_jacobian_matches_fd_case14() {
    let (network, spec) = case("case14");
    check_pf_jacobian(&network, &spec, 12);
}

#[test]
fn pf_jacobian_matches_fd_three_bus() {
    let network = three_bus_network();
    let spec = stfgrid::fixtures::three_bus_spec();
    check_pf_jacobian(&network, &spec, 13);
}

// ---------------------------------------------------------------------------
// OPF model derivatives, generic over the NLP formulation.

fn check_nlp_derivatives<M: NlpModel>(model: &M, seed: u64, points: usize) {
    let n = model.n_vars();
    let (m_eq, m_in) = (model.n_eq(), model.n_ineq());
    let z0 = model.initial_point();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..points {
        let z = perturbed(&mut rng, &z0, 0.02);

        let analytic = model.gradient(&z);
        let fd = fd_jacobian(|p| vec![model.objective(p)], &z, 1);
        let err = rel_err(&fd, &analytic);
        assert!(err < REL_TOL, "objective gradient off by {err:.3e}");

        let analytic = dense(m_eq, n, &model.eq_jacobian(&z));
        let fd = fd_jacobian(|p| model.eq_constraints(p), &z, m_eq);
        let err = rel_err(&fd, &analytic);
        assert!(err < REL_TOL, "equality jacobian off by {err:.3e}");

        if m_in > 0 {
            let analytic = dense(m_in, n, &model.ineq_jacobian(&z));
            let fd = fd_jacobian(|p| model.ineq_constraints(p), &z, m_in);
            let err = rel_err(&fd, &analytic);
            assert!(err < REL_TOL, "inequality jacobian off by {err:.3e}");
        }

        // Hessian of L = f + λgᵀg + λhᵀh against the FD of its gradient.
        let lam_eq: Vec<f64> = (0..m_eq).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lam_in: Vec<f64> = (0..m_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad_l = |p: &[f64]| -> Vec<f64> {
            let mut g = model.gradient(p);
            for t in model.eq_jacobian(p) {
                g[t.col] += lam_eq[t.row] * t.val;
            }
            for t in model.ineq_jacobian(p) {
                g[t.col] += lam_in[t.row] * t.val;
            }
            g
        };
        let analytic = dense(n, n, &model.lagrangian_hessian(&z, &lam_eq, &lam_in));
        let fd = fd_jacobian(grad_l, &z, n);
        let err = rel_err(&fd, &analytic);
        assert!(err < REL_TOL, "lagrangian hessian off by {err:.3e}");
    }
}

fn reference_bus(spec: &[BusSpec]) -> BusId {
    BusId(spec.iter().position(|s| matches!(s, BusSpec::Slack { .. })).unwrap())
}

#[test]
fn stf_opf_derivatives_match_fd_case9() {
    let (network, spec) = case("case9");
    let problem = build_opf(&network, reference_bus(&spec), &OpfOptions::default()).unwrap();
    check_nlp_derivatives(&problem, 21, POINTS);
}

#[test]
fn stf_opf_derivatives_match_fd_three_bus() {
    let network = three_bus_network();
    let problem = build_opf(&network, BusId(0), &OpfOptions::default()).unwrap();
    check_nlp_derivatives(&problem, 22, POINTS);
}

#[test]
fn rect_iv_derivatives_match_fd_case9() {
    let (network, spec) = case("case9");
    let model = build_rect_iv(&network, reference_bus(&spec)).unwrap();
    check_nlp_derivatives(&model, 23, POINTS);
}

#[test]
fn rect_iv_derivatives_match_fd_three_bus() {
    let network = three_bus_network();
    let model = build_rect_iv(&network, BusId(0)).unwrap();
    check_nlp_derivatives(&model, 24, POINTS);
}

#[test]
fn polar_derivatives_match_fd_case9() {
    let (network, spec) = case("case9");
    let model = build_polar(&network, reference_bus(&spec)).unwrap();
    check_nlp_derivatives(&model, 25, POINTS);
}

#[test]
fn polar_derivatives_match_fd_three_bus() {
    let network = three_bus_network();
    let model = build_polar(&network, BusId(0)).unwrap();
    check_nlp_derivatives(&model, 26, POINTS);
}

// A larger case keeps the quadratic-in-size FD sweeps honest without
// blowing up runtime: 3 points instead of 20.
#[test]
fn stf_opf_derivatives_match_fd_case14() {
    let (network, spec) = case("case14");
    let problem = build_opf(&network, reference_bus(&spec), &OpfOptions::default()).unwrap();
    check_nlp_derivatives(&problem, 27, 3);
}
