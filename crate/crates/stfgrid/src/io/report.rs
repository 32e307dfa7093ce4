//! JSON solution reports (`docs/solution-report.md`).
//!
//! Reports use the case's own bus numbering (`bus_ids`), physical units for
//! powers (MW/MVAr via `base_mva`), and per-unit voltages and currents.

use num_complex::Complex64;
use serde::Serialize;

use crate::netmodel::Network;
use crate::opf::{OpfProblem, OpfSolution};
use crate::powerflow::{PowerFlowSolution, ResidualReport};
use crate::tableau::{assemble_tableau, residuals};

#[derive(Clone, Debug, Serialize)]
pub struct BusRecord {
    pub bus: i64,
    pub vm_pu: f64,
    pub va_deg: f64,
    pub p_inj_mw: f64,
    pub q_inj_mvar: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PortRecord {
    pub bus: i64,
    pub i_mag_pu: f64,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ElementRecord {
    pub element: usize,
    pub kind: String,
    pub ports: Vec<PortRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRecord {
    pub kcl: f64,
    pub kvl: f64,
    pub element: f64,
    pub injection: f64,
}

impl From<&ResidualReport> for ResidualRecord {
    fn from(r: &ResidualReport) -> Self {
        Self { kcl: r.kcl, kvl: r.kvl, element: r.element, injection: r.injection }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorRecord {
    pub bus: i64,
    pub pg_mw: f64,
    pub qg_mvar: f64,
}

/// Shadow prices of the per-bus power balances (locational marginal prices).
#[derive(Clone, Debug, Serialize)]
pub struct MultiplierRecord {
    pub bus: i64,
    pub lambda_p_usd_per_mwh: f64,
    pub lambda_q_usd_per_mvarh: f64,
}

/// Top-level report: `kind` is `"pf"` or `"opf"`; `objective_per_hour` and
/// `generators` appear only for OPF.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionReport {
    pub case: String,
    pub kind: String,
    pub formulation: String,
    pub converged: bool,
    pub iterations: usize,
    pub base_mva: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_per_hour: Option<f64>,
    pub buses: Vec<BusRecord>,
    pub elements: Vec<ElementRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<GeneratorRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<MultiplierRecord>>,
    pub residuals: ResidualRecord,
}

impl SolutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

fn bus_records(
    network: &Network,
    bus_ids: &[i64],
    v_bus: &[Complex64],
    i_inj: &[Complex64],
) -> Vec<BusRecord> {
    let base = network.base_mva();
    v_bus
        .iter()
        .zip(i_inj)
        .enumerate()
        .map(|(j, (v, i))| {
            let s = v * i.conj() * base;
            BusRecord {
                bus: bus_ids[j],
                vm_pu: v.norm(),
                va_deg: v.arg().to_degrees(),
                p_inj_mw: s.re,
                q_inj_mvar: s.im,
            }
        })
        .collect()
}

fn element_records(
    network: &Network,
    bus_ids: &[i64],
    v_port: &[Complex64],
    i_port: &[Complex64],
) -> Vec<ElementRecord> {
    let base = network.base_mva();
    let mut out = Vec::with_capacity(network.elements().len());
    let mut port = 0;
    for (k, el) in network.elements().iter().enumerate() {
        let ports = el
            .attachment()
            .iter()
            .map(|bus| {
                let s = v_port[port] * i_port[port].conj() * base;
                let rec = PortRecord {
                    bus: bus_ids[bus.0],
                    i_mag_pu: i_port[port].norm(),
                    p_mw: s.re,
                    q_mvar: s.im,
                };
                port += 1;
                rec
            })
            .collect();
        out.push(ElementRecord { element: k, kind: el.kind().to_string(), ports });
    }
    out
}

/// Report for a converged power flow.
pub fn powerflow_report(
    case: &str,
    formulation: &str,
    network: &Network,
    bus_ids: &[i64],
    sol: &PowerFlowSolution,
) -> SolutionReport {
    SolutionReport {
        case: case.to_string(),
        kind: "pf".to_string(),
        formulation: formulation.to_string(),
        converged: true,
        iterations: sol.iterations,
        base_mva: network.base_mva(),
        objective_per_hour: None,
        buses: bus_records(network, bus_ids, &sol.v_bus, &sol.i_inj),
        elements: element_records(network, bus_ids, &sol.v_port, &sol.i_port),
        generators: None,
        multipliers: None,
        residuals: (&sol.residuals).into(),
    }
}

/// Report for a converged OPF. Residuals are re-evaluated from the raw
/// stamps, so the record reflects the solution as exported, not solver
/// bookkeeping.
pub fn opf_report(
    case: &str,
    network: &Network,
    bus_ids: &[i64],
    problem: &OpfProblem,
    sol: &OpfSolution,
) -> SolutionReport {
    let base = network.base_mva();
    let system = assemble_tableau(network, &sol.i_inj).expect("network was already assembled");
    let mut x = sol.v_bus.clone();
    x.extend_from_slice(&sol.v_port);
    x.extend_from_slice(&sol.i_port);
    let res = residuals(&system, &x).expect("state dimensions come from the same network");

    // Power-balance mismatch doubles as the injection residual: the KCL rows
    // above are consistent by construction of i_inj.
    let demand = network.demand_per_bus();
    let mut dispatch = vec![Complex64::ZERO; network.n_buses()];
    for (g, gen) in network.generators().iter().enumerate() {
        dispatch[gen.bus.0] += Complex64::new(sol.pg[g], sol.qg[g]);
    }
    let injection = sol
        .v_bus
        .iter()
        .zip(&sol.i_inj)
        .enumerate()
        .map(|(j, (v, i))| (dispatch[j] - demand[j] - v * i.conj()).norm())
        .fold(0.0, f64::max);

    let generators = network
        .generators()
        .iter()
        .enumerate()
        .map(|(g, gen)| GeneratorRecord {
            bus: bus_ids[gen.bus.0],
            pg_mw: sol.pg[g] * base,
            qg_mvar: sol.qg[g] * base,
        })
        .collect();
    let multipliers = sol
        .bus_prices(problem)
        .into_iter()
        .enumerate()
        .map(|(j, (lp, lq))| MultiplierRecord {
            bus: bus_ids[j],
            lambda_p_usd_per_mwh: lp,
            lambda_q_usd_per_mvarh: lq,
        })
        .collect();

    SolutionReport {
        case: case.to_string(),
        kind: "opf".to_string(),
        formulation: "stf".to_string(),
        converged: true,
        iterations: sol.iterations,
        base_mva: base,
        objective_per_hour: Some(sol.objective),
        buses: bus_records(network, bus_ids, &sol.v_bus, &sol.i_inj),
        elements: element_records(network, bus_ids, &sol.v_port, &sol.i_port),
        generators: Some(generators),
        multipliers: Some(multipliers),
        residuals: ResidualRecord {
            kcl: res.kcl_max(),
            kvl: res.kvl_max(),
            element: res.elem_max(),
            injection,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{BusId, ElementParams, NetworkElement};
    use crate::powerflow::{solve_powerflow_stf, BusSpec, PowerFlowOptions};

    #[test]
    fn report_serializes_with_expected_fields() {
        let el = NetworkElement::from_params(
            ElementParams::Line { r: 0.0, x: 0.1, b: 0.0 },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let net = crate::netmodel::Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .element(el)
            .load(1, Complex64::new(0.4, 0.1))
            .finalize()
            .unwrap();
        let spec = [
            BusSpec::Slack { v: Complex64::ONE },
            BusSpec::Pq { s: Complex64::new(-0.4, -0.1) },
        ];
        let sol = solve_powerflow_stf(&net, &spec, &PowerFlowOptions::default()).unwrap();
        let report = powerflow_report("twobus", "stf", &net, &[101, 102], &sol);
        let json = report.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["kind"], "pf");
        assert_eq!(parsed["buses"][1]["bus"], 102);
        assert!(parsed["residuals"]["kcl"].as_f64().unwrap() < 1e-8);
        assert!(parsed.get("objective_per_hour").is_none());
        // Load bus draws 40 MW.
        let p = parsed["buses"][1]["p_inj_mw"].as_f64().unwrap();
        assert!((p + 40.0).abs() < 1e-4);
    }

    #[test]
    fn opf_report_carries_objective_and_multipliers() {
        use crate::netmodel::{CostCurve, Generator};
        use crate::opf::{build_opf, solve_opf, OpfOptions};

        let el = NetworkElement::from_params(
            ElementParams::Line { r: 0.01, x: 0.1, b: 0.0 },
            vec![BusId(0), BusId(1)],
        )
        .unwrap();
        let gen = Generator::new(
            BusId(0),
            0.0,
            2.0,
            -1.0,
            1.0,
            CostCurve { alpha: 0.01, beta: 10.0, gamma_cost: 0.0 },
        )
        .unwrap();
        let net = crate::netmodel::Network::builder(100.0)
            .simple_bus(0)
            .simple_bus(1)
            .element(el)
            .generator(gen)
            .load(1, Complex64::new(0.5, 0.1))
            .finalize()
            .unwrap();
        let problem = build_opf(&net, BusId(0), &OpfOptions::default()).unwrap();
        let sol = solve_opf(&problem, &OpfOptions::default()).unwrap();
        let report = opf_report("twobus", &net, &[101, 102], &problem, &sol);
        let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed["kind"], "opf");
        assert!(parsed["objective_per_hour"].as_f64().unwrap() > 0.0);
        assert_eq!(parsed["generators"][0]["bus"], 101);
        assert_eq!(parsed["multipliers"].as_array().unwrap().len(), 2);
        // Load-bus energy price exceeds the generator-bus price under losses.
        let lp0 = parsed["multipliers"][0]["lambda_p_usd_per_mwh"].as_f64().unwrap();
        let lp1 = parsed["multipliers"][1]["lambda_p_usd_per_mwh"].as_f64().unwrap();
        assert!(lp1 > lp0 && lp0 > 0.0);
        for key in ["kcl", "kvl", "element", "injection"] {
            assert!(parsed["residuals"][key].as_f64().unwrap() < 1e-6);
        }
    }
}
