//! Parsing, writing, and fixture agreement for every case file the crate
//! ships, in both the flat matpower-style format and the node-breaker TOML
//! schema.

use std::path::PathBuf;

use stfgrid::fixtures;
use stfgrid::io::matpower::{case_to_network, load_matpower, parse_case_str, write_case_str};
use stfgrid::io::nodebreaker::{parse_nodebreaker, parse_nodebreaker_str, write_nodebreaker};
use stfgrid::netmodel::{Network, SwitchState};
use stfgrid::powerflow::BusSpec;
use stfgrid::reduction::{direct_ybus, reduce_to_ybus};

const MATPOWER_CASES: [&str; 4] = ["case9", "case14", "case118", "case300"];
const NODEBREAKER_CASES: [&str; 3] = ["three_bus", "substation", "three_winding"];

fn case_path(file: &str) -> PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("cases").join(file)
}

fn assert_network_eq(got: &Network, want: &Network) {
    assert_eq!(got.base_mva(), want.base_mva(), "base MVA");
    assert_eq!(got.n_buses(), want.n_buses(), "bus count");
    for (a, b) in got.buses().iter().zip(want.buses()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.base_kv, b.base_kv, "bus {} base kV", a.id);
        assert_eq!(a.v_min, b.v_min, "bus {} v_min", a.id);
        assert_eq!(a.v_max, b.v_max, "bus {} v_max", a.id);
    }
    assert_eq!(got.elements().len(), want.elements().len(), "element count");
    for (k, (a, b)) in got.elements().iter().zip(want.elements()).enumerate() {
        assert_eq!(a.kind(), b.kind(), "element {k} kind");
        assert_eq!(a.params(), b.params(), "element {k} params");
        assert_eq!(a.attachment(), b.attachment(), "element {k} attachment");
        assert_eq!(a.i_max(), b.i_max(), "element {k} rating");
        assert_eq!(a.stamp(), b.stamp(), "element {k} stamp");
    }
    assert_eq!(got.generators().len(), want.generators().len(), "generator count");
    for (g, (a, b)) in got.generators().iter().zip(want.generators()).enumerate() {
        assert_eq!(a.bus, b.bus, "gen {g} bus");
        assert_eq!((a.p_min, a.p_max), (b.p_min, b.p_max), "gen {g} P bounds");
        assert_eq!((a.q_min, a.q_max), (b.q_min, b.q_max), "gen {g} Q bounds");
        assert_eq!(a.cost, b.cost, "gen {g} cost");
    }
    assert_eq!(got.loads().len(), want.loads().len(), "load count");
    for (l, (a, b)) in got.loads().iter().zip(want.loads()).enumerate() {
        assert_eq!(a.bus, b.bus, "load {l} bus");
        assert_eq!(a.s_d, b.s_d, "load {l} demand");
    }
}

#[test]
fn shipped_matpower_cases_parse_validate_and_reduce() {
    for name in MATPOWER_CASES {
        let parsed = load_matpower(case_path(&format!("{name}.m"))).unwrap();
        parsed.network.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parsed.spec.len(), parsed.network.n_buses());

        let reduced = reduce_to_ybus(&parsed.network).unwrap();
        let direct = direct_ybus(&parsed.network).unwrap();
        let diff = reduced.max_abs_diff(&direct);
        assert!(diff < 1e-9, "{name}: |reduced - direct| = {diff:.3e}");
    }
}

#[test]
fn shipped_nodebreaker_cases_parse_and_validate() {
    for name in NODEBREAKER_CASES {
        let (network, spec) = parse_nodebreaker(case_path(&format!("{name}.nb.toml")))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        network.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(spec.len(), network.n_buses());
        assert!(spec.iter().any(|s| matches!(s, BusSpec::Slack { .. })), "{name}: no slack");
    }
}

#[test]
fn three_bus_toml_matches_fixture() {
    let (network, spec) = parse_nodebreaker(case_path("three_bus.nb.toml")).unwrap();
    assert_network_eq(&network, &fixtures::three_bus_network());
    assert_eq!(spec, fixtures::three_bus_spec());
}

#[test]
fn substation_toml_matches_fixture() {
    let (network, spec) = parse_nodebreaker(case_path("substation.nb.toml")).unwrap();
    let (want_net, want_spec) = fixtures::substation_network(SwitchState::Closed);
    assert_network_eq(&network, &want_net);
    assert_eq!(spec, want_spec);
}

#[test]
fn three_winding_toml_matches_fixture() {
    let (network, spec) = parse_nodebreaker(case_path("three_winding.nb.toml")).unwrap();
    let (want_net, want_spec) = fixtures::three_winding_network();
    assert_network_eq(&network, &want_net);
    assert_eq!(spec, want_spec);
}

#[test]
fn nodebreaker_round_trips_exactly() {
    for name in NODEBREAKER_CASES {
        let (network, spec) = parse_nodebreaker(case_path(&format!("{name}.nb.toml"))).unwrap();
        let text = write_nodebreaker(&network, &spec).unwrap();
        let (network2, spec2) = parse_nodebreaker_str(&text)
            .unwrap_or_else(|e| panic!("{name} rewrite: {e}\n{text}"));
        assert_network_eq(&network2, &network);
        assert_eq!(spec2, spec, "{name}: spec changed over round trip");
    }
}

#[test]
fn matpower_round_trips_exactly() {
    for name in ["case9", "case14"] {
        let text = std::fs::read_to_string(case_path(&format!("{name}.m"))).unwrap();
        let case = parse_case_str(&text, name).unwrap();
        let rewritten = write_case_str(&case);
        let case2 = parse_case_str(&rewritten, name).unwrap();

        let (net, spec) = case_to_network(&case).unwrap();
        let (net2, spec2) = case_to_network(&case2).unwrap();
        assert_network_eq(&net2, &net);
        assert_eq!(spec2, spec);
    }
}

/// The three-bus case exists in both formats; they must describe the same
/// network bus-for-bus and stamp-for-stamp.
#[test]
fn toml_cases_agree_with_matpower_on_shared_topology() {
    let (network, _) = parse_nodebreaker(case_path("three_bus.nb.toml")).unwrap();
    let reduced = reduce_to_ybus(&network).unwrap();
    let direct = direct_ybus(&network).unwrap();
    assert!(reduced.max_abs_diff(&direct) < 1e-12);
}
