//! Canonical networks shared by tests, examples, and the randomized CLI
//! checks, plus small topology-rewriting helpers (element permutation,
//! breaker toggling, closed-breaker merging) used as oracles.

use num_complex::Complex64;
use rand::{Rng, RngExt};

use crate::netmodel::{
    Bus, BusId, CostCurve, ElementId, ElementParams, ElementStamp, Generator, Network,
    NetworkElement, SwitchState,
};
use crate::powerflow::BusSpec;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn line(a: usize, b: usize, r: f64, x: f64, chg: f64) -> NetworkElement {
    NetworkElement::from_params(
        ElementParams::Line { r, x, b: chg },
        vec![BusId(a), BusId(b)],
    )
    .expect("fixture line parameters are valid")
}

fn breaker(a: usize, b: usize, state: SwitchState) -> NetworkElement {
    NetworkElement::from_params(
        ElementParams::Breaker { switch_state: state },
        vec![BusId(a), BusId(b)],
    )
    .expect("breaker stamp is parameter-free")
}

/// Textbook two-bus circuit: an ideal `n1:n2` transformer between the buses,
/// a grounded series impedance `z` at bus 1, and a fixed voltage source `e`
/// at bus 0. All three stamps are written in their raw (unnormalized) form,
///
///   n2·v1 − n1·v2 = 0,   n1·i1 + n2·i2 = 0,   v3 − z·i3 = 0,   v4 = e,
///
/// so the assembled 10x10 tableau can be checked entrywise against a
/// hand-written matrix. `n1`, `n2` must be nonzero for solvability.
pub fn fig2_circuit(n1: f64, n2: f64, z: Complex64, e: Complex64) -> Network {
    use nalgebra::{DMatrix, DVector};

    let zero = Complex64::ZERO;
    let one = Complex64::ONE;
    let transformer = ElementStamp::new(
        DMatrix::from_row_slice(2, 2, &[c(n2, 0.0), c(-n1, 0.0), zero, zero]),
        DMatrix::from_row_slice(2, 2, &[zero, zero, c(n1, 0.0), c(n2, 0.0)]),
        DVector::from_element(2, zero),
    )
    .expect("transformer stamp has rank 2");
    let impedance = ElementStamp::new(
        DMatrix::from_element(1, 1, one),
        DMatrix::from_element(1, 1, -z),
        DVector::from_element(1, zero),
    )
    .expect("impedance stamp has rank 1");
    let source = ElementStamp::new(
        DMatrix::from_element(1, 1, one),
        DMatrix::from_element(1, 1, zero),
        DVector::from_element(1, e),
    )
    .expect("source stamp has rank 1");

    Network::builder(1.0)
        .simple_bus(0)
        .simple_bus(1)
        .element(NetworkElement::custom(transformer, vec![BusId(0), BusId(1)]).unwrap())
        .element(NetworkElement::custom(impedance, vec![BusId(1)]).unwrap())
        .element(NetworkElement::custom(source, vec![BusId(0)]).unwrap())
        .finalize()
        .expect("fig2 circuit is connected")
}

/// Per-line constants of the three-bus fixture, in element order
/// (bus0→bus2, bus2→bus1, bus0→bus1): `(r, x, b)`.
pub const THREE_BUS_LINES: [(f64, f64, f64); 3] =
    [(0.01, 0.06, 0.06), (0.02, 0.08, 0.05), (0.015, 0.07, 0.04)];

/// Three buses joined by three lines in a ring: element 0 spans buses 0→2,
/// element 1 spans 2→1, element 2 spans 0→1. One generator at bus 0 and
/// loads at buses 1 and 2 make every solver runnable on it. The same network
/// ships as `cases/three_bus.nb.toml`.
pub fn three_bus_network() -> Network {
    let [l1, l2, l3] = THREE_BUS_LINES;
    let mut builder = Network::builder(100.0);
    for id in 0..3 {
        builder = builder.bus(Bus::new(BusId(id), 1.0, 0.9, 1.1).unwrap());
    }
    builder
        .element(line(0, 2, l1.0, l1.1, l1.2))
        .element(line(2, 1, l2.0, l2.1, l2.2))
        .element(line(0, 1, l3.0, l3.1, l3.2))
        .generator(
            Generator::new(
                BusId(0),
                0.0,
                3.0,
                -2.0,
                2.0,
                CostCurve { alpha: 0.02, beta: 30.0, gamma_cost: 0.0 },
            )
            .unwrap(),
        )
        .load(1, c(0.9, 0.3))
        .load(2, c(0.4, 0.1))
        .finalize()
        .expect("three-bus fixture is connected")
}

/// Boundary conditions matching [`three_bus_network`]: slack at bus 0, PQ
/// loads elsewhere.
pub fn three_bus_spec() -> Vec<BusSpec> {
    vec![
        BusSpec::Slack { v: Complex64::ONE },
        BusSpec::Pq { s: c(-0.9, -0.3) },
        BusSpec::Pq { s: c(-0.4, -0.1) },
    ]
}

/// Smallest solvable grid: one line, a generator, a load.
pub fn two_bus_line() -> (Network, Vec<BusSpec>) {
    let network = Network::builder(100.0)
        .simple_bus(0)
        .simple_bus(1)
        .element(line(0, 1, 0.01, 0.1, 0.02))
        .generator(
            Generator::new(
                BusId(0),
                0.0,
                2.0,
                -1.0,
                1.0,
                CostCurve { alpha: 0.01, beta: 20.0, gamma_cost: 0.0 },
            )
            .unwrap(),
        )
        .load(1, c(0.5, 0.15))
        .finalize()
        .expect("two-bus fixture is connected");
    let spec = vec![
        BusSpec::Slack { v: Complex64::ONE },
        BusSpec::Pq { s: c(-0.5, -0.15) },
    ];
    (network, spec)
}

/// Substation at switching granularity: buses 0 and 1 are two sections of
/// one station tied by a breaker, feeding remote buses 2 and 3 over a ring
/// of lines. Connectivity survives either breaker state, so the fixture
/// exercises both the merged-bus and the element-deleted equivalence.
pub fn substation_network(state: SwitchState) -> (Network, Vec<BusSpec>) {
    let network = Network::builder(100.0)
        .simple_bus(0)
        .simple_bus(1)
        .simple_bus(2)
        .simple_bus(3)
        .element(breaker(0, 1, state))
        .element(line(0, 2, 0.01, 0.08, 0.04))
        .element(line(1, 3, 0.012, 0.09, 0.05))
        .element(line(2, 3, 0.02, 0.16, 0.06))
        .generator(
            Generator::new(
                BusId(0),
                0.0,
                4.0,
                -3.0,
                3.0,
                CostCurve { alpha: 0.015, beta: 25.0, gamma_cost: 0.0 },
            )
            .unwrap(),
        )
        .load(2, c(0.7, 0.2))
        .load(3, c(0.5, 0.18))
        .finalize()
        .expect("substation fixture is connected in both breaker states");
    let spec = vec![
        BusSpec::Slack { v: Complex64::new(1.02, 0.0) },
        BusSpec::Pq { s: Complex64::ZERO },
        BusSpec::Pq { s: c(-0.7, -0.2) },
        BusSpec::Pq { s: c(-0.5, -0.18) },
    ];
    (network, spec)
}

/// Four buses with an ideal three-winding bank on buses 1, 2, 3 fed from a
/// generator at bus 0. Winding ratios 2:1:1 halve the voltage on the
/// secondary and tertiary sides.
pub const THREE_WINDING_RATIOS: (f64, f64, f64) = (2.0, 1.0, 1.0);

pub fn three_winding_network() -> (Network, Vec<BusSpec>) {
    let (na, nb, nc) = THREE_WINDING_RATIOS;
    let network = Network::builder(100.0)
        .simple_bus(0)
        .simple_bus(1)
        .simple_bus(2)
        .simple_bus(3)
        .element(line(0, 1, 0.01, 0.05, 0.02))
        .element(
            NetworkElement::from_params(
                ElementParams::ThreeWinding { na, nb, nc },
                vec![BusId(1), BusId(2), BusId(3)],
            )
            .unwrap(),
        )
        .generator(
            Generator::new(
                BusId(0),
                0.0,
                2.0,
                -1.5,
                1.5,
                CostCurve { alpha: 0.02, beta: 28.0, gamma_cost: 0.0 },
            )
            .unwrap(),
        )
        .load(2, c(0.12, 0.03))
        .load(3, c(0.1, 0.02))
        .finalize()
        .expect("three-winding fixture is connected");
    let spec = vec![
        BusSpec::Slack { v: Complex64::ONE },
        BusSpec::Pq { s: Complex64::ZERO },
        BusSpec::Pq { s: c(-0.12, -0.03) },
        BusSpec::Pq { s: c(-0.1, -0.02) },
    ];
    (network, spec)
}

/// Draws a connected network containing only elements with invertible
/// current blocks: lines, tap transformers, shunts, and open breakers. A
/// random spanning tree guarantees connectivity; extra chords and shunts add
/// meshing. Sizes range over 4..=12 buses.
pub fn random_reducible_network<R: Rng + ?Sized>(rng: &mut R) -> Network {
    let n = rng.random_range(4..=12usize);
    let mut builder = Network::builder(100.0);
    for id in 0..n {
        builder = builder.simple_bus(id);
    }
    for b in 1..n {
        let a = rng.random_range(0..b);
        builder = builder.element(random_branch(rng, a, b));
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        // Open breakers are reducible (identity current block) and must not
        // disturb the Ybus; sprinkle a few in as chords.
        let el = if rng.random_bool(0.2) {
            breaker(a, b, SwitchState::Open)
        } else {
            random_branch(rng, a, b)
        };
        builder = builder.element(el);
    }
    for id in 0..n {
        if rng.random_bool(0.3) {
            let y_sh = c(rng.random_range(0.0..0.05), rng.random_range(-0.3..0.3));
            builder = builder
                .element(NetworkElement::from_params(ElementParams::Shunt { y_sh }, vec![BusId(id)]).unwrap());
        }
    }
    builder.finalize().expect("spanning tree keeps the draw connected")
}

fn random_branch<R: Rng + ?Sized>(rng: &mut R, a: usize, b: usize) -> NetworkElement {
    let r = rng.random_range(0.002..0.05);
    let x = rng.random_range(0.02..0.3);
    let chg = rng.random_range(0.0..0.4);
    if rng.random_bool(0.3) {
        let t = Complex64::from_polar(
            rng.random_range(0.9..1.1),
            rng.random_range(-0.2..0.2f64),
        );
        NetworkElement::from_params(
            ElementParams::TapTransformer { t, r, x, b: chg },
            vec![BusId(a), BusId(b)],
        )
        .expect("random tap transformer parameters are valid")
    } else {
        line(a, b, r, x, chg)
    }
}

/// Clones `network` with its element list replaced wholesale. Buses,
/// generators, and loads carry over unchanged.
pub fn rebuild_with_elements(
    network: &Network,
    elements: impl IntoIterator<Item = NetworkElement>,
) -> Network {
    let mut builder = Network::builder(network.base_mva());
    for bus in network.buses() {
        builder = builder.bus(bus.clone());
    }
    for el in elements {
        builder = builder.element(el);
    }
    for g in network.generators() {
        builder = builder.generator(g.clone());
    }
    for l in network.loads() {
        builder = builder.load(l.bus.0, l.s_d);
    }
    builder.finalize().expect("rewrite preserves validity")
}

/// Reorders elements: new element `k` is the old `perm[k]`. Buses,
/// generators, and loads are untouched. `perm` must be a permutation of
/// `0..elements.len()`.
pub fn permute_elements(network: &Network, perm: &[usize]) -> Network {
    assert_eq!(perm.len(), network.elements().len(), "perm length");
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        assert!(!seen[p], "perm must not repeat indices");
        seen[p] = true;
    }
    rebuild_with_elements(network, perm.iter().map(|&p| network.elements()[p].clone()))
}

/// Returns the network with element `id`'s breaker switched to `state`.
/// Panics if `id` is not a breaker.
pub fn with_breaker_state(network: &Network, id: ElementId, state: SwitchState) -> Network {
    let elements = network.elements().iter().enumerate().map(|(k, el)| {
        if k == id.0 {
            assert!(
                matches!(el.params(), ElementParams::Breaker { .. }),
                "element {id} is not a breaker"
            );
            let swapped = NetworkElement::from_params(
                ElementParams::Breaker { switch_state: state },
                el.attachment().to_vec(),
            )
            .unwrap();
            match el.i_max() {
                Some(rating) => swapped.with_rating(rating),
                None => swapped,
            }
        } else {
            el.clone()
        }
    });
    rebuild_with_elements(network, elements.collect::<Vec<_>>())
}

/// Returns the network with element `id` removed; the oracle for the
/// open-breaker equivalence.
pub fn without_element(network: &Network, id: ElementId) -> Network {
    let elements = network
        .elements()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != id.0)
        .map(|(_, el)| el.clone());
    rebuild_with_elements(network, elements.collect::<Vec<_>>())
}

/// Bus-branch view of a node-breaker network, produced by classic topology
/// processing: buses tied by closed breakers collapse into one, breakers
/// disappear, everything else is re-attached through `bus_map`.
pub struct MergedCase {
    pub network: Network,
    pub spec: Vec<BusSpec>,
    /// Old bus index → merged bus index.
    pub bus_map: Vec<usize>,
}

/// Merges every group of buses joined by closed breakers and drops all
/// breakers (open ones carry no current). Specs combine per group: a slack
/// absorbs everything, a PV keeps its setpoint plus the group's fixed real
/// injections, pure PQ groups add complex powers. At most one non-PQ spec
/// per group is supported, which covers substation fixtures.
pub fn merge_closed_breakers(network: &Network, spec: &[BusSpec]) -> MergedCase {
    let n = network.n_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut j: usize) -> usize {
        while parent[j] != j {
            parent[j] = parent[parent[j]];
            j = parent[j];
        }
        j
    }
    for el in network.elements() {
        if let ElementParams::Breaker { switch_state: SwitchState::Closed } = el.params() {
            let a = find(&mut parent, el.attachment()[0].0);
            let b = find(&mut parent, el.attachment()[1].0);
            parent[a.max(b)] = a.min(b);
        }
    }

    // Dense renumbering in ascending representative order.
    let mut bus_map = vec![usize::MAX; n];
    let mut merged = 0;
    for j in 0..n {
        if find(&mut parent, j) == j {
            bus_map[j] = merged;
            merged += 1;
        }
    }
    for j in 0..n {
        let root = find(&mut parent, j);
        bus_map[j] = bus_map[root];
    }

    let mut builder = Network::builder(network.base_mva());
    for j in 0..n {
        if find(&mut parent, j) == j {
            let old = &network.buses()[j];
            builder = builder
                .bus(Bus::new(BusId(bus_map[j]), old.base_kv, old.v_min, old.v_max).unwrap());
        }
    }
    for el in network.elements() {
        if matches!(el.params(), ElementParams::Breaker { .. }) {
            continue;
        }
        let attachment = el.attachment().iter().map(|b| BusId(bus_map[b.0])).collect();
        let moved = NetworkElement::from_params(el.params().clone(), attachment)
            .expect("re-attachment preserves element validity");
        let moved = match el.i_max() {
            Some(rating) => moved.with_rating(rating),
            None => moved,
        };
        builder = builder.element(moved);
    }
    for g in network.generators() {
        let mut g = g.clone();
        g.bus = BusId(bus_map[g.bus.0]);
        builder = builder.generator(g);
    }
    for l in network.loads() {
        builder = builder.load(bus_map[l.bus.0], l.s_d);
    }
    let network = builder.finalize().expect("merging keeps the network connected");

    let mut merged_spec = vec![BusSpec::Pq { s: Complex64::ZERO }; merged];
    let mut anchored = vec![false; merged];
    for (j, s) in spec.iter().enumerate() {
        let t = bus_map[j];
        match (s, &mut merged_spec[t]) {
            (BusSpec::Slack { v }, slot) => {
                assert!(!anchored[t], "two anchors merged into bus {t}");
                anchored[t] = true;
                *slot = BusSpec::Slack { v: *v };
            }
            (BusSpec::Pv { p, vm }, slot @ BusSpec::Pq { .. }) => {
                let fixed = match slot {
                    BusSpec::Pq { s } => s.re,
                    _ => unreachable!(),
                };
                assert!(!anchored[t], "two anchors merged into bus {t}");
                anchored[t] = true;
                *slot = BusSpec::Pv { p: p + fixed, vm: *vm };
            }
            (BusSpec::Pq { s }, BusSpec::Pq { s: acc }) => *acc += s,
            (BusSpec::Pq { s }, BusSpec::Pv { p, .. }) => *p += s.re,
            (BusSpec::Pq { .. }, BusSpec::Slack { .. }) => {}
            (BusSpec::Pv { .. }, _) => panic!("two anchors merged into bus {t}"),
        }
    }
    MergedCase { network, spec: merged_spec, bus_map }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    use crate::reduction::{assess_reducibility, direct_ybus, reduce_to_ybus};
    use crate::tableau::build_incidence;

    #[test]
    fn fig2_has_expected_shape() {
        let net = fig2_circuit(2.0, 1.0, c(0.0, 0.5), Complex64::ONE);
        assert_eq!(net.n_buses(), 2);
        let inc = build_incidence(&net).unwrap();
        // 2 transformer ports + impedance + source.
        assert_eq!(inc.n_ports(), 4);
    }

    #[test]
    fn three_bus_incidence_is_the_golden_matrix() {
        let inc = build_incidence(&three_bus_network()).unwrap();
        let expect = [
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        ];
        assert_eq!(inc.to_dense(), expect.map(|row| row.to_vec()).to_vec());
    }

    #[test]
    fn random_networks_are_reducible_and_consistent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let net = random_reducible_network(&mut rng);
            assert!(assess_reducibility(&net).is_reducible());
            let reduced = reduce_to_ybus(&net).unwrap();
            let direct = direct_ybus(&net).unwrap();
            assert!(reduced.max_abs_diff(&direct) < 1e-9);
        }
    }

    #[test]
    fn permute_elements_is_a_reordering() {
        let net = three_bus_network();
        let permuted = permute_elements(&net, &[2, 0, 1]);
        assert_eq!(permuted.elements()[0].attachment(), net.elements()[2].attachment());
        assert_eq!(permuted.elements().len(), 3);
    }

    #[test]
    fn breaker_toggle_and_delete() {
        let (net, _) = substation_network(SwitchState::Closed);
        let open = with_breaker_state(&net, ElementId(0), SwitchState::Open);
        assert!(matches!(
            open.elements()[0].params(),
            ElementParams::Breaker { switch_state: SwitchState::Open }
        ));
        let gone = without_element(&net, ElementId(0));
        assert_eq!(gone.elements().len(), net.elements().len() - 1);
    }

    #[test]
    fn merge_collapses_breaker_group() {
        let (net, spec) = substation_network(SwitchState::Closed);
        let merged = merge_closed_breakers(&net, &spec);
        assert_eq!(merged.network.n_buses(), 3);
        assert_eq!(merged.bus_map, vec![0, 0, 1, 2]);
        // No breakers survive, loads re-attach.
        assert!(merged
            .network
            .elements()
            .iter()
            .all(|el| !matches!(el.params(), ElementParams::Breaker { .. })));
        assert_eq!(merged.spec[0], BusSpec::Slack { v: Complex64::new(1.02, 0.0) });
    }
}
