//! Versioned node-breaker exchange format, a TOML schema owned by this
//! repository (`docs/nodebreaker-format.md`).
//!
//! Unlike bus-branch case files, documents here describe substations at
//! switching granularity: breakers, ideal and tapped transformers, and
//! three-winding banks appear as first-class elements, exactly the devices a
//! Ybus cannot hold. All quantities are per-unit on `base_mva`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::netmodel::{
    Bus, BusId, CostCurve, ElementId, ElementParams, Generator, NetModelError, Network,
    NetworkElement, SwitchState,
};
use crate::powerflow::BusSpec;

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum NodeBreakerError {
    #[error("cannot read node-breaker file: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unsupported schema version {0} (this reader understands {SCHEMA_VERSION})")]
    UnsupportedVersion(i64),
    #[error("element {index}: unknown kind `{kind}`")]
    UnknownElementKind { index: usize, kind: String },
    #[error("element {index} ({kind}): {message}")]
    ElementField { index: usize, kind: String, message: String },
    #[error("custom element {0} has no schema representation")]
    Unrepresentable(ElementId),
    #[error(transparent)]
    Network(#[from] NetModelError),
}

fn schema(msg: impl Into<String>) -> NodeBreakerError {
    NodeBreakerError::Schema(msg.into())
}

// ---------------------------------------------------------------------------
// Document shape (serde).

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: i64,
    base_mva: f64,
    /// Bus carrying the angle reference; its generator sets the voltage.
    #[serde(skip_serializing_if = "Option::is_none")]
    slack: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slack_angle_deg: Option<f64>,
    #[serde(default)]
    bus: Vec<BusDoc>,
    #[serde(default)]
    element: Vec<ElementDoc>,
    #[serde(default)]
    generator: Vec<GeneratorDoc>,
    #[serde(default)]
    load: Vec<LoadDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: usize,
    #[serde(default = "default_base_kv", skip_serializing_if = "is_default_base_kv")]
    base_kv: f64,
    #[serde(default = "default_vmin")]
    vmin: f64,
    #[serde(default = "default_vmax")]
    vmax: f64,
}

fn default_base_kv() -> f64 {
    1.0
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_default_base_kv(v: &f64) -> bool {
    *v == 1.0
}

fn default_vmin() -> f64 {
    0.5
}

fn default_vmax() -> f64 {
    1.5
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementDoc {
    kind: String,
    buses: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shift_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    na: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rating: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorDoc {
    bus: usize,
    pmin: f64,
    pmax: f64,
    qmin: f64,
    qmax: f64,
    /// `[alpha, beta, gamma]` of `alpha·P² + beta·P + gamma` in $/h with P
    /// in MW.
    cost: [f64; 3],
    #[serde(default = "default_vset")]
    vset: f64,
    /// Scheduled active injection (per-unit). Required unless this is the
    /// slack bus's generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    p_set: Option<f64>,
}

fn default_vset() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadDoc {
    bus: usize,
    p: f64,
    #[serde(default)]
    q: f64,
}

// ---------------------------------------------------------------------------
// Parsing.

/// Reads a node-breaker document into a network and per-bus power-flow spec.
pub fn parse_nodebreaker(
    path: impl AsRef<Path>,
) -> Result<(Network, Vec<BusSpec>), NodeBreakerError> {
    parse_nodebreaker_str(&std::fs::read_to_string(path)?)
}

pub fn parse_nodebreaker_str(text: &str) -> Result<(Network, Vec<BusSpec>), NodeBreakerError> {
    let doc: Document = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
    if doc.version != SCHEMA_VERSION {
        return Err(NodeBreakerError::UnsupportedVersion(doc.version));
    }
    let mut builder = Network::builder(doc.base_mva);
    for b in &doc.bus {
        builder = builder.bus(Bus::new(BusId(b.id), b.base_kv, b.vmin, b.vmax)?);
    }
    for (index, e) in doc.element.iter().enumerate() {
        builder = builder.element(convert_element(index, e)?);
    }
    for g in &doc.generator {
        builder = builder.generator(Generator::new(
            BusId(g.bus),
            g.pmin,
            g.pmax,
            g.qmin,
            g.qmax,
            CostCurve { alpha: g.cost[0], beta: g.cost[1], gamma_cost: g.cost[2] },
        )?);
    }
    for l in &doc.load {
        builder = builder.load(l.bus, Complex64::new(l.p, l.q));
    }
    let network = builder.finalize()?;
    let spec = derive_spec(&doc, &network)?;
    Ok((network, spec))
}

fn convert_element(index: usize, e: &ElementDoc) -> Result<NetworkElement, NodeBreakerError> {
    let field_err = |message: String| NodeBreakerError::ElementField {
        index,
        kind: e.kind.clone(),
        message,
    };
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| field_err(format!("missing required field `{name}`")))
    };
    let arity_check = |want: usize| {
        if e.buses.len() == want {
            Ok(())
        } else {
            Err(field_err(format!("needs {want} buses, got {}", e.buses.len())))
        }
    };
    // Reject fields that belong to a different kind: catches typos that
    // would otherwise silently change the model.
    let allowed: &[&str] = match e.kind.as_str() {
        "line" => &["r", "x", "b"],
        "ideal_xfmr" => &["tap", "shift_deg"],
        "tap_xfmr" => &["tap", "shift_deg", "r", "x", "b"],
        "breaker" => &["gamma"],
        "three_winding" => &["na", "nb", "nc"],
        "shunt" => &["gs", "bs"],
        other => {
            return Err(NodeBreakerError::UnknownElementKind {
                index,
                kind: other.to_string(),
            })
        }
    };
    let present: &[(&str, bool)] = &[
        ("r", e.r.is_some()),
        ("x", e.x.is_some()),
        ("b", e.b.is_some()),
        ("tap", e.tap.is_some()),
        ("shift_deg", e.shift_deg.is_some()),
        ("gamma", e.gamma.is_some()),
        ("na", e.na.is_some()),
        ("nb", e.nb.is_some()),
        ("nc", e.nc.is_some()),
        ("gs", e.gs.is_some()),
        ("bs", e.bs.is_some()),
    ];
    for (name, is_set) in present {
        if *is_set && !allowed.contains(name) {
            return Err(field_err(format!("field `{name}` does not apply to this kind")));
        }
    }

    let params = match e.kind.as_str() {
        "line" => {
            arity_check(2)?;
            ElementParams::Line {
                r: e.r.unwrap_or(0.0),
                x: e.x.unwrap_or(0.0),
                b: e.b.unwrap_or(0.0),
            }
        }
        "ideal_xfmr" => {
            arity_check(2)?;
            let t = Complex64::from_polar(
                need("tap", e.tap)?,
                e.shift_deg.unwrap_or(0.0).to_radians(),
            );
            ElementParams::IdealTransformer { t }
        }
        "tap_xfmr" => {
            arity_check(2)?;
            let t = Complex64::from_polar(
                need("tap", e.tap)?,
                e.shift_deg.unwrap_or(0.0).to_radians(),
            );
            ElementParams::TapTransformer {
                t,
                r: e.r.unwrap_or(0.0),
                x: e.x.unwrap_or(0.0),
                b: e.b.unwrap_or(0.0),
            }
        }
        "breaker" => {
            arity_check(2)?;
            let gamma = e.gamma.ok_or_else(|| field_err("missing required field `gamma`".into()))?;
            let state = match gamma {
                0 => SwitchState::Open,
                1 => SwitchState::Closed,
                other => return Err(field_err(format!("gamma must be 0 or 1, got {other}"))),
            };
            ElementParams::Breaker { switch_state: state }
        }
        "three_winding" => {
            arity_check(3)?;
            ElementParams::ThreeWinding {
                na: need("na", e.na)?,
                nb: need("nb", e.nb)?,
                nc: need("nc", e.nc)?,
            }
        }
        "shunt" => {
            arity_check(1)?;
            ElementParams::Shunt {
                y_sh: Complex64::new(e.gs.unwrap_or(0.0), e.bs.unwrap_or(0.0)),
            }
        }
        _ => unreachable!("kind validated above"),
    };
    let attachment = e.buses.iter().map(|&b| BusId(b)).collect();
    let mut element = NetworkElement::from_params(params, attachment)?;
    if let Some(rating) = e.rating {
        element = element.with_rating(rating);
    }
    Ok(element)
}

/// Bus boundary conditions implied by the document: the `slack` bus takes its
/// generator's `vset` at `slack_angle_deg`; any other generator bus is PV
/// with `p_set` net of local load; remaining buses are PQ loads.
fn derive_spec(doc: &Document, network: &Network) -> Result<Vec<BusSpec>, NodeBreakerError> {
    let n = network.n_buses();
    let mut load_p = vec![0.0; n];
    let mut load_q = vec![0.0; n];
    for l in &doc.load {
        load_p[l.bus] += l.p;
        load_q[l.bus] += l.q;
    }
    if let Some(s) = doc.slack {
        if s >= n {
            return Err(schema(format!("slack bus {s} does not exist")));
        }
        if !doc.generator.iter().any(|g| g.bus == s) {
            return Err(schema(format!("slack bus {s} has no generator")));
        }
    }
    let slack = doc.slack.or_else(|| doc.generator.first().map(|g| g.bus));
    let angle = doc.slack_angle_deg.unwrap_or(0.0).to_radians();

    let mut spec = Vec::with_capacity(n);
    for j in 0..n {
        let gens: Vec<&GeneratorDoc> = doc.generator.iter().filter(|g| g.bus == j).collect();
        let entry = if Some(j) == slack {
            let vset = gens.first().map_or(1.0, |g| g.vset);
            BusSpec::Slack { v: Complex64::from_polar(vset, angle) }
        } else if !gens.is_empty() {
            let mut p = -load_p[j];
            for g in &gens {
                p += g.p_set.ok_or_else(|| {
                    schema(format!("generator at non-slack bus {j} needs p_set"))
                })?;
            }
            BusSpec::Pv { p, vm: gens[0].vset }
        } else {
            BusSpec::Pq { s: Complex64::new(-load_p[j], -load_q[j]) }
        };
        spec.push(entry);
    }
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Serialization.

/// Renders a network (plus its power-flow spec) back into schema text.
/// Inverse of [`parse_nodebreaker_str`] up to float formatting.
pub fn write_nodebreaker(network: &Network, spec: &[BusSpec]) -> Result<String, NodeBreakerError> {
    let mut slack = None;
    let mut slack_angle_deg = None;
    for (j, s) in spec.iter().enumerate() {
        if let BusSpec::Slack { v } = s {
            slack = Some(j);
            let deg = v.arg().to_degrees();
            if deg != 0.0 {
                slack_angle_deg = Some(deg);
            }
        }
    }
    let bus = network
        .buses()
        .iter()
        .map(|b| BusDoc { id: b.id.0, base_kv: b.base_kv, vmin: b.v_min, vmax: b.v_max })
        .collect();
    let element = network
        .elements()
        .iter()
        .enumerate()
        .map(|(k, el)| element_doc(ElementId(k), el))
        .collect::<Result<Vec<_>, _>>()?;

    let load: Vec<LoadDoc> = network
        .loads()
        .iter()
        .map(|l| LoadDoc { bus: l.bus.0, p: l.s_d.re, q: l.s_d.im })
        .collect();
    let mut load_p = vec![0.0; network.n_buses()];
    for l in &load {
        load_p[l.bus] += l.p;
    }

    let mut residual_p: Vec<Option<f64>> = spec
        .iter()
        .enumerate()
        .map(|(j, s)| match s {
            BusSpec::Pv { p, .. } => Some(p + load_p[j]),
            _ => None,
        })
        .collect();
    let generator = network
        .generators()
        .iter()
        .map(|g| {
            let j = g.bus.0;
            let (vset, p_set) = match spec[j] {
                BusSpec::Slack { v } => (v.norm(), None),
                BusSpec::Pv { vm, .. } => {
                    // First generator at the bus carries the whole schedule.
                    let p = residual_p[j].take().unwrap_or(0.0);
                    (vm, Some(p))
                }
                BusSpec::Pq { .. } => {
                    return Err(schema(format!(
                        "generator at bus {j} sits on a PQ bus; the schema cannot express that"
                    )))
                }
            };
            Ok(GeneratorDoc {
                bus: j,
                pmin: g.p_min,
                pmax: g.p_max,
                qmin: g.q_min,
                qmax: g.q_max,
                cost: [g.cost.alpha, g.cost.beta, g.cost.gamma_cost],
                vset,
                p_set,
            })
        })
        .collect::<Result<Vec<_>, NodeBreakerError>>()?;

    let doc = Document {
        version: SCHEMA_VERSION,
        base_mva: network.base_mva(),
        slack,
        slack_angle_deg,
        bus,
        element,
        generator,
        load,
    };
    toml::to_string_pretty(&doc).map_err(|e| schema(e.to_string()))
}

fn element_doc(id: ElementId, el: &NetworkElement) -> Result<ElementDoc, NodeBreakerError> {
    let buses = el.attachment().iter().map(|b| b.0).collect();
    let mut doc = ElementDoc { buses, rating: el.i_max(), ..Default::default() };
    match *el.params() {
        ElementParams::Line { r, x, b } => {
            doc.kind = "line".into();
            doc.r = Some(r);
            doc.x = Some(x);
            doc.b = Some(b);
        }
        ElementParams::IdealTransformer { t } => {
            doc.kind = "ideal_xfmr".into();
            doc.tap = Some(t.norm());
            doc.shift_deg = nonzero(t.arg().to_degrees());
        }
        ElementParams::TapTransformer { t, r, x, b } => {
            doc.kind = "tap_xfmr".into();
            doc.tap = Some(t.norm());
            doc.shift_deg = nonzero(t.arg().to_degrees());
            doc.r = Some(r);
            doc.x = Some(x);
            doc.b = Some(b);
        }
        ElementParams::Breaker { switch_state } => {
            doc.kind = "breaker".into();
            doc.gamma = Some(switch_state.gamma() as i64);
        }
        ElementParams::ThreeWinding { na, nb, nc } => {
            doc.kind = "three_winding".into();
            doc.na = Some(na);
            doc.nb = Some(nb);
            doc.nc = Some(nc);
        }
        ElementParams::Shunt { y_sh } => {
            doc.kind = "shunt".into();
            doc.gs = Some(y_sh.re);
            doc.bs = Some(y_sh.im);
        }
        ElementParams::Custom => return Err(NodeBreakerError::Unrepresentable(id)),
    }
    Ok(doc)
}

fn nonzero(v: f64) -> Option<f64> {
    (v != 0.0).then_some(v)
}
