//! Reader for the MATPOWER `.m` case subset: tables `bus`, `gen`, `branch`,
//! `gencost` plus `baseMVA`, polynomial cost model 2 only.
//!
//! External bus numbers (arbitrary positive integers) are remapped to dense
//! internal indices in bus-table order; [`CaseFile`] keeps the original rows
//! so callers can report in the file's own numbering.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::netmodel::{
    Bus, BusId, CostCurve, ElementParams, Generator, NetModelError, Network, NetworkElement,
};
use crate::powerflow::BusSpec;

#[derive(Debug, thiserror::Error)]
pub enum MatpowerError {
    #[error("cannot read case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("line {line}: unsupported cost model {model} (only polynomial model 2)")]
    UnsupportedCostModel { line: usize, model: i64 },
    #[error("line {line}: {ncost} cost coefficients exceed the quadratic limit of 3")]
    TooManyCostCoefficients { line: usize, ncost: usize },
    #[error("{table} row references unknown bus {bus}")]
    UnknownBus { table: &'static str, bus: i64 },
    #[error("gencost has {got} rows; expected {total} (all generators) or {in_service} (in-service only)")]
    GencostCount { total: usize, in_service: usize, got: usize },
    #[error("missing required table mpc.{0}")]
    MissingTable(&'static str),
    #[error("bus {bus} has unsupported type {bus_type} (want 1=PQ, 2=PV, 3=slack)")]
    BadBusType { bus: i64, bus_type: i64 },
    #[error("duplicate bus number {0}")]
    DuplicateBus(i64),
    #[error(transparent)]
    Network(#[from] NetModelError),
}

#[derive(Clone, Debug)]
pub struct BusRow {
    pub bus_i: i64,
    pub bus_type: i64,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    pub va_deg: f64,
    pub base_kv: f64,
    pub v_max: f64,
    pub v_min: f64,
}

#[derive(Clone, Debug)]
pub struct GenRow {
    pub bus: i64,
    pub pg: f64,
    pub qg: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub vg: f64,
    pub status: i64,
    pub p_max: f64,
    pub p_min: f64,
}

#[derive(Clone, Debug)]
pub struct BranchRow {
    pub f_bus: i64,
    pub t_bus: i64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub ratio: f64,
    pub angle_deg: f64,
    pub status: i64,
}

#[derive(Clone, Debug)]
pub struct GencostRow {
    pub model: i64,
    pub ncost: usize,
    /// Polynomial coefficients, highest degree first, as listed in the file.
    pub coeffs: Vec<f64>,
    /// Source line, for error attribution.
    pub line: usize,
}

/// Parsed tables of one case file, in file order and file units (MW, MVAr,
/// external bus numbers).
#[derive(Clone, Debug)]
pub struct CaseFile {
    pub name: String,
    pub base_mva: f64,
    pub bus: Vec<BusRow>,
    pub gen: Vec<GenRow>,
    pub branch: Vec<BranchRow>,
    pub gencost: Vec<GencostRow>,
}

impl CaseFile {
    /// External bus number of internal index `i`.
    pub fn external_id(&self, i: usize) -> i64 {
        self.bus[i].bus_i
    }
}

/// A case converted to solver inputs. `network` uses dense internal bus
/// indices; `case` retains the file's numbering for reporting.
#[derive(Clone, Debug)]
pub struct ParsedCase {
    pub network: Network,
    pub spec: Vec<BusSpec>,
    pub case: CaseFile,
}

/// Reads and converts a case file in one step.
pub fn load_matpower(path: impl AsRef<Path>) -> Result<ParsedCase, MatpowerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_string());
    let case = parse_case_str(&text, &name)?;
    let (network, spec) = case_to_network(&case)?;
    Ok(ParsedCase { network, spec, case })
}

/// Spec-level entry point: network plus per-bus boundary conditions.
pub fn parse_matpower(path: impl AsRef<Path>) -> Result<(Network, Vec<BusSpec>), MatpowerError> {
    let parsed = load_matpower(path)?;
    Ok((parsed.network, parsed.spec))
}

// ---------------------------------------------------------------------------
// Tokenizer for the .m subset.

struct Cursor<'a> {
    text: &'a str,
    /// Byte offset → (line, column), both 1-based.
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0, line: 1, col: 1 }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn bump(&mut self, bytes: usize) {
        for ch in self.text[self.pos..self.pos + bytes].chars() {
            if ch == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        self.pos += bytes;
    }

    fn err(&self, message: impl Into<String>) -> MatpowerError {
        MatpowerError::Parse { line: self.line, column: self.col, message: message.into() }
    }

    /// Skips whitespace, `%` comments, and MATLAB line continuations.
    fn skip_trivia(&mut self) {
        loop {
            let rest = self.rest();
            if let Some(ch) = rest.chars().next() {
                if ch.is_whitespace() {
                    self.bump(ch.len_utf8());
                    continue;
                }
                if ch == '%' || rest.starts_with("...") {
                    let nl = rest.find('\n').map_or(rest.len(), |i| i + 1);
                    self.bump(nl);
                    continue;
                }
            }
            return;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.bump(token.len());
            true
        } else {
            false
        }
    }

    fn parse_number(&mut self) -> Result<f64, MatpowerError> {
        let rest = self.rest();
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || "+-.".contains(c)))
            .unwrap_or(rest.len());
        // Trim a trailing exponent sign that got cut, e.g. "1e" of "1e-3".
        let token = &rest[..end];
        if token.is_empty() {
            return Err(self.err("expected a number"));
        }
        let value: f64 = token
            .parse()
            .map_err(|_| self.err(format!("invalid number `{token}`")))?;
        self.bump(end);
        Ok(value)
    }
}

/// Raw matrix literal with the line each row started on.
struct RawTable {
    rows: Vec<(usize, Vec<f64>)>,
}

fn parse_matrix(cur: &mut Cursor) -> Result<RawTable, MatpowerError> {
    cur.skip_trivia();
    if !cur.eat("[") {
        return Err(cur.err("expected `[` to open a matrix"));
    }
    let mut rows = Vec::new();
    let mut row: Vec<f64> = Vec::new();
    let mut row_line = cur.line;
    loop {
        // Newlines terminate rows in MATLAB matrices, so handle whitespace
        // manually here instead of via skip_trivia.
        let rest = cur.rest();
        let Some(ch) = rest.chars().next() else {
            return Err(cur.err("unterminated matrix"));
        };
        match ch {
            ']' => {
                cur.bump(1);
                if !row.is_empty() {
                    rows.push((row_line, row));
                }
                return Ok(RawTable { rows });
            }
            ';' | '\n' => {
                cur.bump(1);
                if !row.is_empty() {
                    rows.push((row_line, std::mem::take(&mut row)));
                }
                row_line = cur.line;
            }
            ',' => cur.bump(1),
            '%' => {
                let nl = rest.find('\n').map_or(rest.len(), |i| i);
                cur.bump(nl);
            }
            c if c.is_whitespace() => cur.bump(c.len_utf8()),
            _ if rest.starts_with("...") => {
                let nl = rest.find('\n').map_or(rest.len(), |i| i + 1);
                cur.bump(nl);
            }
            _ => {
                if row.is_empty() {
                    row_line = cur.line;
                }
                row.push(cur.parse_number()?);
            }
        }
    }
}

fn parse_scalar(cur: &mut Cursor) -> Result<f64, MatpowerError> {
    cur.skip_trivia();
    cur.parse_number()
}

/// Parses the text of a MATPOWER case file.
pub fn parse_case_str(text: &str, name: &str) -> Result<CaseFile, MatpowerError> {
    let mut base_mva = None;
    let mut bus_raw = None;
    let mut gen_raw = None;
    let mut branch_raw = None;
    let mut gencost_raw = None;

    let mut cur = Cursor::new(text);
    loop {
        cur.skip_trivia();
        if cur.rest().is_empty() {
            break;
        }
        // Only `mpc.<field> = ...` assignments matter; everything else
        // (function header, version string) is skipped to the end of line.
        if cur.eat("mpc.") {
            let rest = cur.rest();
            let end = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            let field = &rest[..end];
            let field_owned = field.to_string();
            cur.bump(end);
            cur.skip_trivia();
            if !cur.eat("=") {
                return Err(cur.err(format!("expected `=` after mpc.{field_owned}")));
            }
            match field_owned.as_str() {
                "baseMVA" => base_mva = Some(parse_scalar(&mut cur)?),
                "bus" => bus_raw = Some(parse_matrix(&mut cur)?),
                "gen" => gen_raw = Some(parse_matrix(&mut cur)?),
                "branch" => branch_raw = Some(parse_matrix(&mut cur)?),
                "gencost" => gencost_raw = Some(parse_matrix(&mut cur)?),
                _ => skip_to_semicolon(&mut cur),
            }
        } else {
            skip_line(&mut cur);
        }
    }

    let base_mva = base_mva.ok_or(MatpowerError::MissingTable("baseMVA"))?;
    let bus_raw = bus_raw.ok_or(MatpowerError::MissingTable("bus"))?;
    let gen_raw = gen_raw.ok_or(MatpowerError::MissingTable("gen"))?;
    let branch_raw = branch_raw.ok_or(MatpowerError::MissingTable("branch"))?;
    let gencost_raw = gencost_raw.ok_or(MatpowerError::MissingTable("gencost"))?;

    let bus = bus_raw
        .rows
        .iter()
        .map(|(line, row)| {
            let f = field_reader(row, *line, 13, "bus")?;
            Ok(BusRow {
                bus_i: f(0)? as i64,
                bus_type: f(1)? as i64,
                pd: f(2)?,
                qd: f(3)?,
                gs: f(4)?,
                bs: f(5)?,
                vm: f(7)?,
                va_deg: f(8)?,
                base_kv: f(9)?,
                v_max: f(11)?,
                v_min: f(12)?,
            })
        })
        .collect::<Result<Vec<_>, MatpowerError>>()?;

    let gen = gen_raw
        .rows
        .iter()
        .map(|(line, row)| {
            let f = field_reader(row, *line, 10, "gen")?;
            Ok(GenRow {
                bus: f(0)? as i64,
                pg: f(1)?,
                qg: f(2)?,
                q_max: f(3)?,
                q_min: f(4)?,
                vg: f(5)?,
                status: f(7)? as i64,
                p_max: f(8)?,
                p_min: f(9)?,
            })
        })
        .collect::<Result<Vec<_>, MatpowerError>>()?;

    let branch = branch_raw
        .rows
        .iter()
        .map(|(line, row)| {
            let f = field_reader(row, *line, 11, "branch")?;
            Ok(BranchRow {
                f_bus: f(0)? as i64,
                t_bus: f(1)? as i64,
                r: f(2)?,
                x: f(3)?,
                b: f(4)?,
                rate_a: f(5)?,
                ratio: f(8)?,
                angle_deg: f(9)?,
                status: f(10)? as i64,
            })
        })
        .collect::<Result<Vec<_>, MatpowerError>>()?;

    let gencost = gencost_raw
        .rows
        .iter()
        .map(|(line, row)| {
            let f = field_reader(row, *line, 4, "gencost")?;
            let model = f(0)? as i64;
            let ncost = f(3)? as usize;
            if row.len() < 4 + ncost {
                return Err(MatpowerError::Parse {
                    line: *line,
                    column: 1,
                    message: format!("gencost row lists ncost={ncost} but has {} values", row.len()),
                });
            }
            Ok(GencostRow { model, ncost, coeffs: row[4..4 + ncost].to_vec(), line: *line })
        })
        .collect::<Result<Vec<_>, MatpowerError>>()?;

    Ok(CaseFile { name: name.to_string(), base_mva, bus, gen, branch, gencost })
}

fn skip_to_semicolon(cur: &mut Cursor) {
    let rest = cur.rest();
    let end = rest.find(';').map_or(rest.len(), |i| i + 1);
    cur.bump(end);
}

fn skip_line(cur: &mut Cursor) {
    let rest = cur.rest();
    let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
    cur.bump(end);
}

fn field_reader<'r>(
    row: &'r [f64],
    line: usize,
    min_cols: usize,
    table: &'static str,
) -> Result<impl Fn(usize) -> Result<f64, MatpowerError> + 'r, MatpowerError> {
    if row.len() < min_cols {
        return Err(MatpowerError::Parse {
            line,
            column: 1,
            message: format!("{table} row has {} columns, needs at least {min_cols}", row.len()),
        });
    }
    Ok(move |idx: usize| {
        row.get(idx).copied().ok_or(MatpowerError::Parse {
            line,
            column: idx + 1,
            message: format!("{table} row missing column {}", idx + 1),
        })
    })
}

// ---------------------------------------------------------------------------
// Conversion to solver inputs.

/// Builds the internal network and per-bus boundary conditions from parsed
/// tables. Out-of-service rows are dropped; generators at PQ buses are folded
/// into the fixed injection for power flow but remain dispatchable units in
/// the network for OPF.
pub fn case_to_network(case: &CaseFile) -> Result<(Network, Vec<BusSpec>), MatpowerError> {
    let base = case.base_mva;
    let mut index_of: HashMap<i64, usize> = HashMap::new();
    for (i, row) in case.bus.iter().enumerate() {
        if index_of.insert(row.bus_i, i).is_some() {
            return Err(MatpowerError::DuplicateBus(row.bus_i));
        }
    }
    let resolve = |table: &'static str, bus: i64| {
        index_of
            .get(&bus)
            .copied()
            .ok_or(MatpowerError::UnknownBus { table, bus })
    };

    let mut builder = Network::builder(base);
    for (i, row) in case.bus.iter().enumerate() {
        if !(1..=3).contains(&row.bus_type) {
            return Err(MatpowerError::BadBusType { bus: row.bus_i, bus_type: row.bus_type });
        }
        builder = builder.bus(Bus::new(BusId(i), row.base_kv, row.v_min, row.v_max)?);
        if row.pd != 0.0 || row.qd != 0.0 {
            builder = builder.load(i, Complex64::new(row.pd, row.qd) / base);
        }
        if row.gs != 0.0 || row.bs != 0.0 {
            let y_sh = Complex64::new(row.gs, row.bs) / base;
            builder = builder.element(NetworkElement::from_params(
                ElementParams::Shunt { y_sh },
                vec![BusId(i)],
            )?);
        }
    }

    for row in &case.branch {
        if row.status == 0 {
            continue;
        }
        let f = resolve("branch", row.f_bus)?;
        let t = resolve("branch", row.t_bus)?;
        let att = vec![BusId(f), BusId(t)];
        let plain = (row.ratio == 0.0 || row.ratio == 1.0) && row.angle_deg == 0.0;
        let params = if plain {
            ElementParams::Line { r: row.r, x: row.x, b: row.b }
        } else {
            let ratio = if row.ratio == 0.0 { 1.0 } else { row.ratio };
            let t_cplx = Complex64::from_polar(ratio, row.angle_deg.to_radians());
            ElementParams::TapTransformer { t: t_cplx, r: row.r, x: row.x, b: row.b }
        };
        let mut element = NetworkElement::from_params(params, att)?;
        if row.rate_a > 0.0 {
            element = element.with_rating(row.rate_a / base);
        }
        builder = builder.element(element);
    }

    let costs = align_gencost(case)?;
    for (g, row) in case.gen.iter().enumerate() {
        if row.status <= 0 {
            continue;
        }
        let bus = BusId(resolve("gen", row.bus)?);
        let cost = costs[g].ok_or(MatpowerError::GencostCount {
            total: case.gen.len(),
            in_service: case.gen.iter().filter(|r| r.status > 0).count(),
            got: case.gencost.len(),
        })?;
        builder = builder.generator(Generator::new(
            bus,
            row.p_min / base,
            row.p_max / base,
            row.q_min / base,
            row.q_max / base,
            cost,
        )?);
    }

    let network = builder.finalize()?;

    let mut spec = Vec::with_capacity(case.bus.len());
    for (i, row) in case.bus.iter().enumerate() {
        let gens: Vec<&GenRow> = case
            .gen
            .iter()
            .filter(|g| g.status > 0 && resolve("gen", g.bus).is_ok_and(|b| b == i))
            .collect();
        let pg_total: f64 = gens.iter().map(|g| g.pg).sum();
        let qg_total: f64 = gens.iter().map(|g| g.qg).sum();
        let entry = match row.bus_type {
            3 => {
                let vm = gens.first().map_or(row.vm, |g| g.vg);
                BusSpec::Slack { v: Complex64::from_polar(vm, row.va_deg.to_radians()) }
            }
            2 if !gens.is_empty() => BusSpec::Pv {
                p: (pg_total - row.pd) / base,
                vm: gens[0].vg,
            },
            // PV bus with every unit offline behaves as a plain load bus.
            _ => BusSpec::Pq {
                s: Complex64::new(pg_total - row.pd, qg_total - row.qd) / base,
            },
        };
        spec.push(entry);
    }
    Ok((network, spec))
}

/// Maps each gen row to its cost: gencost may list one row per generator or
/// one row per in-service generator.
fn align_gencost(case: &CaseFile) -> Result<Vec<Option<CostCurve>>, MatpowerError> {
    let total = case.gen.len();
    let in_service: Vec<usize> = (0..total).filter(|&g| case.gen[g].status > 0).collect();
    let rows: Vec<usize> = if case.gencost.len() == total {
        (0..total).collect()
    } else if case.gencost.len() == in_service.len() {
        in_service.clone()
    } else {
        return Err(MatpowerError::GencostCount {
            total,
            in_service: in_service.len(),
            got: case.gencost.len(),
        });
    };
    let mut out = vec![None; total];
    for (cost_row, &gen_idx) in case.gencost.iter().zip(&rows) {
        out[gen_idx] = Some(convert_cost(cost_row)?);
    }
    Ok(out)
}

/// Polynomial coefficients (highest first, ≤ quadratic) to a cost curve in
/// physical units ($/MW²h, $/MWh, $/h).
fn convert_cost(row: &GencostRow) -> Result<CostCurve, MatpowerError> {
    if row.model != 2 {
        return Err(MatpowerError::UnsupportedCostModel { line: row.line, model: row.model });
    }
    if row.ncost > 3 {
        return Err(MatpowerError::TooManyCostCoefficients { line: row.line, ncost: row.ncost });
    }
    let mut padded = [0.0; 3];
    padded[3 - row.ncost..].copy_from_slice(&row.coeffs);
    Ok(CostCurve { alpha: padded[0], beta: padded[1], gamma_cost: padded[2] })
}

/// Renders a case back into `.m` text (used by tests to fabricate variants).
pub fn write_case_str(case: &CaseFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", case.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", case.base_mva);
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.bus {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t{}\t{};",
            b.bus_i, b.bus_type, b.pd, b.qd, b.gs, b.bs, b.vm, b.va_deg, b.base_kv, b.v_max, b.v_min
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.gen {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus, g.pg, g.qg, g.q_max, g.q_min, g.vg, case.base_mva, g.status, g.p_max, g.p_min
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.branch = [");
    for b in &case.branch {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t-360\t360;",
            b.f_bus, b.t_bus, b.r, b.x, b.b, b.rate_a, b.ratio, b.angle_deg, b.status
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gencost = [");
    for c in &case.gencost {
        let coeffs = c
            .coeffs
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\t");
        let _ = writeln!(s, "\t{}\t0\t0\t{}\t{};", c.model, c.ncost, coeffs);
    }
    let _ = writeln!(s, "];");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::ElementKind;

    fn cases_dir() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("cases")
    }

    const MINI: &str = r#"
function mpc = mini
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1  3  0    0   0  0    1  1.00  0  230  1  1.1  0.9;
    2  2  0    0   0  0    1  1.00  0  230  1  1.1  0.9;
    5  1  90  30   0  5    1  1.00  0  230  1  1.1  0.9;
];
mpc.gen = [
    1  0   0  300  -300  1.04  100  1  250  10;
    2  163 0  300  -300  1.02  100  1  300  10;
];
mpc.branch = [
    1  5  0.01  0.085  0.088  250  250  250  0     0  1  -360  360;
    2  5  0.017 0.092  0.079  250  250  250  0.978 2  1  -360  360;
    1  2  0.0   0.1    0.0    0    0    0    0     0  0  -360  360;
];
mpc.gencost = [
    2  1500  0  3  0.11   5    150;
    2  2000  0  2  1.2    600;
];
"#;

    #[test]
    fn mini_case_structure() {
        let case = parse_case_str(MINI, "mini").unwrap();
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.bus.len(), 3);
        assert_eq!(case.gen.len(), 2);
        assert_eq!(case.branch.len(), 3);
        let (net, spec) = case_to_network(&case).unwrap();
        // One shunt (bus 5 Bs=5), one plain line, one tap transformer; the
        // out-of-service branch is dropped.
        assert_eq!(net.n_buses(), 3);
        let kinds: Vec<ElementKind> = net.elements().iter().map(|e| e.kind()).collect();
        assert_eq!(
            kinds,
            vec![ElementKind::Shunt, ElementKind::Line, ElementKind::TapTransformer]
        );
        assert_eq!(net.generators().len(), 2);
        // Per-unit conversions.
        assert_eq!(net.generators()[0].p_max, 2.5);
        assert_eq!(net.loads()[0].s_d, Complex64::new(0.9, 0.3));
        // Ratings: 250 MVA on a 100 MVA base.
        let rated = net.elements()[1].i_max().unwrap();
        assert!((rated - 2.5).abs() < 1e-14);
        // Spec mapping: slack from Vg, PV from (Pg − Pd), PQ from −S_d.
        assert_eq!(spec[0], BusSpec::Slack { v: Complex64::new(1.04, 0.0) });
        assert_eq!(spec[1], BusSpec::Pv { p: 1.63, vm: 1.02 });
        assert_eq!(spec[2], BusSpec::Pq { s: Complex64::new(-0.9, -0.3) });
        // Quadratic padding: ncost=2 row has no quadratic term.
        assert_eq!(net.generators()[1].cost.alpha, 0.0);
        assert_eq!(net.generators()[1].cost.beta, 1.2);
    }

    #[test]
    fn tap_element_matches_cascade() {
        let case = parse_case_str(MINI, "mini").unwrap();
        let (net, _) = case_to_network(&case).unwrap();
        let tap = &net.elements()[2];
        match tap.params() {
            ElementParams::TapTransformer { t, .. } => {
                assert!((t.norm() - 0.978).abs() < 1e-12);
                assert!((t.arg().to_degrees() - 2.0).abs() < 1e-12);
            }
            other => panic!("expected tap transformer, got {other:?}"),
        }
    }

    #[test]
    fn cost_model_one_is_rejected() {
        let bad = MINI.replace("2  1500  0  3  0.11", "1  1500  0  3  0.11");
        let case = parse_case_str(&bad, "mini").unwrap();
        assert!(matches!(
            case_to_network(&case),
            Err(MatpowerError::UnsupportedCostModel { model: 1, .. })
        ));
    }

    #[test]
    fn gencost_row_count_must_match() {
        let mut case = parse_case_str(MINI, "mini").unwrap();
        case.gencost.pop();
        assert!(matches!(
            case_to_network(&case),
            Err(MatpowerError::GencostCount { got: 1, .. })
        ));
    }

    #[test]
    fn unknown_bus_is_reported() {
        let bad = MINI.replace("1  5  0.01", "1  9  0.01");
        let case = parse_case_str(&bad, "mini").unwrap();
        assert!(matches!(
            case_to_network(&case),
            Err(MatpowerError::UnknownBus { table: "branch", bus: 9 })
        ));
    }

    #[test]
    fn parse_error_carries_position() {
        let bad = MINI.replace("0.085", "0.0x85");
        match parse_case_str(&bad, "mini") {
            Err(MatpowerError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn case9_counts() {
        let case = parse_case_str(
            &std::fs::read_to_string(cases_dir().join("case9.m")).unwrap(),
            "case9",
        )
        .unwrap();
        let (net, spec) = case_to_network(&case).unwrap();
        assert_eq!(net.n_buses(), 9);
        assert_eq!(net.generators().len(), 3);
        let two_port = net.elements().iter().filter(|e| e.arity() == 2).count();
        assert_eq!(two_port, 9);
        assert_eq!(spec.iter().filter(|s| matches!(s, BusSpec::Slack { .. })).count(), 1);
    }

    #[test]
    fn case118_counts() {
        let case = parse_case_str(
            &std::fs::read_to_string(cases_dir().join("case118.m")).unwrap(),
            "case118",
        )
        .unwrap();
        assert_eq!(case.base_mva, 100.0);
        let (net, _) = case_to_network(&case).unwrap();
        assert_eq!(net.n_buses(), 118);
        assert_eq!(net.generators().len(), 54);
    }

    #[test]
    fn roundtrip_through_writer() {
        let case = parse_case_str(MINI, "mini").unwrap();
        let text = write_case_str(&case);
        let again = parse_case_str(&text, "mini").unwrap();
        let (n1, s1) = case_to_network(&case).unwrap();
        let (n2, s2) = case_to_network(&again).unwrap();
        assert_eq!(n1.n_buses(), n2.n_buses());
        assert_eq!(n1.elements().len(), n2.elements().len());
        assert_eq!(s1, s2);
    }
}
