//! MATPOWER-style case files and the bundled example systems.
//!
//! [`parse_case`] reads the `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and
//! `mpc.branch` blocks of a `.m` case file (other blocks are skipped) and
//! converts every quantity to per-unit on the case base and every angle to
//! radians. [`emit_case`] writes the same format back.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::netmodel::{Branch, Bus, BusKind, NetworkError, NetworkModel};

/// Environment variable that overrides where bundled case files are read from.
pub const DATA_DIR_ENV: &str = "GRIDCERT_DATA_DIR";

const CASE14: &str = include_str!("../data/case14.m");
const CASE118: &str = include_str!("../data/case118.m");

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: reference to unknown bus {bus}")]
    DanglingBus { line: usize, bus: usize },
    #[error("line {line}: duplicate bus id {bus}")]
    DuplicateBus { line: usize, bus: usize },
    #[error("more than one reference bus: {0:?}")]
    DuplicateSlack(Vec<usize>),
    #[error("no reference (slack) bus designated")]
    NoSlack,
    #[error("missing `{0}` block")]
    MissingBlock(&'static str),
    #[error("`{0}` is neither a builtin case nor an existing file")]
    UnknownCase(String),
    #[error("invalid case parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// MATPOWER bus type codes.
pub const BUS_PQ: u8 = 1;
pub const BUS_PV: u8 = 2;
pub const BUS_REF: u8 = 3;
pub const BUS_ISOLATED: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: usize,
    pub bus_type: u8,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    /// Radians.
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub status: f64,
    pub pmax: f64,
    pub pmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// 0 means nominal (no transformer).
    pub ratio: f64,
    /// Radians.
    pub angle: f64,
    pub status: f64,
    /// Radians.
    pub angmin: f64,
    /// Radians.
    pub angmax: f64,
}

/// Raw case contents, per-unit on `base_mva`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFile {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Bus,
    Gen,
    Branch,
    Other,
}

pub fn parse_case(text: &str) -> Result<CaseFile, CaseError> {
    let mut name = String::from("case");
    let mut base_mva = None;
    let mut bus_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut gen_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut branch_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut seen = HashSet::new();
    let mut block: Option<Block> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(b) = block {
            let (body, closes) = match line.find([']', '}']) {
                Some(p) => (&line[..p], true),
                None => (line, false),
            };
            if b != Block::Other {
                for row in body.split(';') {
                    let row = row.trim();
                    if row.is_empty() {
                        continue;
                    }
                    let values = parse_row(row, line_no)?;
                    match b {
                        Block::Bus => bus_rows.push((line_no, values)),
                        Block::Gen => gen_rows.push((line_no, values)),
                        Block::Branch => branch_rows.push((line_no, values)),
                        Block::Other => unreachable!(),
                    }
                }
            }
            if closes {
                block = None;
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(n) = rest.split('=').nth(1) {
                name = n.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            return Err(syntax(line_no, format!("unexpected statement `{line}`")));
        };
        let lhs = lhs.trim();
        let rhs = rhs.trim();
        let field = lhs.strip_prefix("mpc.").unwrap_or(lhs);
        match field {
            "baseMVA" => {
                let v = rhs.trim_end_matches(';').trim();
                base_mva = Some(
                    v.parse::<f64>()
                        .map_err(|_| syntax(line_no, format!("bad baseMVA `{v}`")))?,
                );
            }
            "version" => {}
            _ => {
                if rhs.starts_with('[') || rhs.starts_with('{') {
                    let b = match field {
                        "bus" => Block::Bus,
                        "gen" => Block::Gen,
                        "branch" => Block::Branch,
                        _ => Block::Other,
                    };
                    if b != Block::Other && !seen.insert(field.to_string()) {
                        return Err(syntax(line_no, format!("duplicate `{field}` block")));
                    }
                    // Rows may start on the opening line.
                    let inner = &rhs[1..];
                    let (body, closes) = match inner.find([']', '}']) {
                        Some(p) => (&inner[..p], true),
                        None => (inner, false),
                    };
                    if b != Block::Other {
                        for row in body.split(';') {
                            let row = row.trim();
                            if row.is_empty() {
                                continue;
                            }
                            let values = parse_row(row, line_no)?;
                            match b {
                                Block::Bus => bus_rows.push((line_no, values)),
                                Block::Gen => gen_rows.push((line_no, values)),
                                Block::Branch => branch_rows.push((line_no, values)),
                                Block::Other => unreachable!(),
                            }
                        }
                    }
                    if !closes {
                        block = Some(b);
                    }
                }
            }
        }
    }
    if block.is_some() {
        return Err(syntax(text.lines().count(), "unterminated matrix block".into()));
    }
    let base_mva = base_mva.ok_or(CaseError::MissingBlock("baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(CaseError::InvalidParameter(format!("baseMVA = {base_mva}")));
    }
    if !seen.contains("bus") {
        return Err(CaseError::MissingBlock("bus"));
    }
    if !seen.contains("branch") {
        return Err(CaseError::MissingBlock("branch"));
    }

    let deg = std::f64::consts::PI / 180.0;
    let mut ids = HashSet::new();
    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut refs = Vec::new();
    for (line, v) in &bus_rows {
        require_cols(&v, 13, *line, "bus")?;
        let id = as_id(v[0], *line)?;
        if !ids.insert(id) {
            return Err(CaseError::DuplicateBus { line: *line, bus: id });
        }
        let bus_type = v[1] as u8;
        if !(1..=4).contains(&bus_type) || v[1].fract() != 0.0 {
            return Err(syntax(*line, format!("invalid bus type {}", v[1])));
        }
        if bus_type == BUS_REF {
            refs.push(id);
        }
        buses.push(BusRecord {
            id,
            bus_type,
            pd: v[2] / base_mva,
            qd: v[3] / base_mva,
            gs: v[4] / base_mva,
            bs: v[5] / base_mva,
            area: v[6],
            vm: v[7],
            va: v[8] * deg,
            base_kv: v[9],
            zone: v[10],
            vmax: v[11],
            vmin: v[12],
        });
    }
    if refs.len() > 1 {
        return Err(CaseError::DuplicateSlack(refs));
    }
    let mut gens = Vec::with_capacity(gen_rows.len());
    for (line, v) in &gen_rows {
        require_cols(&v, 10, *line, "gen")?;
        let bus = as_id(v[0], *line)?;
        if !ids.contains(&bus) {
            return Err(CaseError::DanglingBus { line: *line, bus });
        }
        gens.push(GenRecord {
            bus,
            pg: v[1] / base_mva,
            qg: v[2] / base_mva,
            qmax: v[3] / base_mva,
            qmin: v[4] / base_mva,
            vg: v[5],
            mbase: v[6],
            status: v[7],
            pmax: v[8] / base_mva,
            pmin: v[9] / base_mva,
        });
    }
    let mut branches = Vec::with_capacity(branch_rows.len());
    for (line, v) in &branch_rows {
        require_cols(&v, 11, *line, "branch")?;
        let from = as_id(v[0], *line)?;
        let to = as_id(v[1], *line)?;
        for bus in [from, to] {
            if !ids.contains(&bus) {
                return Err(CaseError::DanglingBus { line: *line, bus });
            }
        }
        branches.push(BranchRecord {
            from,
            to,
            r: v[2],
            x: v[3],
            b: v[4],
            rate_a: v[5] / base_mva,
            rate_b: v[6] / base_mva,
            rate_c: v[7] / base_mva,
            ratio: v[8],
            angle: v[9] * deg,
            status: v[10],
            angmin: v.get(11).copied().unwrap_or(-360.0) * deg,
            angmax: v.get(12).copied().unwrap_or(360.0) * deg,
        });
    }
    Ok(CaseFile {
        name,
        base_mva,
        buses,
        gens,
        branches,
    })
}

fn syntax(line: usize, message: String) -> CaseError {
    CaseError::Syntax { line, message }
}

fn parse_row(row: &str, line: usize) -> Result<Vec<f64>, CaseError> {
    row.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| match t {
            "Inf" | "inf" => Ok(f64::INFINITY),
            "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
            _ => t
                .parse::<f64>()
                .map_err(|_| syntax(line, format!("cannot parse number `{t}`"))),
        })
        .collect()
}

fn require_cols(v: &[f64], n: usize, line: usize, what: &str) -> Result<(), CaseError> {
    if v.len() < n {
        Err(syntax(
            line,
            format!("{what} row has {} columns, expected at least {n}", v.len()),
        ))
    } else {
        Ok(())
    }
}

fn as_id(v: f64, line: usize) -> Result<usize, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(syntax(line, format!("invalid bus number {v}")))
    }
}

/// Writes a case back to MATPOWER text, converting to MW/MVAr and degrees.
/// Numbers use shortest round-trip formatting.
pub fn emit_case(case: &CaseFile) -> String {
    let base = case.base_mva;
    let deg = 180.0 / std::f64::consts::PI;
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", case.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", base);
    let _ = writeln!(s, "\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.buses {
        let row = [
            b.id as f64,
            b.bus_type as f64,
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            b.area,
            b.vm,
            b.va * deg,
            b.base_kv,
            b.zone,
            b.vmax,
            b.vmin,
        ];
        push_row(&mut s, &row);
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.gens {
        let row = [
            g.bus as f64,
            g.pg * base,
            g.qg * base,
            g.qmax * base,
            g.qmin * base,
            g.vg,
            g.mbase,
            g.status,
            g.pmax * base,
            g.pmin * base,
        ];
        push_row(&mut s, &row);
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(
        s,
        "\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
    );
    let _ = writeln!(s, "mpc.branch = [");
    for b in &case.branches {
        let row = [
            b.from as f64,
            b.to as f64,
            b.r,
            b.x,
            b.b,
            b.rate_a * base,
            b.rate_b * base,
            b.rate_c * base,
            b.ratio,
            b.angle * deg,
            b.status,
            b.angmin * deg,
            b.angmax * deg,
        ];
        push_row(&mut s, &row);
    }
    let _ = writeln!(s, "];");
    s
}

fn push_row(s: &mut String, row: &[f64]) {
    s.push('\t');
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push('\t');
        }
        if v.is_infinite() {
            s.push_str(if *v > 0.0 { "Inf" } else { "-Inf" });
        } else {
            let _ = write!(s, "{v}");
        }
    }
    s.push_str(";\n");
}

/// Converts a parsed case into a validated network.
///
/// Generators in service are merged into signed net injections. A bus typed
/// PV keeps that role only if it has an in-service generator (otherwise it is
/// treated as PQ); the reference bus becomes the slack. Voltage setpoints come
/// from the first in-service generator at the bus, falling back to the bus
/// `Vm`. Isolated buses and out-of-service branches are dropped.
pub fn to_network(case: &CaseFile) -> Result<NetworkModel, CaseError> {
    let refs: Vec<usize> = case
        .buses
        .iter()
        .filter(|b| b.bus_type == BUS_REF)
        .map(|b| b.id)
        .collect();
    match refs.len() {
        0 => return Err(CaseError::NoSlack),
        1 => {}
        _ => return Err(CaseError::DuplicateSlack(refs)),
    }
    let mut buses = Vec::with_capacity(case.buses.len());
    let mut kept = HashSet::new();
    for rec in &case.buses {
        if rec.bus_type == BUS_ISOLATED {
            continue;
        }
        let gens: Vec<&GenRecord> = case
            .gens
            .iter()
            .filter(|g| g.bus == rec.id && g.status > 0.0)
            .collect();
        let pg: f64 = gens.iter().map(|g| g.pg).sum();
        let qg: f64 = gens.iter().map(|g| g.qg).sum();
        let kind = match rec.bus_type {
            BUS_REF => BusKind::Slack,
            BUS_PV if !gens.is_empty() => BusKind::Pv,
            _ => BusKind::Pq,
        };
        let v_set = gens.first().map_or(rec.vm, |g| g.vg);
        buses.push(Bus {
            id: rec.id,
            kind,
            p_inj: pg - rec.pd,
            q_inj: qg - rec.qd,
            v_set: if kind == BusKind::Pq { 1.0 } else { v_set },
            shunt_g: rec.gs,
            shunt_b: rec.bs,
        });
        kept.insert(rec.id);
    }
    let branches = case
        .branches
        .iter()
        .filter(|b| b.status > 0.0 && kept.contains(&b.from) && kept.contains(&b.to))
        .map(|b| Branch {
            from: b.from,
            to: b.to,
            r: b.r,
            x: b.x,
            b_charging: b.b,
            tap: if b.ratio == 0.0 { 1.0 } else { b.ratio },
            phase_shift: b.angle,
        })
        .collect();
    Ok(NetworkModel::new(case.name.clone(), buses, branches)?)
}

/// Parameters of the two-bus slack/PV system: line admittance `g + jb`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBusParams {
    pub g: f64,
    pub b: f64,
    pub v_pv: f64,
    pub v_slack: f64,
    /// Active injection specified at the PV bus.
    pub p_pv: f64,
}

impl TwoBusParams {
    pub fn new(g: f64, b: f64, v_pv: f64, v_slack: f64) -> Self {
        Self {
            g,
            b,
            v_pv,
            v_slack,
            p_pv: 0.0,
        }
    }
}

/// Three-bus loop: bus 1 PV (|V| = `v_controlled`, P = 0.5), bus 2 slack
/// (`v_controlled`∠0), bus 3 PQ load 1.0 + j0.25. Impedances are `(r, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeBusParams {
    pub z12: (f64, f64),
    pub z13: (f64, f64),
    pub z23: (f64, f64),
    pub v_controlled: f64,
}

impl ThreeBusParams {
    /// Identical lines everywhere.
    pub fn uniform(r: f64, x: f64) -> Self {
        Self {
            z12: (r, x),
            z13: (r, x),
            z23: (r, x),
            v_controlled: 1.0,
        }
    }
}

impl Default for ThreeBusParams {
    /// A loop whose four power flow solutions vanish as two pairs at the
    /// same controlled-voltage level (about 0.3518). See
    /// `examples/coincident_folds.rs` for how `x12` was tuned.
    fn default() -> Self {
        Self {
            z12: (0.043, THREE_BUS_TUNED_X12),
            z13: (0.288, 0.304),
            z23: (0.0006, 0.048),
            v_controlled: 1.0,
        }
    }
}

/// Reactance of line 1-2 at which the two solution pairs of the default
/// three-bus system fold at the same controlled-voltage scale.
pub const THREE_BUS_TUNED_X12: f64 = 0.035773907209156;

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinCase {
    TwoBus(TwoBusParams),
    ThreeBus(ThreeBusParams),
    Ieee14,
    Ieee118,
}

impl BuiltinCase {
    /// Looks up a builtin by name with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ieee14" | "case14" => Some(Self::Ieee14),
            "ieee118" | "case118" => Some(Self::Ieee118),
            "three_bus" | "threebus" | "three-bus" => {
                Some(Self::ThreeBus(ThreeBusParams::default()))
            }
            "two_bus" | "twobus" | "two-bus" => {
                Some(Self::TwoBus(TwoBusParams::new(1.0, -10.0, 1.0, 1.0)))
            }
            _ => None,
        }
    }
}

pub fn builtin_case(case: &BuiltinCase) -> Result<NetworkModel, CaseError> {
    match case {
        BuiltinCase::TwoBus(p) => two_bus(p),
        BuiltinCase::ThreeBus(p) => three_bus(p),
        BuiltinCase::Ieee14 => to_network(&parse_case(&bundled_text("case14.m", CASE14)?)?),
        BuiltinCase::Ieee118 => to_network(&parse_case(&bundled_text("case118.m", CASE118)?)?),
    }
}

fn bundled_text(file: &str, embedded: &str) -> Result<String, CaseError> {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => read_file(&Path::new(&dir).join(file)),
        None => Ok(embedded.to_string()),
    }
}

fn read_file(path: &Path) -> Result<String, CaseError> {
    std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn two_bus(p: &TwoBusParams) -> Result<NetworkModel, CaseError> {
    if p.g == 0.0 && p.b == 0.0 {
        return Err(CaseError::InvalidParameter("line admittance is zero".into()));
    }
    if !(p.v_slack > 0.0 && p.v_pv > 0.0) {
        return Err(CaseError::InvalidParameter(
            "voltage setpoints must be positive".into(),
        ));
    }
    Ok(NetworkModel::new(
        "two_bus",
        vec![Bus::slack(1, p.v_slack), Bus::pv(2, p.p_pv, p.v_pv)],
        vec![Branch::from_admittance(1, 2, p.g, p.b)],
    )?)
}

pub fn three_bus(p: &ThreeBusParams) -> Result<NetworkModel, CaseError> {
    for (r, x) in [p.z12, p.z13, p.z23] {
        if r < 0.0 || (r == 0.0 && x == 0.0) {
            return Err(CaseError::InvalidParameter(format!(
                "line impedance ({r}, {x})"
            )));
        }
    }
    if !(p.v_controlled > 0.0) {
        return Err(CaseError::InvalidParameter(
            "controlled voltage must be positive".into(),
        ));
    }
    Ok(NetworkModel::new(
        "three_bus",
        vec![
            Bus::pv(1, 0.5, p.v_controlled),
            Bus::slack(2, p.v_controlled),
            Bus::pq(3, -1.0, -0.25),
        ],
        vec![
            Branch::line(1, 2, p.z12.0, p.z12.1),
            Branch::line(1, 3, p.z13.0, p.z13.1),
            Branch::line(2, 3, p.z23.0, p.z23.1),
        ],
    )?)
}

/// Resolves a `--case` argument: a builtin name or a path to a case file.
pub fn load_case(spec: &str) -> Result<NetworkModel, CaseError> {
    if let Some(b) = BuiltinCase::from_name(spec) {
        return builtin_case(&b);
    }
    let path = Path::new(spec);
    if path.exists() {
        return to_network(&parse_case(&read_file(path)?)?);
    }
    Err(CaseError::UnknownCase(spec.to_string()))
}

/// Bus monitored on PV curves when none is given: bus 5 on the 14-bus
/// system, bus 44 on the 118-bus system, otherwise the first PQ bus.
pub fn default_monitored_bus(model: &NetworkModel) -> Option<usize> {
    let preferred = match model.n_buses() {
        14 => Some(5),
        118 => Some(44),
        _ => None,
    };
    preferred
        .filter(|id| {
            model
                .position(*id)
                .is_some_and(|p| model.buses()[p].kind == BusKind::Pq)
        })
        .or_else(|| model.pq().first().map(|&p| model.buses()[p].id))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1.0 0 0 1 1.1 0.9;
  2 1 20 5 0 0 1 1.0 0 0 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 10 -10 1.0 100 1 100 0;
];
mpc.branch = [
  1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
";

    #[test]
    fn minimal_case_parses() {
        let c = parse_case(MINIMAL).unwrap();
        assert_eq!(c.name, "tiny");
        assert_eq!(c.buses.len(), 2);
        assert_eq!(c.branches.len(), 1);
        assert_eq!(c.buses[1].pd, 0.2);
        let net = to_network(&c).unwrap();
        assert_eq!(net.buses()[1].kind, BusKind::Pq);
        assert_eq!(net.buses()[1].p_inj, -0.2);
        assert_eq!(net.buses()[1].q_inj, -0.05);
    }

    #[test]
    fn short_row_names_line() {
        let bad = MINIMAL.replace("  2 1 20 5 0 0 1 1.0 0 0 1 1.1 0.9;", "  2 1 20;");
        match parse_case(&bad) {
            Err(CaseError::Syntax { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("3 columns"), "{message}");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_and_duplicate_slack() {
        let dangling = MINIMAL.replace("  1 2 0.01 0.1", "  1 7 0.01 0.1");
        assert!(matches!(
            parse_case(&dangling),
            Err(CaseError::DanglingBus { bus: 7, .. })
        ));
        let two_refs = MINIMAL.replace("  2 1 20 5", "  2 3 20 5");
        assert!(matches!(
            parse_case(&two_refs),
            Err(CaseError::DuplicateSlack(_))
        ));
    }

    #[test]
    fn generator_merges_into_pv_injection() {
        let text = MINIMAL
            .replace("  2 1 20 5 0 0", "  2 2 10 5 0 0")
            .replace(
                "  1 0 0 10 -10 1.0 100 1 100 0;",
                "  1 0 0 10 -10 1.0 100 1 100 0;\n  2 40 0 10 -10 1.02 100 1 100 0;",
            );
        let net = to_network(&parse_case(&text).unwrap()).unwrap();
        let b = &net.buses()[1];
        assert_eq!(b.kind, BusKind::Pv);
        assert!((b.p_inj - 0.3).abs() < 1e-15);
        assert_eq!(b.v_set, 1.02);
    }

    #[test]
    fn no_reference_bus() {
        let text = MINIMAL.replace("  1 3 0 0", "  1 2 0 0");
        let case = parse_case(&text).unwrap();
        assert!(matches!(to_network(&case), Err(CaseError::NoSlack)));
    }

    #[test]
    fn emit_then_parse_preserves_values() {
        let c = parse_case(CASE14).unwrap();
        let again = parse_case(&emit_case(&c)).unwrap();
        assert_eq!(c.buses.len(), again.buses.len());
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        for (a, b) in c.buses.iter().zip(&again.buses) {
            assert!(rel(a.pd, b.pd) && rel(a.qd, b.qd) && rel(a.va, b.va) && rel(a.bs, b.bs));
        }
        for (a, b) in c.branches.iter().zip(&again.branches) {
            assert!(rel(a.r, b.r) && rel(a.x, b.x) && rel(a.ratio, b.ratio));
        }
    }

    #[test]
    fn ieee14_counts() {
        let c = parse_case(CASE14).unwrap();
        assert_eq!(c.buses.len(), 14);
        assert_eq!(c.branches.len(), 20);
        let net = to_network(&c).unwrap();
        let controlled = net
            .buses()
            .iter()
            .filter(|b| b.kind != BusKind::Pq)
            .count();
        assert_eq!(controlled, 5);
        assert_eq!(net.buses()[net.slack()].v_set, 1.06);
    }

    #[test]
    fn ieee118_has_one_slack_and_is_connected() {
        let net = builtin_case(&BuiltinCase::Ieee118).unwrap();
        assert_eq!(net.n_buses(), 118);
        assert_eq!(net.positions_of(BusKind::Slack).len(), 1);
        assert_eq!(net.components().len(), 1);
        assert_eq!(net.buses()[net.slack()].v_set, 1.035);
    }

    #[test]
    fn three_bus_roles() {
        let m = builtin_case(&BuiltinCase::ThreeBus(ThreeBusParams::default())).unwrap();
        let b = m.buses();
        assert_eq!((b[0].kind, b[0].v_set, b[0].p_inj), (BusKind::Pv, 1.0, 0.5));
        assert_eq!((b[1].kind, b[1].v_set), (BusKind::Slack, 1.0));
        assert_eq!((b[2].kind, b[2].p_inj, b[2].q_inj), (BusKind::Pq, -1.0, -0.25));
    }

    #[test]
    fn two_bus_admittance_matches_parameters() {
        let m = two_bus(&TwoBusParams::new(1.0, -10.0, 1.0, 1.0)).unwrap();
        let y = m.admittance();
        assert!((y[(0, 1)].re + 1.0).abs() < 1e-12 && (y[(0, 1)].im - 10.0).abs() < 1e-12);
        assert!(matches!(
            load_case("no_such_case_anywhere"),
            Err(CaseError::UnknownCase(_))
        ));
    }
}
