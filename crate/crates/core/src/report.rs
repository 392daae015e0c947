//! Report emission in JSON, CSV or a short human-readable form.
//!
//! JSON documents carry a `schema` field (`gridcert.<kind>/1`). CSV column
//! orders are fixed:
//!
//! | report | columns |
//! |---|---|
//! | certificate, sweep | `multiplier,nr_converged,v_lower,sigma,eta,certified_insolvable` |
//! | PV curve | `multiplier,v_monitored,branch` |
//! | solve | `bus,v,delta` |
//! | rank study | `index,eigenvalue` |
//! | margins | `multiplier,v_lower,v0,sigma,eta,injection_limit,voltage_factor` |
//!
//! Numbers in JSON and CSV use the shortest representation that parses
//! back to the same `f64`.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::continuation::ContinuationTrace;
use crate::powerflow::SolveReport;
use crate::sdpcert::{CertificateResult, RankStudy, SweepRow, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Human,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "human" | "text" => Ok(Format::Human),
            other => Err(format!("unknown format `{other}` (json, csv, human)")),
        }
    }
}

/// Margins at one multiplier, with what they imply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margins {
    pub multiplier: f64,
    pub certificate: CertificateResult,
    /// `η · multiplier`: no solution exists for uniform multipliers above
    /// this.
    pub injection_limit: f64,
    /// `1/σ`: the controlled voltages must be raised at least this much for
    /// a solution to be possible.
    pub voltage_factor: f64,
}

impl Margins {
    pub fn new(multiplier: f64, certificate: CertificateResult) -> Self {
        Self {
            multiplier,
            injection_limit: certificate.eta * multiplier,
            voltage_factor: 1.0 / certificate.sigma,
            certificate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Solve {
        case: String,
        multiplier: f64,
        bus_ids: Vec<usize>,
        report: SolveReport,
    },
    Certificate {
        case: String,
        multiplier: f64,
        result: CertificateResult,
    },
    Sweep {
        case: String,
        rows: Vec<SweepRow>,
    },
    Trace {
        case: String,
        voltage_scale: f64,
        trace: ContinuationTrace,
    },
    RankStudy {
        case: String,
        multiplier: f64,
        study: RankStudy,
    },
    Margins {
        case: String,
        margins: Margins,
    },
}

pub const CERTIFICATE_CSV_HEADER: &str = "multiplier,nr_converged,v_lower,sigma,eta,certified_insolvable";
pub const TRACE_CSV_HEADER: &str = "multiplier,v_monitored,branch";

pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&to_json(report)).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => to_csv(report),
        Format::Human => to_human(report),
    }
}

fn to_json(report: &Report) -> Value {
    match report {
        Report::Solve {
            case,
            multiplier,
            bus_ids,
            report,
        } => json!({
            "schema": "gridcert.solve/1",
            "case": case,
            "multiplier": multiplier,
            "bus_ids": bus_ids,
            "report": v(report),
        }),
        Report::Certificate {
            case,
            multiplier,
            result,
        } => json!({
            "schema": "gridcert.certificate/1",
            "case": case,
            "multiplier": multiplier,
            "certificate": v(result),
        }),
        Report::Sweep { case, rows } => json!({
            "schema": "gridcert.sweep/1",
            "case": case,
            "rows": v(rows),
        }),
        Report::Trace {
            case,
            voltage_scale,
            trace,
        } => json!({
            "schema": "gridcert.pvcurve/1",
            "case": case,
            "voltage_scale": voltage_scale,
            "trace": v(trace),
        }),
        Report::RankStudy {
            case,
            multiplier,
            study,
        } => json!({
            "schema": "gridcert.rank-study/1",
            "case": case,
            "multiplier": multiplier,
            "study": v(study),
        }),
        Report::Margins { case, margins } => json!({
            "schema": "gridcert.margins/1",
            "case": case,
            "margins": v(margins),
        }),
    }
}

fn v<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

fn certificate_row(out: &mut String, multiplier: f64, nr: Option<bool>, c: Option<&CertificateResult>) {
    let _ = match c {
        Some(c) => writeln!(
            out,
            "{multiplier},{},{},{},{},{}",
            opt_bool(nr),
            c.v_lower,
            c.sigma,
            c.eta,
            c.insolvable_certified
        ),
        None => writeln!(out, "{multiplier},{},,,,", opt_bool(nr)),
    };
}

fn to_csv(report: &Report) -> String {
    let mut out = String::new();
    let w = &mut out;
    match report {
        Report::Solve {
            bus_ids, report, ..
        } => {
            let _ = writeln!(w, "bus,v,delta");
            if let Some(s) = &report.state {
                for (k, (v, d)) in bus_ids.iter().zip(s.v.iter().zip(&s.delta)) {
                    let _ = writeln!(w, "{k},{v},{d}");
                }
            }
        }
        Report::Certificate {
            multiplier, result, ..
        } => {
            let _ = writeln!(w, "{CERTIFICATE_CSV_HEADER}");
            certificate_row(w, *multiplier, None, Some(result));
        }
        Report::Sweep { rows, .. } => {
            let _ = writeln!(w, "{CERTIFICATE_CSV_HEADER}");
            for r in rows {
                certificate_row(w, r.multiplier, r.nr_converged, r.certificate.as_ref());
            }
        }
        Report::Trace { trace, .. } => {
            let _ = writeln!(w, "{TRACE_CSV_HEADER}");
            for p in &trace.points {
                let _ = writeln!(w, "{},{},{}", p.multiplier, p.v_monitored, p.branch.as_str());
            }
        }
        Report::RankStudy { study, .. } => {
            let _ = writeln!(w, "index,eigenvalue");
            for (i, e) in study.eigenvalues.iter().enumerate() {
                let _ = writeln!(w, "{i},{e}");
            }
        }
        Report::Margins { margins: m, .. } => {
            let c = &m.certificate;
            let _ = writeln!(w, "multiplier,v_lower,v0,sigma,eta,injection_limit,voltage_factor");
            let _ = writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.multiplier, c.v_lower, c.v0, c.sigma, c.eta, m.injection_limit, m.voltage_factor
            );
        }
    }
    out
}

fn verdict_sentence(c: &CertificateResult) -> String {
    match c.verdict {
        Verdict::Insolvable => format!(
            "Certified insolvable: the slack voltage would have to be at least {:.4} pu, above the specified {:.4} pu, so no power flow solution exists.",
            c.v_lower, c.v0
        ),
        Verdict::NotCertified => format!(
            "Not certified: the lower bound {:.4} pu does not exceed the specified slack voltage {:.4} pu, so a solution may exist.",
            c.v_lower, c.v0
        ),
        Verdict::Inconclusive => {
            "Inconclusive: the semidefinite solver ran into numerical trouble; no conclusion is drawn.".into()
        }
    }
}

fn to_human(report: &Report) -> String {
    let mut out = String::new();
    let w = &mut out;
    match report {
        Report::Solve {
            case,
            multiplier,
            bus_ids,
            report,
        } => {
            let _ = writeln!(w, "{case} at injection multiplier {multiplier}");
            let _ = writeln!(
                w,
                "Newton-Raphson {} after {} iterations (mismatch {:.3e}).",
                if report.converged { "converged" } else { "did not converge" },
                report.iterations,
                report.final_mismatch
            );
            if let Some(s) = &report.state {
                let _ = writeln!(w, "{:>5} {:>10} {:>11}", "bus", "V (pu)", "angle (deg)");
                for (k, (v, d)) in bus_ids.iter().zip(s.v.iter().zip(&s.delta)) {
                    let _ = writeln!(w, "{k:>5} {v:>10.5} {:>11.4}", d.to_degrees());
                }
            }
        }
        Report::Certificate {
            case,
            multiplier,
            result: c,
        } => {
            let _ = writeln!(w, "{case} at injection multiplier {multiplier}");
            let _ = writeln!(w, "{}", verdict_sentence(c));
            let _ = writeln!(w, "Voltage margin sigma = {:.4}, injection margin eta = {:.4}.", c.sigma, c.eta);
            let _ = writeln!(w, "Nullspace rank of A: {}.", c.nullspace_rank);
        }
        Report::Sweep { case, rows } => {
            let _ = writeln!(w, "{case}");
            let _ = writeln!(
                w,
                "{:>10} {:>6} {:>8} {:>8} {:>8}  verdict",
                "multiplier", "NR", "V_lower", "sigma", "eta"
            );
            for r in rows {
                let nr = match r.nr_converged {
                    Some(true) => "yes",
                    Some(false) => "no",
                    None => "-",
                };
                match (&r.certificate, &r.error) {
                    (Some(c), _) => {
                        let _ = writeln!(
                            w,
                            "{:>10} {nr:>6} {:>8.4} {:>8.4} {:>8.4}  {}",
                            r.multiplier,
                            c.v_lower,
                            c.sigma,
                            c.eta,
                            match c.verdict {
                                Verdict::Insolvable => "insolvable",
                                Verdict::NotCertified => "not certified",
                                Verdict::Inconclusive => "inconclusive",
                            }
                        );
                    }
                    (None, e) => {
                        let _ = writeln!(
                            w,
                            "{:>10} {nr:>6}  error: {}",
                            r.multiplier,
                            e.as_deref().unwrap_or("unknown")
                        );
                    }
                }
            }
        }
        Report::Trace {
            case,
            voltage_scale,
            trace,
        } => {
            let _ = writeln!(
                w,
                "{case}, controlled voltages x{voltage_scale}, monitoring bus {}",
                trace.monitored_bus
            );
            let _ = writeln!(w, "{} points traced.", trace.points.len());
            if trace.nose_found {
                let _ = writeln!(w, "Nose at injection multiplier {:.5}.", trace.nose_multiplier);
            } else {
                let _ = writeln!(
                    w,
                    "Nose not reached; largest multiplier traced {:.5}.",
                    trace.nose_multiplier
                );
            }
            if trace.step_underflow {
                let _ = writeln!(w, "Tracing stopped early: step size underflow.");
            }
        }
        Report::RankStudy {
            case,
            multiplier,
            study,
        } => {
            let _ = writeln!(w, "{case} at injection multiplier {multiplier}");
            let _ = writeln!(w, "Nullspace rank of A: {}.", study.nullspace_rank);
            let shown: Vec<String> = study.eigenvalues.iter().take(6).map(|e| format!("{e:.3e}")).collect();
            let _ = writeln!(w, "Smallest eigenvalues: {}", shown.join(" "));
            if let Some(fc) = &study.cross_check {
                let _ = writeln!(w, "Solutions at nominal voltages: {}.", fc.solutions_at_nominal);
                let drops: Vec<String> = fc.pair_disappearances.iter().map(|d| format!("{d:.6}")).collect();
                let _ = writeln!(w, "Pairs disappear at voltage scales: {}.", drops.join(", "));
                let _ = writeln!(
                    w,
                    "{} pair(s) disappear together at the last scale.",
                    fc.pairs_at_last
                );
            }
        }
        Report::Margins { case, margins: m } => {
            let c = &m.certificate;
            let _ = writeln!(w, "{case} at injection multiplier {}", m.multiplier);
            let _ = writeln!(w, "{}", verdict_sentence(c));
            let _ = writeln!(w, "Voltage margin sigma = {:.4}, injection margin eta = {:.4}.", c.sigma, c.eta);
            let _ = writeln!(
                w,
                "No solution exists for uniform injection multipliers above {:.4}.",
                m.injection_limit
            );
            if c.sigma < 1.0 {
                let _ = writeln!(
                    w,
                    "The slack and PV voltages must rise by at least a factor {:.4} for a solution to be possible.",
                    m.voltage_factor
                );
            }
        }
    }
    out
}
