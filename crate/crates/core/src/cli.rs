//! Command-line front end. [`run`] takes the argument vector and output
//! streams and returns the process exit code:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | error or usage error |
//! | 2 | certified insolvable (`certify`, `margins`) |
//! | 3 | inconclusive: the SDP solver ran into numerical trouble |

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::caseio::load_case;
use crate::continuation::{trace_pv_curve, CpfOptions};
use crate::netmodel::NetworkModel;
use crate::powerflow::{nr_solve, NrOptions, PowerFlowState};
use crate::report::{emit_report, Format, Margins, Report};
use crate::sdpcert::{
    certify_with, rank_study, sweep, CertificateResult, RankStudyOptions, SolverOptions,
    SweepOptions, Verdict,
};
use crate::Error;

#[derive(Debug, Parser)]
#[command(
    name = "gridcert",
    version,
    about = "Power flow insolvability certificates and margins"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Newton-Raphson power flow.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Start from 1.0 pu and 0 rad everywhere (the default).
        #[arg(long, conflicts_with = "warm_from")]
        flat_start: bool,
        /// Start from a state in a JSON file (a state, or a `solve` report).
        #[arg(long)]
        warm_from: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
    /// Insolvability certificate at one multiplier.
    Certify {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Certificates over a list of injection multipliers.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, requires_all = ["to", "step"], conflicts_with = "multipliers")]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Comma-separated ascending multipliers.
        #[arg(long, value_delimiter = ',')]
        multipliers: Vec<f64>,
        /// Also run Newton-Raphson, warm-started along the list.
        #[arg(long)]
        nr: bool,
        /// Worker threads for the certificates.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// PV curve by continuation power flow.
    Pvcurve {
        #[command(flatten)]
        run: RunArgs,
        /// Multiply the slack and PV voltage setpoints first.
        #[arg(long, default_value_t = 1.0)]
        voltage_scale: f64,
        /// PQ bus id whose voltage is recorded.
        #[arg(long)]
        monitor: Option<usize>,
        #[arg(long, default_value_t = CpfOptions::default().step)]
        cpf_step: f64,
        #[arg(long, default_value_t = CpfOptions::default().max_points)]
        max_points: usize,
    },
    /// Nullspace rank of the dual matrix.
    RankStudy {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also check how the solution pairs disappear as the controlled
        /// voltages fall (systems of at most four buses).
        #[arg(long)]
        cross_check: bool,
    },
    /// Voltage and injection margins with their implications.
    Margins {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Builtin case name (ieee14, ieee118, three_bus, two_bus) or a case
    /// file path.
    #[arg(long)]
    case: String,
    /// Uniform injection multiplier applied when the case is loaded.
    #[arg(long, default_value_t = 1.0)]
    multiplier: f64,
    /// `json`, `csv` or `human` for standard output, or a file path whose
    /// extension picks the format.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = SolverOptions::default().gap_tol)]
    gap_tol: f64,
    #[arg(long, default_value_t = SolverOptions::default().max_outer)]
    max_outer: usize,
    #[arg(long, default_value_t = SolverOptions::default().max_newton)]
    max_newton: usize,
}

impl SolverArgs {
    fn options(&self) -> Result<SolverOptions, Error> {
        if !(self.gap_tol > 0.0 && self.gap_tol < 1.0) {
            return Err(Error::Usage(format!(
                "--gap-tol must be in (0, 1), got {}",
                self.gap_tol
            )));
        }
        Ok(SolverOptions {
            gap_tol: self.gap_tol,
            max_outer: self.max_outer,
            max_newton: self.max_newton,
            ..SolverOptions::default()
        })
    }
}

/// Parsed common settings of every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: String,
    pub multiplier: f64,
    pub format: Format,
    pub out_path: Option<PathBuf>,
}

impl RunConfig {
    fn new(args: &RunArgs, default_format: Format) -> Result<Self, Error> {
        let (mut format, mut out_path) = (default_format, None);
        if let Some(out) = &args.out {
            match out.parse::<Format>() {
                Ok(f) => format = f,
                Err(_) => {
                    let path = PathBuf::from(out);
                    format = match path.extension().and_then(|e| e.to_str()) {
                        Some("json") => Format::Json,
                        Some("csv") => Format::Csv,
                        Some("txt") => Format::Human,
                        _ => default_format,
                    };
                    out_path = Some(path);
                }
            }
        }
        if let Some(f) = args.format {
            format = f;
        }
        if !(args.multiplier > 0.0 && args.multiplier.is_finite()) {
            return Err(Error::Usage(format!(
                "--multiplier must be positive, got {}",
                args.multiplier
            )));
        }
        Ok(Self {
            case: args.case.clone(),
            multiplier: args.multiplier,
            format,
            out_path,
        })
    }

    fn load(&self) -> Result<NetworkModel, Error> {
        let model = load_case(&self.case)?;
        if self.multiplier == 1.0 {
            Ok(model)
        } else {
            Ok(model.scale_injections(self.multiplier)?)
        }
    }

    fn emit(&self, report: &Report, stdout: &mut dyn Write) -> Result<(), Error> {
        let text = emit_report(report, self.format);
        match &self.out_path {
            Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            }),
            None => stdout.write_all(text.as_bytes()).map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            }),
        }
    }
}

/// Runs the command line in `args` (program name first).
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn verdict_code(c: &CertificateResult) -> i32 {
    match c.verdict {
        Verdict::Insolvable => 2,
        Verdict::NotCertified => 0,
        Verdict::Inconclusive => 3,
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32, Error> {
    match command {
        Command::Solve {
            run,
            flat_start: _,
            warm_from,
            tol,
            max_iter,
        } => {
            let cfg = RunConfig::new(&run, Format::Json)?;
            let model = cfg.load()?;
            let initial = match warm_from {
                Some(path) => read_state(&path)?,
                None => PowerFlowState::flat(&model),
            };
            let report = nr_solve(&model, &initial, &NrOptions { tol, max_iter })?;
            cfg.emit(
                &Report::Solve {
                    case: cfg.case.clone(),
                    multiplier: cfg.multiplier,
                    bus_ids: model.buses().iter().map(|b| b.id).collect(),
                    report,
                },
                stdout,
            )?;
            Ok(0)
        }
        Command::Certify { run, solver } => {
            let cfg = RunConfig::new(&run, Format::Json)?;
            let result = certify_with(&cfg.load()?, &solver.options()?)?;
            let code = verdict_code(&result);
            cfg.emit(
                &Report::Certificate {
                    case: cfg.case.clone(),
                    multiplier: cfg.multiplier,
                    result,
                },
                stdout,
            )?;
            Ok(code)
        }
        Command::Sweep {
            run,
            solver,
            from,
            to,
            step,
            multipliers,
            nr,
            jobs,
        } => {
            let cfg = RunConfig::new(&run, Format::Csv)?;
            let list = match (from, to, step) {
                (Some(a), Some(b), Some(s)) => multiplier_range(a, b, s)?,
                _ => multipliers,
            };
            let model = cfg.load()?;
            let opts = SweepOptions {
                with_nr: nr,
                solver: solver.options()?,
                ..SweepOptions::default()
            };
            let rows = match jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Usage(e.to_string()))?
                    .install(|| sweep(&model, &list, &opts))?,
                None => sweep(&model, &list, &opts)?,
            };
            cfg.emit(
                &Report::Sweep {
                    case: cfg.case.clone(),
                    rows,
                },
                stdout,
            )?;
            Ok(0)
        }
        Command::Pvcurve {
            run,
            voltage_scale,
            monitor,
            cpf_step,
            max_points,
        } => {
            let cfg = RunConfig::new(&run, Format::Csv)?;
            let model = cfg.load()?.scale_controlled_voltages(voltage_scale)?;
            let opts = CpfOptions {
                monitored_bus: monitor,
                step: cpf_step,
                max_step: CpfOptions::default().max_step.max(cpf_step),
                max_points,
                ..CpfOptions::default()
            };
            let trace = trace_pv_curve(&model, &opts)?;
            cfg.emit(
                &Report::Trace {
                    case: cfg.case.clone(),
                    voltage_scale,
                    trace,
                },
                stdout,
            )?;
            Ok(0)
        }
        Command::RankStudy {
            run,
            solver,
            cross_check,
        } => {
            let cfg = RunConfig::new(&run, Format::Json)?;
            let opts = RankStudyOptions {
                solver: solver.options()?,
                cross_check,
                ..RankStudyOptions::default()
            };
            let study = rank_study(&cfg.load()?, &opts)?;
            cfg.emit(
                &Report::RankStudy {
                    case: cfg.case.clone(),
                    multiplier: cfg.multiplier,
                    study,
                },
                stdout,
            )?;
            Ok(0)
        }
        Command::Margins { run, solver } => {
            let cfg = RunConfig::new(&run, Format::Human)?;
            let result = certify_with(&cfg.load()?, &solver.options()?)?;
            let code = verdict_code(&result);
            cfg.emit(
                &Report::Margins {
                    case: cfg.case.clone(),
                    margins: Margins::new(cfg.multiplier, result),
                },
                stdout,
            )?;
            Ok(code)
        }
    }
}

/// `from, from + step, …, to`, rounded to nine decimals so that the
/// printed multipliers stay readable.
fn multiplier_range(from: f64, to: f64, step: f64) -> Result<Vec<f64>, Error> {
    if !(step > 0.0) || !(to >= from) || !(from > 0.0) {
        return Err(Error::Usage(format!(
            "need 0 < --from <= --to and --step > 0, got {from}, {to}, {step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

fn read_state(path: &Path) -> Result<PowerFlowState, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    let state = value.pointer("/report/state").cloned().unwrap_or(value);
    serde_json::from_value(state).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}
