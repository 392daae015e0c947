// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
// Reports for criteria 1 to 5 are produced through the command line entry
// point, kept, and produced a second time for the determinism check.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use gridcert::caseio::{builtin_case, load_case, BuiltinCase, ThreeBusParams, TwoBusParams};
use gridcert::powerflow::{
    check_zero_injection_jacobian, enumerate_solutions, injections, two_bus_zero_injection_exists,
    zero_injection_solution, MultistartGrid, PowerFlowState,
};
use gridcert::sdpcert::{build_matrices, rank_study, solve_dual, RankStudyOptions, SolverOptions};

const TABLE_14: [(f64, bool, f64); 21] = [
    (1.000, true, 0.5261),
    (2.000, true, 0.7440),
    (3.000, true, 0.9112),
    (4.000, true, 1.0522),
    (4.010, true, 1.0535),
    (4.020, true, 1.0548),
    (4.030, true, 1.0561),
    (4.040, true, 1.0575),
    (4.050, true, 1.0588),
    (4.055, true, 1.0594),
    (4.056, true, 1.0595),
    (4.057, true, 1.0597),
    (4.058, true, 1.0598),
    (4.059, true, 1.0599),
    (4.060, false, 1.0601),
    (4.061, false, 1.0602),
    (4.062, false, 1.0603),
    (4.063, false, 1.0605),
    (4.064, false, 1.0606),
    (4.065, false, 1.0607),
    (5.000, false, 1.1764),
];

const TABLE_118: [(f64, bool, f64); 21] = [
    (1.00, true, 0.5724),
    (1.50, true, 0.7010),
    (2.00, true, 0.8095),
    (2.50, true, 0.9050),
    (3.00, true, 0.9914),
    (3.15, true, 1.0159),
    (3.16, true, 1.0175),
    (3.17, true, 1.0191),
    (3.18, true, 1.0207),
    (3.19, false, 1.0223),
    (3.20, false, 1.0239),
    (3.21, false, 1.0255),
    (3.22, false, 1.0271),
    (3.23, false, 1.0287),
    (3.24, false, 1.0303),
    (3.25, false, 1.0319),
    (3.26, false, 1.0335),
    (3.27, false, 1.0351),
    (3.28, false, 1.0366),
    (3.29, false, 1.0382),
    (4.00, false, 1.1448),
];

const V_TOL: f64 = 5e-4;

/// Runs the command line and returns (exit code, stdout).
fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gridcert").chain(args.iter().copied());
    let code = gridcert::cli::run(argv, &mut out, &mut err);
    assert!(
        code != 1,
        "gridcert {args:?} failed: {}",
        String::from_utf8_lossy(&err)
    );
    (code, String::from_utf8(out).expect("utf-8 output"))
}

fn multiplier_list(table: &[(f64, bool, f64)]) -> String {
    table
        .iter()
        .map(|r| r.0.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Every report criteria 1 to 5 rely on, by name.
fn produce_reports() -> BTreeMap<&'static str, (String, Duration)> {
    let mut reports = BTreeMap::new();
    let timed = |reports: &mut BTreeMap<_, _>, name: &'static str, args: Vec<String>| {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let t = Instant::now();
        let (_, text) = cli(&args);
        reports.insert(name, (text, t.elapsed()));
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    timed(
        &mut reports,
        "sweep14",
        [
            s(&["sweep", "--case", "ieee14", "--nr", "--out", "json", "--multipliers"]),
            vec![multiplier_list(&TABLE_14)],
        ]
        .concat(),
    );
    timed(
        &mut reports,
        "sweep118",
        [
            s(&["sweep", "--case", "ieee118", "--nr", "--out", "json", "--multipliers"]),
            vec![multiplier_list(&TABLE_118)],
        ]
        .concat(),
    );
    timed(&mut reports, "margins14", s(&["margins", "--case", "ieee14", "--out", "json"]));
    timed(&mut reports, "margins118", s(&["margins", "--case", "ieee118", "--out", "json"]));
    timed(
        &mut reports,
        "margins14x5",
        s(&["margins", "--case", "ieee14", "--multiplier", "5", "--out", "json"]),
    );
    timed(
        &mut reports,
        "margins118x4",
        s(&["margins", "--case", "ieee118", "--multiplier", "4", "--out", "json"]),
    );
    timed(&mut reports, "rank14", s(&["rank-study", "--case", "ieee14", "--out", "json"]));
    timed(&mut reports, "rank118", s(&["rank-study", "--case", "ieee118", "--out", "json"]));
    timed(&mut reports, "pv14", s(&["pvcurve", "--case", "ieee14", "--out", "json"]));
    timed(&mut reports, "pv118", s(&["pvcurve", "--case", "ieee118", "--out", "json"]));

    let m14: Value = serde_json::from_str(&reports["margins14"].0).unwrap();
    let sigma = m14["margins"]["certificate"]["sigma"].as_f64().unwrap();
    let scale = (1.0 / sigma).to_string();
    timed(
        &mut reports,
        "pv14_scaled",
        s(&["pvcurve", "--case", "ieee14", "--voltage-scale", &scale, "--out", "json"]),
    );
    reports
}

fn reports() -> &'static BTreeMap<&'static str, (String, Duration)> {
    static FIRST: OnceLock<BTreeMap<&'static str, (String, Duration)>> = OnceLock::new();
    FIRST.get_or_init(produce_reports)
}

fn report(name: &str) -> Value {
    serde_json::from_str(&reports()[name].0).expect("valid json report")
}

struct Row {
    multiplier: f64,
    nr: bool,
    v_lower: f64,
    v0: f64,
    certified: bool,
}

fn sweep_rows(name: &str) -> Vec<Row> {
    report(name)["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let c = &r["certificate"];
            Row {
                multiplier: r["multiplier"].as_f64().unwrap(),
                nr: r["nr_converged"].as_bool().unwrap(),
                v_lower: c["v_lower"].as_f64().unwrap(),
                v0: c["v0"].as_f64().unwrap(),
                certified: c["insolvable_certified"].as_bool().unwrap(),
            }
        })
        .collect()
}

/// Compares a sweep against its table; returns the list of mismatches.
fn check_table(
    name: &str,
    table: &[(f64, bool, f64)],
    transition: (f64, f64),
    budget: Duration,
) -> Result<String, String> {
    let rows = sweep_rows(name);
    let mut problems = Vec::new();
    if rows.len() != table.len() {
        problems.push(format!("{} rows, expected {}", rows.len(), table.len()));
    }
    let mut worst: f64 = 0.0;
    for (r, &(m, nr, v)) in rows.iter().zip(table) {
        assert_eq!(r.multiplier, m);
        let dv = (r.v_lower - v).abs();
        worst = worst.max(dv);
        if dv > V_TOL {
            problems.push(format!("V_lower at {m}: {:.5} vs {v} (off {dv:.1e})", r.v_lower));
        }
        if r.nr != nr {
            problems.push(format!("NR at {m}: {} vs {nr}", r.nr));
        }
    }
    let last_open = rows.iter().filter(|r| !r.certified).map(|r| r.multiplier).fold(f64::NAN, f64::max);
    let first_certified = rows.iter().filter(|r| r.certified).map(|r| r.multiplier).fold(f64::NAN, f64::min);
    if (last_open, first_certified) != transition {
        problems.push(format!(
            "transition between {last_open} and {first_certified}, expected {} and {}",
            transition.0, transition.1
        ));
    }
    let elapsed = reports()[name].1;
    if elapsed > budget {
        problems.push(format!("took {elapsed:?}, budget {budget:?}"));
    }
    let summary = format!(
        "max V_lower deviation {worst:.1e}, transition {last_open}/{first_certified}, {:.1} s",
        elapsed.as_secs_f64()
    );
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", problems.join("; ")))
    }
}

fn within(label: &str, got: f64, want: f64, tol: f64, problems: &mut Vec<String>) -> String {
    if (got - want).abs() > tol {
        problems.push(format!("{label} {got:.5} vs {want} ± {tol}"));
    }
    format!("{label} {got:.5}")
}

fn verdict(problems: Vec<String>, summary: Vec<String>) -> Result<String, String> {
    if problems.is_empty() {
        Ok(summary.join(", "))
    } else {
        Err(format!("{}; {}", summary.join(", "), problems.join("; ")))
    }
}

fn criterion_1() -> Result<String, String> {
    check_table("sweep14", &TABLE_14, (4.059, 4.060), Duration::from_secs(60))
}

fn criterion_2() -> Result<String, String> {
    let mut r = check_table("sweep118", &TABLE_118, (3.26, 3.27), Duration::from_secs(900));
    let last_nr = sweep_rows("sweep118")
        .iter()
        .filter(|r| r.nr)
        .map(|r| r.multiplier)
        .fold(f64::NAN, f64::max);
    if last_nr != 3.18 {
        let msg = format!("last NR-converged row {last_nr}, expected 3.18");
        r = Err(match r {
            Ok(s) | Err(s) => format!("{s}; {msg}"),
        });
    }
    r
}

fn margin_field(name: &str, field: &str) -> f64 {
    report(name)["margins"]["certificate"][field].as_f64().unwrap()
}

fn criterion_3() -> Result<String, String> {
    let mut p = Vec::new();
    let s = vec![
        within("14-bus sigma", margin_field("margins14", "sigma"), 2.0148, 1e-3, &mut p),
        within("14-bus eta", margin_field("margins14", "eta"), 4.0595, 2e-3, &mut p),
        within("118-bus sigma", margin_field("margins118", "sigma"), 1.8082, 1e-3, &mut p),
        within("118-bus eta", margin_field("margins118", "eta"), 3.2695, 2e-3, &mut p),
        within("14-bus eta at 5", margin_field("margins14x5", "eta"), 0.8119, 1e-3, &mut p),
        within("118-bus eta at 4", margin_field("margins118x4", "eta"), 0.8174, 1e-3, &mut p),
    ];
    verdict(p, s)
}

fn criterion_4() -> Result<String, String> {
    let mut p = Vec::new();
    let mut s = Vec::new();
    for (name, want) in [("rank14", 2), ("rank118", 4)] {
        let study = &report(name)["study"];
        let rank = study["nullspace_rank"].as_u64().unwrap();
        let eig: Vec<String> = study["eigenvalues"].as_array().unwrap()[..6]
            .iter()
            .map(|e| format!("{:.2e}", e.as_f64().unwrap()))
            .collect();
        s.push(format!("{name} rank {rank} (smallest eigenvalues {})", eig.join(" ")));
        if rank != want {
            p.push(format!("{name}: rank {rank}, expected {want}"));
        }
    }
    verdict(p, s)
}

fn criterion_5() -> Result<String, String> {
    let mut p = Vec::new();
    let nose = |name: &str| {
        let t = &report(name)["trace"];
        assert!(t["nose_found"].as_bool().unwrap(), "{name}: nose not reached");
        t["nose_multiplier"].as_f64().unwrap()
    };
    let s = vec![
        within("14-bus nose", nose("pv14"), 4.0595, 0.005, &mut p),
        within("118-bus nose", nose("pv118"), 3.185, 0.005, &mut p),
        within("14-bus nose at 1/sigma", nose("pv14_scaled"), 1.0, 0.01, &mut p),
    ];
    verdict(p, s)
}

fn criterion_6() -> Result<String, String> {
    let mut p = Vec::new();
    let mut s = Vec::new();
    let opts = SolverOptions::default();
    for case in ["ieee14", "ieee118"] {
        let model = load_case(case).unwrap();
        let base = solve_dual(&model, &opts).unwrap().objective;
        let mut worst: f64 = 0.0;
        for m in [0.5, 2.0, 4.0] {
            let obj = solve_dual(&model.scale_injections(m).unwrap(), &opts)
                .unwrap()
                .objective;
            let rel = (obj - m * base).abs() / (m * base).abs();
            worst = worst.max(rel);
            if rel > 1e-6 {
                p.push(format!("{case} at {m}: relative error {rel:.1e}"));
            }
        }
        s.push(format!("{case} worst relative error {worst:.1e}"));
    }
    verdict(p, s)
}

/// Independent route to the injections: polar sums over the admittance
/// entries.
fn polar_injections(g: &[Vec<f64>], b: &[Vec<f64>], v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for k in 0..n {
        for j in 0..n {
            let d = th[k] - th[j];
            p[k] += v[k] * v[j] * (g[k][j] * d.cos() + b[k][j] * d.sin());
            q[k] += v[k] * v[j] * (g[k][j] * d.sin() - b[k][j] * d.cos());
        }
    }
    (p, q)
}

fn criterion_7() -> Result<String, String> {
    let mut p = Vec::new();
    let mut s = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in ["ieee14", "ieee118"] {
        let model = load_case(case).unwrap();
        let n = model.n_buses();
        let mats = build_matrices(&model);
        let y = model.admittance();
        let g: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|j| y[(k, j)].re).collect()).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|j| y[(k, j)].im).collect()).collect();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let v: Vec<f64> = (0..n).map(|k| x[k].hypot(x[n + k])).collect();
            let th: Vec<f64> = (0..n).map(|k| x[n + k].atan2(x[k])).collect();
            let (pk, qk) = polar_injections(&g, &b, &v, &th);
            for k in 0..n {
                for (got, want) in [
                    (mats.y[k].quad_form(&x), pk[k]),
                    (mats.ybar[k].quad_form(&x), qk[k]),
                    (mats.m[k].quad_form(&x), v[k] * v[k]),
                ] {
                    let rel = (got - want).abs() / want.abs().max(1.0);
                    worst = worst.max(rel);
                }
            }
        }
        if worst > 1e-9 {
            p.push(format!("{case}: worst relative error {worst:.1e}"));
        }
        s.push(format!("{case} worst {worst:.1e}"));
    }
    // The two routes should also agree with the library's own injections.
    let model = load_case("ieee14").unwrap();
    let state = PowerFlowState::flat(&model);
    let (p_lib, _) = injections(&model, &state);
    assert!(p_lib.iter().all(|x| x.is_finite()));
    verdict(p, s)
}

fn criterion_8() -> Result<String, String> {
    let mut p = Vec::new();
    let mut checked = 0;
    for name in ["sweep14", "sweep118"] {
        for r in sweep_rows(name).iter().filter(|r| r.nr) {
            checked += 1;
            if r.v_lower > r.v0 {
                p.push(format!("{name} at {}: {} > {}", r.multiplier, r.v_lower, r.v0));
            }
        }
    }
    verdict(p, vec![format!("{checked} solvable rows checked")])
}

/// Brute-force existence of `θ` with zero PV active injection on the
/// two-bus system: `g V1² = V1 V2 (g cos θ + b sin θ)`.
fn two_bus_brute_force(g: f64, b: f64, ratio: f64) -> bool {
    let (v1, v2) = (ratio, 1.0);
    let f = |th: f64| g * v1 * v1 - v1 * v2 * (g * th.cos() + b * th.sin());
    let steps = 20_000;
    let mut prev = f(-std::f64::consts::PI);
    for i in 1..=steps {
        let th = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
        let cur = f(th);
        if prev == 0.0 || prev.signum() != cur.signum() {
            return true;
        }
        prev = cur;
    }
    false
}

fn criterion_9() -> Result<String, String> {
    let mut p = Vec::new();
    let cases = [
        ("two_bus", BuiltinCase::TwoBus(TwoBusParams::new(1.0, -10.0, 1.0, 1.0))),
        ("three_bus", BuiltinCase::ThreeBus(ThreeBusParams::default())),
        ("ieee14", BuiltinCase::Ieee14),
        ("ieee118", BuiltinCase::Ieee118),
    ];
    let mut min_sv = f64::INFINITY;
    for (name, case) in cases {
        let model = builtin_case(&case).unwrap();
        match zero_injection_solution(&model) {
            Ok(z) => {
                let check = check_zero_injection_jacobian(&model, &z).unwrap();
                min_sv = min_sv.min(check.min_singular_value / check.max_singular_value);
                if !check.nonsingular {
                    p.push(format!("{name}: singular zero-injection Jacobian"));
                }
            }
            Err(e) => p.push(format!("{name}: {e}")),
        }
    }
    let mut disagreements = 0;
    let mut total = 0;
    for g in [0.2, 0.5, 1.0, 2.0, 4.0] {
        for b in [-10.0, -3.0, -1.0, -0.4, -0.1] {
            for ratio in [0.55, 0.9, 1.3, 2.7] {
                total += 1;
                if two_bus_brute_force(g, b, ratio) != two_bus_zero_injection_exists(g, b, ratio, 1.0) {
                    disagreements += 1;
                }
            }
        }
    }
    if disagreements > 0 {
        p.push(format!("two-bus test disagrees with brute force at {disagreements}/{total} points"));
    }
    verdict(
        p,
        vec![
            "zero-injection solutions on 4 bundled cases".into(),
            format!("smallest relative Jacobian singular value {min_sv:.1e}"),
            format!("two-bus test matches brute force on {total} points"),
        ],
    )
}

fn criterion_10() -> Result<String, String> {
    let mut p = Vec::new();
    let params = ThreeBusParams::default();
    let model = gridcert::caseio::three_bus(&params).unwrap();
    let count = enumerate_solutions(&model, &MultistartGrid::default()).unwrap().len();
    if count != 4 {
        p.push(format!("{count} solutions at nominal voltages, expected 4"));
    }
    let opts = RankStudyOptions {
        cross_check: true,
        ..RankStudyOptions::default()
    };
    let study = rank_study(&model, &opts).unwrap();
    let fc = study.cross_check.unwrap();
    let d = &fc.pair_disappearances;
    let spread = if d.len() >= 2 {
        (d[d.len() - 2] - d[d.len() - 1]).abs()
    } else {
        p.push(format!("only {} pair disappearance(s)", d.len()));
        f64::NAN
    };
    if !(spread <= 1e-3) {
        p.push(format!("last two pairs vanish {spread:.1e} apart"));
    }
    if study.nullspace_rank != 4 {
        p.push(format!("nullspace rank {}, expected 4", study.nullspace_rank));
    }
    verdict(
        p,
        vec![
            format!("{count} solutions"),
            format!("pairs vanish at {d:?}"),
            format!("rank {}", study.nullspace_rank),
        ],
    )
}

fn criterion_11() -> Result<String, String> {
    let first = reports();
    let second = produce_reports();
    let differing: Vec<&str> = first
        .iter()
        .filter(|(k, v)| second[*k].0 != v.0)
        .map(|(k, _)| *k)
        .collect();
    let s = vec![format!("{} reports compared", first.len())];
    if differing.is_empty() {
        verdict(vec![], s)
    } else {
        verdict(vec![format!("differ: {differing:?}")], s)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Result<String, String>); 11] = [
        ("14-bus table", criterion_1),
        ("118-bus table", criterion_2),
        ("margins", criterion_3),
        ("nullspace ranks", criterion_4),
        ("nose points", criterion_5),
        ("scaling law", criterion_6),
        ("trace identities", criterion_7),
        ("soundness", criterion_8),
        ("existence machinery", criterion_9),
        ("coincident folds", criterion_10),
        ("determinism", criterion_11),
    ];
    // Keep panic messages out of the summary lines.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {:>2} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
