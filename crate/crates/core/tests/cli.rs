use gridcert::cli::run;
use gridcert::report::{CERTIFICATE_CSV_HEADER, TRACE_CSV_HEADER};

fn gridcert(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("gridcert").chain(args.iter().copied()), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn certify_exit_codes() {
    let (code, out, _) = gridcert(&["certify", "--case", "ieee14"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema"], "gridcert.certificate/1");

    let (code, _, _) = gridcert(&["certify", "--case", "ieee14", "--multiplier", "5"]);
    assert_eq!(code, 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gridcert(&["frobnicate"]).0, 1);
    assert_eq!(gridcert(&["certify"]).0, 1);
    let (code, _, err) = gridcert(&["certify", "--case", "no_such_case"]);
    assert_eq!(code, 1);
    assert!(err.contains("no_such_case"));
    assert_eq!(gridcert(&["sweep", "--case", "ieee14", "--multipliers", "2,1"]).0, 1);
}

#[test]
fn help_goes_to_stdout() {
    let (code, out, _) = gridcert(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["solve", "certify", "sweep", "pvcurve", "rank-study", "margins"] {
        assert!(out.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn empty_sweep_is_header_only() {
    let (code, out, _) = gridcert(&["sweep", "--case", "ieee14"]);
    assert_eq!(code, 0);
    assert_eq!(out, format!("{CERTIFICATE_CSV_HEADER}\n"));
}

#[test]
fn sweep_csv_rows() {
    let (code, out, _) = gridcert(&[
        "sweep", "--case", "ieee14", "--from", "4.05", "--to", "4.07", "--step", "0.01", "--nr",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], CERTIFICATE_CSV_HEADER);
    let first: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(first, ["4.05", "4.06", "4.07"]);
    assert!(lines[3].ends_with(",true"));
}

#[test]
fn pvcurve_csv_header() {
    let (code, out, _) = gridcert(&["pvcurve", "--case", "ieee14", "--max-points", "40"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some(TRACE_CSV_HEADER));
    assert!(out.lines().skip(1).all(|l| l.ends_with(",upper") || l.ends_with(",lower")));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for args in [
        &["certify", "--case", "ieee14", "--multiplier", "3"][..],
        &["margins", "--case", "ieee14"][..],
        &["rank-study", "--case", "three_bus", "--cross-check"][..],
        &["solve", "--case", "ieee14", "--out", "csv"][..],
    ] {
        assert_eq!(gridcert(args), gridcert(args), "{args:?}");
    }
}

#[test]
fn out_file_and_warm_start() {
    let dir = std::env::temp_dir().join(format!("gridcert-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("solved.json");
    let p = path.to_str().unwrap();

    let (code, out, _) = gridcert(&["solve", "--case", "ieee14", "--out", p]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved["schema"], "gridcert.solve/1");
    assert_eq!(saved["report"]["converged"], true);

    // Warm-starting from a converged state needs no iterations.
    let (code, out, _) = gridcert(&["solve", "--case", "ieee14", "--warm-from", p]);
    assert_eq!(code, 0);
    let warm: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(warm["report"]["iterations"].as_u64().unwrap() <= 1);

    let (code, _, _) = gridcert(&["solve", "--case", "ieee14", "--flat-start", "--warm-from", p]);
    assert_eq!(code, 1);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn margins_human_readable() {
    let (code, out, _) = gridcert(&["margins", "--case", "ieee14", "--multiplier", "5"]);
    assert_eq!(code, 2);
    assert!(out.contains("0.812"), "{out}");
}
