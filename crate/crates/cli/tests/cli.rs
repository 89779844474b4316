use std::process::Command;

use udnpf_cli::config::FileConfig;
use udnpf_cli::output::{read_csv_rows, write_rows, Format};
use udnpf_cli::sweep::run_sweep;

fn udnpf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_udnpf"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = udnpf().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn csv_round_trips_exactly() {
    let mut cfg = FileConfig::from_toml("[sweep]\nlambda = [300.0, 3000.0]\ngamma_db = [-3.0, 4.5]\nase = false").unwrap();
    cfg.mc = Some(Default::default());
    cfg.mc.as_mut().unwrap().drops = 300;
    let rows = run_sweep(&cfg.resolve().unwrap(), None);
    assert_eq!(rows.len(), 8);
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows, Format::Csv).unwrap();
    let back = read_csv_rows(buf.as_slice()).unwrap();
    assert_eq!(back, rows);
}

#[test]
fn default_grid_smoke_and_ratio_trend() {
    let (code, out, err) = run(&["sweep", "--lambda", "1,100,10000", "--no-ase"]);
    assert_eq!(code, 0, "{err}");
    let rows = read_csv_rows(out.as_bytes()).unwrap();
    assert_eq!(rows.len(), 6);
    let ratios: Vec<f64> = rows.iter().step_by(2).map(|r| r.pf_rr_ratio.unwrap()).collect();
    assert!(ratios[0] > 2.5 && ratios[0] < 3.0, "{ratios:?}");
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    assert!((ratios[2] - 1.0).abs() < 0.01);
    assert_eq!(rows[0].method_used, "upper_bound");
    assert_eq!(rows[2].method_used, "exact");
    assert!(!out.lines().next().unwrap().contains("pcov_mc"));
}

#[test]
fn mc_columns_appear_with_drops() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("mc");
    let (code, out, err) = run(&[
        "sweep",
        "--lambda",
        "1000",
        "--no-ase",
        "--mc-drops",
        "400",
        "--seed",
        "9",
        "--mc-dump",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().next().unwrap().ends_with("pcov_mc,mc_ci_lo,mc_ci_hi"));
    let rows = read_csv_rows(out.as_bytes()).unwrap();
    for r in &rows {
        let p = r.pcov_mc.unwrap();
        assert!(r.mc_ci_lo.unwrap() <= p && p <= r.mc_ci_hi.unwrap());
    }
    let drops = std::fs::read_to_string(dump.join("drops_lambda_1000.csv")).unwrap();
    assert_eq!(drops.lines().count(), 401);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dump.join("summary_lambda_1000.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);

    // same seed, same Monte Carlo columns
    let (_, again, _) = run(&["sweep", "--lambda", "1000", "--no-ase", "--mc-drops", "400", "--seed", "9"]);
    let again = read_csv_rows(again.as_bytes()).unwrap();
    for (a, b) in rows.iter().zip(&again) {
        assert_eq!(a.pcov_mc, b.pcov_mc);
        assert_eq!(a.pcov_exact, b.pcov_exact);
    }
}

#[test]
fn json_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let (code, _, err) = run(&[
        "sweep",
        "--lambda",
        "1000",
        "--gamma-db",
        "-5,5",
        "--scheduler",
        "pf",
        "--method",
        "upper",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["method_used"], "upper_bound");
    assert!(rows[0]["ase"].as_f64().unwrap() > 0.0);
    assert!(rows[0].get("pcov_mc").is_none());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sweep]\nmethod = \"fast\"\n").unwrap();
    let (code, _, err) = run(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown method"), "{err}");

    // the sparse point needs more UE-count terms than the cap allows
    let partial = dir.path().join("partial.toml");
    std::fs::write(&partial, "[network]\nkmax_cap = 50\n[sweep]\nlambda = [1.0, 1000.0]\nase = false\n").unwrap();
    let (code, out, _) = run(&["sweep", "--config", partial.to_str().unwrap()]);
    assert_eq!(code, 2);
    let rows = read_csv_rows(out.as_bytes()).unwrap();
    assert!(rows[0].failed() && !rows[2].failed());

    let (code, _, _) = run(&["sweep", "--config", partial.to_str().unwrap(), "--lambda", "1"]);
    assert_eq!(code, 1);
}

#[test]
fn validate_single_criterion() {
    let (code, out, _) = run(&["validate", "--only", "5"]);
    assert_eq!(code, 0);
    assert!(out.contains("criterion 5 [PASS]"), "{out}");
}
