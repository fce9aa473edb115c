use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use asbf::cli::{parse_delimited, Report};
use tempfile::TempDir;

fn asbf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asbf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn asbf")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = asbf(dir, args);
    assert!(
        out.status.success(),
        "asbf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = asbf(dir, args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(
        p.join("gen.toml"),
        "[simulate]\nmode = \"generate\"\ndgp = { which = \"ate_a\", n = 400, d = 3 }\n",
    )
    .unwrap();
    fs::write(p.join("fit.toml"), "[forest]\nb_trees = 12\nk = 8\n").unwrap();
    ok(p, &["--config", "gen.toml", "--seed", "5", "simulate", "--out", "data.csv"]);
    dir
}

#[test]
fn exit_codes() {
    let dir = setup();
    let p = dir.path();
    fs::write(p.join("big_k.toml"), "[forest]\nk = 500\n").unwrap();
    fs::write(p.join("alpha.toml"), "[forest]\nalpha = 0.8\n").unwrap();
    fs::write(p.join("typo.toml"), "[forest]\nkk = 3\n").unwrap();
    fs::write(p.join("bad.csv"), "x1,y\n0.5,oops\n").unwrap();

    assert_eq!(code(p, &["--config", "big_k.toml", "fit", "data.csv"]).0, 3);
    let (c, err) = code(p, &["--config", "alpha.toml", "fit", "data.csv"]);
    assert_eq!(c, 2);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(code(p, &["--config", "typo.toml", "fit", "data.csv"]).0, 2);
    let (c, err) = code(p, &["fit", "bad.csv"]);
    assert_eq!(c, 2);
    assert!(err.contains("line 1, column `y`"), "{err}");
    assert_eq!(code(p, &["fit", "missing.csv"]).0, 2);
    assert_eq!(code(p, &["frobnicate"]).0, 2);
    assert_eq!(code(p, &["--threads", "0", "simulate"]).0, 2);
    assert_eq!(code(p, &["simulate"]).0, 2);
    assert_eq!(code(p, &["--help"]).0, 0);
}

#[test]
fn fit_predict_and_clamp() {
    let dir = setup();
    let p = dir.path();
    let report = ok(p, &["--config", "fit.toml", "fit", "data.csv", "--out", "m.json"]);
    assert!(report.contains("[fit]") && report.contains("[diameter]"));
    let preds = ok(p, &["predict", "m.json", "data.csv"]);
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines[0], "prediction");
    assert_eq!(lines.len(), 401);
    assert!(lines[1..].iter().all(|l| l.parse::<f64>().unwrap().is_finite()));

    fs::write(p.join("q.csv"), "x1,x2,x3\n1.25,0.5,0.5\n").unwrap();
    let (c, err) = code(p, &["predict", "m.json", "q.csv"]);
    assert_eq!(c, 2);
    assert!(err.contains("--clamp"), "{err}");
    fs::write(p.join("q1.csv"), "x1,x2,x3\n1,0.5,0.5\n").unwrap();
    let clamped = ok(p, &["--clamp", "predict", "m.json", "q.csv"]);
    let edge = ok(p, &["predict", "m.json", "q1.csv"]);
    assert_eq!(clamped, edge);

    fs::write(p.join("q2.csv"), "x1,x2\n0.5,0.5\n").unwrap();
    assert_eq!(code(p, &["predict", "m.json", "q2.csv"]).0, 2);
}

#[test]
fn seed_and_threads_give_identical_output() {
    let dir = setup();
    let p = dir.path();
    fs::write(
        p.join("rate.toml"),
        "[forest]\nb_trees = 12\nk = 8\n\n[simulate]\nmode = \"diameter_rate\"\nalpha = 0.5\nd = 2\nk = 10\nn = [200, 400, 800, 1600]\nreps = 2\nb_trees = 3\n",
    )
    .unwrap();
    for args in [
        vec!["--config", "fit.toml", "fit", "data.csv", "--out", "m.json"],
        vec!["--config", "fit.toml", "ate", "data.csv"],
        vec!["--config", "rate.toml", "simulate"],
    ] {
        let mut runs = Vec::new();
        for threads in ["1", "4"] {
            let mut a = args.clone();
            a.extend(["--seed", "17", "--threads", threads, "--format", "delimited"]);
            let out = ok(p, &a);
            let model = if args[2] == "fit" { fs::read(p.join("m.json")).unwrap() } else { Vec::new() };
            runs.push((out, model));
        }
        assert_eq!(runs[0], runs[1], "{args:?}");
        let mut other = args.clone();
        other.extend(["--seed", "18", "--format", "delimited"]);
        assert_ne!(ok(p, &other), runs[0].0, "{args:?} ignores --seed");
    }
}

#[test]
fn ate_simulate_needs_dgp() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(code(p, &["--config", "fit.toml", "ate", "--simulate"]).0, 2);
    fs::write(
        p.join("ate.toml"),
        "[forest]\nb_trees = 10\nk = 10\n\n[dgp]\nwhich = \"ate_a\"\nn = 300\nd = 3\n",
    )
    .unwrap();
    let one = ok(p, &["--config", "ate.toml", "--seed", "2", "ate", "--simulate", "--threads", "1"]);
    let two = ok(p, &["--config", "ate.toml", "--seed", "2", "ate", "--simulate", "--threads", "3"]);
    assert_eq!(one, two);
    assert!(one.contains("theta_hat"));
}

#[test]
fn ate_report_round_trips_and_level_narrows() {
    let dir = setup();
    let p = dir.path();
    let wide = ok(p, &["--config", "fit.toml", "ate", "data.csv", "--out", "r95.json", "--format", "delimited"]);
    fs::write(p.join("lvl.toml"), "[forest]\nb_trees = 12\nk = 8\n\n[ate]\nlevel = 0.9\n").unwrap();
    ok(p, &["--config", "lvl.toml", "ate", "data.csv", "--out", "r90.json"]);

    let r95: Report = serde_json::from_str(&fs::read_to_string(p.join("r95.json")).unwrap()).unwrap();
    let r90: Report = serde_json::from_str(&fs::read_to_string(p.join("r90.json")).unwrap()).unwrap();
    let width = |r: &Report| match r {
        Report::Ate { groups } => groups[0].result.ci_high - groups[0].result.ci_low,
        _ => panic!("not an ATE report"),
    };
    assert!(width(&r90) < width(&r95));

    // the delimited text on stdout, the saved JSON and its re-rendering agree
    let parsed = parse_delimited(&wide).unwrap();
    assert_eq!(parsed, r95.sections());
    let again = ok(p, &["report", "r95.json", "--format", "delimited"]);
    assert_eq!(again, wide);
    let table = ok(p, &["report", "r95.json"]);
    assert!(table.starts_with("[estimate]"));
}

#[test]
fn ate_rejects_single_arm() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let mut csv = String::from("x1,y,a\n");
    for i in 0..100 {
        csv.push_str(&format!("{},{},1\n", i as f64 / 99.0, i % 7));
    }
    fs::write(p.join("treated.csv"), csv).unwrap();
    fs::write(p.join("f.toml"), "[forest]\nb_trees = 4\nk = 5\n").unwrap();
    let (c, err) = code(p, &["--config", "f.toml", "ate", "treated.csv"]);
    assert_eq!(c, 2);
    assert!(err.contains("arm"), "{err}");
}

#[test]
fn group_by_fits_each_group_and_routes_queries() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    // two groups with opposite signs, covariates outside the unit cube
    let mut csv = String::from("x1,x2,site,y\n");
    for i in 0..300 {
        let (a, b) = ((i % 17) as f64 * 3.0, (i % 13) as f64 - 6.0);
        let site = if i % 2 == 0 { "north" } else { "south" };
        let y = if site == "north" { 10.0 } else { -10.0 };
        csv.push_str(&format!("{a},{b},{site},{y}\n"));
    }
    fs::write(p.join("g.csv"), csv).unwrap();
    fs::write(p.join("g.toml"), "rescale = true\n\n[forest]\nb_trees = 5\nk = 5\n").unwrap();
    let report = ok(p, &["--config", "g.toml", "--group-by", "site", "fit", "g.csv", "--out", "g.json"]);
    assert!(report.contains("north") && report.contains("south"));
    fs::write(p.join("gq.csv"), "x1,x2,site\n3,0,south\n3,0,north\n").unwrap();
    let preds = ok(p, &["predict", "g.json", "gq.csv"]);
    assert_eq!(preds, "prediction\n-10\n10\n");
    fs::write(p.join("gu.csv"), "x1,x2,site\n3,0,east\n").unwrap();
    let (c, err) = code(p, &["predict", "g.json", "gu.csv"]);
    assert_eq!(c, 2);
    assert!(err.contains("east"), "{err}");
    let diag = ok(p, &["diag-diameter", "g.json", "--format", "delimited"]);
    let sections = parse_delimited(&diag).unwrap();
    assert_eq!(sections[0].rows.len(), 2);
}

#[test]
fn simulate_generate_is_deterministic() {
    let dir = setup();
    let p = dir.path();
    let a = ok(p, &["--config", "gen.toml", "--seed", "5", "simulate"]);
    assert_eq!(a, fs::read_to_string(p.join("data.csv")).unwrap());
    let b = ok(p, &["--config", "gen.toml", "--seed", "6", "simulate"]);
    assert_ne!(a, b);
    assert!(a.starts_with("x1,x2,x3,y,a\n"));
}
