use std::process::{Command, Output};

fn magspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magspec")).args(args).env_remove("MAGSPEC_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn montgomery_band_minimum_line() {
    let o = magspec(&["band", "--model", "montgomery:1", "--range", "-1,2", "--points", "61", "--minimize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let last = out.lines().last().unwrap();
    let f: Vec<&str> = last.split_whitespace().collect();
    assert_eq!(f[0], "min");
    let (arg, value): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
    assert!((arg - 0.3467).abs() < 2e-3 && (value - 0.5698).abs() < 2e-3, "{last}");
    assert!(out.starts_with("param,value,residual\n"));
    assert_eq!(out.lines().filter(|l| l.contains(',')).count(), 62);
}

#[test]
fn delta_columns_agree() {
    let o = magspec(&["delta", "--x", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "x,level,closed_form,oracle");
    let mut rows = 0;
    for l in lines {
        let c: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((c[2] - c[3]).abs() <= 1e-10, "{l}");
        rows += 1;
    }
    assert_eq!(rows, 2);
}

#[test]
fn constants_report_identities() {
    let o = magspec(&["constants", "degennes"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "theta0_eq_zeta0sq=pass"), "{out}");
    let theta0: f64 = out.lines().find_map(|l| l.strip_prefix("theta0=")).unwrap().parse().unwrap();
    assert!((theta0 - 0.590106).abs() < 1e-4);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["band", "--model", "nope", "--range", "0,1", "--points", "5"][..],
        &["band", "--model", "degennes", "--range", "1,0", "--points", "5"],
        &["frobnicate"],
        &["delta"],
    ] {
        let o = magspec(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).lines().any(|l| l.starts_with("ERR: code=2 ")), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(magspec(&["--help"]).status.code(), Some(0));
}

#[test]
fn solver_failures_exit_3() {
    // Montgomery band decreases towards its minimum near 0.35: no interior bracket on [2, 4].
    let o = magspec(&["band", "--model", "montgomery:1", "--range", "2,4", "--points", "9", "--minimize"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ERR: code=3 kind=no_bracket"), "{}", stderr(&o));
    let o = magspec(&["sweep", "--builder", "bo-triangle", "--hs", "0.04,0.02,0.01,0.005", "--fit", "0,1,1.0000000001"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kind=ill_conditioned"), "{}", stderr(&o));
}

#[test]
fn csv_is_byte_identical_across_runs_and_job_counts() {
    let args = ["sweep", "--builder", "bo-guide", "--hs", "0.04,0.02,0.01", "--fit", "0,0.6666666666666666"];
    let a = magspec(&args);
    let b = magspec(&args);
    let mut one = vec!["--jobs", "1"];
    one.extend_from_slice(&args);
    let c = magspec(&one);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let out = stdout(&a);
    assert!(!out.contains('\r'));
    let row = out.lines().nth(1).unwrap();
    let value = row.split(',').nth(2).unwrap();
    let mantissa = value.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 17, "{row}");
}

#[test]
fn seed_comes_from_environment() {
    let args = ["sweep", "--builder", "triangle2d", "--hs", "0.04,0.02,0.01", "--nodes", "64"];
    let run = |seed: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_magspec"));
        c.args(args);
        match seed {
            Some(s) => c.env("MAGSPEC_SEED", s),
            None => c.env_remove("MAGSPEC_SEED"),
        };
        c.output().unwrap()
    };
    let a = run(Some("7"));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, run(Some("7")).stdout);
    // A different starting vector moves the Lanczos values only within the tolerance.
    let b = run(None);
    let vals = |o: &Output| -> Vec<f64> {
        stdout(o).lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect()
    };
    for (x, y) in vals(&a).iter().zip(vals(&b)) {
        assert!((x - y).abs() < 1e-8, "{x} {y}");
    }
    let bad = run(Some("seven"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags() {
    let path = std::env::temp_dir().join(format!("magspec-cli-{}.toml", std::process::id()));
    std::fs::write(&path, "[delta]\nx = 2.0\n").unwrap();
    let o = magspec(&["--config", path.to_str().unwrap(), "delta"]);
    std::fs::remove_file(&path).unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(o.stdout, magspec(&["delta", "--x", "2"]).stdout);
}

#[test]
fn count_prints_weyl_estimate() {
    let o = magspec(&["count", "--potential", "bounded", "--h", "0.01", "--E", "0.5", "--bracket", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let get = |k: &str| -> f64 {
        out.lines().find_map(|l| l.strip_prefix(&format!("{k}="))).unwrap().parse().unwrap()
    };
    assert!(get("lower") <= get("exact") && get("exact") <= get("upper"), "{out}");
    assert!(get("rel_err") < 0.05, "{out}");
}
