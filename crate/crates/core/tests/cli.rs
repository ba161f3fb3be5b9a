use std::process::{Command, Output};

fn regvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regvar"))
        .args(args)
        .env_remove("REGVAR_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn conjugate_of_log() {
    let o = regvar(&["conjugate", "--L", "log"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,conjugate,ltilde,dev1,dev2"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "1/log");
        let x: f64 = cols[0].parse().unwrap();
        let lt: f64 = cols[2].parse().unwrap();
        assert!((lt * x.log2() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bn_is_n_for_alpha_one_and_unit_l() {
    let o = regvar(&["bn", "--alpha", "1", "--L", "c:1", "--n-max", "8"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "n,b_n\n1,1\n2,2\n3,3\n4,4\n5,5\n6,6\n7,7\n8,8\n");
}

#[test]
fn slln_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "slln",
        "--dist",
        "rademacher",
        "--dep",
        "iid",
        "--alpha",
        "1",
        "--L",
        "c:1",
        "--reps",
        "50",
        "--seed",
        "7",
    ];
    let mut outs = Vec::new();
    for (i, w) in ["1", "3"].iter().enumerate() {
        let csv = dir.path().join(format!("a{i}.csv"));
        let json = dir.path().join(format!("a{i}.json"));
        let mut a = args.to_vec();
        a.extend([
            "--workers",
            w,
            "--out",
            csv.to_str().unwrap(),
            "--summary",
            json.to_str().unwrap(),
        ]);
        let o = regvar(&a);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push((std::fs::read(&csv).unwrap(), std::fs::read(&json).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
    let csv = String::from_utf8(outs[0].0.clone()).unwrap();
    assert!(csv.starts_with("n,b_n,reps,median,q90,p_hat_eps_0.5,"));
    assert!(!csv.contains('\r'));
    let j: serde_json::Value = serde_json::from_slice(&outs[0].1).unwrap();
    assert_eq!(j["schema_version"], 1);
    assert_eq!(j["config"]["seed"], "7");
}

#[test]
fn errors_map_to_exit_codes() {
    let o = regvar(&["bn", "--alpha", "1", "--L", "log^", "--n-max", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));

    let o = regvar(&[
        "slln",
        "--dist",
        "rademacher",
        "--alpha",
        "1",
        "--L",
        "c:0.5",
        "--reps",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L(x) >= 1"));

    let o = regvar(&[
        "slln",
        "--dist",
        "rademacher",
        "--dep",
        "pos:0.3",
        "--alpha",
        "1.5",
        "--L",
        "c:1",
        "--reps",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = regvar(&[
        "bn",
        "--alpha",
        "1",
        "--L",
        "c:1",
        "--n-max",
        "4",
        "--out",
        "/nonexistent/dir/b.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.cfg");
    std::fs::write(&cfg, "subcommand = karamata\ncases = 2:0\nn = 64\n").unwrap();
    let o = regvar(&["--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..3], &["2", "0", "64"]);
    let ratio: f64 = row[5].parse().unwrap();
    assert!((ratio - 1.0).abs() < 0.01);
}

#[test]
fn sample_and_dist_emit_csv() {
    let o = regvar(&[
        "sample",
        "--dist",
        "rademacher",
        "--dep",
        "swr",
        "--n",
        "5",
        "--reps",
        "2",
        "--seed",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 11);

    let o = regvar(&[
        "dist",
        "--dist",
        "stpetersburg",
        "--t-log2-min",
        "0",
        "--t-log2-max",
        "3",
    ]);
    assert!(o.status.success());
    // P(X > 2^k) = 2^-k for the St. Petersburg law
    let text = stdout(&o);
    for (k, line) in text.lines().skip(1).enumerate() {
        let p: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(p, (-(k as f64)).exp2());
    }
}
