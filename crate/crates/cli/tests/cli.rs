use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn zxqos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zxqos"))
        .args(args)
        .env("RAYON_NUM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = zxqos(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn ser_bound_point_and_inverse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "ser-bound",
        "--mrx",
        "3",
        "--gamma",
        "2.65",
        "--sigma2",
        "1",
        "--out",
        d,
    ]);
    let report = json(&dir.path().join("ser_bound.json"));
    let ser = report["report"]["ser_ub"].as_f64().unwrap();
    assert!((8e-3..1.25e-2).contains(&ser), "{ser}");

    ok(&[
        "ser-bound",
        "--mrx",
        "2",
        "--target-ser",
        "1e-4",
        "--out",
        d,
        "--prefix",
        "inv",
    ]);
    let report = json(&dir.path().join("inv.json"));
    let gamma = report["report"]["gamma"].as_f64().unwrap();
    assert!((gamma - 4.0).abs() <= 0.15, "{gamma}");

    let manifest = json(&dir.path().join("inv.manifest.json"));
    assert_eq!(manifest["tool"], "zxqos");
    assert_eq!(manifest["outputs"], serde_json::json!(["inv.json"]));
    assert_eq!(manifest["job"]["command"], "ser_bound");
    assert!(manifest["started_at"].as_str().unwrap() <= manifest["finished_at"].as_str().unwrap());
}

#[test]
fn ser_bound_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "ser-bound",
        "--mrx",
        "3",
        "--gamma-grid",
        "1.5:0.5:4.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(dir.path().join("ser_bound.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "gamma,ser_ub,ber_ub");
    assert_eq!(lines.len(), 8);
    let ser: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(ser.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["ser-bound", "--gamma", "2"],
        vec!["ser-bound", "--mrx", "3", "--gamma", "2", "--target-ser", "1e-2"],
        vec!["ser-bound", "--mrx", "4", "--gamma", "2", "--out", d],
        vec!["simulate", "--mrx", "3", "--n", "1", "--out", d],
        vec!["simulate", "--mrx", "2", "--n", "3", "--gamma", "2", "--out", d],
        vec!["simulate", "--gamma", "0", "--out", d],
        vec!["simulate", "--gamma", "2", "--gamma-grid", "1:x:2", "--out", d],
        vec!["replay", "missing.manifest.json", "--verify"],
    ] {
        let out = zxqos(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
}

const SWEEP: &[&str] = &[
    "simulate",
    "--mrx",
    "3",
    "--ntx",
    "1",
    "--nu",
    "1",
    "--n",
    "1",
    "--gamma-grid",
    "1.5:0.5:4.5",
    "--trials",
    "3000",
    "--seed",
    "7",
];

#[test]
fn simulate_sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut args = SWEEP.to_vec();
        args.extend(["--out", d.path().to_str().unwrap()]);
        ok(&args);
    }
    let csv_a = std::fs::read(a.path().join("simulate.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join("simulate.csv")).unwrap());

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "gamma,ser_mc,ser_ci_lo,ser_ci_hi,ser_ub,ber_mc,ber_ub,etx,snr_req_db,sweep_param,sweep_value,error"
    );
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 7);
    for (i, r) in rows.iter().enumerate() {
        let gamma: f64 = r[0].parse().unwrap();
        assert!((gamma - (1.5 + 0.5 * i as f64)).abs() < 1e-12);
        assert_eq!(r[9], "gamma");
        let (lo, ser, hi): (f64, f64, f64) = (r[2].parse().unwrap(), r[1].parse().unwrap(), r[3].parse().unwrap());
        assert!(lo <= ser && ser <= hi);
        assert!(r[4].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn replay_reproduces_and_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SWEEP.to_vec();
    args.extend(["--out", dir.path().to_str().unwrap()]);
    ok(&args);
    let manifest = dir.path().join("simulate.manifest.json");
    let m = manifest.to_str().unwrap();
    ok(&["replay", m, "--verify"]);

    let copy = tempfile::tempdir().unwrap();
    ok(&["replay", m, "--out", copy.path().to_str().unwrap()]);
    for name in ["simulate.csv", "simulate.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(copy.path().join(name)).unwrap()
        );
    }

    let csv = dir.path().join("simulate.csv");
    let tampered = std::fs::read_to_string(&csv).unwrap().replacen("1.5,", "1.6,", 1);
    std::fs::write(&csv, tampered).unwrap();
    let out = zxqos(&["replay", m, "--verify"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("simulate.csv differs"), "{}", stderr(&out));
}

#[test]
fn config_file_with_overrides_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\ntrials = 500\ngamma = 2.0\nchannel_mode = \"redraw\"\n\n[dims]\nn_symbols = 2\nm_rx = 3\nm_tx = 3\nn_tx = 3\nn_users = 2\n",
    )
    .unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "1.5",
        "--out",
        d,
    ]);
    let result = json(&dir.path().join("simulate.json"));
    assert_eq!(result["config"]["gamma"], 1.5);
    assert_eq!(result["config"]["dims"]["n_tx"], 3);
    assert_eq!(result["result"]["trials"], 500);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 3\ntrals = 500\n").unwrap();
    let out = zxqos(&["simulate", "--config", bad.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 2") && err.contains("trals"), "{err}");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"seed\": \"seven\"\n}\n").unwrap();
    let out = zxqos(&["simulate", "--config", bad.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn multiuser_cdf_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--cdf",
        "--mrx",
        "2",
        "--n",
        "4",
        "--ntx",
        "2",
        "--nu",
        "2",
        "--target-ser",
        "1e-2",
        "--channels",
        "50",
        "--trials",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(dir.path().join("cdf.csv")).unwrap();
    let cdf: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(cdf.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*cdf.last().unwrap(), 1.0);
    let summary = json(&dir.path().join("cdf.json"));
    assert_eq!(summary["cdf"]["ser"].as_array().unwrap().len(), 50);
}

#[test]
fn design_identity_channel() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "design",
        "--mrx",
        "3",
        "--n",
        "4",
        "--channel",
        "1",
        "--gamma",
        "2.65",
        "--out",
        d,
    ]);
    let doc = json(&dir.path().join("design.json"));
    assert_eq!(doc["n_q"], 13);
    assert_eq!(doc["gamma"], 2.65);
    assert!(doc["max_violation"].as_f64().unwrap() <= 1e-8);
    assert!(doc["kkt_residual"].as_f64().unwrap() <= 1e-6);
    let user = &doc["users"][0];
    for q in ["in_phase", "quadrature"] {
        assert_eq!(user[q]["p"].as_array().unwrap().len(), 13);
        assert_eq!(user[q]["c_out"].as_array().unwrap().len(), 13);
        assert_eq!(user[q]["status"], "optimal");
    }
    // beta = 1 for the identity channel, so E_Tx is the sum of the two objectives.
    let e: f64 = ["in_phase", "quadrature"]
        .iter()
        .map(|q| user[*q]["objective"].as_f64().unwrap())
        .sum();
    assert!((doc["e_tx"].as_f64().unwrap() - e).abs() <= 1e-9 * e);
}

#[test]
fn design_from_file_with_target_ser() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let h = dir.path().join("h.csv");
    std::fs::write(&h, "# user rows\n1+0.2i, 0.5, -0.1i\n-0.3i, 1, 0.4-0.4i\n").unwrap();
    ok(&[
        "design",
        "--mrx",
        "3",
        "--n",
        "2",
        "--channel-file",
        h.to_str().unwrap(),
        "--target-ser",
        "1e-3",
        "--out",
        d,
    ]);
    let doc = json(&dir.path().join("design.json"));
    ok(&["ser-bound", "--mrx", "3", "--target-ser", "1e-3", "--out", d]);
    let bound = json(&dir.path().join("ser_bound.json"));
    assert_eq!(doc["gamma"], bound["report"]["gamma"]);
    assert_eq!(doc["users"].as_array().unwrap().len(), 2);
    assert_eq!(doc["dims"]["n_tx"], 3);
    ok(&[
        "replay",
        dir.path().join("design.manifest.json").to_str().unwrap(),
        "--verify",
    ]);
}

#[test]
fn design_channel_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let h = dir.path().join("h.csv");
    std::fs::write(&h, "1,0.5\n0.2,1+x\n").unwrap();
    let out = zxqos(&[
        "design",
        "--mrx",
        "3",
        "--n",
        "2",
        "--channel-file",
        h.to_str().unwrap(),
        "--gamma",
        "2",
        "--out",
        d,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("row 2, column 2") && stderr(&out).contains("1+x"),
        "{}",
        stderr(&out)
    );

    let out = zxqos(&[
        "design",
        "--mrx",
        "3",
        "--n",
        "2",
        "--channel",
        "1,1;1,1",
        "--gamma",
        "2",
        "--out",
        d,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ill-conditioned"), "{}", stderr(&out));
}

#[test]
fn shipped_configs_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for (file, extra) in [
        ("siso_gamma_sweep.toml", vec!["--trials", "50"]),
        ("antenna_sweep.toml", vec!["--trials", "50"]),
        ("multiuser_cdf.json", vec!["--cdf", "--channels", "50", "--trials", "5"]),
    ] {
        let cfg = root.join(file);
        let mut args = vec![
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d,
            "--prefix",
            file,
        ];
        args.extend(extra);
        ok(&args);
    }
}
