use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qctrlkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qctrlkit"))
        .current_dir(dir)
        .env_remove("QCTRLKIT_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn scenario_build_cpmg_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = qctrlkit(dir.path(), &["scenario", "build", "cpmg", "--params", r#"{"order":4,"duration":3e-6}"#]);
    ok(&out);
    let text = fs::read_to_string(dir.path().join("problem.json")).unwrap();
    let ctrl = qctrlkit::control::ControlSolution::from_json(&text).unwrap();
    assert_eq!(ctrl.dimension(), 2);
    assert!((ctrl.duration() - 3e-6).abs() < 1e-18);
    let again = ctrl.to_json_value();
    assert_eq!(again, serde_json::from_str::<Value>(&text).unwrap());

    let manifest = read_json(&dir.path().join("problem.manifest.json"));
    assert_eq!(manifest["command"], "scenario build");
    assert_eq!(manifest["config"]["params"]["order"], 4);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qctrlkit(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--control", "c.json", "--channels", "n.json", "--trials", "4", "--times", "t.csv", "--out", "x"][..],
        &["optimize", "--problem", "p.json", "--starts", "2", "--out", "r.json"][..],
        &["identify", "--experiments", "e.json", "--data", "d.csv", "--out", "e.json"][..],
    ] {
        let out = qctrlkit(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"), "{args:?}");
    }
}

fn write_simulation_inputs(dir: &Path) {
    ok(&qctrlkit(dir, &["scenario", "build", "cpmg", "--params", r#"{"order":2,"duration":2e-6}"#, "--out", "cpmg.json"]));
    fs::write(
        dir.join("channels.json"),
        r#"{"channels": [
            {"coupling": "additive", "operator": [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]],
             "psd": {"samples": [1e3, 8e2, 5e2, 2e2, 1e2, 5e1, 2e1, 1e1], "resolution": 6.283185307179586e5}},
            {"coupling": "drive_modulus", "index": 0, "values": [-1e5, 0, 1e5]}
        ]}"#,
    )
    .unwrap();
    fs::write(dir.join("times.csv"), "t_seconds\n0\n5e-7\n1e-6\n1.5e-6\n2e-6\n").unwrap();
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_simulation_inputs(dir.path());
    let run = |prefix: &str| {
        ok(&qctrlkit(
            dir.path(),
            &[
                "simulate", "--control", "cpmg.json", "--channels", "channels.json", "--seed", "11", "--trials", "16",
                "--times", "times.csv", "--out", prefix,
            ],
        ))
    };
    run("a");
    run("b");
    for suffix in ["_populations.csv", "_density.json"] {
        let a = fs::read(dir.path().join(format!("a{suffix}"))).unwrap();
        let b = fs::read(dir.path().join(format!("b{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
    let csv = fs::read_to_string(dir.path().join("a_populations.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_seconds,p0,p1"));
    for line in lines {
        let p: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let manifest = read_json(&dir.path().join("a_manifest.json"));
    assert_eq!(manifest["seed"], 11);
    let digests = manifest["inputs"].as_object().unwrap();
    assert_eq!(digests.len(), 3);
    assert!(digests.values().all(|d| d.as_str().unwrap().len() == 64));

    // a different seed changes the noisy ensemble
    ok(&qctrlkit(
        dir.path(),
        &[
            "simulate", "--control", "cpmg.json", "--channels", "channels.json", "--seed", "12", "--trials", "16",
            "--times", "times.csv", "--out", "c",
        ],
    ));
    assert_ne!(fs::read(dir.path().join("a_populations.csv")).unwrap(), fs::read(dir.path().join("c_populations.csv")).unwrap());
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_simulation_inputs(dir.path());
    let sim = |channels: &str| {
        qctrlkit(
            dir.path(),
            &[
                "simulate", "--control", "cpmg.json", "--channels", channels, "--seed", "1", "--trials", "2", "--times",
                "times.csv", "--out", "x",
            ],
        )
    };
    assert_eq!(sim("missing.json").status.code(), Some(4));
    fs::write(dir.path().join("bad.json"), r#"{"channels": [{"coupling": "sideways", "values": [1]}]}"#).unwrap();
    let out = sim("bad.json");
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn filter_function_hz_flag_converts_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qctrlkit(dir.path(), &["scenario", "build", "cpmg", "--params", r#"{"order":1,"duration":1e-6}"#, "--out", "c.json"]));
    fs::write(dir.path().join("op.json"), "[[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]]").unwrap();
    fs::write(dir.path().join("hz.csv"), "f\n0\n1e6\n").unwrap();
    fs::write(dir.path().join("rad.csv"), "w\n0\n6.283185307179586e6\n").unwrap();
    let run = |freqs: &str, out: &str, hz: bool| {
        let mut args = vec!["filter-function", "--control", "c.json", "--noise-operator", "op.json", "--freqs", freqs, "--out", out];
        if hz {
            args.push("--hz");
        }
        ok(&qctrlkit(dir.path(), &args));
        fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let a = run("hz.csv", "a.csv", true);
    let b = run("rad.csv", "b.csv", false);
    assert_eq!(a, b);
    assert!(a.starts_with("omega_rad_per_s,filter_function_s2\n"));
}

#[test]
fn reconstruct_recovers_a_flat_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("op.json"), "[[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]]").unwrap();
    fs::write(d.join("part.json"), r#"[{"omega_min": 0, "omega_max": 6e6, "samples": 4}]"#).unwrap();
    let mut controls = vec![];
    for n in 0..6 {
        let name = format!("c{n}.json");
        let params = format!(r#"{{"order":{n},"duration":4e-6}}"#);
        ok(&qctrlkit(d, &["scenario", "build", "cpmg", "--params", &params, "--out", &name]));
        controls.push(name);
    }
    // infidelities of a flat PSD from the in-process sensitivity, via a
    // forward model on the same grid
    let ctrls: Vec<_> = controls
        .iter()
        .map(|c| qctrlkit::control::ControlSolution::from_json(&fs::read_to_string(d.join(c)).unwrap()).unwrap())
        .collect();
    let part: qctrlkit::reconstruction::FrequencyPartition =
        serde_json::from_str(&fs::read_to_string(d.join("part.json")).unwrap()).unwrap();
    let op = qctrlkit::simulator::NoiseOperator::Constant(qctrlkit::linalg::pauli_z() * qctrlkit::linalg::c(0.5, 0.0));
    let f = qctrlkit::reconstruction::build_sensitivity(
        &ctrls,
        &[op],
        &part,
        &qctrlkit::control::Projector::full(2),
        &Default::default(),
    )
    .unwrap();
    let truth = vec![2e-3; 4];
    let infid = f.forward(&truth).unwrap();
    let csv: String = std::iter::once("infidelity".to_string()).chain(infid.iter().map(|x| x.to_string())).collect::<Vec<_>>().join("\n");
    fs::write(d.join("infid.csv"), csv + "\n").unwrap();

    let mut args = vec!["reconstruct", "--controls"];
    args.extend(controls.iter().map(String::as_str));
    args.extend(["--noise-operators", "op.json", "--infidelities", "infid.csv", "--method", "svd", "--partition", "part.json", "--out", "psd.csv"]);
    ok(&qctrlkit(d, &args));
    let text = fs::read_to_string(d.join("psd.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega_rad_per_s,psd_value"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 4);
    for v in values {
        assert!((v / 2e-3 - 1.0).abs() < 1e-6, "{v}");
    }
}

#[test]
fn optimize_and_identify_scenarios_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&qctrlkit(d, &["scenario", "build", "appd_a", "--out", "graph.json"]));
    let mut problem = read_json(&d.join("graph.json"));
    problem["stop"] = serde_json::json!({"max_iter": 5});
    fs::write(d.join("problem.json"), problem.to_string()).unwrap();
    ok(&qctrlkit(d, &["optimize", "--problem", "problem.json", "--starts", "1", "--seed", "3", "--out", "opt.json"]));
    let res = read_json(&d.join("opt.json"));
    assert!(res["result"]["cost"].as_f64().unwrap().is_finite());
    assert!(res["result"]["iterations"].as_u64().unwrap() <= 5);

    ok(&qctrlkit(d, &["scenario", "build", "three_axis", "--out", "exps.json"]));
    let exps = read_json(&d.join("exps.json"));
    let n = exps["experiments"].as_array().unwrap().len();
    // data from a fixed parameter guess; only the plumbing is checked here
    let rows: String = (0..n).map(|k| format!("{},0.05\n", 0.5 + 0.3 * ((k as f64) * 0.7).sin())).collect();
    fs::write(d.join("data.csv"), format!("value,std_dev\n{rows}")).unwrap();
    ok(&qctrlkit(d, &["identify", "--experiments", "exps.json", "--data", "data.csv", "--starts", "2", "--seed", "1", "--out", "est.json"]));
    let est = read_json(&d.join("est.json"));
    assert_eq!(est["estimate"].as_array().unwrap().len(), 3);
    assert_eq!(est["start_costs"].as_array().unwrap().len(), 2);
}
