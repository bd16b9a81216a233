use std::path::{Path, PathBuf};

use stlgame::cli::run_from;
use stlgame::config::ExperimentConfig;
use stlgame::persist::{read_json, WeightFile};

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["stlgame"];
    full.extend_from_slice(args);
    run_from(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

/// Short cart-pole training so the verbs run quickly.
fn quick_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "quick.json",
        r#"{"preset": "cartpole_table1", "train": {"iterations": 5}, "test": {"n": 8, "horizon": 30}}"#,
    )
}

fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = quick_config(dir);
    let out = dir.join("run");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 0);
    (cfg, out)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = trained(dir.path());
    for f in ["attacker.json", "defender.json", "history.csv", "config.resolved.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let history = read(&out.join("history.csv"));
    assert!(history.starts_with("iteration,phase,objective,grad_norm\n"));
    assert_eq!(history.lines().count(), 1 + 5 * 3);
    let resolved = ExperimentConfig::load(&out.join("config.resolved.json")).unwrap();
    assert_eq!(resolved.train.iterations, 5);
}

#[test]
fn zero_iterations_keep_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "zero.json", r#"{"preset": "cartpole_table1", "train": {"iterations": 0}}"#);
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", s(&cfg_path), "--out", s(&out)]), 0);
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let (a0, d0) = cfg.init_networks(&cfg.build_system().unwrap()).unwrap();
    let a: WeightFile = read_json(&out.join("attacker.json")).unwrap();
    let d: WeightFile = read_json(&out.join("defender.json")).unwrap();
    assert_eq!(a.params, a0.params);
    assert_eq!(d.params, d0.params);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(run(&["train", "--out", s(&out)]), 2);
    assert_eq!(run(&["train", "--preset", "nope", "--out", s(&out)]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    let bad = write_config(dir.path(), "bad.json", r#"{"preset": "cartpole_table1", "window": 0}"#);
    assert_eq!(run(&["train", "--config", s(&bad), "--out", s(&out)]), 2);
    let unknown = write_config(dir.path(), "unknown.json", r#"{"preset": "cartpole_table1", "colour": 1}"#);
    assert_eq!(run(&["train", "--config", s(&unknown), "--out", s(&out)]), 2);
}

#[test]
fn divergent_dynamics_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "huge.json",
        r#"{"preset": "cartpole_table1", "system": {"kind": "cartpole", "params": {"dt": 1e200}}, "train": {"iterations": 2, "max_retries": 2}}"#,
    );
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 3);
}

#[test]
fn weights_from_another_config_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = trained(dir.path());
    let d = out.join("defender.json");
    let a = out.join("attacker.json");
    let report = dir.path().join("rep");
    let args = |seed: &'static str| {
        vec![
            "test".to_string(),
            "--config".into(),
            s(&cfg).into(),
            "--defender".into(),
            s(&d).into(),
            "--attacker".into(),
            s(&a).into(),
            "--train-seed".into(),
            seed.into(),
            "--out".into(),
            s(&report).into(),
        ]
    };
    let call = |v: Vec<String>| run_from(std::iter::once("stlgame".to_string()).chain(v));
    assert_eq!(call(args("0")), 0);
    assert_eq!(call(args("1")), 2);
    assert_eq!(
        run(&["test", "--config", s(&cfg), "--defender", s(&a), "--attacker", s(&a), "--out", s(&report)]),
        2
    );
}

#[test]
fn test_report_and_summary_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = trained(dir.path());
    let rep = dir.path().join("rep");
    let code = run(&[
        "test",
        "--config",
        s(&cfg),
        "--defender",
        s(&out.join("defender.json")),
        "--attacker",
        s(&out.join("attacker.json")),
        "--out",
        s(&rep),
    ]);
    assert_eq!(code, 0);
    let mut reader = csv::Reader::from_path(rep.join("report.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    let summary: serde_json::Value = read_json(&rep.join("summary.json")).unwrap();
    for (k, name) in ["phi_d", "phi_theta"].iter().enumerate() {
        let col = headers.iter().position(|h| h == format!("sat_{name}")).unwrap();
        let mean = rows.iter().filter(|r| &r[col] == "1").count() as f64 / rows.len() as f64;
        assert_eq!(summary["fraction_positive"][k].as_f64().unwrap(), mean);
    }

    let one = dir.path().join("one");
    let code = run(&[
        "test",
        "--config",
        s(&cfg),
        "--defender",
        s(&out.join("defender.json")),
        "--attacker",
        s(&out.join("attacker.json")),
        "--n",
        "1",
        "--out",
        s(&one),
    ]);
    assert_eq!(code, 0);
    assert_eq!(read(&one.join("report.csv")).lines().count(), 2);
}

#[test]
fn fixed_env_ignores_attacker_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = trained(dir.path());
    let actions = write_config(dir.path(), "env.csv", "friction,target_rate\n0.2,1.0\n0.5,-1.0\n0.0,0.0\n");
    let run_fixed = |attacker: Option<&Path>, dest: &Path| {
        let mut args = vec![
            "test".to_string(),
            "--config".into(),
            s(&cfg).into(),
            "--defender".into(),
            s(&out.join("defender.json")).into(),
            "--mode".into(),
            "fixed-env".into(),
            "--env-actions".into(),
            s(&actions).into(),
            "--out".into(),
            s(dest).into(),
        ];
        if let Some(a) = attacker {
            args.extend(["--attacker".to_string(), s(a).into()]);
        }
        run_from(std::iter::once("stlgame".to_string()).chain(args))
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_fixed(Some(&out.join("attacker.json")), &a), 0);
    assert_eq!(run_fixed(None, &b), 0);
    assert_eq!(read(&a.join("report.csv")), read(&b.join("report.csv")));
}

#[test]
fn rollout_csv_shape_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = trained(dir.path());
    let go = |h: &str, dest: &Path| {
        run(&[
            "rollout",
            "--config",
            s(&cfg),
            "--defender",
            s(&out.join("defender.json")),
            "--attacker",
            s(&out.join("attacker.json")),
            "--sample",
            "--horizon",
            h,
            "--seed",
            "5",
            "--out",
            s(dest),
        ])
    };
    let one = dir.path().join("one.csv");
    assert_eq!(go("1", &one), 0);
    let text = read(&one);
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("step,time,x,x_dot,theta,theta_dot,x_hat,ua_force,ue_friction,ue_target_rate,rho_phi_d,rho_phi_theta\n"));

    let (p, q) = (dir.path().join("p.csv"), dir.path().join("q.csv"));
    assert_eq!(go("50", &p), 0);
    assert_eq!(go("50", &q), 0);
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    let mut reader = csv::Reader::from_path(&p).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 50);
    for (j, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<usize>().unwrap(), j);
        assert_eq!(r[1].parse::<f64>().unwrap(), j as f64 * 0.05);
    }

    let bad = run(&[
        "rollout",
        "--config",
        s(&cfg),
        "--defender",
        s(&out.join("defender.json")),
        "--attacker",
        s(&out.join("attacker.json")),
        "--s0",
        "1,2,3",
        "--out",
        s(&dir.path().join("bad.csv")),
    ]);
    assert_eq!(bad, 2);
}

#[test]
fn compare_pairs_rows_by_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "platoon.json",
        r#"{"preset": "platoon_table2", "train": {"iterations": 3}, "test": {"n": 12, "horizon": 40}}"#,
    );
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 0);
    let nets = [
        "--defender".to_string(),
        s(&out.join("defender.json")).into(),
        "--attacker".into(),
        s(&out.join("attacker.json")).into(),
    ];
    let call = |extra: &[&str], dest: &Path| {
        let mut args = vec!["stlgame".to_string(), "compare".into(), "--config".into(), s(&cfg).into()];
        args.extend(nets.iter().cloned());
        args.extend(extra.iter().map(|x| x.to_string()));
        args.extend(["--out".to_string(), s(dest).into()]);
        run_from(args)
    };
    let cmp = dir.path().join("cmp");
    assert_eq!(call(&["--baseline", "pid"], &cmp), 0);
    assert_eq!(call(&["--baseline", "smc"], &dir.path().join("wrong")), 2);

    let rep = dir.path().join("rep");
    let mut args = vec!["stlgame".to_string(), "test".into(), "--config".into(), s(&cfg).into()];
    args.extend(nets.iter().cloned());
    args.extend(["--out".to_string(), s(&rep).into()]);
    assert_eq!(run_from(args), 0);

    let mut c = csv::Reader::from_path(cmp.join("compare.csv")).unwrap();
    let mut t = csv::Reader::from_path(rep.join("report.csv")).unwrap();
    let crow: Vec<csv::StringRecord> = c.records().map(|r| r.unwrap()).collect();
    let trow: Vec<csv::StringRecord> = t.records().map(|r| r.unwrap()).collect();
    assert_eq!(crow.len(), 12);
    for (a, b) in crow.iter().zip(&trow) {
        assert_eq!(&a[1], &b[1], "input hash column");
        let diff: f64 = a[6].parse().unwrap();
        let own: f64 = a[2].parse().unwrap();
        let pid: f64 = a[4].parse().unwrap();
        assert_eq!(diff, own - pid);
    }
}
