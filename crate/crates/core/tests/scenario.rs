use formation_nmpc::scenario::{
    aggregate_runs, reference_at, run_table, simulate_run, write_aggregate, RunLog, ScenarioConfig, Schedule,
};
use std::process::Command;

/// Two seconds of hold and line flight under the deterministic budget.
fn short_config() -> ScenarioConfig {
    ScenarioConfig {
        schedule: Schedule { hold: 0.5, line: 1.5, turn: 0.0, regenerate: 0.0, spiral: 0.0 },
        test_mode: Some(3),
        ..Default::default()
    }
}

fn same_trajectory(a: &RunLog, b: &RunLog) -> bool {
    a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| {
            x.t == y.t
                && x.states == y.states
                && x.rpm == y.rpm
                && x.pair_errors == y.pair_errors
                && x.objective.to_bits() == y.objective.to_bits()
                && x.kkt.to_bits() == y.kkt.to_bits()
                && x.sqp_iters == y.sqp_iters
                && x.fallback == y.fallback
        })
}

#[test]
fn seed_determines_the_run() {
    let cfg = short_config();
    let a = simulate_run(&cfg, 3).unwrap();
    let b = simulate_run(&cfg, 3).unwrap();
    assert!(same_trajectory(&a, &b));
    let c = simulate_run(&cfg, 4).unwrap();
    assert!(!same_trajectory(&a, &c));
}

#[test]
fn one_record_per_step_and_rotor_limits_hold() {
    let cfg = short_config();
    let log = simulate_run(&cfg, 1).unwrap();
    assert_eq!(log.records.len(), cfg.steps());
    for (k, r) in log.records.iter().enumerate() {
        assert!((r.t - k as f64 * cfg.dt).abs() < 1e-9);
        assert!(r.sqp_iters >= 1);
        for rpm in r.rpm.iter().flatten() {
            assert!((0.0..=cfg.vehicle.max_rpm).contains(rpm), "rpm {rpm} at t = {}", r.t);
        }
    }
}

#[test]
fn aggregates_are_bit_identical_across_invocations() {
    let cfg = short_config();
    let logs = |cfg: &ScenarioConfig| (0..2).map(|s| simulate_run(cfg, 10 + s).unwrap()).collect::<Vec<_>>();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_aggregate(&pa, &aggregate_runs(&logs(&cfg)).unwrap()).unwrap();
    write_aggregate(&pb, &aggregate_runs(&logs(&cfg)).unwrap()).unwrap();
    // Wall-clock columns are the only legitimately varying output.
    let strip = |text: String| -> Vec<String> {
        let rows: Vec<Vec<String>> = text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect();
        let skip: Vec<usize> =
            rows[0].iter().enumerate().filter(|(_, c)| c.contains("cpu_ms")).map(|(i, _)| i).collect();
        rows.iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(i, _)| !skip.contains(i))
                    .map(|(_, c)| c.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    };
    let a = strip(std::fs::read_to_string(pa).unwrap());
    let b = strip(std::fs::read_to_string(pb).unwrap());
    assert_eq!(a, b);
    assert!(a[0].starts_with("t,mean_veh0_x,std_veh0_x"));
}

#[test]
fn per_run_table_follows_the_documented_schema() {
    let log = simulate_run(&short_config(), 1).unwrap();
    let table = run_table(&log);
    let mut expected = vec!["t".to_string()];
    for v in 0..3 {
        for c in ["x", "y", "z", "yaw"] {
            expected.push(format!("veh{v}_{c}"));
        }
        for r in 1..=4 {
            expected.push(format!("veh{v}_rpm{r}"));
        }
    }
    for c in [
        "err_f1_L",
        "err_f2_L",
        "err_f1_f2",
        "err_pos_L",
        "err_yaw_L",
        "objective",
        "kkt",
        "sqp_iters",
        "cpu_ms",
        "fallback",
        "fov_ok",
    ] {
        expected.push(c.to_string());
    }
    assert_eq!(table.columns, expected);
    assert_eq!(table.rows.len(), log.records.len());
}

#[test]
fn reference_velocity_is_the_position_derivative() {
    let cfg = ScenarioConfig::default();
    let h = 1e-5;
    let mut t = h;
    while t < cfg.schedule.end() - h {
        let fd =
            (reference_at(t + h, &cfg).unwrap().position - reference_at(t - h, &cfg).unwrap().position) / (2.0 * h);
        let v = reference_at(t, &cfg).unwrap().velocity;
        assert!((fd - v).amax() < 1e-5, "t = {t}: {fd:?} vs {v:?}");
        t += 0.0137;
    }
}

#[test]
fn reference_is_continuous_across_segments() {
    let cfg = ScenarioConfig::default();
    let d = cfg.schedule.durations();
    let mut boundary = 0.0;
    for dur in &d[..4] {
        boundary += dur;
        let before = reference_at(boundary - 1e-9, &cfg).unwrap();
        let after = reference_at(boundary + 1e-9, &cfg).unwrap();
        assert!((before.position - after.position).amax() < 1e-6);
        assert!((before.yaw - after.yaw).abs() < 1e-6);
    }
}

#[test]
fn cli_run_writes_a_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("short.toml");
    std::fs::write(&cfg_path, "[schedule]\nhold = 0.5\nline = 0.5\nturn = 0.0\nregenerate = 0.0\nspiral = 0.0\n")
        .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_formation-nmpc"))
        .args(["run", "--seed", "2", "--test-mode", "2", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run_2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20);
    assert!(csv.starts_with("t,veh0_x,"));
}

#[test]
fn cli_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    std::fs::write(&cfg_path, "horizn = 12\n").unwrap();
    let out =
        Command::new(env!("CARGO_BIN_EXE_formation-nmpc")).args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(!out.status.success());
}
