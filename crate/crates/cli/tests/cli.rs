use std::path::Path;
use std::process::{Command, Output};

fn homdetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homdetect"))
        .args(args)
        .env_remove("HOMDETECT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Last column of every data row, parsed as a float.
fn last_column(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn c_target_at_one_half_is_rejected() {
    let out = homdetect(&["nmeas", "--c-target", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("c-target"));
}

#[test]
fn out_of_range_parameter_names_the_field() {
    let out = homdetect(&["dist", "--eta", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`eta`"));
    let out = homdetect(&["dist", "--saturation", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_photon_threshold_tables() {
    for (protocol, rows) in [("coherent-hom", 4), ("incoherent-hom", 4), ("direct", 2)] {
        let out = homdetect(&["dist", "--protocol", protocol, "--saturation", "1"]);
        assert!(out.status.success());
        let p = last_column(&stdout(&out));
        assert_eq!(p.len(), rows, "{protocol}");
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn diff_without_emitter_is_zero() {
    let out = homdetect(&["dist", "--xi", "0", "--diff"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("j,k,dp\n"));
    assert!(last_column(&text).iter().all(|&d| d == 0.0));
}

#[test]
fn fig1b_difference_table() {
    let out = homdetect(&[
        "dist", "--protocol", "coherent-hom", "--ne", "0.8", "--ni", "0.8", "--nc", "1", "--cos-theta", "1", "--eta",
        "0.8", "--diff",
    ]);
    assert!(out.status.success());
    let dp = last_column(&stdout(&out));
    assert!(dp.iter().sum::<f64>().abs() < 1e-12);
    assert!(dp.iter().any(|&d| d > 1e-3) && dp.iter().any(|&d| d < -1e-3));
}

#[test]
fn single_trajectory_quartiles_equal_the_trajectory() {
    let out = homdetect(&["simulate", "--n-trajectories", "1", "--n-measurements", "20", "--seed", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("step,mean_Pe,q25,q75\n"));
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], cols[2]);
        assert_eq!(cols[1], cols[3]);
    }
    assert!(stderr(&out).contains("empirical_confidence"));
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let args = ["simulate", "--n-trajectories", "500", "--n-measurements", "10", "--seed", "8"];
    let csv = stdout(&homdetect(&args));
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&homdetect(&json_args))).unwrap();
    let steps = doc["steps"].as_array().unwrap();
    for (line, step) in csv.lines().skip(1).zip(steps) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[1], step["mean_Pe"].as_f64().unwrap());
        assert_eq!(cols[2], step["q25"].as_f64().unwrap());
        assert_eq!(cols[3], step["q75"].as_f64().unwrap());
    }
    assert_eq!(doc["summary"]["seed"], 8);
}

#[test]
fn summary_file_sits_beside_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let status = homdetect(&[
        "simulate",
        "--protocol",
        "direct",
        "--n-trajectories",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.summary.json")).unwrap()).unwrap();
    for key in ["empirical_confidence", "analytic_confidence", "N", "seed"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"protocol": "incoherent-hom", "xi": 0.2, "eta": 0.7, "ne": 0.5, "ni": 0.3, "nc": 2,
            "saturation": 3, "c-target": 0.9}"#,
    )
    .unwrap();
    let from_file = homdetect(&["nmeas", "--config", config.to_str().unwrap()]);
    let from_flags = homdetect(&[
        "nmeas", "--protocol", "incoherent-hom", "--xi", "0.2", "--eta", "0.7", "--ne", "0.5", "--ni", "0.3", "--nc",
        "2", "--saturation", "3", "--c-target", "0.9",
    ]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, from_flags.stdout);
    // flags override the document
    let overridden = homdetect(&["nmeas", "--config", config.to_str().unwrap(), "--saturation", "inf"]);
    assert_ne!(overridden.stdout, from_file.stdout);
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"zeta": 1}"#).unwrap();
    assert_eq!(homdetect(&["dist", "--config", config.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(homdetect(&["dist", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn indistinguishable_hypotheses_fail_the_result() {
    let out = homdetect(&["nmeas", "--xi", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[6], "");
    assert!(row.len() > 9 && !row[9].is_empty());
    assert!(stderr(&out).contains("cannot be separated"));
}

#[test]
fn speedup_requires_hom() {
    assert_eq!(homdetect(&["speedup", "--protocol", "direct"]).status.code(), Some(2));
    let out = homdetect(&["speedup", "--eta", "0.9", "--ne", "1", "--ni", "1", "--nc", "6"]);
    assert!(out.status.success());
    let row: Vec<String> = stdout(&out).lines().nth(1).unwrap().split(',').map(String::from).collect();
    assert!(row[7].parse::<f64>().unwrap() > 10.0);
}

#[test]
fn sweep_needs_a_recipe() {
    assert_eq!(homdetect(&["sweep"]).status.code(), Some(2));
    assert_eq!(homdetect(&["sweep", "--preset", "fig9"]).status.code(), Some(2));
}

#[test]
fn fig2a_preset_is_monotone_in_noise() {
    let out = homdetect(&["sweep", "--preset", "fig2a"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("protocol,eta,n_e,n_i,n_c,t,N,speedup,at_bound,error\n"));
    let mut series: std::collections::BTreeMap<(String, String), Vec<(f64, u64)>> = Default::default();
    for line in text.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        series
            .entry((c[0].to_string(), c[5].to_string()))
            .or_default()
            .push((c[2].parse().unwrap(), c[6].parse().unwrap()));
    }
    assert_eq!(series.len(), 12);
    for (key, points) in series {
        assert!(points.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1), "{key:?}");
    }
}

#[test]
fn oracle_validation_reports() {
    let out = homdetect(&["validate-oracle", "--xi", "0", "--format", "json"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["max_abs"].as_f64().unwrap() <= 1e-12);
    assert_eq!(report["pass"], true);

    let out = homdetect(&["validate-oracle", "--xi", "1", "--eta", "1", "--epsilon", "1", "--ne", "0", "--ni", "0"]);
    assert!(out.status.success());

    let out = homdetect(&["validate-oracle", "--nc", "30", "--fock-dim", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(homdetect(&["validate-oracle", "--protocol", "direct"]).status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: Option<&str>, name: &str| {
        let path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_homdetect"));
        cmd.args(["simulate", "--n-trajectories", "9000", "--seed", "12", "--out"]).arg(&path);
        match threads {
            Some(t) => cmd.env("HOMDETECT_THREADS", t),
            None => cmd.env_remove("HOMDETECT_THREADS"),
        };
        assert!(cmd.status().unwrap().success());
        std::fs::read(&path).unwrap()
    };
    assert_eq!(run(Some("1"), "a.csv"), run(Some("3"), "b.csv"));
    assert_eq!(run(None, "c.csv"), run(Some("1"), "d.csv"));
}

#[test]
fn writes_replace_existing_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    std::fs::write(&path, "stale").unwrap();
    assert!(homdetect(&["dist", "--protocol", "direct", "--out", path.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("j,p\n"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    assert!(Path::new(&path).exists());
}
