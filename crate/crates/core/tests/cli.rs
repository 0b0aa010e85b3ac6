use std::path::{Path, PathBuf};

use uavlab::cli::{run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use uavlab::coverage::CoverageMap;
use uavlab::harness::ExperimentConfig;

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn uavlab(args: &[&str]) -> Out {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("uavlab").chain(args.iter().copied());
    let code = run(argv, &mut stdout, &mut stderr);
    Out { code, stdout: String::from_utf8(stdout).unwrap(), stderr: String::from_utf8(stderr).unwrap() }
}

/// Desk preset shrunk to one short run so campaign commands finish quickly.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::load(desk()).unwrap();
    cfg.runs = 1;
    cfg.episodes = 2;
    cfg.env.episode_len = 5;
    cfg.pca.warmup_maps = 16;
    cfg.pca.fidelity_batch = 12;
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in ["coverage", "pca", "train", "compare"] {
        let out = uavlab(&[sub, "--help"]);
        assert_eq!(out.code, EXIT_OK, "{sub}");
        assert!(out.stdout.contains("--config"), "{sub}: {}", out.stdout);
    }
    assert_eq!(uavlab(&["--help"]).code, EXIT_OK);
}

#[test]
fn unknown_flags_and_missing_subcommand_are_usage_errors() {
    assert_eq!(uavlab(&[]).code, EXIT_USAGE);
    for sub in ["coverage", "pca", "train", "compare"] {
        let out = uavlab(&[sub, "--config", s(&desk()), "--bogus"]);
        assert_eq!(out.code, EXIT_USAGE, "{sub}");
        assert!(out.stderr.contains("--bogus"));
    }
}

#[test]
fn coverage_writes_file_with_pose_header() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("map.csv");
    let out = uavlab(&["coverage", "--config", s(&desk()), "--uav", "1200,3400,120", "--out", s(&file)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.starts_with("# coverage 65 65 100 1200 3400 120\n"), "{}", text.lines().next().unwrap());
    let map = CoverageMap::from_csv(&text).unwrap();
    assert_eq!(map.values.len(), 65 * 65);
}

#[test]
fn coverage_defaults_to_stdout() {
    let out = uavlab(&["coverage", "--config", s(&desk()), "--uav", "100,100,50"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.starts_with("# coverage "));
    assert_eq!(out.stdout.lines().count(), 66);
}

#[test]
fn coverage_out_of_bounds_is_a_runtime_error_naming_the_bound() {
    let out = uavlab(&["coverage", "--config", s(&desk()), "--uav", "100,100,900"]);
    assert_eq!(out.code, EXIT_RUNTIME);
    assert!(out.stderr.contains("z_max"), "{}", out.stderr);
}

#[test]
fn coverage_rejects_malformed_pose() {
    assert_eq!(uavlab(&["coverage", "--config", s(&desk()), "--uav", "1,2"]).code, EXIT_USAGE);
    assert_eq!(uavlab(&["coverage", "--config", s(&desk()), "--uav", "1,x,2"]).code, EXIT_USAGE);
}

#[test]
fn pca_single_target_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("pca");
    let out = uavlab(&["pca", "--config", s(&cfg), "--targets", "0.98", "--out", s(&out_dir)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let text = std::fs::read_to_string(out_dir.join("pca_fidelity.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0.98,"));
    let maps = std::fs::read_to_string(out_dir.join("pca_fidelity_maps.csv")).unwrap();
    assert_eq!(maps.lines().count(), 1 + 12);
}

#[test]
fn pca_default_targets_go_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = uavlab(&["pca", "--config", s(&cfg)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let targets: Vec<&str> = out.stdout.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(targets, ["0.96", "0.98", "0.995"]);
}

#[test]
fn pca_rejects_target_above_one() {
    let out = uavlab(&["pca", "--config", s(&desk()), "--targets", "1.2"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("(0, 1]"), "{}", out.stderr);
}

#[test]
fn pca_unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(uavlab(&["pca", "--config", s(&cfg), "--out", s(&blocker)]).code, EXIT_RUNTIME);
}

#[test]
fn train_writes_two_episode_curve_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = uavlab(&[
            "train", "--config", s(&cfg), "--agent", "etd3", "--runs", "1", "--episodes", "2", "--seed", "7", "--out",
            s(out_dir),
        ]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    }
    let curve = std::fs::read_to_string(a.join("curves_etd3.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert_eq!(curve.lines().next().unwrap(), "episode,mean_reward,std_reward");
    for f in ["curves_etd3.csv", "episodes_etd3.csv", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_unknown_agent_lists_valid_kinds() {
    let out = uavlab(&["train", "--config", s(&desk()), "--agent", "ddpg", "--out", "/tmp/x"]);
    assert_eq!(out.code, EXIT_USAGE);
    for k in ["td3", "td3pca", "etd3"] {
        assert!(out.stderr.contains(k), "{}", out.stderr);
    }
}

#[test]
fn train_without_output_directory_is_a_usage_error() {
    let out = uavlab(&["train", "--config", s(&desk()), "--agent", "td3"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("--out"));
}

#[test]
fn train_unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = uavlab(&["train", "--config", s(&cfg), "--agent", "td3", "--out", s(&blocker)]);
    assert_eq!(out.code, EXIT_RUNTIME);
}

#[test]
fn compare_reports_all_agents_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = tiny_config(dir.path());
    let out_dir = dir.path().join("cmp");
    let out = uavlab(&["compare", "--config", s(&cfg_path), "--out", s(&out_dir)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(report["config_hash"], cfg.hash());
    for k in ["td3", "td3pca", "etd3"] {
        assert!(report["agents"][k]["episodes_to_threshold"].is_number(), "{k}");
        assert!(out_dir.join(format!("curves_{k}.csv")).exists());
        assert!(out.stdout.contains(&format!("{k}: episodes_to_threshold=")));
    }
    assert_eq!(report["reference"]["episodes_to_convergence"]["etd3"], 120);
}

#[test]
fn compare_missing_config_is_a_usage_error() {
    let out = uavlab(&["compare", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("/nonexistent/cfg.json"));
}

#[test]
fn compare_unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(uavlab(&["compare", "--config", s(&cfg), "--out", s(&blocker)]).code, EXIT_RUNTIME);
}

#[test]
fn invalid_config_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"runs": 0}"#).unwrap();
    assert_eq!(uavlab(&["compare", "--config", s(&path), "--out", s(dir.path())]).code, EXIT_USAGE);
    std::fs::write(&path, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(uavlab(&["coverage", "--config", s(&path), "--uav", "1,1,20"]).code, EXIT_USAGE);
}
