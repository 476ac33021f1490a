use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aoi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoi"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--probs", "0.8,0.5", "--m", "8", "--out", "art"];
    let first = aoi(&args, dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let table = dir.path().join("art/structural_mdp_m8_p0.8-0.5");
    let policy = fs::read(table.join("policy.csv")).unwrap();
    let manifest = fs::read_to_string(table.join("manifest.json")).unwrap();
    for key in [
        "\"N\": 2",
        "\"m\": 8",
        "\"probs\"",
        "\"tol\"",
        "\"iterations\"",
        "\"converged\": true",
        "\"code_version\"",
    ] {
        assert!(manifest.contains(key), "{key} missing from {manifest}");
    }
    let second = aoi(&args, dir.path());
    assert!(second.status.success());
    assert_eq!(fs::read(table.join("policy.csv")).unwrap(), policy);
    assert_eq!(fs::read_to_string(table.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn bound_not_above_user_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoi(&["solve", "--probs", "0.5,0.5,0.5", "--m", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("must be greater than the number of users N = 3"),
        "{}",
        stderr(&out)
    );
    assert!(!dir.path().join("artifacts").exists());
}

#[test]
fn missing_artifact_points_at_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoi(
        &[
            "run",
            "--probs",
            "0.6,0.5",
            "--policy",
            "structural_mdp",
            "--m",
            "10",
            "--horizon",
            "100",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("aoi solve"), "{}", stderr(&out));
}

#[test]
fn run_uses_solved_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let solved = aoi(&["solve", "--probs", "0.6,0.5", "--m", "10"], dir.path());
    assert!(solved.status.success(), "{}", stderr(&solved));
    let args = [
        "run",
        "--probs",
        "0.6,0.5",
        "--policy",
        "structural_mdp,index",
        "--m",
        "10",
        "--horizon",
        "20000",
        "--out",
        "res",
    ];
    let out = aoi(&args, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("res/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("policy,N,p_1,p_2,horizon,seed"));
    assert!(stdout(&out).contains("structural_mdp(m=10)"));
    let manifest = fs::read_to_string(dir.path().join("res/manifest.json")).unwrap();
    assert!(manifest.contains("\"solve_inline\": false"));

    // Replaying the manifest reproduces the metrics byte for byte.
    let replay = aoi(&["run", "--config", "res/manifest.json", "--out", "again"], dir.path());
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(fs::read_to_string(dir.path().join("again/metrics.csv")).unwrap(), csv);
}

#[test]
fn zero_horizon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoi(&["run", "--probs", "0.5", "--horizon", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("horizon"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aoi(&["run", "--recipe", "fig4"], dir.path()).status.code(), Some(2));
    assert_eq!(aoi(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(aoi(&["run", "--probs", "1.5"], dir.path()).status.code(), Some(2));
    assert_eq!(aoi(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        aoi(&["solve", "--probs", "0.5", "--m", "4", "--tol", "-1"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_drives_solve_and_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        r#"
name = "tiny"
horizon = 5000
seed = 3

[grid]
kind = "sweep_last"
fixed = [0.7]
values = [0.3, 0.6]

[[scheduler]]
kind = "structural_mdp"
m = 8

[[scheduler]]
kind = "buffered_mdp"
m = 6

[[scheduler]]
kind = "index_online"
"#,
    )
    .unwrap();
    let before = aoi(&["run", "--config", "exp.toml"], dir.path());
    assert_eq!(before.status.code(), Some(2), "{}", stderr(&before));
    let solved = aoi(&["solve", "--config", "exp.toml"], dir.path());
    assert!(solved.status.success(), "{}", stderr(&solved));
    assert_eq!(stdout(&solved).lines().count(), 4);
    let run = aoi(&["run", "--config", "exp.toml", "--jobs", "2"], dir.path());
    assert!(run.status.success(), "{}", stderr(&run));
    let csv = fs::read_to_string(dir.path().join("results/tiny/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(dir.path().join("results/tiny/switch_map.csv").is_file());
}

#[test]
fn recipe_smoke_run_and_seed_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let o = aoi(
            &[
                "run",
                "--recipe",
                "fig3_switch_map",
                "--horizon",
                "3000",
                "--seed",
                seed,
                "--out",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        (
            stdout(&o),
            fs::read_to_string(dir.path().join(out).join("metrics.csv")).unwrap(),
        )
    };
    let (text, a) = run("1", "a");
    assert!(text.contains("switch map p=(0.9, 0.9) m=10"), "{text}");
    let switch = fs::read_to_string(dir.path().join("a/switch_map.csv")).unwrap();
    assert_eq!(switch.lines().count(), 1 + 2 * 100);
    assert_eq!(a, run("1", "b").1);
    assert_ne!(a, run("2", "c").1);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoi(&["verify"], dir.path());
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS cli/manifest_determinism"));
    assert!(text.contains("28 checks, 0 failed"), "{text}");
    let none = aoi(&["verify", "--filter", "no-such-check"], dir.path());
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn policy_flag_filters_a_recipe() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoi(
        &[
            "run",
            "--recipe",
            "fig5",
            "--policy",
            "index,random_arrival",
            "--horizon",
            "2000",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("results/fig5/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9 * 2);
    assert!(!dir.path().join("results/fig5/switch_map.csv").exists());
    let bad = aoi(&["run", "--recipe", "fig8", "--policy", "structural_mdp"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}
