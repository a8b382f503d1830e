use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fraccol(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraccol"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn generate(cwd: &Path, family: &str, n: usize, seed: u64) -> Output {
    fs::write(cwd.join("spec.toml"), format!("family = \"{family}\"\n")).unwrap();
    fraccol(
        &["generate", "spec.toml", "-n", &n.to_string(), "--seed", &seed.to_string(), "--out-dir", "scenes"],
        cwd,
    )
}

#[test]
fn generate_zero_scenes_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = generate(tmp.path(), "cut_in", 0, 1);
    assert_eq!(out.status.code(), Some(0));
    assert!(names(&tmp.path().join("scenes")).is_empty());
}

#[test]
fn malformed_scene_is_recorded_and_the_rest_evaluated() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(generate(tmp.path(), "crossing_straight", 2, 4).status.success());
    fs::write(tmp.path().join("scenes/broken.json"), "{ not json").unwrap();
    let out = fraccol(&["evaluate", "scenes", "--out-dir", "res"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let files = names(&tmp.path().join("res"));
    assert_eq!(files.iter().filter(|f| f.ends_with(".result.json")).count(), 2);
    assert_eq!(files.iter().filter(|f| f.ends_with(".error.json")).count(), 1);
    let record = fs::read_to_string(tmp.path().join("res/broken.error.json")).unwrap();
    assert!(record.contains("malformed"), "{record}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(generate(tmp.path(), "vru_crossing", 3, 8).status.success());
    for (dir, jobs) in [("a", "1"), ("b", "3")] {
        let out = fraccol(&["evaluate", "scenes", "--out-dir", dir, "--jobs", jobs], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(names(&a), names(&b));
    for name in names(&a) {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn qa_and_aggregate_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(generate(tmp.path(), "rear_end_lead_brake", 3, 2).status.success());
    let qa = fraccol(&["qa", "scenes", "--out-dir", "qa"], tmp.path());
    assert!(qa.status.success());
    let stdout = String::from_utf8_lossy(&qa.stdout);
    assert!(stdout.contains("check1: 3/3 pass"), "{stdout}");
    let csv = fs::read_to_string(tmp.path().join("qa/qa.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    assert!(fraccol(&["evaluate", "scenes", "--out-dir", "res"], tmp.path()).status.success());
    let agg = fraccol(&["aggregate", "res", "--out-dir", "agg"], tmp.path());
    assert!(agg.status.success());
    let report = fs::read_to_string(tmp.path().join("agg/corpus_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "framework,gt_collision,L0,L1,L2,NC,Total");
    assert_eq!(lines.len(), 10);
    assert!(lines[9].starts_with("nrm,all,"));
}

#[test]
fn outcome_override_must_cover_the_same_scenes() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(generate(tmp.path(), "cut_in", 2, 6).status.success());
    assert!(fraccol(&["evaluate", "scenes", "--out-dir", "res"], tmp.path()).status.success());
    fs::write(tmp.path().join("outcomes.csv"), "scene_id,gt_severity,nrm_severity\nother,L1,L0\n").unwrap();
    let out = fraccol(&["aggregate", "res", "--outcomes", "outcomes.csv", "--out-dir", "agg"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_is_a_hard_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.toml"), "dt_s = -1.0\n").unwrap();
    let out = fraccol(&["--config", "cfg.toml", "evaluate", "."], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt_s"));
    let missing = fraccol(&["evaluate", "nowhere"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
}
