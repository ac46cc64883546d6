use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bayes-evasion"))
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bayes-evasion-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn printed_config_round_trips_through_attack() {
    let dir = scratch_dir("attack");
    let out = bin().args(["config", "point", "--seed", "4"]).output().unwrap();
    assert!(out.status.success());
    let cfg = dir.join("point.json");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let status = bin()
        .args(["attack", "--epsilon", "0.2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,samples,levels,x0,x1\n"));
    assert_eq!(trace.lines().count(), 1 + 501);
}

#[test]
fn synth_writes_header_and_rows() {
    let dir = scratch_dir("synth");
    let out = bin().args(["synth", "--n", "25", "--out"]).arg(&dir).output().unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("synthetic.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1,y"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn sweep_is_bit_identical_across_runs() {
    let dir = scratch_dir("sweep");
    let cfg = dir.join("cfg.json");
    let out = bin().args(["config", "point"]).output().unwrap();
    let mut json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    json["attack"]["repeats"] = 3.into();
    json["attack"]["sgd"]["iterations"] = 50.into();
    std::fs::write(&cfg, json.to_string()).unwrap();
    let run = |sub: &str| {
        let d = dir.join(sub);
        let status = bin().args(["sweep", "--seed", "9", "--config"]).arg(&cfg).arg("--out").arg(&d).output().unwrap();
        assert!(status.status.success());
        std::fs::read(d.join("sep_raw.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn failed_validation_exits_nonzero() {
    let dir = scratch_dir("gradcheck");
    // too few replicates for the biased control to be detected
    let out = bin().args(["validate-gradients", "--replicates", "50", "--out"]).arg(&dir).output().unwrap();
    assert!(!out.status.success());
    let csv = std::fs::read_to_string(dir.join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("estimator,coordinate,analytic,mean,se,z,pass\n"));
}

#[test]
fn bad_config_is_reported() {
    let dir = scratch_dir("badcfg");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{"dataset": {"source": "synthetic"}, "attack": {"kind": "point", "epsilons": [0.5, 0.1], "points": {"test": {"count": 1}}}}"#).unwrap();
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ascending"));
}
