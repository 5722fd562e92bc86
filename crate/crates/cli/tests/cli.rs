use std::path::Path;
use std::process::{Command, Output};

fn unic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unic"))
        .args(args)
        .output()
        .expect("running unic")
}

fn ok(args: &[&str]) -> String {
    let out = unic(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn smoke_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let text = ok(&["--preset", "smoke", "--print-config", "sweep"]);
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    cfg["output_dir"] = dir.join("run").to_string_lossy().into_owned().into();
    cfg["workers"] = 1.into();
    edit(&mut cfg);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn every_subcommand_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), |_| {});
    let run = dir.path().join("run");
    for cmd in [
        vec!["gen-corpus"],
        vec!["label"],
        vec!["label", "--mode", "image-prior"],
        vec!["train-denoiser"],
        vec!["train-classifier"],
        vec!["sample", "--lambda", "2"],
        vec!["eval", "--lambda", "2"],
        vec!["sweep"],
        vec!["transfer"],
    ] {
        let mut args = vec!["--config", cfg.as_str(), "-q"];
        args.extend(cmd);
        ok(&args);
    }
    for f in ["results.csv", "results.md", "sweep.svg", "report.json", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(run.join("transfer/results.csv").is_file());
    let csv = std::fs::read_to_string(run.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let again = dir.path().join("again");
    let from = run.join("report.json");
    ok(&["--config", &cfg, "report", "--from", from.to_str().unwrap(), "--dir", again.to_str().unwrap()]);
    for f in ["results.csv", "results.md", "sweep.svg"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failures_exit_nonzero_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = unic(&["--config", missing.to_str().unwrap(), "gen-corpus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config failed"));

    let cfg = smoke_config(dir.path(), |c| c["corpus"]["failure_rate"] = 1.0.into());
    let out = unic(&["--config", &cfg, "-q", "train-classifier"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("stage classifier"), "{err}");

    let cfg = smoke_config(dir.path(), |c| c["lambdas"] = serde_json::json!([1.0, 2.0]));
    let out = unic(&["--config", &cfg, "sweep"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config failed"));
}
