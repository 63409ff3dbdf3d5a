use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orthodepth_core::evaluator::{run_episode, EpisodeReport};
use orthodepth_cli::{ExperimentConfig, Preset};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orthodepth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

const TINY: &str = r#"{
  "preset": "custom",
  "seed": 3,
  "episodes": 2,
  "corpus": {
    "orthographies": [
      {"code": "ent", "source": {"kind": "ent", "size": 400}},
      {"code": "eno", "source": {"kind": "eno", "size": 400}}
    ],
    "n_train": 100,
    "n_test": 20
  },
  "model": {"n_layer": 1, "n_head": 2, "n_embd": 16},
  "train": {"max_steps": 6, "warmup_steps": 2, "batch_size": 8, "eval_interval": 3}
}"#;

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn build_data_counts_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"corpus": {"n_train": 1000, "n_test": 100,
            "orthographies": [{"code": "ent", "source": {"kind": "ent"}},
                              {"code": "eno", "source": {"kind": "eno"}}]}}"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = run(&["build-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let train = read(out_a.join("bundles/train.jsonl"));
    let test = read(out_a.join("bundles/test.jsonl"));
    // 1,100 entries per orthography, each a write and a read sample
    assert_eq!(train.lines().count() + test.lines().count(), 2 * 1_100 * 2);
    assert_eq!(test.lines().count(), 2 * 100 * 2);
    for f in ["bundles/train.jsonl", "bundles/test.jsonl", "reports/datasets.csv", "manifest.json"] {
        assert_eq!(std::fs::read(out_a.join(f)).unwrap(), std::fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let summary = read(out_a.join("reports/datasets.csv"));
    let header = summary.lines().next().unwrap();
    assert_eq!(header, "orthography,samples,phonemes,graphemes,mean_phonemes,mean_graphemes,dropped");
    let eno = summary.lines().find(|l| l.starts_with("eno,")).unwrap();
    let fields: Vec<&str> = eno.split(',').collect();
    assert_eq!(fields[1], "26845");
    assert_eq!(fields[3], "25");
}

#[test]
fn missing_lexicon_is_a_data_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"corpus": {"orthographies": [{"code": "en", "source": {"kind": "lexicon", "path": "nowhere/en.tsv"}}]}}"#,
    );
    let o = run(&["build-data", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere/en.tsv"));
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"episodes": 0}"#);
    let o = run(&["run", "--dry-run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["run", "--stand-in-missing"]).status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let o = run(&["train", "--config", cfg, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = format!("{out}/checkpoints/model.ckpt");
    assert_eq!(read(format!("{out}/reports/loss.csv")).lines().count(), 7);

    let o = run(&["evaluate", "--config", cfg, "--out", out, "--checkpoint", &ckpt]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(format!("{out}/reports/evaluation.csv"));
    assert_eq!(csv.lines().count(), 5);

    let o = run(&["predict", "--checkpoint", &ckpt, "--orthography", "ent", "--task", "write", "amiko"]);
    assert!(o.status.success());
    let predicted = String::from_utf8(o.stdout).unwrap().trim().to_string();
    let o = run(&[
        "predict", "--checkpoint", &ckpt, "--orthography", "ent", "--task", "write", "amiko",
        "--expect", &predicted,
    ]);
    assert!(o.status.success());
    let o = run(&[
        "predict", "--checkpoint", &ckpt, "--orthography", "ent", "--task", "write", "amiko",
        "--expect", "definitely-not",
    ]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["predict", "--checkpoint", &ckpt, "--orthography", "ent", "--task", "write", "жж"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_per_episode_and_aggregate_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let agg = read(out.join("reports/aggregate.csv"));
    assert_eq!(agg.lines().next().unwrap(), "orthography,task,mean,std,n");
    assert_eq!(agg.lines().count(), 5);
    assert!(agg.lines().skip(1).all(|l| l.ends_with(",2")));
    let scatter = read(out.join("reports/scatter.csv"));
    assert_eq!(scatter.lines().count(), 3);
    for i in 0..2 {
        assert!(out.join(format!("checkpoints/episode_{i:02}.ckpt")).exists());
        assert!(out.join(format!("reports/episode_{i:02}.json")).exists());
        assert!(out.join(format!("bundles/episode_{i:02}_test.jsonl")).exists());
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["episode_seeds"], serde_json::json!([3, 4]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn single_episode_run_equals_run_episode() {
    let dir = TempDir::new().unwrap();
    let cfg_path = write_config(dir.path(), &TINY.replace(r#""episodes": 2"#, r#""episodes": 1"#));
    let out = dir.path().join("out");
    let o = run(&["run", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = ExperimentConfig::resolve(Some(&cfg_path), None, None).unwrap();
    assert_eq!(cfg.preset, Preset::Custom);
    let direct = run_episode(&cfg.corpus, &cfg.model, &cfg.train, cfg.seed).unwrap();
    let from_cli: EpisodeReport = serde_json::from_str(&read(out.join("reports/episode_00.json"))).unwrap();
    assert_eq!(from_cli, direct);
    assert_eq!(read(out.join("reports/episode_00.json")), direct.to_json());
}

#[test]
fn learning_curve_rejects_oversized_requests() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = run(&[
        "learning-curve", "--sizes", "100,390", "--config", cfg.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("390"));
}

#[test]
fn learning_curve_dry_run_reports_each_size() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = run(&[
        "learning-curve", "--dry-run", "--sizes", "50,100", "--config", cfg.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("reports/learning_curve.csv"));
    assert_eq!(csv.lines().next().unwrap(), "size,orthography,task,mean,std,n");
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    // echoing the input is exact for the identity orthography
    assert!(csv.contains("50,ent,write,100.0000,0.0000,2"));
}

#[test]
fn verify_subcommand_passes() {
    let o = run(&["verify", "--cases", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("transformer"));
    assert!(text.trim_end().ends_with("PASS"));
}
