use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_statpool");

fn tiny_config(dir: &Path, systems: &[&str], fusions: &[&[&str]]) -> PathBuf {
    let cfg = serde_json::json!({
        "seed": 3,
        "synth": {
            "num_speakers": 10,
            "input_dim": 6,
            "frames_per_utt": 30,
            "utts_per_speaker": 6,
            "lexicon_size": 8,
            "bursts_per_utt": 2,
            "burst_len": 2
        },
        "encoder": { "frame_hidden": [8], "embed_dim": 8 },
        "training": { "epochs": 2, "segment_len": null },
        "systems": systems,
        "trials": { "target": 20, "nontarget": 40 },
        "probe": { "hidden_width": 16, "epochs": 5 },
        "probe_tasks": ["gender", "word_presence"],
        "fusions": fusions,
        "out_dir": dir.join("results"),
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn statpool(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = statpool(args);
    assert!(
        out.status.success(),
        "statpool {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_scores(path: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let tok: Vec<&str> = l.split_whitespace().collect();
            (format!("{} {} {}", tok[0], tok[1], tok[3]), tok[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn minimal_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["std"], &[]);
    let out = tmp.path().join("results");
    let text = ok(&["run", "--config", path_str(&cfg)]);
    assert!(text.lines().nth(1).unwrap().starts_with("std"));
    for f in [
        "config.json",
        "corpus.txt",
        "speakers.txt",
        "trials.txt",
        "models/std.ckpt",
        "embeddings/std.txt",
        "scores/std.txt",
        "system_results.json",
        "fusion_results.json",
        "probes.txt",
        "probes.json",
        "results.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(read_scores(&out.join("scores/std.txt")).len(), 60);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["mean", "std-skew"], &[&["mean", "std-skew"]]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["run", "--config", path_str(&cfg), "--out", path_str(&a)]);
    ok(&["run", "--config", path_str(&cfg), "--out", path_str(&b)]);
    for f in [
        "scores/mean.txt",
        "scores/std-skew.txt",
        "scores/fused/mean+std-skew.txt",
        "system_results.json",
        "fusion_results.json",
        "probes.json",
        "results.txt",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn fused_scores_are_the_mean_of_their_parts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["std", "std-skew"], &[&["std", "std-skew"]]);
    ok(&["run", "--config", path_str(&cfg)]);
    let dir = tmp.path().join("results/scores");
    let a = read_scores(&dir.join("std.txt"));
    let b = read_scores(&dir.join("std-skew.txt"));
    let fused = read_scores(&dir.join("fused/std+std-skew.txt"));
    assert_eq!(fused.len(), a.len());
    for ((fa, fs_), ((ka, sa), (kb, sb))) in fused.iter().zip(a.iter().zip(&b)) {
        assert_eq!(fa, ka);
        assert_eq!(ka, kb);
        assert_eq!(*fs_, (sa + sb) / 2.0);
    }
    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("results/fusion_results.json")).unwrap()).unwrap();
    assert_eq!(rows[0]["result"]["system"], "(std)⊕(std-skew)");
}

#[test]
fn report_on_empty_dir_names_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = statpool(&["report", "--out", path_str(tmp.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for f in ["system_results.json", "fusion_results.json", "probes.json"] {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn stages_run_one_by_one_match_a_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["mean", "mean-std"], &[&["mean", "mean-std"]]);
    let (full, staged) = (tmp.path().join("full"), tmp.path().join("staged"));
    let full_report = ok(&["run", "--config", path_str(&cfg), "--out", path_str(&full)]);
    for stage in ["synth", "train", "extract", "score", "eval", "fuse", "probe"] {
        ok(&[stage, "--config", path_str(&cfg), "--out", path_str(&staged)]);
    }
    for f in ["scores/mean.txt", "scores/mean-std.txt", "scores/fused/mean+mean-std.txt", "probes.json"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(staged.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(ok(&["report", "--out", path_str(&staged)]), full_report);
}

#[test]
fn report_leaves_artifacts_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["max"], &[]);
    ok(&["run", "--config", path_str(&cfg)]);
    let out = tmp.path().join("results");
    let watched = ["scores/max.txt", "embeddings/max.txt", "system_results.json"];
    let before: Vec<(Vec<u8>, std::time::SystemTime)> = watched
        .iter()
        .map(|f| (fs::read(out.join(f)).unwrap(), fs::metadata(out.join(f)).unwrap().modified().unwrap()))
        .collect();
    ok(&["report", "--out", path_str(&out)]);
    for (f, (bytes, mtime)) in watched.iter().zip(before) {
        assert_eq!(fs::read(out.join(f)).unwrap(), bytes);
        assert_eq!(fs::metadata(out.join(f)).unwrap().modified().unwrap(), mtime);
    }
}

#[test]
fn a_stage_without_its_inputs_fails_with_stage_and_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["mean"], &[]);
    let out = statpool(&["score", "--config", path_str(&cfg)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`score`"), "{err}");
    assert!(err.contains("trials.txt"), "{err}");
}

#[test]
fn seed_and_system_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), &["mean", "std"], &[&["mean", "std"]]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["run", "--config", path_str(&cfg), "--out", path_str(&a), "--systems", "std"]);
    ok(&["run", "--config", path_str(&cfg), "--out", path_str(&b), "--systems", "std", "--seed", "4"]);
    assert!(!a.join("scores/mean.txt").exists());
    assert!(!a.join("scores/fused").exists());
    assert_ne!(fs::read(a.join("scores/std.txt")).unwrap(), fs::read(b.join("scores/std.txt")).unwrap());
    let out = statpool(&["run", "--config", path_str(&cfg), "--out", path_str(&a), "--systems", "kurt"]);
    assert!(!out.status.success());
}

#[test]
fn non_report_commands_need_a_config() {
    let out = statpool(&["synth"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
