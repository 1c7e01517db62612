use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neurohand"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("nh-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn dir_hash(dir: &Path) -> u64 {
    let mut names: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let mut h = DefaultHasher::new();
    for p in names {
        p.file_name().hash(&mut h);
        fs::read(&p).unwrap().hash(&mut h);
    }
    h.finish()
}

/// A small dataset and a briefly trained checkpoint shared by several tests.
fn fixture() -> &'static (PathBuf, PathBuf) {
    static F: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    F.get_or_init(|| {
        let d = scratch("fixture");
        let data = d.join("ds");
        ok(bin()
            .args(["synth", "--gestures", "index,fist", "--sessions", "4", "--seed", "3", "--out"])
            .arg(&data)
            .output()
            .unwrap());
        let ck = d.join("m.nhck");
        ok(bin()
            .args(["train", "--epochs", "1", "--window-stride", "16", "--data"])
            .arg(&data)
            .arg("--out")
            .arg(&ck)
            .output()
            .unwrap());
        (data, ck)
    })
}

#[test]
fn synth_is_deterministic_per_seed() {
    let d = scratch("synth");
    let out = d.join("ds");
    let synth = |seed: &str| {
        let _ = fs::remove_dir_all(&out);
        ok(bin()
            .args(["synth", "--gestures", "thumb,hook_em", "--sessions", "4", "--seed", seed, "--out"])
            .arg(&out)
            .output()
            .unwrap());
        dir_hash(&out)
    };
    let a = synth("5");
    assert_eq!(a, synth("5"));
    assert_ne!(a, synth("6"));
    let manifest = fs::read_to_string(out.join("run_manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"synth\""));
    assert!(fs::read_to_string(out.join("manifest.txt")).unwrap().contains("mask = 10110"));
}

#[test]
fn default_gesture_set() {
    let d = scratch("defaults");
    // The default set needs no flags; only the manifest is inspected.
    ok(bin().args(["synth", "--sessions", "4", "--out"]).arg(d.join("ds")).output().unwrap());
    let m = fs::read_to_string(d.join("ds/manifest.txt")).unwrap();
    for bits in ["10000", "01000", "00100", "00010", "00001", "11111", "11000", "10111", "10110"] {
        assert!(m.contains(&format!("mask = {bits}")), "{bits}");
    }
}

#[test]
fn exit_codes_distinguish_failures() {
    let d = scratch("codes");
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["synth", "--gestures", "", "--out", d.join("x").to_str().unwrap()]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["run", "--model", "missing.nhck", "--out", d.join("r").to_str().unwrap()]), Some(3));
    let (data, ck) = fixture();
    let ck = ck.to_str().unwrap();
    assert_eq!(
        code(&["train", "--epochs", "0", "--data", data.to_str().unwrap(), "--out", d.join("z.nhck").to_str().unwrap()]),
        Some(4)
    );
    assert_eq!(code(&["--set", "run.power=7W", "run", "--model", ck, "--out", d.join("r").to_str().unwrap()]), Some(2));
    assert_eq!(code(&["--set", "nokey", "eval", "--predictions", "a", "--labels", "b"]), Some(2));
    fs::write(d.join("bad.nhck"), b"NHCK junk").unwrap();
    assert_eq!(code(&["run", "--model", d.join("bad.nhck").to_str().unwrap(), "--out", d.join("r").to_str().unwrap()]), Some(4));
}

#[test]
fn train_writes_checkpoint_log_and_manifest() {
    let (_, ck) = fixture();
    assert!(ck.is_file());
    let log = fs::read_to_string(ck.with_file_name("m.train.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(fs::read_to_string(ck.with_file_name("m.run_manifest.toml")).unwrap().contains("window_stride = 16"));
}

#[test]
fn replay_run_is_repeatable_and_scores_match_eval() {
    let (data, ck) = fixture();
    let d = scratch("replay");
    let run = |out: &Path| {
        ok(bin()
            .args(["run", "--virtual", "--duration", "30", "--model"])
            .arg(ck)
            .arg("--replay")
            .arg(data.join("session_003.nrvraw"))
            .arg("--labels")
            .arg(data.join("session_003.labels.csv"))
            .arg("--out")
            .arg(out)
            .output()
            .unwrap());
        fs::read_to_string(out.join("predictions.csv")).unwrap()
    };
    let a = run(&d.join("a"));
    assert_eq!(a, run(&d.join("b")));
    assert!(a.lines().count() > 100);
    assert!(d.join("a/trajectory.csv").is_file());
    assert!(fs::read_to_string(d.join("a/latency.csv")).unwrap().lines().count() == 2);

    let report = d.join("eval.csv");
    ok(bin()
        .args(["eval", "--predictions"])
        .arg(d.join("a/predictions.csv"))
        .arg("--labels")
        .arg(data.join("session_003.labels.csv"))
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap());
    // The log rounds probabilities to 6 decimals, which can nudge the AUC.
    let eval = fs::read_to_string(&report).unwrap();
    let live = fs::read_to_string(d.join("a/score.csv")).unwrap();
    assert_eq!(eval.lines().count(), live.lines().count());
    for (e, l) in eval.lines().zip(live.lines()).skip(1) {
        let (e, l): (Vec<&str>, Vec<&str>) = (e.split(',').collect(), l.split(',').collect());
        for i in 0..e.len() {
            if i == 4 && !e[i].is_empty() {
                let (x, y): (f64, f64) = (e[i].parse().unwrap(), l[i].parse().unwrap());
                assert!((x - y).abs() < 1e-5);
            } else {
                assert_eq!(e[i], l[i]);
            }
        }
    }
}

#[test]
fn config_file_and_overrides_reach_the_manifest() {
    let (_, ck) = fixture();
    let d = scratch("config");
    let cfg = d.join("c.toml");
    fs::write(&cfg, "[run]\npower = \"5W\"\nduration = 2.0\nvirtual = true\ngesture = \"index\"\n").unwrap();
    ok(bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--set", "run.duration=1.5", "run", "--model"])
        .arg(ck)
        .arg("--out")
        .arg(d.join("r"))
        .output()
        .unwrap());
    let m = fs::read_to_string(d.join("r/run_manifest.toml")).unwrap();
    assert!(m.contains("power = \"5W\""), "{m}");
    assert!(m.contains("duration = 1.5"), "{m}");
    let lat = fs::read_to_string(d.join("r/latency.csv")).unwrap();
    assert!(lat.lines().nth(1).unwrap().starts_with("5W,1,"));
}

#[test]
fn bench_matrix_and_empty_table() {
    let d = scratch("bench");
    let out = ok(bin()
        .args(["bench", "--virtual", "--duration", "2", "--max-models", "3", "--out"])
        .arg(d.join("b.csv"))
        .output()
        .unwrap());
    let table = fs::read_to_string(d.join("b.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("R²"));
    ok(bin().args(["bench", "--virtual", "--duration", "0", "--out"]).arg(d.join("e.csv")).output().unwrap());
    assert_eq!(fs::read_to_string(d.join("e.csv")).unwrap().lines().count(), 1);
    assert!(d.join("e.run_manifest.toml").is_file());
}
