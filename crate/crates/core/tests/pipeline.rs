//! End-to-end runs of the command-line harness.

use std::fs;
use std::path::Path;
use std::process::Command;

use edgepop::sim::commands::{cmd_generate, load_experiment, Manifest};
use edgepop::sim::io::{parse_popularity_csv, read_csv, EvalRow, Layout, MixtureRow, OnlineRow, RoundRow, TraceRow};
use edgepop::sim::ExperimentConfig;

const TINY: &str = r#"
n_contents = 5
n_users = 3
window = 3
epochs = 2
samples = 24
batch = 8
rounds = 3
encoder_widths = [6, 5]
train_slots = 60
eval_slots = 12
online_slots = 5
scheme = "fedlwa"
checkpoint_every = 2
seed = 4
"#;

fn edgepop(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_edgepop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = edgepop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_cli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    fs::write(&cfg_path, TINY).unwrap();
    let out = dir.path().join("run");
    ok(&["generate", "--config", s(&cfg_path), "--out", s(&out)]);
    let layout = Layout::new(&out);
    for i in 0..3 {
        let rows: Vec<TraceRow> = read_csv(&layout.trace(i)).unwrap();
        assert_eq!(rows.len(), 60 + 12 + 5);
    }

    let train = ok(&["train", "--out", s(&out)]);
    assert!(train.starts_with("fedlwa: rounds 3"), "{train}");
    ok(&["train", "--out", s(&out), "--method", "drael"]);
    let rounds: Vec<RoundRow> = read_csv(&layout.report("rounds.csv")).unwrap();
    assert_eq!(rounds.iter().filter(|r| r.method == "fedlwa").count(), 9);
    for r in 1..=3 {
        let g: f64 = rounds
            .iter()
            .filter(|x| x.method == "fedlwa" && x.round == r)
            .filter_map(|x| x.gamma)
            .sum();
        assert!((g - 1.0).abs() < 1e-9);
    }
    assert!(layout.checkpoint("fedlwa_round_2_global").exists());
    assert!(layout.checkpoint("fedlwa_global").exists());
    assert!(layout.checkpoint("drael_client_0").exists());

    let online = ok(&["online", "--out", s(&out)]);
    assert!(online.contains("5 slots"), "{online}");
    let rows: Vec<OnlineRow> = read_csv(&layout.report("online.csv")).unwrap();
    assert_eq!(rows.len(), 5 * (3 + 1) * 5);

    ok(&["eval", "--out", s(&out), "--method", "drael"]);
    let evals: Vec<EvalRow> = read_csv(&layout.report("eval.csv")).unwrap();
    assert_eq!(evals.len(), 4);

    ok(&["validate-theorem1", "--out", s(&out), "--slots", "20000", "--seed", "3"]);
    let mix: Vec<MixtureRow> = read_csv(&layout.report("theorem1.csv")).unwrap();
    assert_eq!(mix.len(), 4 * 32);

    let pop = fs::read(layout.popularity(0)).unwrap();
    assert_eq!(parse_popularity_csv(pop.as_slice()).unwrap().len(), 77);
}

#[test]
fn cli_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_contents = 5\nfoo = 1\n").unwrap();
    let out = edgepop(&["generate", "--config", s(&bad), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let out = edgepop(&["train", "--out", s(&dir.path().join("missing"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.txt"));
}

#[test]
fn seed_override_changes_dataset_and_mismatch_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    fs::write(&cfg_path, TINY).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let ha = ok(&["generate", "--config", s(&cfg_path), "--out", s(&a)]);
    let hb = ok(&["generate", "--config", s(&cfg_path), "--out", s(&b), "--seed", "5"]);
    assert_ne!(ha, hb);
    assert_eq!(Manifest::load(&b.join("manifest.txt")).unwrap().seed, 5);
    let out = edgepop(&["train", "--config", s(&cfg_path), "--out", s(&b)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn generation_sizes_and_single_state_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        n_contents: 8,
        n_users: 3,
        window: 4,
        encoder_widths: vec![8],
        g_range: [1, 1],
        train_slots: 100_000 - 30,
        eval_slots: 20,
        online_slots: 10,
        seed: 12,
        ..Default::default()
    };
    let m = cmd_generate(&cfg, dir.path()).unwrap();
    assert_eq!(m.files.len(), 9);
    let exp = load_experiment(&cfg, dir.path()).unwrap();
    for tr in &exp.traces {
        assert_eq!(tr.len(), 100_000);
        let truth = &tr.truth_popularity[0];
        let mut counts = [0usize; 8];
        let mut total = 0;
        for c in tr.requests.iter().flatten() {
            counts[c.index()] += 1;
            total += 1;
        }
        for (k, c) in counts.iter().enumerate() {
            assert!((*c as f64 / total as f64 - truth.as_slice()[k]).abs() < 0.02);
        }
    }
    let again = tempfile::tempdir().unwrap();
    assert_eq!(
        cmd_generate(&cfg, again.path()).unwrap().content_sha256,
        m.content_sha256
    );
}
