use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leadae::chords::ChordQuality;
use leadae::json::score_to_json;
use leadae::score::{ChordEvent, NoteEvent, Score};
use serde_json::Value;

fn leadae(args: &[&str], paths: &[&Path]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_leadae"));
    c.env_remove("LEADAE_SEED").args(args).args(paths);
    c.output().expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Exit code and the category from the single stderr line.
fn failure(out: Output) -> (i32, String) {
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    let category = stderr
        .strip_prefix("error: category=")
        .and_then(|r| r.split(' ').next())
        .unwrap_or_else(|| panic!("unparsable error line: {stderr}"))
        .to_string();
    (out.status.code().unwrap(), category)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Onsets of sizes 3, 1 and 2 with a chord on the first.
fn three_onsets() -> Score {
    let n = |beat, pitch| NoteEvent { beat, position: 0, pitch, duration: 12, instrument: 0 };
    Score::from_parts(
        vec![n(0, 60), n(0, 64), n(0, 67), n(1, 62), n(2, 64), n(2, 59)],
        vec![ChordEvent { beat: 0, position: 0, root: 0, quality: ChordQuality::Maj }],
    )
    .unwrap()
}

fn tiny_train(corpus: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--phase", "warmstart", "--layers", "1", "--d-model", "16", "--heads", "2"];
    args.extend_from_slice(extra);
    let mut c = Command::new(env!("CARGO_BIN_EXE_leadae"));
    c.env_remove("LEADAE_SEED").args(&args).arg("--corpus").arg(corpus).arg("--out").arg(out);
    c.output().unwrap()
}

#[test]
fn synth_is_deterministic_and_honours_the_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(leadae(&["synth", "--pieces", "4", "--seed", "7", "--out"], &[&a]));
    ok(leadae(&["synth", "--pieces", "4", "--seed", "7", "--out"], &[&b]));
    let mut env = Command::new(env!("CARGO_BIN_EXE_leadae"));
    ok(env.env("LEADAE_SEED", "7").args(["synth", "--pieces", "4", "--out"]).arg(&c).output().unwrap());
    for name in ["piece_0000.json", "piece_0003.json", "melody/piece_0002.json"] {
        let bytes = fs::read(a.join(name)).unwrap();
        assert_eq!(bytes, fs::read(b.join(name)).unwrap());
        assert_eq!(bytes, fs::read(c.join(name)).unwrap());
    }
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 8);
    assert!(m["version"].as_str().unwrap().starts_with('v'));
    assert!(m["timestamp"]["elapsed_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn skyline_then_eval_reports_the_reduction_densities() {
    let dir = tempfile::tempdir().unwrap();
    let (src, leads) = (dir.path().join("src"), dir.path().join("leads"));
    fs::create_dir_all(&src).unwrap();
    let score = src.join("piece.json");
    fs::write(&score, score_to_json(&three_onsets())).unwrap();
    let lead = leads.join("piece.lead.json");
    ok(leadae(&["skyline", "--k", "1", "--out"], &[&lead, &score]));
    assert!(leads.join("piece.lead.mid").exists());
    assert_eq!(json(&suffixed(&lead, ".manifest.json"))["command"], "skyline");

    let report = dir.path().join("report.json");
    let out = ok(leadae(&["eval", "--ref"], &[&src, Path::new("--lead"), &leads, Path::new("--out"), &report]));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 2);
    let r = json(&report);
    assert_eq!(r["mean"]["note_density"], 50.0);
    assert_eq!(r["mean"]["chord_density"], 100.0);
    assert_eq!(r["pieces"][0]["name"], "piece");
    assert!(suffixed(&report, ".manifest.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(failure(leadae(&["skyline", "--bogus"], &[])), (2, "usage".into()));
    assert_eq!(failure(leadae(&["frobnicate"], &[])), (2, "usage".into()));
    assert_eq!(failure(leadae(&["skyline", "x.json", "--out", "y.json", "--k", "1", "--rho", "0.5"], &[])).0, 2);
    assert!(leadae(&["--help"], &[]).status.success());
}

#[test]
fn file_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");
    let missing = dir.path().join("missing.json");
    assert_eq!(failure(leadae(&["skyline", "--out"], &[&out, &missing])), (3, "io".into()));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(failure(leadae(&["skyline", "--out"], &[&out, &bad])), (5, "json".into()));

    let invalid = dir.path().join("invalid.json");
    fs::write(&invalid, r#"{"resolution": 12, "events": [{"type": "note", "beat": 0, "position": 40, "pitch": 60, "duration": 12, "instrument": 0}]}"#).unwrap();
    let (code, _) = failure(leadae(&["skyline", "--out"], &[&out, &invalid]));
    assert!(code == 5 || code == 6, "{code}");

    let midi = dir.path().join("broken.mid");
    fs::write(&midi, b"MThd\x00\x00").unwrap();
    assert_eq!(failure(leadae(&["ingest", "--out"], &[dir.path(), &midi])), (4, "parse".into()));

    let score = dir.path().join("score.json");
    fs::write(&score, score_to_json(&three_onsets())).unwrap();
    assert_eq!(failure(leadae(&["skyline", "--rho", "1.5", "--out"], &[&out, &score])), (8, "config".into()));
    assert_eq!(failure(leadae(&["skyline", "--out"], &[&score, &score])), (6, "validation".into()));
}

#[test]
fn training_errors_and_config_layers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(leadae(&["synth", "--pieces", "6", "--beats", "2", "--out"], &[&corpus]));

    let joint = dir.path().join("joint.ckpt");
    let mut c = Command::new(env!("CARGO_BIN_EXE_leadae"));
    c.args(["train", "--phase", "joint", "--corpus"]).arg(&corpus).arg("--out").arg(&joint);
    assert_eq!(failure(c.output().unwrap()), (8, "config".into()));

    let config = dir.path().join("cfg.json");
    fs::write(&config, r#"{"train": {"batch_size": 3, "max_epochs": 5, "adam": {"lr": 0.01}}}"#).unwrap();
    let ckpt = dir.path().join("ws.ckpt");
    let cfg_arg = config.to_str().unwrap();
    ok(tiny_train(&corpus, &ckpt, &["--config", cfg_arg, "--epochs", "1", "--seed", "3"]));
    let m = json(&suffixed(&ckpt, ".manifest.json"));
    let train = &m["config"]["train"];
    assert_eq!(train["max_epochs"], 1);
    assert_eq!(train["batch_size"], 3);
    assert_eq!(train["adam"]["lr"], 0.01);
    assert_eq!(train["adam"]["beta1"], 0.9);
    assert_eq!(train["patience"], 20);
    assert_eq!(m["seed"], 3);
    let log = fs::read_to_string(suffixed(&ckpt, ".log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);

    let wider = dir.path().join("wider.ckpt");
    let init = ckpt.to_str().unwrap();
    let mut c = Command::new(env!("CARGO_BIN_EXE_leadae"));
    c.args(["train", "--phase", "joint", "--d-model", "32", "--epochs", "1", "--init", init, "--corpus"]);
    let (code, cat) = failure(c.arg(&corpus).arg("--out").arg(&wider).output().unwrap());
    assert_eq!((code, cat.as_str()), (9, "checkpoint"));

    let corrupt = dir.path().join("corrupt.ckpt");
    fs::write(&corrupt, b"LAE1garbage").unwrap();
    let out = dir.path().join("lead.json");
    let (code, _) = failure(leadae(&["reduce", "--checkpoint"], &[&corrupt, &corpus.join("piece_0000.json"), Path::new("--out"), &out]));
    assert_eq!(code, 9);

    let bad_cfg = dir.path().join("bad_cfg.json");
    fs::write(&bad_cfg, r#"{"train": {"patience": "soon"}}"#).unwrap();
    let (code, _) = failure(tiny_train(&corpus, &wider, &["--config", bad_cfg.to_str().unwrap()]));
    assert_eq!(code, 8);
}

#[test]
fn reduce_and_reconstruct_write_documents_with_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(leadae(&["synth", "--pieces", "6", "--beats", "2", "--out"], &[&corpus]));
    let ckpt = dir.path().join("m.ckpt");
    ok(tiny_train(&corpus, &ckpt, &["--epochs", "1", "--rho", "0.1"]));

    let piece = corpus.join("piece_0001.json");
    let lead = dir.path().join("one.lead.json");
    ok(leadae(&["reduce", "--checkpoint"], &[&ckpt, &piece, Path::new("--out"), &lead]));
    let doc = json(&lead);
    assert!(doc["mask"].is_array() && doc["source"].is_object());
    // The budget comes from the checkpoint metadata.
    assert_eq!(json(&suffixed(&lead, ".manifest.json"))["config"]["budget"]["mode"]["fractional"], 0.1);

    let rec = dir.path().join("rec.json");
    ok(leadae(&["reconstruct", "--checkpoint"], &[&ckpt, &lead, Path::new("--out"), &rec, Path::new("--max-events"), Path::new("12")]));
    let score = json(&rec);
    assert!(score["events"].as_array().unwrap().len() <= 12);
    assert!(dir.path().join("rec.mid").exists());
    let m = json(&suffixed(&rec, ".manifest.json"));
    assert_eq!(m["command"], "reconstruct");
    assert_eq!(m["config"]["top_k"], 10);
}

#[test]
fn ingest_converts_midi_and_merges_chords() {
    let dir = tempfile::tempdir().unwrap();
    let midi = dir.path().join("song.mid");
    fs::write(&midi, leadae::midi::write_midi(&three_onsets().without_chords())).unwrap();
    let out = dir.path().join("scores");
    ok(leadae(&["ingest", "--chords", "--out"], &[&out, &midi]));
    let score = leadae::json::score_from_json(&fs::read_to_string(out.join("song.json")).unwrap()).unwrap();
    assert_eq!(score.note_count(), 6);
    assert!(score.chord_count() >= 1);
    assert_eq!(json(&out.join("manifest.json"))["inputs"][0], midi.to_str().unwrap());
}

#[test]
fn gradcheck_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("grad.json");
    let out = ok(leadae(&["gradcheck", "--out"], &[&report]));
    assert!(String::from_utf8(out.stdout).unwrap().lines().all(|l| l.ends_with("PASS")));
    assert_eq!(json(&report)["results"].as_array().unwrap().iter().filter(|r| r["passed"] == true).count(), json(&report)["results"].as_array().unwrap().len());
}
