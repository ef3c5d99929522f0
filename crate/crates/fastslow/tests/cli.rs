mod common;

use std::path::Path;
use std::process::Command as Process;

use clap::Parser;

use common::*;
use fastslow::cli::{execute, Cli};
use fastslow::corpus_io::save_corpus;

fn cli(args: &[&str]) -> anyhow::Result<String> {
    let cli = Cli::try_parse_from(std::iter::once("fastslow").chain(args.iter().copied()))?;
    let mut out = Vec::new();
    execute(&cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A directory holding the hand corpus and a config pointing at it.
fn hand_setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_corpus(&hand_corpus(), dir.path().join("corpus.json")).unwrap();
    std::fs::write(dir.path().join("config.toml"), format!("{extra}\n[corpus]\npath = \"corpus.json\"\n")).unwrap();
    dir
}

fn generated_setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        "seed = 3\nparallelism = 2\n{extra}\n[corpus]\ngenerate = {{ n_videos = 4, duration_range = [120.0, 900.0], qa_per_video = 4, easy_fraction = 0.5 }}\n"
    );
    std::fs::write(dir.path().join("config.toml"), config).unwrap();
    dir
}

fn run_hand(dir: &Path, id: &str) -> String {
    let item = hand_items().into_iter().find(|i| i.id == id).unwrap();
    let mut args = vec!["--config".to_string(), s(&dir.join("config.toml")).to_string(), "run".into()];
    args.extend(["--video".into(), item.video_id.clone(), "--question".into(), item.question.clone()]);
    args.extend(["--query-id".into(), id.into()]);
    for c in item.choices.unwrap() {
        args.extend(["--choice".into(), c]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    cli(&args).unwrap()
}

#[test]
fn run_prints_one_line_for_fast_answers_and_a_trace_for_slow_ones() {
    let dir = hand_setup("");
    let easy = run_hand(dir.path(), "hand-q1");
    assert_eq!(easy.lines().count(), 1, "{easy}");
    assert!(easy.starts_with("fast: drum (confidence 0."), "{easy}");

    let hard = run_hand(dir.path(), "hand-q0");
    let first = hard.lines().next().unwrap();
    assert!(first.starts_with("fast_then_slow: "), "{hard}");
    assert!(hard.contains("trace:") && hard.contains("get_clips("), "{hard}");
    assert!(hard.contains("fast answer: "), "{hard}");
}

#[test]
fn run_appends_to_the_configured_log() {
    let dir = hand_setup("run_log = \"logs/runs.jsonl\"\n");
    run_hand(dir.path(), "hand-q1");
    run_hand(dir.path(), "hand-q0");
    let entries = fastslow::runlog::read_log(dir.path().join("logs/runs.jsonl")).unwrap();
    let ids: Vec<_> = fastslow::runlog::run_records(&entries).into_iter().map(|r| r.query_id.unwrap()).collect();
    assert_eq!(ids, ["hand-q1", "hand-q0"]);
}

#[test]
fn config_errors_name_the_field() {
    let dir = hand_setup("theta = 1.5\n");
    let err = cli(&["--config", s(&dir.path().join("config.toml")), "eval", "--out", s(dir.path())]).unwrap_err();
    assert!(format!("{err:#}").contains("theta"), "{err:#}");

    let dir = hand_setup("[search]\nparams = \"top_k\"\nfrobnicate = 1\n");
    let err = cli(&["--config", s(&dir.path().join("config.toml")), "eval", "--out", s(dir.path())]).unwrap_err();
    assert!(format!("{err:#}").contains("frobnicate"), "{err:#}");

    let err = cli(&["--theta", "0", "eval", "--out", "/nonexistent"]).unwrap_err();
    assert!(format!("{err:#}").contains("theta"), "{err:#}");
}

#[test]
fn missing_corpus_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = cli(&["eval", "--out", s(dir.path())]).unwrap_err();
    assert!(format!("{err:#}").contains("no corpus configured"), "{err:#}");
    let dir = hand_setup("");
    std::fs::remove_file(dir.path().join("corpus.json")).unwrap();
    let err = cli(&["--config", s(&dir.path().join("config.toml")), "eval", "--out", s(dir.path())]).unwrap_err();
    assert!(format!("{err:#}").contains("corpus.json"), "{err:#}");
}

#[test]
fn eval_writes_its_artifacts_and_replays() {
    let dir = generated_setup("");
    let out = dir.path().join("out");
    let table = cli(&["--config", s(&dir.path().join("config.toml")), "eval", "--out", s(&out)]).unwrap();
    for f in ["runs.jsonl", "report.json", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), table);
    let replayed = cli(&["replay", "--log", s(&out.join("runs.jsonl"))]).unwrap();
    assert!(replayed.contains("replay matches the logged report"), "{replayed}");

    // tampering with a record is detected
    let log = std::fs::read_to_string(out.join("runs.jsonl")).unwrap();
    let tampered = log.replacen("\"final_answer\":\"", "\"final_answer\":\"x", 1);
    std::fs::write(out.join("runs.jsonl"), tampered).unwrap();
    assert!(cli(&["replay", "--log", s(&out.join("runs.jsonl"))]).is_err());
}

#[test]
fn eval_honours_strategy_and_manifest() {
    let dir = generated_setup("");
    let cfg = dir.path().join("config.toml");
    let manifest = dir.path().join("m.toml");
    std::fs::write(&manifest, "limit = 5\n").unwrap();
    cli(&[
        "--config",
        s(&cfg),
        "eval",
        "--manifest",
        s(&manifest),
        "--strategy",
        "fast-only",
        "--out",
        s(&dir.path().join("f")),
    ])
    .unwrap();
    let report: fastslow::EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f/report.json")).unwrap()).unwrap();
    assert_eq!(report.n, 5);
    assert_eq!(report.row("fast").unwrap().samples.total, 5);
    assert!(cli(&["eval", "--strategy", "fastest", "--out", "x"]).is_err());

    std::fs::write(&manifest, "items = [\"nope\"]\n").unwrap();
    let err = cli(&["--config", s(&cfg), "eval", "--manifest", s(&manifest), "--out", s(dir.path())]).unwrap_err();
    assert!(format!("{err:#}").contains("nope"));
}

#[test]
fn sweep_with_one_theta_equals_eval() {
    let dir = generated_setup("theta = 0.6\n");
    let cfg = dir.path().join("config.toml");
    cli(&["--config", s(&cfg), "eval", "--out", s(&dir.path().join("e"))]).unwrap();
    cli(&["--config", s(&cfg), "sweep-theta", "--thetas", "0.6", "--out", s(&dir.path().join("s"))]).unwrap();
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e/report.json")).unwrap()).unwrap();
    let sweep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep[0]["theta"], 0.6);
    assert_eq!(sweep[0]["report"], eval);

    let multi =
        cli(&["--config", s(&cfg), "sweep-theta", "--thetas", "0.5,0.7,0.9", "--out", s(&dir.path().join("m"))])
            .unwrap();
    assert_eq!(multi, std::fs::read_to_string(dir.path().join("m/sweep.txt")).unwrap());
    for bad in ["0", "1", "0.5,1.2", "-0.1"] {
        let arg = format!("--thetas={bad}");
        assert!(cli(&["--config", s(&cfg), "sweep-theta", &arg, "--out", s(dir.path())]).is_err(), "{bad}");
    }
}

#[test]
fn seed_override_changes_the_generated_corpus() {
    let dir = generated_setup("");
    let cfg = dir.path().join("config.toml");
    cli(&["--config", s(&cfg), "eval", "--out", s(&dir.path().join("a"))]).unwrap();
    cli(&["--config", s(&cfg), "--seed", "4", "eval", "--out", s(&dir.path().join("b"))]).unwrap();
    let a = std::fs::read_to_string(dir.path().join("a/runs.jsonl")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/runs.jsonl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn gen_corpus_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("c.json"));
    let msg = cli(&["--seed", "5", "gen-corpus", "--videos", "3", "--qa-per-video", "2", "--out", s(&a)]).unwrap();
    assert!(msg.starts_with("wrote 3 videos, 6 items"), "{msg}");
    cli(&["--seed", "5", "gen-corpus", "--videos", "3", "--qa-per-video", "2", "--out", s(&b)]).unwrap();
    cli(&["--seed", "6", "gen-corpus", "--videos", "3", "--qa-per-video", "2", "--out", s(&c)]).unwrap();
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    fastslow::corpus_io::load_corpus(&a).unwrap();
    let d = dir.path().join("dir");
    cli(&["--seed", "5", "gen-corpus", "--videos", "3", "--qa-per-video", "2", "--out", s(&d)]).unwrap();
    assert_eq!(fastslow::corpus_io::load_corpus(&d).unwrap(), fastslow::corpus_io::load_corpus(&a).unwrap());
    assert!(cli(&["gen-corpus", "--easy-fraction", "1.5", "--out", s(&c)]).is_err());
}

#[test]
fn build_dataset_is_byte_identical_across_runs() {
    let dir = generated_setup("[dataset]\nmin_count = 2\nbudget = 30\n");
    let cfg = dir.path().join("config.toml");
    for out in ["a", "b"] {
        let msg = cli(&["--config", s(&cfg), "build-dataset", "--out", s(&dir.path().join(out))]).unwrap();
        assert!(msg.contains("records (16 items)"), "{msg}");
    }
    for f in ["records.jsonl", "frequency.json", "frequency.txt", "stats.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let entries = fastslow::runlog::read_log(dir.path().join("a/records.jsonl")).unwrap();
    assert!(!entries.is_empty());
    for e in entries {
        let fastslow::runlog::LogEntry::Training(r) = e else { panic!("not a training record: {e:?}") };
        assert!(!r.target_text.is_empty() && !r.split.is_empty());
    }
}

#[test]
fn binary_exits_nonzero_when_the_planner_fails() {
    let dir = hand_setup("strategy = \"slow_only\"\n\n[planner]\nkind = \"scripted\"\nscripts = \"scripts.json\"\n");
    std::fs::write(dir.path().join("scripts.json"), "{}").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_fastslow"))
        .args([
            "--config",
            s(&dir.path().join("config.toml")),
            "run",
            "--video",
            "hand",
            "--question",
            "What is shown?",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:"), "{err}");

    let ok = Process::new(env!("CARGO_BIN_EXE_fastslow"))
        .args(["--seed", "1", "gen-corpus", "--videos", "1", "--out", s(&dir.path().join("c.json"))])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
}
