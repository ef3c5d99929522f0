//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! with its runtime, and exits nonzero if any criterion fails or overruns.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use fastslow::cli::{execute as run_cli, Cli};
use fastslow::controller::ControllerConfig;
use fastslow::dataset::{FrequencyReport, TrainingRecord};
use fastslow::planner::{base_program, MarkerPolicy};
use fastslow::report::{EvalReport, CURVE_THRESHOLDS};
use fastslow::runlog::{last_report, read_log, replay, run_records, LogEntry};
use fastslow::{answer_query, evaluate, execute_many, search, QueryInput, RoutePath, SearchConfig, Strategy};
use fastslow_core::exec::{FailureKind, FailureStage};
use fastslow_core::modules::{self, fast_think};
use fastslow_core::text::{answers_match, normalize_answer, relevance};
use fastslow_core::world::{ItemKind, TimeSpan};
use fastslow_core::{
    aggregate_confidence, aggregate_voting, compute_confidence, enumerate_bindings, execute_text, generate_corpus,
    label_difficulty, parse, substitute, Confidence, Corpus, CorpusSpec, Difficulty, ExecContext, ExecutionResult,
    FrozenClock, Registry, RunStatus, SimulatedBackend, SimulationConfig,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------------ 1

fn kahan_mean(xs: &[f64]) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / xs.len() as f64
}

fn confidence_exactness() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..=64);
        let lp: Vec<f64> = (0..n).map(|_| -r.gen::<f64>() * 12.0).collect();
        let got = compute_confidence(&lp).map_err(|e| e.to_string())?.value();
        let want = kahan_mean(&lp).exp();
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-9, "confidence {got} vs oracle {want} for {lp:?}");
    }
    for _ in 0..1000 {
        let n = r.gen_range(1..=64);
        let lp: Vec<f64> = (0..n).map(|_| -r.gen::<f64>() * 12.0 - 1e-3).collect();
        let i = r.gen_range(0..n);
        let mut up = lp.clone();
        up[i] += r.gen::<f64>() * -lp[i];
        let (a, b) = (compute_confidence(&lp).unwrap().value(), compute_confidence(&up).unwrap().value());
        ensure!(b >= a, "raising logprob {i} lowered confidence: {a} -> {b}");
    }
    Ok(format!("max abs error {worst:.1e} over 1000 vectors; 1000 monotone pairs"))
}

// ------------------------------------------------------------------ 2

fn difficulty_truth_table() -> Outcome {
    let mut cells = 0;
    for correct in [true, false] {
        for c in [0.74, 0.75, 0.76] {
            let pred = if correct { "lantern" } else { "drum" };
            let got = label_difficulty(pred, "lantern", Confidence::new(c).unwrap(), 0.75);
            let want = if correct && c == 0.76 { Difficulty::Easy } else { Difficulty::Difficult };
            ensure!(got == want, "correct={correct} conf={c}: {got:?}, expected {want:?}");
            cells += 1;
        }
    }
    Ok(format!("{cells} cells; easy only for (correct, 0.76)"))
}

// ------------------------------------------------------------------ 3

fn retrieval_oracles() -> Outcome {
    let mut r = rng(3);
    let corpora: Vec<Arc<Corpus>> = (0..4)
        .map(|s| Arc::new(generate_corpus(100 + s, &CorpusSpec::new(5, (60.0, 900.0), 3, 0.5)).unwrap()))
        .collect();
    let mut ties = 0;
    for case in 0..200 {
        let corpus = &corpora[case % corpora.len()];
        let backend = SimulatedBackend::new(corpus.clone(), SimulationConfig::default());
        let video = &corpus.videos[r.gen_range(0..corpus.videos.len())];
        let query = match r.gen_range(0..3) {
            0 => corpus.items.iter().find(|i| i.video_id == video.id).unwrap().question.clone(),
            1 => {
                let e = &video.events[r.gen_range(0..video.events.len())];
                e.tags.join(" ")
            }
            _ => {
                let words: Vec<String> =
                    video.subtitles.iter().flat_map(|s| s.text.split(' ').map(str::to_string)).collect();
                (0..2).map(|_| words[r.gen_range(0..words.len())].clone()).collect::<Vec<_>>().join(" ")
            }
        };
        let k = r.gen_range(1..=8usize);

        // clips: every 10 s window scored by hand, sorted, truncated
        let mut windows = Vec::new();
        let mut s = 0.0;
        while s < video.duration {
            let (a, b) = (s, (s + 10.0f64).min(video.duration));
            let text: Vec<String> =
                video.events.iter().filter(|e| e.start < b && a < e.end).map(|e| e.text()).collect();
            windows.push((a, b, relevance(&query, &text.join(" "))));
            s += 10.0;
        }
        windows.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then(x.0.partial_cmp(&y.0).unwrap()));
        ties += windows.windows(2).take(k).filter(|w| w[0].2 == w[1].2).count();
        windows.truncate(k);
        let got: Vec<(f64, f64, f64)> = modules::get_clips(&backend, &video.id, None, &query, k as i64)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|c| (c.start, c.end, c.score))
            .collect();
        ensure!(got == windows, "case {case}: get_clips({:?}, {query:?}, {k}) = {got:?}, oracle {windows:?}", video.id);

        let mut subs: Vec<(f64, f64, String, f64)> =
            video.subtitles.iter().map(|s| (s.start, s.end, s.text.clone(), relevance(&query, &s.text))).collect();
        subs.sort_by(|x, y| y.3.partial_cmp(&x.3).unwrap().then(x.0.partial_cmp(&y.0).unwrap()));
        subs.truncate(k);
        let got: Vec<(f64, f64, String, f64)> = modules::get_subtitles(&backend, &video.id, None, &query, k as i64)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| (h.start, h.end, h.text, h.score))
            .collect();
        ensure!(got == subs, "case {case}: get_subtitles({:?}, {query:?}, {k}) = {got:?}, oracle {subs:?}", video.id);
    }
    Ok(format!("200 cases, {ties} score ties inside the top-k"))
}

// ------------------------------------------------------------------ 4

fn trim_extract_semantics() -> Outcome {
    let mut r = rng(4);
    let corpus = Arc::new(generate_corpus(4, &CorpusSpec::new(10, (20.0, 3000.0), 1, 0.5)).unwrap());
    let backend = SimulatedBackend::new(corpus.clone(), SimulationConfig::default());
    for case in 0..500 {
        let v = &corpus.videos[case % corpus.videos.len()];
        let d = v.duration;
        let t = r.gen::<f64>() * d;
        let iv = r.gen_range(1..=120i64);
        // lengths are differences of absolute times, so allow their rounding
        let max_len = iv as f64 * (1.0 + f64::EPSILON) + d * f64::EPSILON;

        let fb = modules::trim_before(&backend, &v.id, t, iv).map_err(|e| e.to_string())?;
        ensure!(fb.start == t && fb.end == (t + iv as f64).min(d), "case {case}: trim_before({t}, {iv}) = {fb:?}");
        ensure!(
            fb.start <= fb.end && fb.end - fb.start <= max_len && fb.end <= d,
            "case {case}: trim_before bounds {fb:?}"
        );
        let fa = modules::trim_after(&backend, &v.id, t, iv).map_err(|e| e.to_string())?;
        ensure!(fa.end == t && fa.start == (t - iv as f64).max(0.0), "case {case}: trim_after({t}, {iv}) = {fa:?}");
        ensure!(fa.start >= 0.0 && fa.end - fa.start <= max_len, "case {case}: trim_after bounds {fa:?}");
        ensure!(
            modules::trim_before(&backend, &v.id, d + 1.0, iv).is_err(),
            "case {case}: timestamp past the end accepted"
        );

        let (mut a, mut b) = (r.gen::<f64>() * d, r.gen::<f64>() * d);
        if a > b {
            ensure!(modules::trim_range(&backend, &v.id, a, b).is_err(), "case {case}: reversed range accepted");
            std::mem::swap(&mut a, &mut b);
        }
        let fr = modules::trim_range(&backend, &v.id, a, b).map_err(|e| e.to_string())?;
        ensure!((fr.start, fr.end) == (a, b), "case {case}: trim_range({a}, {b}) = {fr:?}");

        if b > a {
            let n = r.gen_range(1..=200usize);
            let got: Vec<f64> = modules::extract_frames(&backend, &v.id, Some(&[TimeSpan::new(a, b)]), n as i64)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|f| f.timestamp)
                .collect();
            // bin midpoints a + (i + 1/2)(b - a)/n, one frame per source frame index
            let mut want = Vec::new();
            let mut last = None;
            for i in 0..n {
                let ts = a + (i as f64 + 0.5) * (b - a) / n as f64;
                let idx = (ts * v.fps).floor() as i64;
                if last != Some(idx) {
                    want.push(ts);
                    last = Some(idx);
                }
            }
            ensure!(got == want, "case {case}: extract_frames([{a}, {b}), {n}) differs from the midpoint formula");
            ensure!(got.iter().all(|&x| a <= x && x < b), "case {case}: frame outside the half-open scope");
        }
    }
    Ok("500 cases".into())
}

// ------------------------------------------------------------------ 5

fn success(answer: &str, conf: Option<f64>) -> ExecutionResult {
    ExecutionResult {
        status: RunStatus::Success,
        answer: Some(answer.into()),
        confidence: conf.map(|c| Confidence::new(c).unwrap()),
        confidence_source: None,
        env_final: Default::default(),
        trace: vec![],
        failure: None,
        wall_time_us: 0,
        output_length: 0,
    }
}

fn rank(r: &ExecutionResult) -> f64 {
    r.confidence.map_or(f64::NEG_INFINITY, |c| c.value())
}

// argmax by enumeration: the unique i no other success beats, and no earlier one ties
fn confidence_oracle(rs: &[ExecutionResult]) -> Option<usize> {
    let ok: Vec<usize> = (0..rs.len()).filter(|&i| rs[i].status == RunStatus::Success).collect();
    let winners: Vec<usize> = ok
        .iter()
        .copied()
        .filter(|&i| ok.iter().all(|&j| rank(&rs[j]) < rank(&rs[i]) || (rank(&rs[j]) == rank(&rs[i]) && j >= i)))
        .collect();
    assert!(winners.len() <= 1);
    winners.first().copied()
}

fn voting_oracle(rs: &[ExecutionResult]) -> Option<usize> {
    let ok: Vec<usize> = (0..rs.len()).filter(|&i| rs[i].status == RunStatus::Success).collect();
    let keys: Vec<String> = ok.iter().map(|&i| normalize_answer(rs[i].answer.as_deref().unwrap())).collect();
    let distinct: BTreeSet<&String> = keys.iter().collect();
    let stats = |k: &String| {
        let members: Vec<usize> = ok.iter().zip(&keys).filter(|(_, kk)| *kk == k).map(|(&i, _)| i).collect();
        let sum: f64 = members.iter().map(|&i| rs[i].confidence.map_or(0.0, |c| c.value())).sum();
        (members.len(), sum, members)
    };
    let best = distinct.iter().copied().max_by(|a, b| {
        let ((va, sa, ma), (vb, sb, mb)) = (stats(a), stats(b));
        va.cmp(&vb).then(sa.partial_cmp(&sb).unwrap()).then(mb[0].cmp(&ma[0]))
    })?;
    let (_, _, members) = stats(best);
    let top = members.iter().map(|&i| rank(&rs[i])).fold(f64::NEG_INFINITY, f64::max);
    members.into_iter().find(|&i| rank(&rs[i]) == top)
}

fn search_accounting() -> Outcome {
    let corpus = hand_corpus();
    let e = engine(simulated(&corpus, 0.0), Arc::new(scripted(&[])));
    let program = parse(&base_program(), &e.registry).map_err(|x| x.to_string())?;
    let item = &corpus.items[0];
    let ctx = ExecContext::new(item.video_id.clone(), item.question.clone(), item.choices.clone());
    let cfg = SearchConfig::with_params(&["num_frames", "top_k"]);
    let out = search(&program, &e.registry, e.backend.as_ref(), &ctx, &FrozenClock, &cfg).map_err(|x| x.to_string())?;
    ensure!(out.run_count == 7, "num_frames+top_k gave run_count {}", out.run_count);
    ensure!(out.variant_results.len() == 7, "{} variant results", out.variant_results.len());
    let none = search(&program, &e.registry, e.backend.as_ref(), &ctx, &FrozenClock, &SearchConfig::none())
        .map_err(|x| x.to_string())?;
    let sel = none.selected.clone().ok_or("no selection without search")?;
    ensure!(none.run_count == 0 && sel.binding.is_none(), "search none ran {} variants", none.run_count);
    ensure!(Some(&sel.answer) == none.base_result.answer.as_ref(), "search none did not select the base answer");

    let mut r = rng(5);
    let answers = ["A", "a ", "B", " b", "C", "d"];
    let confs = [None, Some(0.25), Some(0.5), Some(0.75), Some(1.0)];
    for case in 0..200 {
        let n = r.gen_range(0..10);
        let rs: Vec<ExecutionResult> = (0..n)
            .map(|_| {
                if r.gen_bool(0.2) {
                    ExecutionResult::failed(FailureStage::Execution, FailureKind::BackendError, "down", 0)
                } else {
                    success(answers[r.gen_range(0..answers.len())], confs[r.gen_range(0..confs.len())])
                }
            })
            .collect();
        let got = aggregate_confidence(&rs).map(|s| s.index);
        ensure!(got == confidence_oracle(&rs), "case {case}: confidence aggregation picked {got:?}");
        if let Some(s) = aggregate_confidence(&rs) {
            ensure!(
                Some(&s.answer) == rs[s.index].answer.as_ref() && s.confidence == rs[s.index].confidence,
                "case {case}: selection fields"
            );
        }
        let got = aggregate_voting(&rs);
        let want = voting_oracle(&rs);
        ensure!(
            got.as_ref().map(|s| s.index) == want,
            "case {case}: voting picked {:?}, oracle {want:?}",
            got.map(|s| s.index)
        );
        if let Some(s) = got {
            ensure!(Some(&s.answer) == rs[s.index].answer.as_ref(), "case {case}: voting answer field");
        }
    }
    Ok("run_count 7; none selects base; 200 aggregation sets".into())
}

// ------------------------------------------------------------------ 6

const BROKEN_PROGRAM: &str =
    "# This is a difficult question.\nanswer = no_such_module(video_path=video)\nreturn answer\n";

fn routing_state_machine() -> Outcome {
    let corpus = hand_corpus();
    let hard = QueryInput::from(&corpus.items[0]);
    let easy = QueryInput::from(&corpus.items[1]);
    let cfg = ControllerConfig::default();
    let path_of =
        |e: &fastslow::Engine, q: &QueryInput, c: &ControllerConfig| answer_query(e, q, c).map_err(|x| x.to_string());

    let planner = scripted(&[("hand-q1", easy_then(&base_program())), ("hand-q0", easy_then(&base_program()))]);
    let e = engine(simulated(&corpus, 0.0), Arc::new(planner));
    let r = path_of(&e, &easy, &cfg)?;
    ensure!(r.decision.path == RoutePath::Fast, "easy item took {:?}", r.decision.path);
    let r = path_of(&e, &hard, &cfg)?;
    ensure!(r.decision.path == RoutePath::FastThenSlow, "low-confidence item took {:?}", r.decision.path);
    ensure!(r.continuation.is_some() && r.slow.is_some(), "fast_then_slow ran no continuation");

    let e = engine(simulated(&corpus, 0.0), Arc::new(scripted(&[("hand-q0", slow_with(&base_program()))])));
    let r = path_of(&e, &hard, &cfg)?;
    ensure!(r.decision.path == RoutePath::Slow && r.fast.is_none(), "unmarked item took {:?}", r.decision.path);

    // rejected program, then total slow failure with search enabled
    let e = engine(simulated(&corpus, 0.0), Arc::new(scripted(&[("hand-q0", slow_with(BROKEN_PROGRAM))])));
    let r = path_of(&e, &hard, &cfg)?;
    ensure!(r.decision.path == RoutePath::SlowFallbackFast, "rejected program took {:?}", r.decision.path);
    let broken: Arc<dyn fastslow_core::Backend> =
        Arc::new(SlowBroken(SimulatedBackend::new(corpus.clone(), SimulationConfig::default())));
    let e = engine(broken.clone(), Arc::new(scripted(&[("hand-q0", slow_with(&base_program()))])));
    let all = ControllerConfig { search: SearchConfig::all(), ..ControllerConfig::default() };
    let r = path_of(&e, &hard, &all)?;
    let (fc, fa) = fast_think(broken.as_ref(), &hard.video_ref, &hard.question, hard.choices.as_deref())
        .map_err(|x| x.to_string())?;
    ensure!(r.decision.path == RoutePath::SlowFallbackFast, "total slow failure took {:?}", r.decision.path);
    ensure!(
        r.final_answer == fa.text && r.final_confidence == Some(fc),
        "fallback returned {:?}, fast_think gave {:?}",
        r.final_answer,
        fa.text
    );
    ensure!(
        r.slow.as_ref().is_some_and(|s| s.run_count > 0 && s.successes() == 0),
        "fallback record lacks the failed search"
    );

    // gate exactness at the boundary
    let gate = |conf: f64, theta: f64| -> Result<RoutePath, String> {
        let b = FixedFast {
            inner: SimulatedBackend::new(corpus.clone(), SimulationConfig::default()),
            answer: "drum".into(),
            conf,
        };
        let e = engine(Arc::new(b), Arc::new(scripted(&[("hand-q1", easy_then(&base_program()))])));
        Ok(path_of(&e, &easy, &ControllerConfig::with_theta(theta))?.decision.path)
    };
    let at = gate(0.75, 0.75)?;
    ensure!(at == RoutePath::Fast, "confidence 0.75 at theta 0.75 took {at:?}");
    let below = gate(0.75 - 1e-12, 0.75)?;
    ensure!(below == RoutePath::FastThenSlow, "confidence just below 0.75 took {below:?}");
    let above = gate(0.75, 0.75 + 1e-12)?;
    ensure!(above == RoutePath::FastThenSlow, "theta just above 0.75 took {above:?}");

    // monotone in theta
    let suite = generated(6, 20, 5, 0.6);
    let e = synthetic_engine(&suite, 0.0, MarkerPolicy::All);
    let mut prev: Option<BTreeSet<String>> = None;
    let mut sizes = Vec::new();
    for theta in [0.4, 0.6, 0.75, 0.9] {
        let (records, _) = evaluate(&e, &suite.items, &ControllerConfig::with_theta(theta), 1);
        let fast: BTreeSet<String> =
            records.iter().filter(|r| r.decision.path == RoutePath::Fast).filter_map(|r| r.query_id.clone()).collect();
        if let Some(p) = &prev {
            ensure!(fast.is_subset(p), "theta {theta} routes fast an item a lower theta did not");
        }
        sizes.push(fast.len());
        prev = Some(fast);
    }
    ensure!(sizes.first() > sizes.last(), "theta has no effect on routing: {sizes:?}");
    Ok(format!("four paths; gate >= at 0.75; fast counts over theta {sizes:?}"))
}

// ------------------------------------------------------------------ 7

fn adaptive_beats_pure() -> Outcome {
    let corpus = Arc::new(generate_corpus(7, &CorpusSpec::new(60, (900.0, 1800.0), 5, 0.6)).unwrap());
    let n = corpus.items.len();
    let easy = corpus.items.iter().filter(|i| i.kind == ItemKind::Easy).count();
    ensure!(n == 300, "suite has {n} items");
    ensure!(easy == 180, "suite has {easy} easy items, expected 180");
    let e = synthetic_engine(&corpus, 0.15, MarkerPolicy::All);
    let run = |strategy, theta| {
        let (records, report) =
            evaluate(&e, &corpus.items, &ControllerConfig { strategy, ..ControllerConfig::with_theta(theta) }, 4);
        (records, report)
    };
    let (fast_records, fast_only) = run(Strategy::FastOnly, 0.75);
    // the suite is what it claims: fast right on easy, wrong on difficult
    for (r, item) in fast_records.iter().zip(&corpus.items) {
        ensure!(
            r.correct() == Some(item.kind == ItemKind::Easy),
            "fast answer on {} does not match its difficulty",
            item.id
        );
    }
    let (_, slow_only) = run(Strategy::SlowOnly, 0.75);
    let (_, adaptive) = run(Strategy::Adaptive, 0.75);
    let (a, f, s) = (adaptive.accuracy(), fast_only.accuracy(), slow_only.accuracy());
    ensure!(a > f && a > s, "adaptive {a:.4} vs fast-only {f:.4}, slow-only {s:.4}");

    let curve: Vec<(f64, f64)> =
        CURVE_THRESHOLDS.iter().map(|&t| (t, run(Strategy::Adaptive, t).1.accuracy())).collect();
    let peak = curve.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let ends = curve[0].1.max(curve[curve.len() - 1].1);
    ensure!(peak > ends, "sweep peaks at an endpoint: {curve:?}");
    let argmax: Vec<f64> = curve.iter().filter(|p| p.1 == peak).map(|p| p.0).collect();
    ensure!(argmax.contains(&0.75), "theta 0.75 is not on the peak: {curve:?}");
    let pts: Vec<String> = curve.iter().map(|(t, acc)| format!("{t}:{:.3}", acc)).collect();
    Ok(format!("adaptive {a:.3} > fast-only {f:.3}, slow-only {s:.3}; sweep {}", pts.join(" ")))
}

// ------------------------------------------------------------------ 8

fn cli(args: &[&str]) -> Result<String, String> {
    use clap::Parser;
    let cli =
        Cli::try_parse_from(std::iter::once("fastslow").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    run_cli(&cli, &mut out).map_err(|e| format!("{e:#}"))?;
    Ok(String::from_utf8(out).unwrap())
}

fn dataset_soundness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let spec = CorpusSpec::new(20, (300.0, 1500.0), 5, 0.6);
    let manifest = serde_json::json!({ "corpus": { "generate": spec, "seed": 8 }, "limit": 100 });
    std::fs::write(d.join("manifest.json"), manifest.to_string()).unwrap();
    std::fs::write(d.join("config.toml"), "[dataset]\nmin_count = 5\nbudget = 200\n").unwrap();
    let config = d.join("config.toml");
    let (config, manifest, out) = (config.to_str().unwrap(), d.join("manifest.json"), d.join("out"));
    cli(&[
        "--config",
        config,
        "build-dataset",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])?;

    let records: Vec<TrainingRecord> = read_log(out.join("records.jsonl"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter_map(|e| match e {
            LogEntry::Training(r) => Some(*r),
            _ => None,
        })
        .collect();
    let freq: FrequencyReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("frequency.json")).unwrap()).unwrap();

    let corpus = Arc::new(generate_corpus(8, &spec).unwrap());
    let backend = SimulatedBackend::new(corpus.clone(), SimulationConfig::default());
    let registry = Registry::builtin();
    let (mut easy, mut hard) = (0, 0);
    for r in &records {
        match r.difficulty {
            Difficulty::Difficult => {
                let ctx = ExecContext::new(r.video_id.clone(), r.question.clone(), r.choices.clone());
                let res = execute_text(&r.target_text, &registry, &backend, &ctx, &FrozenClock);
                ensure!(
                    res.answer.as_deref().is_some_and(|a| answers_match(a, &r.gold_answer)),
                    "record {} re-executes to {:?}, gold {:?}",
                    r.record_id,
                    res.answer,
                    r.gold_answer
                );
                hard += 1;
            }
            Difficulty::Easy => {
                let (c, a) =
                    fast_think(&backend, &r.video_id, &r.question, r.choices.as_deref()).map_err(|e| e.to_string())?;
                ensure!(
                    answers_match(&a.text, &r.gold_answer) && c.value() > 0.75,
                    "easy record {} fails the label rule",
                    r.record_id
                );
                ensure!(
                    r.fast_confidence == Some(c.value()),
                    "easy record {} logs confidence {:?}",
                    r.record_id,
                    r.fast_confidence
                );
                easy += 1;
            }
        }
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        for m in r.modules_used.iter().collect::<BTreeSet<_>>() {
            *counts.entry(m.clone()).or_default() += 1;
        }
    }
    ensure!(freq.counts.len() == 17, "frequency report lists {} modules", freq.counts.len());
    for (m, listed) in &freq.counts {
        let c = counts.get(m).copied().unwrap_or(0);
        ensure!(c == *listed, "module {m}: report says {listed}, records say {c}");
        ensure!(c >= 5 || freq.deficits.contains_key(m), "module {m} used {c} times and not in the deficit report");
    }
    ensure!(hard > 0 && easy > 0, "dataset lacks a class: {easy} easy, {hard} difficult");
    Ok(format!("{} records ({easy} easy, {hard} difficult), {} deficits", records.len(), freq.deficits.len()))
}

// ------------------------------------------------------------------ 9

fn parallel_equivalence() -> Outcome {
    let corpus = generated(9, 10, 5, 0.5);
    let backend = simulated(&corpus, 0.15);
    let registry = Registry::builtin();
    let base = parse(&base_program(), &registry).unwrap();
    let mut programs = vec![base.clone()];
    for b in enumerate_bindings(&base, &registry) {
        programs.push(substitute(&base, &b, &registry).unwrap());
    }
    let mut runs = 0;
    for batch in 0..50 {
        let item = &corpus.items[batch % corpus.items.len()];
        let ctx = ExecContext::new(item.video_id.clone(), item.question.clone(), item.choices.clone());
        let serial =
            serde_json::to_string(&execute_many(&programs, &registry, backend.as_ref(), &ctx, &FrozenClock, 1))
                .unwrap();
        for p in [4, 8] {
            let par =
                serde_json::to_string(&execute_many(&programs, &registry, backend.as_ref(), &ctx, &FrozenClock, p))
                    .unwrap();
            ensure!(par == serial, "batch {batch} differs at parallelism {p}");
        }
        runs += programs.len() * 3;
    }
    Ok(format!("50 batches of {} programs, {runs} executions", programs.len()))
}

// ------------------------------------------------------------------ 10

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn replay_integrity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let config = "seed = 10\nparallelism = 4\n\n[search]\nparams = \"num_frames+top_k\"\n\n[simulation]\nprogram_noise = 0.2\n\n\
                  [corpus]\ngenerate = { n_videos = 8, duration_range = [120.0, 1200.0], qa_per_video = 5, easy_fraction = 0.5 }\n";
    std::fs::write(d.join("config.toml"), config).unwrap();
    let cfg = d.join("config.toml");
    for out in ["a", "b"] {
        cli(&["--config", cfg.to_str().unwrap(), "eval", "--out", d.join(out).to_str().unwrap()])?;
    }
    for f in ["runs.jsonl", "report.json", "report.txt"] {
        let (a, b) = (read(&d.join("a").join(f)), read(&d.join("b").join(f)));
        ensure!(!a.is_empty() && a == b, "{f} differs between identical runs");
    }
    let entries = read_log(d.join("a/runs.jsonl")).map_err(|e| e.to_string())?;
    let emitted: EvalReport = serde_json::from_slice(&read(&d.join("a/report.json"))).map_err(|e| e.to_string())?;
    let replayed = replay(&entries);
    ensure!(replayed == emitted, "replayed report differs from report.json");
    ensure!(last_report(&entries).as_ref() == Some(&emitted), "logged report differs from report.json");

    // independent recount of the table cells
    let records = run_records(&entries);
    for (row, keep) in [("fast", Some(false)), ("slow", Some(true)), ("overall", None)] {
        let rs: Vec<_> = records.iter().filter(|r| keep.is_none_or(|k| r.decision.path.is_slow() == k)).collect();
        let graded: Vec<bool> = rs.iter().filter_map(|r| r.correct()).collect();
        let acc = (!graded.is_empty()).then(|| graded.iter().filter(|c| **c).count() as f64 / graded.len() as f64);
        let len = (!rs.is_empty()).then(|| rs.iter().map(|r| r.output_length).sum::<usize>() as f64 / rs.len() as f64);
        let got = emitted.row(row).ok_or(format!("no {row} row"))?;
        ensure!(
            got.samples.total == rs.len() && got.accuracy.avg == acc && got.mean_output_length == len,
            "{row} row differs from recount"
        );
    }
    ensure!(emitted.rows.len() == 3, "{} report rows", emitted.rows.len());
    Ok(format!("{} run lines; files byte-identical across runs", records.len()))
}

// ------------------------------------------------------------------ runner

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("1 confidence exactness", 1, confidence_exactness),
        ("2 difficulty labeling", 1, difficulty_truth_table),
        ("3 retrieval oracle equivalence", 5, retrieval_oracles),
        ("4 trim/extract semantics", 2, trim_extract_semantics),
        ("5 parameter-search accounting", 2, search_accounting),
        ("6 routing state machine", 5, routing_state_machine),
        ("7 adaptive beats pure", 60, adaptive_beats_pure),
        ("8 dataset soundness", 60, dataset_soundness),
        ("9 parallel equivalence", 10, parallel_equivalence),
        ("10 replay integrity", 10, replay_integrity),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let took = t.elapsed();
        let over = took > Duration::from_secs(limit);
        match (&result, over) {
            (Ok(detail), false) => println!("PASS {name} ({:.2}s < {limit}s): {detail}", took.as_secs_f64()),
            (Ok(detail), true) => {
                failed += 1;
                println!("FAIL {name}: took {:.2}s, limit {limit}s ({detail})", took.as_secs_f64())
            }
            (Err(e), _) => {
                failed += 1;
                println!("FAIL {name} ({:.2}s): {e}", took.as_secs_f64())
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
