//! Training-set construction: difficulty labels from the fast answer,
//! execution-verified programs for difficult items, parameter variants that
//! still reach gold, and module balancing through query rewriting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use fastslow_core::hash::hash_fields;
use fastslow_core::modules::fast_think;
use fastslow_core::program::MODULE_NAMES;
use fastslow_core::text::answers_match;
use fastslow_core::{
    enumerate_bindings, execute, label_difficulty, parse, render, substitute, Confidence, Difficulty, ExecContext,
    ModuleError, Program, QAItem,
};

use crate::controller::Engine;
use crate::parallel::par_map;
use crate::planner::{
    easy_target, parse_rewrite, PlannerError, PlannerRequest, PlannerTask, SupportSet, DIFFICULT_SENTENCE,
};
use crate::search::equals_base;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Planner,
    Rewrite,
    ParamVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    /// Unique per record; rewrites and variants extend their source id.
    pub record_id: String,
    pub source_item: String,
    pub video_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub gold_answer: String,
    /// Input prompt the planner is trained on.
    pub prompt: String,
    pub difficulty: Difficulty,
    pub target_text: String,
    pub modules_used: Vec<String>,
    pub provenance: Provenance,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_confidence: Option<f64>,
}

impl TrainingRecord {
    fn context(&self) -> ExecContext {
        ExecContext::new(self.video_id.clone(), self.question.clone(), self.choices.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub tau: f64,
    /// Planner samples per difficult item.
    pub attempts: usize,
    pub min_count: usize,
    /// Rewrite requests allowed during balancing.
    pub budget: usize,
    pub retain_variants: bool,
    /// Most records kept per module combination before balancing.
    pub diversity_cap: Option<usize>,
    /// Also emit a fast-marker-plus-program target for easy items.
    pub emit_easy_slow: bool,
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            tau: fastslow_core::confidence::DEFAULT_TAU,
            attempts: 3,
            min_count: 50,
            budget: 200,
            retain_variants: true,
            diversity_cap: None,
            emit_easy_slow: false,
            val_fraction: 0.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err("dataset.tau must be in (0, 1)".into());
        }
        if self.attempts == 0 {
            return Err("dataset.attempts must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err("dataset.val_fraction must be in [0, 1)".into());
        }
        if self.diversity_cap == Some(0) {
            return Err("dataset.diversity_cap must be >= 1".into());
        }
        Ok(())
    }
}

/// Outcome of running the fast path on an item.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub item: QAItem,
    pub predicted: String,
    pub confidence: Confidence,
    pub difficulty: Difficulty,
    /// Present for easy items.
    pub record: Option<TrainingRecord>,
}

fn base_record(
    engine: &Engine,
    item: &QAItem,
    difficulty: Difficulty,
    target_text: String,
    modules_used: Vec<String>,
) -> TrainingRecord {
    TrainingRecord {
        record_id: item.id.clone(),
        source_item: item.id.clone(),
        video_id: item.video_id.clone(),
        question: item.question.clone(),
        choices: item.choices.clone(),
        gold_answer: item.gold_answer.clone(),
        prompt: engine.prompts.answer_prompt(&item.question, item.choices.as_deref()),
        difficulty,
        target_text,
        modules_used,
        provenance: Provenance::Planner,
        split: "train".into(),
        fast_confidence: None,
    }
}

/// Runs `fast_think` and labels the item: easy iff correct with confidence
/// strictly above `tau`. Easy items get their fast-marker record.
pub fn label_and_render(item: &QAItem, engine: &Engine, tau: f64) -> Result<Labeled, ModuleError> {
    let (conf, answer) = fast_think(engine.backend.as_ref(), &item.video_id, &item.question, item.choices.as_deref())?;
    let difficulty = label_difficulty(&answer.text, &item.gold_answer, conf, tau);
    let record = (difficulty == Difficulty::Easy).then(|| {
        let mut r = base_record(engine, item, Difficulty::Easy, easy_target(), vec!["fast_think".into()]);
        r.fast_confidence = Some(conf.value());
        r
    });
    Ok(Labeled { item: item.clone(), predicted: answer.text, confidence: conf, difficulty, record })
}

/// Puts the difficulty sentence first unless the planner already wrote it.
fn as_difficult_target(text: &str) -> String {
    if text.contains(DIFFICULT_SENTENCE) {
        text.to_string()
    } else {
        format!("# {DIFFICULT_SENTENCE}\n{text}")
    }
}

/// Whether `text` parses and executes to `gold` in `ctx`; returns the program.
fn executes_to_gold(engine: &Engine, text: &str, ctx: &ExecContext, gold: &str) -> Option<Program> {
    let program = parse(text, &engine.registry).ok()?;
    let r = execute(&program, &engine.registry, engine.backend.as_ref(), ctx, engine.clock.as_ref());
    (r.is_success() && r.answer.as_deref().is_some_and(|a| answers_match(a, gold))).then_some(program)
}

/// Samples up to `attempts` programs and keeps the first that executes to gold.
pub fn propose_and_verify(
    item: &QAItem,
    engine: &Engine,
    support: &SupportSet,
    attempts: usize,
) -> Result<Option<TrainingRecord>, PlannerError> {
    let ctx = ExecContext::new(item.video_id.clone(), item.question.clone(), item.choices.clone());
    let prompt = engine.prompts.propose_prompt(support, &item.question, item.choices.as_deref(), &item.gold_answer);
    for attempt in 0..attempts.max(1) {
        let req = PlannerRequest {
            task: PlannerTask::Propose { attempt },
            query_id: Some(item.id.clone()),
            video_ref: item.video_id.clone(),
            question: item.question.clone(),
            choices: item.choices.clone(),
            gold_answer: Some(item.gold_answer.clone()),
            prompt: prompt.clone(),
            stop: None,
        };
        let text = as_difficult_target(&engine.planner.complete(&req)?);
        if let Some(program) = executes_to_gold(engine, &text, &ctx, &item.gold_answer) {
            return Ok(Some(base_record(engine, item, Difficulty::Difficult, text, program.modules_used())));
        }
    }
    Ok(None)
}

/// Additional records from one-parameter variants of a difficult record's
/// program that still execute to gold. Bindings that restate the base value
/// are skipped.
pub fn retain_variants(record: &TrainingRecord, engine: &Engine) -> Vec<TrainingRecord> {
    if record.difficulty != Difficulty::Difficult {
        return Vec::new();
    }
    let Ok(program) = parse(&record.target_text, &engine.registry) else { return Vec::new() };
    let ctx = record.context();
    let mut out = Vec::new();
    for b in enumerate_bindings(&program, &engine.registry) {
        if equals_base(&program, &engine.registry, &b) {
            continue;
        }
        let Ok(variant) = substitute(&program, &b, &engine.registry) else { continue };
        let r = execute(&variant, &engine.registry, engine.backend.as_ref(), &ctx, engine.clock.as_ref());
        if r.is_success() && r.answer.as_deref().is_some_and(|a| answers_match(a, &record.gold_answer)) {
            out.push(TrainingRecord {
                record_id: format!("{}~{}", record.record_id, b),
                target_text: render(&variant, &engine.registry),
                modules_used: variant.modules_used(),
                provenance: Provenance::ParamVariant,
                ..record.clone()
            });
        }
    }
    out
}

/// Per-module record counts and the modules still short of `min_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub min_count: usize,
    /// Every registry module, including those at zero.
    pub counts: BTreeMap<String, usize>,
    /// Module -> records still missing.
    pub deficits: BTreeMap<String, usize>,
    pub rewrites_requested: usize,
    pub rewrites_accepted: usize,
}

pub fn module_counts(records: &[TrainingRecord]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = MODULE_NAMES.iter().map(|m| (m.to_string(), 0)).collect();
    for r in records {
        let distinct: BTreeSet<&String> = r.modules_used.iter().collect();
        for m in distinct {
            *counts.entry(m.clone()).or_default() += 1;
        }
    }
    counts
}

fn frequency_report(
    records: &[TrainingRecord],
    min_count: usize,
    requested: usize,
    accepted: usize,
) -> FrequencyReport {
    let counts = module_counts(records);
    let deficits = counts.iter().filter(|(_, &c)| c < min_count).map(|(m, &c)| (m.clone(), min_count - c)).collect();
    FrequencyReport { min_count, counts, deficits, rewrites_requested: requested, rewrites_accepted: accepted }
}

impl FrequencyReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<18} | {:>6} | {:>7}\n", "module", "count", "deficit");
        for (m, c) in &self.counts {
            let d = self.deficits.get(m).copied().unwrap_or(0);
            out.push_str(&format!("{m:<18} | {c:>6} | {d:>7}\n"));
        }
        out.push_str(&format!(
            "min_count {}; rewrites accepted {}/{}\n",
            self.min_count, self.rewrites_accepted, self.rewrites_requested
        ));
        out
    }
}

/// Rewrites difficult records until every module reaches `min_count` or
/// `budget` rewrite requests are spent. Each rewrite must parse, call the
/// target module and execute to gold before it is kept.
pub fn balance_modules(
    records: Vec<TrainingRecord>,
    engine: &Engine,
    min_count: usize,
    budget: usize,
) -> Result<(Vec<TrainingRecord>, FrequencyReport), PlannerError> {
    let mut records = records;
    let mut counts = module_counts(&records);
    let sources: Vec<TrainingRecord> = records
        .iter()
        .filter(|r| r.difficulty == Difficulty::Difficult && r.provenance == Provenance::Planner)
        .cloned()
        .collect();
    let mut seen: BTreeSet<(String, String, String)> =
        records.iter().map(|r| (r.video_id.clone(), r.question.clone(), r.target_text.clone())).collect();
    let (mut requested, mut accepted) = (0usize, 0usize);

    for module in MODULE_NAMES {
        if sources.is_empty() {
            break;
        }
        let mut k = 0usize;
        let mut misses = 0usize;
        while counts[module] < min_count && requested < budget && misses < 4 * sources.len() {
            let src = &sources[k % sources.len()];
            let attempt = k / sources.len();
            k += 1;
            requested += 1;
            let req = PlannerRequest {
                task: PlannerTask::Rewrite { module: module.to_string(), attempt },
                query_id: Some(src.record_id.clone()),
                video_ref: src.video_id.clone(),
                question: src.question.clone(),
                choices: src.choices.clone(),
                gold_answer: Some(src.gold_answer.clone()),
                prompt: engine.prompts.rewrite_prompt(module, &src.question, &src.target_text),
                stop: None,
            };
            let kept = match engine.planner.complete(&req) {
                Ok(text) => parse_rewrite(&text).ok().and_then(|(question, program_text)| {
                    let target = as_difficult_target(&program_text);
                    if !seen.insert((src.video_id.clone(), question.clone(), target.clone())) {
                        return None;
                    }
                    let ctx = ExecContext::new(src.video_id.clone(), question.clone(), src.choices.clone());
                    let program = executes_to_gold(engine, &target, &ctx, &src.gold_answer)?;
                    let used = program.modules_used();
                    used.iter().any(|m| m == module).then(|| TrainingRecord {
                        record_id: format!("{}~rewrite:{module}#{attempt}", src.record_id),
                        question: question.clone(),
                        prompt: engine.prompts.answer_prompt(&question, src.choices.as_deref()),
                        target_text: target,
                        modules_used: used,
                        provenance: Provenance::Rewrite,
                        ..src.clone()
                    })
                }),
                // a missing scripted rewrite just counts as a miss
                Err(PlannerError::NoScript { .. }) => None,
                Err(e) => return Err(e),
            };
            match kept {
                Some(r) => {
                    for m in r.modules_used.iter().collect::<BTreeSet<_>>() {
                        *counts.entry(m.clone()).or_default() += 1;
                    }
                    records.push(r);
                    accepted += 1;
                    misses = 0;
                }
                None => misses += 1,
            }
        }
    }
    let report = frequency_report(&records, min_count, requested, accepted);
    Ok((records, report))
}

/// Keeps at most `cap` records per distinct module combination, in order.
pub fn diversity_sample(records: Vec<TrainingRecord>, cap: usize) -> Vec<TrainingRecord> {
    let mut per: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    records
        .into_iter()
        .filter(|r| {
            let mut key = r.modules_used.clone();
            key.sort();
            let n = per.entry(key).or_default();
            *n += 1;
            *n <= cap
        })
        .collect()
}

/// Re-checks a record against the current registry and backend: difficult
/// targets must execute to gold, easy targets must still satisfy the easy
/// label.
pub fn reverify(record: &TrainingRecord, engine: &Engine, tau: f64) -> bool {
    match record.difficulty {
        Difficulty::Difficult => {
            executes_to_gold(engine, &record.target_text, &record.context(), &record.gold_answer).is_some()
        }
        Difficulty::Easy => {
            parse(&record.target_text, &engine.registry).is_ok_and(|p| p.has_fast_marker)
                && fast_think(engine.backend.as_ref(), &record.video_id, &record.question, record.choices.as_deref())
                    .is_ok_and(|(c, a)| label_difficulty(&a.text, &record.gold_answer, c, tau) == Difficulty::Easy)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub items: usize,
    pub easy: usize,
    pub difficult: usize,
    pub label_errors: usize,
    pub difficult_retained: usize,
    pub difficult_unverified: usize,
    pub variants: usize,
    pub capped: usize,
    pub rewrites: usize,
    pub reverify_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutput {
    pub records: Vec<TrainingRecord>,
    pub frequency: FrequencyReport,
    pub stats: DatasetStats,
}

/// The whole pipeline. Items are processed `parallelism` at a time; the
/// output order depends only on the input order.
pub fn build_dataset(
    items: &[QAItem],
    engine: &Engine,
    support: &SupportSet,
    config: &DatasetConfig,
    parallelism: usize,
) -> Result<DatasetOutput, PlannerError> {
    let mut stats = DatasetStats { items: items.len(), ..Default::default() };
    let labeled = par_map(items, parallelism, |item| label_and_render(item, engine, config.tau));

    let mut difficult: Vec<QAItem> = Vec::new();
    let mut slots: Vec<Option<TrainingRecord>> = Vec::new();
    let mut easy_items: Vec<QAItem> = Vec::new();
    // one slot per item keeps easy and difficult records in item order
    let mut order: Vec<(usize, bool)> = Vec::new();
    for l in labeled {
        match l {
            Err(_) => stats.label_errors += 1,
            Ok(l) => match l.record {
                Some(r) => {
                    stats.easy += 1;
                    easy_items.push(l.item);
                    order.push((slots.len(), true));
                    slots.push(Some(r));
                }
                None => {
                    stats.difficult += 1;
                    order.push((difficult.len(), false));
                    difficult.push(l.item);
                }
            },
        }
    }
    let proposed = par_map(&difficult, parallelism, |item| propose_and_verify(item, engine, support, config.attempts));
    let proposed: Vec<Option<TrainingRecord>> = proposed.into_iter().collect::<Result<_, _>>()?;

    let mut records: Vec<TrainingRecord> = Vec::new();
    for (idx, is_easy) in order {
        let r = if is_easy { slots[idx].take() } else { proposed[idx].clone() };
        match r {
            Some(r) => {
                if !is_easy {
                    stats.difficult_retained += 1;
                }
                records.push(r);
            }
            None => stats.difficult_unverified += 1,
        }
    }

    if config.emit_easy_slow {
        let extra =
            par_map(&easy_items, parallelism, |item| propose_and_verify(item, engine, support, config.attempts));
        for r in extra.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten() {
            let body: String =
                r.target_text.lines().filter(|l| !l.contains(DIFFICULT_SENTENCE)).map(|l| format!("{l}\n")).collect();
            records.push(TrainingRecord {
                record_id: format!("{}~slow", r.record_id),
                difficulty: Difficulty::Easy,
                target_text: format!("{}{body}", easy_target()),
                ..r
            });
        }
    }

    if config.retain_variants {
        let sources: Vec<TrainingRecord> =
            records.iter().filter(|r| r.difficulty == Difficulty::Difficult).cloned().collect();
        let variants = par_map(&sources, parallelism, |r| retain_variants(r, engine));
        for v in variants.into_iter().flatten() {
            stats.variants += 1;
            records.push(v);
        }
    }

    if let Some(cap) = config.diversity_cap {
        let before = records.len();
        records = diversity_sample(records, cap);
        stats.capped = before - records.len();
    }

    let (balanced, balance) = balance_modules(records, engine, config.min_count, config.budget)?;
    stats.rewrites = balance.rewrites_accepted;

    // emission-time verification: nothing stale leaves the pipeline
    let ok = par_map(&balanced, parallelism, |r| reverify(r, engine, config.tau));
    let mut records: Vec<TrainingRecord> = Vec::with_capacity(balanced.len());
    for (r, keep) in balanced.into_iter().zip(ok) {
        if keep {
            records.push(r);
        } else {
            stats.reverify_dropped += 1;
        }
    }
    for r in &mut records {
        r.split = split_for(&r.source_item, config.val_fraction).into();
    }
    let frequency = frequency_report(&records, config.min_count, balance.rewrites_requested, balance.rewrites_accepted);
    Ok(DatasetOutput { records, frequency, stats })
}

/// Deterministic split by source item, so rewrites and variants never leak
/// across splits.
pub fn split_for(source_item: &str, val_fraction: f64) -> &'static str {
    if val_fraction <= 0.0 {
        return "train";
    }
    let u = (hash_fields(&["split", source_item]) % 1_000_000) as f64 / 1_000_000.0;
    if u < val_fraction {
        "val"
    } else {
        "train"
    }
}
