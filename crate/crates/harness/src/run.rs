//! Per-trial evaluation and resumable dataset runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use cogbench_core::dataset::{list_trials, read_manifest, read_trial, StoredTrial};
use cogbench_core::language::SELF_CAPTION_PROMPT;
use cogbench_core::prompt::EvalMode;
use cogbench_core::task::Answer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{ChatModel, ChatRequest, Usage};
use crate::extract::extract_answer;
use crate::message::{build_prompt, MessageSeq, Part};
use crate::retry::RetryRecord;
use crate::{io_err, HarnessError};

pub const RESULT_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Trials in flight at once; each holds at most one open request.
    pub parallelism: usize,
    pub max_tokens: u32,
    pub caption_max_tokens: u32,
    pub temperature: f32,
}

impl EvalConfig {
    pub fn new(mode: EvalMode) -> Self {
        EvalConfig { mode, parallelism: 8, max_tokens: 1024, caption_max_tokens: 1024, temperature: 0.0 }
    }
}

/// The answering model, plus optional separate captioner and extractor.
/// Self-captioning uses the answering model unless a captioner is given.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub answer: &'a dyn ChatModel,
    pub captioner: Option<&'a dyn ChatModel>,
    pub extractor: Option<&'a dyn ChatModel>,
}

impl<'a> Models<'a> {
    pub fn single(answer: &'a dyn ChatModel) -> Self {
        Models { answer, captioner: None, extractor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub class: String,
    pub message: String,
}

impl From<&HarnessError> for ErrorRecord {
    fn from(e: &HarnessError) -> Self {
        ErrorRecord { class: e.class().into(), message: e.to_string() }
    }
}

/// One JSON document per trial, `<task>__trial<N>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub schema_version: u32,
    /// `<task>/trial<N>`, the trial's path under the dataset root.
    pub trial_ref: String,
    pub task: String,
    pub trial_id: u64,
    pub mode: EvalMode,
    pub model: String,
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_captions: Option<Vec<String>>,
    pub extracted: Option<Answer>,
    pub expected: Answer,
    pub correct: bool,
    pub error: Option<ErrorRecord>,
    pub latency_ms: u64,
    pub usage: Usage,
    #[serde(default)]
    pub retries: Vec<RetryRecord>,
}

pub fn result_file_name(task: &str, trial_id: u64) -> String {
    format!("{task}__trial{trial_id}.json")
}

/// One isolated single-image conversation per frame, in frame order.
pub fn caption_frames(
    stored: &StoredTrial,
    model: &dyn ChatModel,
    max_tokens: u32,
) -> Result<(Vec<String>, Vec<RetryRecord>, Usage), HarnessError> {
    let mut captions = Vec::with_capacity(stored.frames.len());
    let mut retries = Vec::new();
    let mut usage = Usage::default();
    for (i, path) in stored.frames.iter().enumerate() {
        let png = fs::read(path).map_err(io_err(path))?;
        let req = ChatRequest {
            messages: MessageSeq::user(vec![Part::text(SELF_CAPTION_PROMPT), Part::png(&png)]),
            max_tokens,
            temperature: 0.0,
        };
        let mut r = model.complete(&req)?;
        retries.append(&mut r.retries);
        usage += r.usage.unwrap_or_default();
        let text = r.text.trim();
        if text.is_empty() {
            return Err(HarnessError::EmptyCaption { frame: i });
        }
        captions.push(text.to_string());
    }
    Ok((captions, retries, usage))
}

struct Attempt {
    response: Option<String>,
    captions: Option<Vec<String>>,
    retries: Vec<RetryRecord>,
    usage: Usage,
}

fn attempt(stored: &StoredTrial, models: Models<'_>, cfg: &EvalConfig, a: &mut Attempt) -> Result<(), HarnessError> {
    let captions = if cfg.mode.needs_self_captions() {
        let (c, mut r, u) = caption_frames(stored, models.captioner.unwrap_or(models.answer), cfg.caption_max_tokens)?;
        a.retries.append(&mut r);
        a.usage += u;
        a.captions = Some(c);
        a.captions.as_deref()
    } else {
        None
    };
    let messages = build_prompt(stored, cfg.mode, captions)?;
    let req = ChatRequest { messages, max_tokens: cfg.max_tokens, temperature: cfg.temperature };
    let mut r = models.answer.complete(&req)?;
    a.retries.append(&mut r.retries);
    a.usage += r.usage.unwrap_or_default();
    a.response = Some(r.text);
    Ok(())
}

fn write_atomic(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec_pretty(value).expect("serializable");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Captions (SC, SC-I), asks, extracts and writes the result into `out_dir`
/// before returning. Endpoint and prompt failures are recorded in the result
/// rather than returned; only failing to persist is an error.
pub fn run_trial(stored: &StoredTrial, models: Models<'_>, cfg: &EvalConfig, out_dir: &Path) -> Result<TrialResult, HarnessError> {
    let t = &stored.trial;
    let started = Instant::now();
    let mut a = Attempt { response: None, captions: None, retries: Vec::new(), usage: Usage::default() };
    let error = attempt(stored, models, cfg, &mut a).err().map(|e| {
        log::warn!("{}/trial{}: {e}", t.task, t.id);
        ErrorRecord::from(&e)
    });
    let extracted = match (&a.response, &error) {
        (Some(text), None) => extract_answer(text, &t.possible, models.extractor),
        _ => None,
    };
    let result = TrialResult {
        schema_version: RESULT_SCHEMA_VERSION,
        trial_ref: format!("{}/trial{}", t.task, t.id),
        task: t.task.clone(),
        trial_id: t.id,
        mode: cfg.mode,
        model: models.answer.name().to_string(),
        response: a.response,
        self_captions: a.captions,
        extracted,
        expected: t.answer,
        correct: extracted == Some(t.answer),
        error,
        latency_ms: started.elapsed().as_millis() as u64,
        usage: a.usage,
        retries: a.retries,
    };
    write_atomic(&out_dir.join(result_file_name(&t.task, t.id)), &result)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub dataset: String,
    /// Digest of the dataset manifest, when the dataset has one.
    pub manifest_digest: Option<String>,
    pub mode: EvalMode,
    pub model: String,
    pub total: usize,
    /// Trials sent to the model in this invocation; the rest were resumed.
    pub requested: usize,
    pub correct: usize,
    pub errored: usize,
    /// Answered without error, but no answer could be extracted.
    pub unscorable: usize,
    pub error_classes: BTreeMap<String, usize>,
    /// correct / total, errors counted as incorrect.
    pub accuracy: f64,
}

fn read_result(path: &Path) -> Result<TrialResult, HarnessError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| HarnessError::BadResult { path: path.to_path_buf(), message: e.to_string() })
}

/// Runs every trial of the dataset at `root` that has no error-free result in
/// `out_dir` yet, then writes the summary. Interrupted runs resume where they
/// stopped; trials whose stored result is an error are retried.
pub fn run_eval(root: &Path, out_dir: &Path, models: Models<'_>, cfg: &EvalConfig) -> Result<EvalSummary, HarnessError> {
    if cfg.parallelism == 0 {
        return Err(HarnessError::Config("parallelism must be at least 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trials = list_trials(root)?.iter().map(|d| read_trial(d)).collect::<Result<Vec<_>, _>>()?;
    let pending: Vec<&StoredTrial> = trials
        .iter()
        .filter(|s| {
            let p = out_dir.join(result_file_name(&s.trial.task, s.trial.id));
            !matches!(read_result(&p), Ok(r) if r.error.is_none() && r.mode == cfg.mode)
        })
        .collect();
    log::info!("{} trials, {} to run", trials.len(), pending.len());
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| {
        pending.par_iter().with_max_len(1).try_for_each(|s| {
            run_trial(s, models, cfg, out_dir)?;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(50) {
                log::info!("{n}/{}", pending.len());
            }
            Ok::<_, HarnessError>(())
        })
    })?;

    let mut summary = EvalSummary {
        schema_version: RESULT_SCHEMA_VERSION,
        dataset: root.display().to_string(),
        manifest_digest: read_manifest(root).ok().map(|m| m.digest()),
        mode: cfg.mode,
        model: models.answer.name().to_string(),
        total: trials.len(),
        requested: pending.len(),
        correct: 0,
        errored: 0,
        unscorable: 0,
        error_classes: BTreeMap::new(),
        accuracy: 0.0,
    };
    for s in &trials {
        let r = read_result(&out_dir.join(result_file_name(&s.trial.task, s.trial.id)))?;
        summary.correct += usize::from(r.correct);
        match (&r.error, r.extracted) {
            (Some(e), _) => {
                summary.errored += 1;
                *summary.error_classes.entry(e.class.clone()).or_default() += 1;
            }
            (None, None) => summary.unscorable += 1,
            (None, Some(_)) => {}
        }
    }
    if summary.total > 0 {
        summary.accuracy = summary.correct as f64 / summary.total as f64;
    }
    write_atomic(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Every per-trial result in `dir`, ordered by file name.
pub fn load_results(dir: &Path) -> Result<Vec<TrialResult>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != SUMMARY_FILE))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_result(p)).collect()
}

/// (task, correct) pairs for scoring. Errored trials count as incorrect
/// unless `exclude_errors` drops them.
pub fn outcomes(results: &[TrialResult], exclude_errors: bool) -> Vec<(String, bool)> {
    results
        .iter()
        .filter(|r| !(exclude_errors && r.error.is_some()))
        .map(|r| (r.task.clone(), r.correct))
        .collect()
}
