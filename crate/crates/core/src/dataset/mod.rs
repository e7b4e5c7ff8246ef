//! On-disk trial layout, dataset generation and fine-tuning export.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<task>/trial<N>/frames/epoch<i>.png
//! <root>/<task>/trial<N>/frames/new_task_info.json
//! <root>/<task>/trial<N>/frames/trial_meta.json
//! ```

mod generate;
mod sft;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::language::{synth_ground_truth_captions, synth_instruction, GRAMMAR_VERSION};
use crate::stimuli::{render_trial, AssetPack, CanvasConfig, StimuliError};
use crate::task::{eval_graph, possible_answers, Answer, AnswerSet, AnswerSpacePolicy, Scene, TaskError, TaskGraph};
use crate::taskgen::{autotask, instantiate_pam, sample_scene, AutoTaskParams, GenError, PamConfig, TaskKind};

pub use generate::{
    check_split_disjoint, generate_dataset, read_manifest, rerender_dataset, DatasetManifest, DatasetSpec, EntrySpec, ManifestEntry,
    SeedRange, Split, MANIFEST_FILE,
};
pub use sft::{export_sft, sft_record, SftMessage, SftRecord, IMAGE_PLACEHOLDER, SFT_SHARD_SIZE};

pub const TASK_INFO_FILE: &str = "new_task_info.json";
pub const TRIAL_META_FILE: &str = "trial_meta.json";
pub const TRIAL_META_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema error in {}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("trial {0} has no scene or graph to render")]
    MissingDetails(u64),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("seed ranges of {train} (train) and {eval} (eval) overlap")]
    SeedOverlap { train: String, eval: String },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Stimuli(#[from] StimuliError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Where a trial's graph comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskSource {
    Kind { kind: TaskKind },
    AutoTask { name: String, params: AutoTaskParams },
}

impl TaskSource {
    pub fn kind(kind: TaskKind) -> Self {
        TaskSource::Kind { kind }
    }

    pub fn finetune() -> Self {
        TaskSource::AutoTask { name: "finetune".into(), params: AutoTaskParams::finetune() }
    }

    /// Directory name and report label.
    pub fn label(&self) -> String {
        match self {
            TaskSource::Kind { kind } => kind.abbrev().to_string(),
            TaskSource::AutoTask { name, .. } => name.clone(),
        }
    }

    pub fn policy(&self) -> AnswerSpacePolicy {
        match self {
            TaskSource::Kind { kind } => kind.policy(),
            TaskSource::AutoTask { .. } => AnswerSpacePolicy::Exact,
        }
    }

    /// Composite sources share one graph across a task's trials.
    fn params(&self) -> Option<AutoTaskParams> {
        match self {
            TaskSource::Kind { kind } => AutoTaskParams::for_kind(*kind),
            TaskSource::AutoTask { params, .. } => Some(params.clone()),
        }
    }
}

/// Everything a generated trial knows beyond the minimal legacy file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialDetails {
    pub source: TaskSource,
    pub seed: u64,
    pub pack_digest: String,
    pub captions: Vec<String>,
    pub scene: Scene,
    pub graph: TaskGraph,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    /// Task label, also the dataset subdirectory.
    pub task: String,
    pub id: u64,
    pub instruction: String,
    pub answer: Answer,
    pub possible: AnswerSet,
    pub frame_count: usize,
    /// `None` for trials read from the minimal layout only.
    pub details: Option<TrialDetails>,
}

impl Trial {
    pub fn kind(&self) -> Option<TaskKind> {
        self.task.parse().ok()
    }

    pub fn captions(&self) -> Option<&[String]> {
        self.details.as_ref().map(|d| d.captions.as_slice())
    }
}

/// Generates one trial. `task_seed` fixes the graph of composite sources;
/// `trial_seed` fixes everything else.
pub fn build_trial(
    source: &TaskSource,
    id: u64,
    task_seed: u64,
    trial_seed: u64,
    pack: &AssetPack,
) -> Result<Trial, DatasetError> {
    let (graph, scene) = match (source, source.params()) {
        (TaskSource::Kind { kind }, None) => instantiate_pam(*kind, trial_seed, pack, &PamConfig::default())?,
        (_, Some(params)) => {
            let graph = autotask(&params, task_seed)?;
            let scene = sample_scene(&graph, &params, trial_seed, pack)?;
            (graph, scene)
        }
        (TaskSource::AutoTask { .. }, None) => unreachable!(),
    };
    let answer = eval_graph(&graph, &scene)?;
    let possible = possible_answers(&graph, source.policy())?;
    debug_assert!(possible.contains(answer));
    Ok(Trial {
        task: source.label(),
        id,
        instruction: synth_instruction(&graph, &scene)?,
        answer,
        possible,
        frame_count: scene.len(),
        details: Some(TrialDetails {
            source: source.clone(),
            seed: trial_seed,
            pack_digest: pack.digest().to_string(),
            captions: synth_ground_truth_captions(&scene),
            scene,
            graph,
        }),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskInfo {
    new_instruction: String,
    answers: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialMeta {
    schema_version: u32,
    grammar_version: String,
    task: String,
    trial_id: u64,
    instruction: String,
    answer: Answer,
    possible_answers: AnswerSet,
    frame_count: usize,
    #[serde(flatten)]
    details: TrialDetails,
}

/// A trial as found on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTrial {
    pub dir: PathBuf,
    pub frames: Vec<PathBuf>,
    pub trial: Trial,
}

pub fn trial_dir(task_dir: &Path, id: u64) -> PathBuf {
    task_dir.join(format!("trial{id}"))
}

/// Renders frames and writes both metadata files under
/// `<task_dir>/trial<N>/frames/`. Returns the trial directory.
pub fn write_trial(task_dir: &Path, trial: &Trial, pack: &AssetPack, cfg: &CanvasConfig) -> Result<PathBuf, DatasetError> {
    let details = trial.details.as_ref().ok_or(DatasetError::MissingDetails(trial.id))?;
    let dir = trial_dir(task_dir, trial.id);
    let frames = dir.join("frames");
    render_trial(&details.scene, pack, cfg, &frames)?;
    let info = TaskInfo { new_instruction: trial.instruction.clone(), answers: vec![trial.answer.to_string()] };
    write_json(&frames.join(TASK_INFO_FILE), &info)?;
    let meta = TrialMeta {
        schema_version: TRIAL_META_VERSION,
        grammar_version: GRAMMAR_VERSION.to_string(),
        task: trial.task.clone(),
        trial_id: trial.id,
        instruction: trial.instruction.clone(),
        answer: trial.answer,
        possible_answers: trial.possible,
        frame_count: trial.frame_count,
        details: details.clone(),
    };
    write_json(&frames.join(TRIAL_META_FILE), &meta)?;
    Ok(dir)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), DatasetError> {
    let bytes = serde_json::to_vec_pretty(value).expect("serializable");
    fs::write(path, bytes).map_err(io_err(path))
}

fn schema(path: &Path, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema { path: path.to_path_buf(), message: message.into() }
}

fn read_json(path: &Path) -> Result<Value, DatasetError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(DatasetError::MissingFile(path.to_path_buf())),
        Err(e) => return Err(io_err(path)(e)),
    };
    serde_json::from_slice(&bytes).map_err(|e| schema(path, e.to_string()))
}

/// `epoch<i>.png` files sorted by `i`.
pub fn frame_files(frames_dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(frames_dir).map_err(io_err(frames_dir))? {
        let path = entry.map_err(io_err(frames_dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(i) = name.strip_prefix("epoch").and_then(|r| r.strip_suffix(".png")).and_then(|n| n.parse::<u64>().ok()) {
            found.push((i, path));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Reads `<dir>/frames/`. Without `trial_meta.json` the result is a reduced
/// trial whose possible answers are every answer of the final answer's type.
pub fn read_trial(dir: &Path) -> Result<StoredTrial, DatasetError> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let id: u64 = name
        .strip_prefix("trial")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| schema(dir, "trial directory must be named trial<N>"))?;
    let task = dir.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str()).unwrap_or_default().to_string();
    let frames_dir = dir.join("frames");
    let info_path = frames_dir.join(TASK_INFO_FILE);
    let info = read_json(&info_path)?;
    let instruction = info
        .get("new_instruction")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(&info_path, "key `new_instruction` missing or not a string"))?
        .to_string();
    let answers = info
        .get("answers")
        .and_then(Value::as_array)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| schema(&info_path, "key `answers` missing or empty"))?;
    let answer: Answer = answers
        .last()
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| schema(&info_path, "key `answers`: last element is not a known answer"))?;
    let frames = frame_files(&frames_dir)?;

    let meta_path = frames_dir.join(TRIAL_META_FILE);
    let trial = if meta_path.exists() {
        let meta: TrialMeta =
            serde_json::from_value(read_json(&meta_path)?).map_err(|e| schema(&meta_path, e.to_string()))?;
        if meta.schema_version != TRIAL_META_VERSION {
            return Err(schema(&meta_path, format!("unsupported schema_version {}", meta.schema_version)));
        }
        if meta.instruction != instruction || meta.answer != answer || meta.trial_id != id {
            return Err(schema(&meta_path, "disagrees with new_task_info.json"));
        }
        if meta.frame_count != frames.len() || meta.details.captions.len() != frames.len() {
            return Err(schema(&meta_path, format!("frame_count {} but {} frame files", meta.frame_count, frames.len())));
        }
        Trial {
            task: meta.task,
            id,
            instruction,
            answer,
            possible: meta.possible_answers,
            frame_count: meta.frame_count,
            details: Some(meta.details),
        }
    } else {
        Trial {
            task,
            id,
            instruction,
            answer,
            possible: AnswerSet::of_type(answer.answer_type()),
            frame_count: frames.len(),
            details: None,
        }
    };
    Ok(StoredTrial { dir: dir.to_path_buf(), frames, trial })
}

/// Trial directories under `root`, grouped by task in manifest order (or
/// name order without a manifest) and by trial number within a task.
pub fn list_trials(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut tasks: Vec<String> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if entry.file_type().map_err(io_err(root))?.is_dir() {
            tasks.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    tasks.sort();
    if let Ok(manifest) = read_manifest(root) {
        let order: Vec<String> = manifest.entries.iter().map(|e| e.task.clone()).collect();
        tasks.sort_by_key(|t| order.iter().position(|o| o == t).unwrap_or(usize::MAX));
    }
    let mut out = Vec::new();
    for task in tasks {
        let task_dir = root.join(&task);
        let mut trials = Vec::new();
        for entry in fs::read_dir(&task_dir).map_err(io_err(&task_dir))? {
            let path = entry.map_err(io_err(&task_dir))?.path();
            let n = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_prefix("trial")).and_then(|n| n.parse::<u64>().ok());
            if let (Some(n), true) = (n, path.join("frames").is_dir()) {
                trials.push((n, path));
            }
        }
        trials.sort();
        out.extend(trials.into_iter().map(|(_, p)| p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimuli::synth_asset_pack;
    use std::sync::OnceLock;

    pub(crate) fn pack() -> &'static AssetPack {
        static PACK: OnceLock<(tempfile::TempDir, AssetPack)> = OnceLock::new();
        &PACK
            .get_or_init(|| {
                let dir = tempfile::tempdir().unwrap();
                let p = synth_asset_pack(9, dir.path(), 2).unwrap();
                (dir, p)
            })
            .1
    }

    pub(crate) fn small() -> CanvasConfig {
        CanvasConfig { width: 32, height: 32, margin: 1, ..CanvasConfig::default() }
    }

    #[test]
    fn write_then_read_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [TaskKind::CvrCatH, TaskKind::MemDisLocC, TaskKind::AttSpaR].into_iter().enumerate() {
            let t = build_trial(&TaskSource::kind(kind), i as u64, 100, 200 + i as u64, pack()).unwrap();
            let task_dir = dir.path().join(&t.task);
            let written = write_trial(&task_dir, &t, pack(), &small()).unwrap();
            let stored = read_trial(&written).unwrap();
            assert_eq!(stored.trial, t);
            assert_eq!(stored.frames.len(), t.frame_count);
            assert_eq!(stored.trial.captions().unwrap().len(), t.frame_count);
        }
    }

    #[test]
    fn minimal_layout_reads_as_reduced_trial() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("foreign/trial3/frames");
        fs::create_dir_all(&frames).unwrap();
        for i in [0, 1, 10, 2] {
            fs::write(frames.join(format!("epoch{i}.png")), b"x").unwrap();
        }
        fs::write(frames.join(TASK_INFO_FILE), r#"{"new_instruction": "q?", "answers": ["x", "top left"]}"#).unwrap();
        let s = read_trial(&dir.path().join("foreign/trial3")).unwrap();
        assert_eq!(s.trial.id, 3);
        assert_eq!(s.trial.task, "foreign");
        assert!(s.trial.details.is_none());
        assert_eq!(s.trial.possible.len(), 4);
        let names: Vec<_> = s.frames.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["epoch0.png", "epoch1.png", "epoch2.png", "epoch10.png"]);
    }

    #[test]
    fn schema_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("t/trial0/frames");
        fs::create_dir_all(&frames).unwrap();
        let trial = dir.path().join("t/trial0");
        assert!(matches!(read_trial(&trial), Err(DatasetError::MissingFile(_))));
        fs::write(frames.join(TASK_INFO_FILE), r#"{"answers": ["true"]}"#).unwrap();
        let e = read_trial(&trial).unwrap_err();
        assert!(e.to_string().contains("new_task_info.json") && e.to_string().contains("new_instruction"), "{e}");
        fs::write(frames.join(TASK_INFO_FILE), r#"{"new_instruction": "q?", "answers": ["true"]}"#).unwrap();
        fs::write(frames.join(TRIAL_META_FILE), "{ not json").unwrap();
        let e = read_trial(&trial).unwrap_err();
        assert!(matches!(&e, DatasetError::Schema { path, .. } if path.ends_with(TRIAL_META_FILE)));
    }

    #[test]
    fn stored_answer_matches_graph() {
        for kind in TaskKind::ALL {
            let t = build_trial(&TaskSource::kind(kind), 0, 1, 2, pack()).unwrap();
            let d = t.details.as_ref().unwrap();
            assert_eq!(eval_graph(&d.graph, &d.scene).unwrap(), t.answer);
            assert!(t.possible.contains(t.answer));
        }
    }
}
