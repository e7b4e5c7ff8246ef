use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_trial, io_err, list_trials, read_json, read_trial, schema, write_json, write_trial, DatasetError, TaskSource,
    TASK_INFO_FILE, TRIAL_META_FILE,
};
use crate::language::GRAMMAR_VERSION;
use crate::stimuli::{AssetPack, CanvasConfig};
use crate::task::AnswerSpacePolicy;
use crate::taskgen::TaskKind;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub source: TaskSource,
    /// Distinct graphs. Named perception/attention/memory kinds have one
    /// graph shape, so for them this only multiplies the trial count.
    pub n_tasks: usize,
    pub n_trials: usize,
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub id: String,
    pub split: Split,
    pub seed_start: u64,
    pub entries: Vec<EntrySpec>,
    #[serde(default)]
    pub canvas: CanvasConfig,
}

impl DatasetSpec {
    /// Every named kind with the same counts.
    pub fn all_kinds(id: &str, split: Split, n_tasks: usize, n_trials: usize, seed_start: u64) -> Self {
        DatasetSpec {
            id: id.to_string(),
            split,
            seed_start,
            entries: TaskKind::ALL
                .into_iter()
                .map(|k| EntrySpec { source: TaskSource::kind(k), n_tasks, n_trials })
                .collect(),
            canvas: CanvasConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.id.is_empty() {
            return bad("dataset id is empty".into());
        }
        let mut labels = std::collections::HashSet::new();
        for e in &self.entries {
            let label = e.source.label();
            if e.n_tasks == 0 || e.n_trials == 0 {
                return bad(format!("{label}: n_tasks and n_trials must be positive"));
            }
            if label.is_empty() || label.contains(['/', '\\']) || label.starts_with('.') {
                return bad(format!("`{label}` is not a usable directory name"));
            }
            if !labels.insert(label.clone()) {
                return bad(format!("{label} appears twice"));
            }
            if let TaskSource::AutoTask { params, .. } = &e.source {
                params.validate()?;
            }
        }
        self.canvas.validate()?;
        self.seed_range()?;
        Ok(())
    }

    fn seed_count(&self) -> Option<u64> {
        self.entries.iter().try_fold(0u64, |acc, e| {
            let per_task = (e.n_trials as u64).checked_add(1)?;
            acc.checked_add(per_task.checked_mul(e.n_tasks as u64)?)
        })
    }

    pub fn seed_range(&self) -> Result<SeedRange, DatasetError> {
        let end = self
            .seed_count()
            .and_then(|n| self.seed_start.checked_add(n))
            .ok_or_else(|| DatasetError::InvalidSpec("seed range overflows u64".into()))?;
        Ok(SeedRange { start: self.seed_start, end })
    }

    /// (label, source, trial id, task seed, trial seed) for every trial in
    /// generation order. Each task consumes one seed for its graph and one
    /// per trial.
    fn jobs(&self) -> Vec<(String, &TaskSource, u64, u64, u64)> {
        let mut cursor = self.seed_start;
        let mut jobs = Vec::new();
        for e in &self.entries {
            let label = e.source.label();
            for t in 0..e.n_tasks {
                let task_seed = cursor;
                cursor += 1;
                for r in 0..e.n_trials {
                    let id = (t * e.n_trials + r) as u64;
                    jobs.push((label.clone(), &e.source, id, task_seed, cursor));
                    cursor += 1;
                }
            }
        }
        jobs
    }
}

/// Half-open seed interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn overlaps(&self, other: &SeedRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task: String,
    pub source: TaskSource,
    pub n_tasks: usize,
    pub n_trials: usize,
    pub policy: AnswerSpacePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub id: String,
    pub split: Split,
    pub generator_version: String,
    pub grammar_version: String,
    pub pack_digest: String,
    pub canvas: CanvasConfig,
    pub seed_range: SeedRange,
    pub entries: Vec<ManifestEntry>,
    pub trial_count: usize,
    /// SHA-256 over every trial's metadata and frame bytes, in order.
    pub content_digest: String,
}

impl DatasetManifest {
    /// SHA-256 of the manifest's canonical JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable")))
    }
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    serde_json::from_value(read_json(&path)?).map_err(|e| schema(&path, e.to_string()))
}

/// Fails if any train dataset shares a seed with any eval dataset.
pub fn check_split_disjoint(manifests: &[DatasetManifest]) -> Result<(), DatasetError> {
    for a in manifests.iter().filter(|m| m.split == Split::Train) {
        for b in manifests.iter().filter(|m| m.split == Split::Eval) {
            if a.seed_range.overlaps(&b.seed_range) {
                return Err(DatasetError::SeedOverlap { train: a.id.clone(), eval: b.id.clone() });
            }
        }
    }
    Ok(())
}

fn hash_trial(dir: &Path) -> Result<String, DatasetError> {
    let frames = dir.join("frames");
    let mut h = Sha256::new();
    for name in [TASK_INFO_FILE, TRIAL_META_FILE] {
        let p = frames.join(name);
        h.update(fs::read(&p).map_err(io_err(&p))?);
    }
    for p in super::frame_files(&frames)? {
        h.update(fs::read(&p).map_err(io_err(&p))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Generates, renders and writes every trial of `spec` under `root`, then
/// writes the manifest. Output depends only on the spec and the pack.
pub fn generate_dataset(spec: &DatasetSpec, pack: &AssetPack, root: &Path) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(io_err(root))?;
    let digests: Vec<String> = spec
        .jobs()
        .into_par_iter()
        .map(|(label, source, id, task_seed, trial_seed)| {
            let trial = build_trial(source, id, task_seed, trial_seed, pack)?;
            let dir = write_trial(&root.join(label), &trial, pack, &spec.canvas)?;
            hash_trial(&dir)
        })
        .collect::<Result<_, DatasetError>>()?;
    let mut content = Sha256::new();
    for d in &digests {
        content.update(d.as_bytes());
    }
    let manifest = DatasetManifest {
        schema_version: MANIFEST_VERSION,
        id: spec.id.clone(),
        split: spec.split,
        generator_version: env!("CARGO_PKG_VERSION").to_string(),
        grammar_version: GRAMMAR_VERSION.to_string(),
        pack_digest: pack.digest().to_string(),
        canvas: spec.canvas.clone(),
        seed_range: spec.seed_range()?,
        entries: spec
            .entries
            .iter()
            .map(|e| ManifestEntry {
                task: e.source.label(),
                source: e.source.clone(),
                n_tasks: e.n_tasks,
                n_trials: e.n_trials,
                policy: e.source.policy(),
            })
            .collect(),
        trial_count: digests.len(),
        content_digest: hex::encode(content.finalize()),
    };
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
    write_json(&tmp, manifest)?;
    let path = root.join(MANIFEST_FILE);
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

/// Renders every trial of the dataset at `src` again with `canvas`, writing a
/// complete dataset to `out` (which may equal `src`). The pack must be the
/// one the dataset was generated with.
pub fn rerender_dataset(src: &Path, pack: &AssetPack, canvas: &CanvasConfig, out: &Path) -> Result<DatasetManifest, DatasetError> {
    canvas.validate()?;
    let mut manifest = read_manifest(src)?;
    if manifest.pack_digest != pack.digest() {
        return Err(DatasetError::InvalidSpec(format!(
            "dataset was generated with pack {}, got {}",
            manifest.pack_digest,
            pack.digest()
        )));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let digests: Vec<String> = list_trials(src)?
        .into_par_iter()
        .map(|dir| {
            let stored = read_trial(&dir)?;
            let written = write_trial(&out.join(&stored.trial.task), &stored.trial, pack, canvas)?;
            hash_trial(&written)
        })
        .collect::<Result<_, DatasetError>>()?;
    let mut content = Sha256::new();
    for d in &digests {
        content.update(d.as_bytes());
    }
    manifest.canvas = canvas.clone();
    manifest.content_digest = hex::encode(content.finalize());
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::{pack, small};
    use crate::dataset::{list_trials, read_trial};

    fn spec(id: &str, split: Split, seed_start: u64) -> DatasetSpec {
        DatasetSpec {
            id: id.into(),
            split,
            seed_start,
            entries: vec![
                EntrySpec { source: TaskSource::kind(TaskKind::CvrLocM), n_tasks: 2, n_trials: 2 },
                EntrySpec { source: TaskSource::kind(TaskKind::PercCatC), n_tasks: 1, n_trials: 3 },
                EntrySpec { source: TaskSource::finetune(), n_tasks: 2, n_trials: 1 },
            ],
            canvas: small(),
        }
    }

    #[test]
    fn generates_layout_and_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let s = spec("d", Split::Eval, 10);
        let ma = generate_dataset(&s, pack(), a.path()).unwrap();
        let mb = generate_dataset(&s, pack(), b.path()).unwrap();
        assert_eq!(ma.digest(), mb.digest());
        assert_eq!(ma.trial_count, 9);
        assert_eq!(ma.seed_range, SeedRange { start: 10, end: 10 + 6 + 4 + 4 });
        assert_eq!(read_manifest(a.path()).unwrap(), ma);
        let trials = list_trials(a.path()).unwrap();
        assert_eq!(trials.len(), 9);
        assert!(trials[0].ends_with("CVR-Loc-M/trial0"));
        assert!(trials[8].ends_with("finetune/trial1"));
        // both trials of one composite task share a graph
        let t0 = read_trial(&trials[0]).unwrap().trial.details.unwrap();
        let t1 = read_trial(&trials[1]).unwrap().trial.details.unwrap();
        assert_eq!(t0.graph, t1.graph);
        assert_ne!(t0.seed, t1.seed);
    }

    #[test]
    fn rerendering_changes_only_frames() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let s = spec("r", Split::Eval, 3);
        let m = generate_dataset(&s, pack(), a.path()).unwrap();
        let big = CanvasConfig { width: 40, height: 40, margin: 1, ..CanvasConfig::default() };
        let r = rerender_dataset(a.path(), pack(), &big, b.path()).unwrap();
        assert_ne!(r.content_digest, m.content_digest);
        assert_eq!((r.trial_count, &r.entries, r.seed_range), (m.trial_count, &m.entries, m.seed_range));
        let back = rerender_dataset(b.path(), pack(), &small(), c.path()).unwrap();
        assert_eq!(back.digest(), m.digest());
        let x = read_trial(&list_trials(a.path()).unwrap()[0]).unwrap();
        let y = read_trial(&list_trials(b.path()).unwrap()[0]).unwrap();
        assert_eq!(x.trial, y.trial);

        let other = tempfile::tempdir().unwrap();
        let p2 = crate::stimuli::synth_asset_pack(77, other.path(), 1).unwrap();
        assert!(matches!(rerender_dataset(a.path(), &p2, &big, c.path()), Err(DatasetError::InvalidSpec(_))));
    }

    #[test]
    fn split_overlap_is_detected() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let train = generate_dataset(&spec("tr", Split::Train, 0), pack(), a.path()).unwrap();
        let eval = generate_dataset(&spec("ev", Split::Eval, 5), pack(), b.path()).unwrap();
        assert!(matches!(check_split_disjoint(&[train.clone(), eval]), Err(DatasetError::SeedOverlap { .. })));
        let mut far = train.clone();
        far.split = Split::Eval;
        far.seed_range = SeedRange { start: 1000, end: 1010 };
        check_split_disjoint(&[train, far]).unwrap();
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec("x", Split::Train, 0);
        s.entries[0].n_trials = 0;
        assert!(matches!(s.validate(), Err(DatasetError::InvalidSpec(_))));
        let mut s = spec("x", Split::Train, 0);
        s.entries.push(s.entries[0].clone());
        assert!(s.validate().is_err());
        let s = spec("x", Split::Train, u64::MAX - 3);
        assert!(s.validate().is_err());
    }
}
