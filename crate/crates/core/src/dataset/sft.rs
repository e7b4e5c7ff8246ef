use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, list_trials, read_trial, DatasetError, StoredTrial};
use crate::prompt::{flatten, prompt_parts, EvalMode, PromptStyle};

/// Records per output file before sharding.
pub const SFT_SHARD_SIZE: usize = 50_000;

pub const IMAGE_PLACEHOLDER: &str = "<image>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub messages: Vec<SftMessage>,
    pub images: Vec<String>,
}

/// The Base-mode prompt with an `<image>` placeholder per frame, and the bare
/// answer as the assistant turn.
pub fn sft_record(stored: &StoredTrial) -> Result<SftRecord, DatasetError> {
    let t = &stored.trial;
    let parts = prompt_parts(&t.instruction, &t.possible, stored.frames.len(), EvalMode::Base, None, PromptStyle::Sft)
        .expect("base prompts need no captions");
    Ok(SftRecord {
        messages: vec![
            SftMessage { role: "user".into(), content: flatten(&parts, IMAGE_PLACEHOLDER) },
            SftMessage { role: "assistant".into(), content: t.answer.to_string() },
        ],
        images: stored.frames.iter().map(|p| p.to_string_lossy().into_owned()).collect(),
    })
}

fn shard_path(out: &Path, k: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sft".into());
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}-{k:04}{ext}"))
}

fn write_array(path: &Path, records: &[SftRecord]) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, records).map_err(|e| io_err(path)(e.into()))?;
    w.flush().map_err(io_err(path))
}

/// Writes one JSON array of records for every trial under `root`. Above
/// [`SFT_SHARD_SIZE`] records the output is split into numbered shards next
/// to `out`. Returns the files written.
pub fn export_sft(root: &Path, out: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    export_sft_sharded(root, out, SFT_SHARD_SIZE)
}

pub(crate) fn export_sft_sharded(root: &Path, out: &Path, shard: usize) -> Result<Vec<PathBuf>, DatasetError> {
    let mut records = Vec::new();
    for dir in list_trials(root)? {
        records.push(sft_record(&read_trial(&dir)?)?);
    }
    if records.len() <= shard {
        write_array(out, &records)?;
        return Ok(vec![out.to_path_buf()]);
    }
    let mut written = Vec::new();
    for (k, chunk) in records.chunks(shard).enumerate() {
        let p = shard_path(out, k);
        write_array(&p, chunk)?;
        written.push(p);
    }
    Ok(written)
}
