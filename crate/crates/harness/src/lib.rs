//! Runs cogbench datasets against chat-completion endpoints: prompt assembly
//! per evaluation mode, self-captioning, answer extraction and resumable
//! result persistence.

pub mod client;
pub mod extract;
pub mod message;
#[cfg(feature = "mock")]
pub mod mock;
pub mod retry;
pub mod run;

pub use client::{ChatModel, ChatRequest, ChatResponse, EndpointError, HttpChatModel, ModelEndpoint, Usage};
pub use extract::{extract_answer, fallback_extract, EXTRACTION_PROMPT};
pub use message::{build_prompt, MessageSeq, Part, Role, Turn};
pub use retry::{RetryPolicy, RetryRecord, Retrying, Sleeper, ThreadSleeper};
pub use run::{
    caption_frames, load_results, outcomes, result_file_name, run_eval, run_trial, ErrorRecord, EvalConfig,
    EvalSummary, Models, TrialResult, RESULT_SCHEMA_VERSION, SUMMARY_FILE,
};

use cogbench_core::dataset::DatasetError;
use cogbench_core::prompt::PromptError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("model returned an empty caption for frame {frame}")]
    EmptyCaption { frame: usize },
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("result file {}: {message}", path.display())]
    BadResult { path: std::path::PathBuf, message: String },
}

impl HarnessError {
    /// Short stable name used in result files and summaries.
    pub fn class(&self) -> &'static str {
        match self {
            HarnessError::Endpoint(e) => e.class(),
            HarnessError::Prompt(PromptError::MissingCaptions(_)) => "missing_captions",
            HarnessError::Prompt(PromptError::CaptionCountMismatch { .. }) => "caption_count",
            HarnessError::Dataset(_) => "dataset",
            HarnessError::EmptyCaption { .. } => "empty_caption",
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::BadResult { .. } => "bad_result",
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}
