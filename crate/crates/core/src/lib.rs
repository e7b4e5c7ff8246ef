//! Procedural vision-language cognitive tasks: task graphs, stimuli, trial
//! generation, prompts, datasets and score analysis.

pub mod analysis;
pub mod dataset;
#[cfg(any(test, feature = "test-support"))]
pub mod fixtures;
pub mod language;
pub mod prompt;
pub mod stimuli;
pub mod task;
pub mod taskgen;

/// Double-precision instances of the generic analysis types.
pub type ScoreCell = analysis::ScoreCell<f64>;
pub type ScoreTable = analysis::ScoreTable<f64>;
pub type DeltaTable = analysis::DeltaTable<f64>;
pub type DeltaRow = analysis::DeltaRow<f64>;
pub type Correlation = analysis::Correlation<f64>;
