//! Task DSL: operator graphs, their evaluation, answer spaces and chance levels.

mod answer;
mod eval;
mod graph;
mod oracle;
mod types;

pub use answer::{Answer, AnswerSet, AnswerSpacePolicy, AnswerType};
pub use eval::{eval_graph, TaskError};
pub use graph::{
    root_types, validate_graph, GraphBuilder, Node, NodeId, TaskGraph, TypeSet, ValidationReport,
    ValueType, Violation, ViolationKind,
};
pub use oracle::brute_force_answer;
pub use types::{
    AttributeKind, Category, Cue, Frame, Location, ParseVocabError, Scene, SceneError, SceneObject,
    StimulusId, MAX_OBJECTS_PER_FRAME, OBJECTS_PER_CATEGORY,
};

use num_rational::Ratio;

/// The answers a trial offers for `graph` under `policy`.
pub fn possible_answers(graph: &TaskGraph, policy: AnswerSpacePolicy) -> Result<AnswerSet, TaskError> {
    let report = validate_graph(graph);
    if !report.is_ok() {
        return Err(TaskError::InvalidGraph(report.violations));
    }
    let types = root_types(graph).unwrap_or_default();
    if types.contains(ValueType::Identity) {
        return Err(TaskError::IdentityRoot);
    }
    Ok(match policy {
        AnswerSpacePolicy::FullVocabulary => AnswerSet::full(),
        AnswerSpacePolicy::Exact => types
            .iter()
            .filter_map(|t| match t {
                ValueType::Bool => Some(AnswerType::Bool),
                ValueType::Location => Some(AnswerType::Location),
                ValueType::Category => Some(AnswerType::Category),
                ValueType::Identity | ValueType::Object => None,
            })
            .fold(AnswerSet::EMPTY, |acc, t| acc.union(AnswerSet::of_type(t))),
    })
}

/// Exact probability of guessing right uniformly over the possible answers.
pub fn chance_level(graph: &TaskGraph, policy: AnswerSpacePolicy) -> Result<Ratio<u32>, TaskError> {
    let n = possible_answers(graph, policy)?.len() as u32;
    Ok(Ratio::new(1, n))
}

/// Whole-percent display of a fraction, rounding halves up (12.5 -> 13).
pub fn display_percent(p: Ratio<u32>) -> u32 {
    let (num, den) = (u64::from(*p.numer()), u64::from(*p.denom()));
    ((200 * num + den) / (2 * den)) as u32
}
