//! Ground-truth evaluation of a task graph over a scene.

use thiserror::Error;

use super::answer::Answer;
use super::graph::{validate_graph, Node, NodeId, Violation};
use super::types::{AttributeKind, Category, Cue, Location, Scene, SceneObject};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("invalid graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
    #[error("select {node} matched {matches} objects in frame {frame}")]
    UnresolvedSelect { node: NodeId, frame: usize, matches: usize },
    #[error("select {node} refers to frame {frame}, scene has {frames} frames")]
    MissingFrame { node: NodeId, frame: usize, frames: usize },
    #[error("root produces an identity value, which is not an answer")]
    IdentityRoot,
    #[error("node {0} produced a value of the wrong type")]
    TypeMismatch(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value<'s> {
    Object(&'s SceneObject),
    Bool(bool),
    Loc(Location),
    Cat(Category),
    Ident(Category, u8),
}

impl<'s> Value<'s> {
    fn as_bool(&self, at: NodeId) -> Result<bool, TaskError> {
        match self {
            Value::Bool(b) => Ok(*b),
            _ => Err(TaskError::TypeMismatch(at)),
        }
    }

    fn as_object(self, at: NodeId) -> Result<&'s SceneObject, TaskError> {
        match self {
            Value::Object(o) => Ok(o),
            _ => Err(TaskError::TypeMismatch(at)),
        }
    }
}

fn attribute<'s>(obj: &SceneObject, kind: AttributeKind) -> Value<'s> {
    match kind {
        AttributeKind::Location => Value::Loc(obj.location),
        AttributeKind::Category => Value::Cat(obj.stimulus.category),
        AttributeKind::Identity => {
            let (c, i) = obj.stimulus.identity();
            Value::Ident(c, i)
        }
    }
}

fn resolve(
    scene: &Scene,
    node: NodeId,
    frame: usize,
    cue: Cue,
    ordinal: u32,
) -> Result<&SceneObject, TaskError> {
    let f = scene.frame(frame).ok_or(TaskError::MissingFrame {
        node,
        frame,
        frames: scene.len(),
    })?;
    let mut hits = f.objects.iter().filter(|o| cue.matches(o, ordinal));
    match (hits.next(), hits.next()) {
        (Some(obj), None) => Ok(obj),
        _ => Err(TaskError::UnresolvedSelect {
            node,
            frame,
            matches: f.objects.iter().filter(|o| cue.matches(o, ordinal)).count(),
        }),
    }
}

enum Step {
    Visit(NodeId),
    /// Condition of a Switch is ready; schedule the taken branch.
    Branch(NodeId),
    Finish(NodeId),
}

/// Evaluates `graph` over `scene` and returns the ground-truth answer.
///
/// Evaluation is post-order over an explicit work stack with one memo slot
/// per node. A Switch evaluates its condition first and then only the taken
/// branch, so Selects under the untaken branch are never resolved.
pub fn eval_graph(graph: &super::graph::TaskGraph, scene: &Scene) -> Result<Answer, TaskError> {
    let report = validate_graph(graph);
    if !report.is_ok() {
        return Err(TaskError::InvalidGraph(report.violations));
    }
    let nodes = graph.nodes();
    let mut memo: Vec<Option<Value<'_>>> = vec![None; nodes.len()];
    let mut work = vec![Step::Visit(graph.root())];

    while let Some(step) = work.pop() {
        match step {
            Step::Visit(id) => {
                if memo[id.0].is_some() {
                    continue;
                }
                match nodes[id.0] {
                    Node::Select { frame, cue, ordinal } => {
                        memo[id.0] = Some(Value::Object(resolve(scene, id, frame, cue, ordinal)?));
                    }
                    Node::Switch { cond, .. } => {
                        work.push(Step::Branch(id));
                        work.push(Step::Visit(cond));
                    }
                    ref other => {
                        work.push(Step::Finish(id));
                        work.extend(other.children().into_iter().rev().map(Step::Visit));
                    }
                }
            }
            Step::Branch(id) => {
                let Node::Switch { cond, then, otherwise } = nodes[id.0] else {
                    return Err(TaskError::TypeMismatch(id));
                };
                let taken = if memo_get(&memo, cond)?.as_bool(cond)? { then } else { otherwise };
                work.push(Step::Finish(id));
                work.push(Step::Visit(taken));
            }
            Step::Finish(id) => {
                let value = match nodes[id.0] {
                    Node::Select { .. } => unreachable!("selects resolve on visit"),
                    Node::GetAttr { kind, select } => {
                        attribute(memo_get(&memo, select)?.as_object(select)?, kind)
                    }
                    Node::IsSame { kind, a, b } => Value::Bool(same(&memo, kind, a, b)?),
                    Node::NotSame { kind, a, b } => Value::Bool(!same(&memo, kind, a, b)?),
                    Node::And { a, b } => {
                        Value::Bool(memo_get(&memo, a)?.as_bool(a)? && memo_get(&memo, b)?.as_bool(b)?)
                    }
                    Node::Or { a, b } => {
                        Value::Bool(memo_get(&memo, a)?.as_bool(a)? || memo_get(&memo, b)?.as_bool(b)?)
                    }
                    Node::Switch { cond, then, otherwise } => {
                        let taken = if memo_get(&memo, cond)?.as_bool(cond)? { then } else { otherwise };
                        memo_get(&memo, taken)?
                    }
                };
                memo[id.0] = Some(value);
            }
        }
    }

    match memo_get(&memo, graph.root())? {
        Value::Bool(b) => Ok(Answer::Bool(b)),
        Value::Loc(l) => Ok(Answer::Loc(l)),
        Value::Cat(c) => Ok(Answer::Cat(c)),
        Value::Ident(..) => Err(TaskError::IdentityRoot),
        Value::Object(_) => Err(TaskError::TypeMismatch(graph.root())),
    }
}

fn memo_get<'s>(memo: &[Option<Value<'s>>], id: NodeId) -> Result<Value<'s>, TaskError> {
    memo[id.0].ok_or(TaskError::TypeMismatch(id))
}

fn same(memo: &[Option<Value<'_>>], kind: AttributeKind, a: NodeId, b: NodeId) -> Result<bool, TaskError> {
    let oa = memo_get(memo, a)?.as_object(a)?;
    let ob = memo_get(memo, b)?.as_object(b)?;
    Ok(attribute(oa, kind) == attribute(ob, kind))
}
