//! Reference interpreter used to cross-check [`eval_graph`](super::eval_graph).
//!
//! Plain structural recursion over the node list with no memoization and no
//! shared helpers from the main evaluator. Values are carried as strings so
//! comparisons go through a different representation as well.

use super::answer::Answer;
use super::eval::TaskError;
use super::graph::{Node, NodeId, TaskGraph};
use super::types::{Cue, Scene};

#[derive(Debug, Clone, PartialEq)]
enum Val {
    /// (frame, position within frame)
    Obj(usize, usize),
    Truth(bool),
    Word(String),
}

pub fn brute_force_answer(graph: &TaskGraph, scene: &Scene) -> Result<Answer, TaskError> {
    let depth_budget = graph.nodes().len() + 1;
    match walk(graph, scene, graph.root(), depth_budget)? {
        Val::Truth(true) => Ok(Answer::Bool(true)),
        Val::Truth(false) => Ok(Answer::Bool(false)),
        Val::Word(w) => {
            if w.starts_with("identity:") {
                return Err(TaskError::IdentityRoot);
            }
            w.parse().map_err(|_| TaskError::TypeMismatch(graph.root()))
        }
        Val::Obj(..) => Err(TaskError::TypeMismatch(graph.root())),
    }
}

fn walk(graph: &TaskGraph, scene: &Scene, id: NodeId, budget: usize) -> Result<Val, TaskError> {
    if budget == 0 {
        return Err(TaskError::TypeMismatch(id));
    }
    let node = graph.nodes().get(id.0).ok_or(TaskError::TypeMismatch(id))?;
    match node {
        Node::Select { frame, cue, ordinal } => {
            if *frame >= scene.frames.len() {
                return Err(TaskError::MissingFrame { node: id, frame: *frame, frames: scene.frames.len() });
            }
            let objects = &scene.frames[*frame].objects;
            let mut found = Vec::new();
            for (pos, o) in objects.iter().enumerate() {
                let hit = match cue {
                    Cue::None => o.ordinal == Some(*ordinal),
                    Cue::Location(l) => o.location == *l,
                    Cue::Category(c) => o.stimulus.category == *c,
                };
                if hit {
                    found.push(pos);
                }
            }
            if found.len() != 1 {
                return Err(TaskError::UnresolvedSelect { node: id, frame: *frame, matches: found.len() });
            }
            Ok(Val::Obj(*frame, found[0]))
        }
        Node::GetAttr { kind, select } => {
            let v = walk(graph, scene, *select, budget - 1)?;
            Ok(Val::Word(describe(scene, &v, kind.as_str(), *select)?))
        }
        Node::IsSame { kind, a, b } | Node::NotSame { kind, a, b } => {
            let va = walk(graph, scene, *a, budget - 1)?;
            let vb = walk(graph, scene, *b, budget - 1)?;
            let eq = describe(scene, &va, kind.as_str(), *a)? == describe(scene, &vb, kind.as_str(), *b)?;
            Ok(Val::Truth(if matches!(node, Node::IsSame { .. }) { eq } else { !eq }))
        }
        Node::And { a, b } => {
            let x = truth(walk(graph, scene, *a, budget - 1)?, *a)?;
            let y = truth(walk(graph, scene, *b, budget - 1)?, *b)?;
            Ok(Val::Truth(x & y))
        }
        Node::Or { a, b } => {
            let x = truth(walk(graph, scene, *a, budget - 1)?, *a)?;
            let y = truth(walk(graph, scene, *b, budget - 1)?, *b)?;
            Ok(Val::Truth(x | y))
        }
        Node::Switch { cond, then, otherwise } => {
            if truth(walk(graph, scene, *cond, budget - 1)?, *cond)? {
                walk(graph, scene, *then, budget - 1)
            } else {
                walk(graph, scene, *otherwise, budget - 1)
            }
        }
    }
}

fn truth(v: Val, at: NodeId) -> Result<bool, TaskError> {
    match v {
        Val::Truth(b) => Ok(b),
        _ => Err(TaskError::TypeMismatch(at)),
    }
}

fn describe(scene: &Scene, v: &Val, attribute: &str, at: NodeId) -> Result<String, TaskError> {
    let Val::Obj(f, p) = v else {
        return Err(TaskError::TypeMismatch(at));
    };
    let o = &scene.frames[*f].objects[*p];
    Ok(match attribute {
        "location" => o.location.to_string(),
        "category" => o.stimulus.category.to_string(),
        _ => format!("identity:{}#{}", o.stimulus.category, o.stimulus.object_index),
    })
}
