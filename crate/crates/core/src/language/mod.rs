//! Natural-language rendering of task graphs, scenes and answers.

#[cfg(any(test, feature = "test-support"))]
mod parse;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::task::{
    Answer, AnswerSet, AttributeKind, Category, Cue, Location, Node, NodeId, Scene, TaskError, TaskGraph,
};

#[cfg(any(test, feature = "test-support"))]
pub use parse::{parse_instruction, ParseError};

pub const GRAMMAR_VERSION: &str = "1";

/// The prompt sent with each frame when a model captions it.
pub const SELF_CAPTION_PROMPT: &str = "Please provide a concise caption for the given image, including what the location of each the object in the images are and what the category of each object is. Each image either is blank (a delay frame) or contains one or more 3D objects from one of eight categories: benches, boats, cars, chairs, couches, lighting, planes, and tables. The object is placed in one of four locations: top left, top right, bottom left, or bottom right.";

/// How frame captions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionStyle {
    GroundTruth,
    SelfCaptionRequest,
}

/// One entry of the observation schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    Observe { object: u32, frame: usize },
    ObserveCategory { category: Category, frame: usize },
    ObserveLocation { location: Location, frame: usize },
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connective {
    And,
    Or,
}

/// The question part of an instruction, one level above the raw graph: And/Or
/// trees are flattened into left-to-right chains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Attr { kind: AttributeKind, object: u32 },
    Compare { kind: AttributeKind, negate: bool, a: u32, b: u32 },
    Chain { first: Box<Query>, rest: Vec<(Connective, Query)> },
    Switch { cond: Box<Query>, then: Box<Query>, otherwise: Box<Query> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub clauses: Vec<Clause>,
    pub query: Query,
}

impl Instruction {
    /// Lays out the schedule along the scene timeline and lifts the graph
    /// into a query. Frames no select reads become "delay".
    pub fn from_graph(graph: &TaskGraph, scene: &Scene) -> Result<Self, TaskError> {
        let report = crate::task::validate_graph(graph);
        if !report.is_ok() {
            return Err(TaskError::InvalidGraph(report.violations));
        }
        let mut per_frame: Vec<Vec<(u32, Cue)>> = vec![Vec::new(); scene.len()];
        for id in graph.reachable_selects() {
            if let Some(Node::Select { frame, cue, ordinal }) = graph.node(id) {
                let slot = per_frame.get_mut(*frame).ok_or(TaskError::MissingFrame {
                    node: id,
                    frame: *frame,
                    frames: scene.len(),
                })?;
                if !slot.contains(&(*ordinal, *cue)) {
                    slot.push((*ordinal, *cue));
                }
            }
        }
        let mut clauses = Vec::new();
        for (frame, sels) in per_frame.iter_mut().enumerate() {
            if sels.is_empty() {
                clauses.push(Clause::Delay);
                continue;
            }
            sels.sort_by_key(|s| s.0);
            for &(object, cue) in sels.iter() {
                clauses.push(match cue {
                    Cue::None => Clause::Observe { object, frame },
                    Cue::Category(category) => Clause::ObserveCategory { category, frame },
                    Cue::Location(location) => Clause::ObserveLocation { location, frame },
                });
            }
        }
        Ok(Instruction { clauses, query: lift(graph, graph.root())? })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.clauses {
            match c {
                Clause::Observe { object, frame } => write!(out, "observe object {object} in frame {}", frame + 1),
                Clause::ObserveCategory { category, frame } => write!(out, "observe the {category} in frame {}", frame + 1),
                Clause::ObserveLocation { location, frame } => {
                    write!(out, "observe the object at the {location} in frame {}", frame + 1)
                }
                Clause::Delay => write!(out, "delay"),
            }
            .unwrap();
            out.push_str(", ");
        }
        render_query(&self.query, &mut out);
        out.push('?');
        out
    }
}

fn object_number(graph: &TaskGraph, id: NodeId) -> Result<u32, TaskError> {
    match graph.node(id) {
        Some(Node::Select { ordinal, .. }) => Ok(*ordinal),
        _ => Err(TaskError::TypeMismatch(id)),
    }
}

fn lift(graph: &TaskGraph, id: NodeId) -> Result<Query, TaskError> {
    let node = graph.node(id).ok_or(TaskError::TypeMismatch(id))?;
    Ok(match *node {
        Node::Select { .. } => return Err(TaskError::TypeMismatch(id)),
        Node::GetAttr { kind, select } => Query::Attr { kind, object: object_number(graph, select)? },
        Node::IsSame { kind, a, b } | Node::NotSame { kind, a, b } => Query::Compare {
            kind,
            negate: matches!(node, Node::NotSame { .. }),
            a: object_number(graph, a)?,
            b: object_number(graph, b)?,
        },
        Node::And { a, b } | Node::Or { a, b } => {
            let conn = if matches!(node, Node::And { .. }) { Connective::And } else { Connective::Or };
            let rhs = lift(graph, b)?;
            match lift(graph, a)? {
                Query::Chain { first, mut rest } => {
                    rest.push((conn, rhs));
                    Query::Chain { first, rest }
                }
                lhs => Query::Chain { first: Box::new(lhs), rest: vec![(conn, rhs)] },
            }
        }
        Node::Switch { cond, then, otherwise } => Query::Switch {
            cond: Box::new(lift(graph, cond)?),
            then: Box::new(lift(graph, then)?),
            otherwise: Box::new(lift(graph, otherwise)?),
        },
    })
}

fn render_query(q: &Query, out: &mut String) {
    match q {
        Query::Attr { kind, object } => write!(out, "{kind} of object {object}").unwrap(),
        Query::Compare { kind, negate, a, b } => {
            let op = if *negate { "not equals" } else { "equals" };
            write!(out, "{kind} of object {a} {op} {kind} of object {b}").unwrap()
        }
        Query::Chain { first, rest } => {
            render_query(first, out);
            for (conn, q) in rest {
                out.push_str(match conn {
                    Connective::And => " and ",
                    Connective::Or => " or ",
                });
                render_query(q, out);
            }
        }
        Query::Switch { cond, then, otherwise } => {
            out.push_str("if ");
            render_query(cond, out);
            out.push_str(", then ");
            render_query(then, out);
            out.push_str("? else ");
            render_query(otherwise, out);
        }
    }
}

/// The instruction text for `graph` over `scene`.
pub fn synth_instruction(graph: &TaskGraph, scene: &Scene) -> Result<String, TaskError> {
    Ok(Instruction::from_graph(graph, scene)?.render())
}

/// One "Frame i: ..." caption per frame describing every object.
pub fn synth_ground_truth_captions(scene: &Scene) -> Vec<String> {
    scene
        .frames
        .iter()
        .map(|f| {
            let body = if f.is_blank() {
                "delay frame".to_string()
            } else {
                // reading order, so the caption depends only on the picture
                let mut objects: Vec<_> = f.objects.iter().collect();
                objects.sort_by_key(|o| o.location);
                objects
                    .iter()
                    .map(|o| format!("A {} located at the {}", o.stimulus.category, o.location))
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            format!("Frame {}: {body}", f.index + 1)
        })
        .collect()
}

/// Drops a leading "Frame i: " label if present.
pub fn caption_body(caption: &str) -> &str {
    caption
        .strip_prefix("Frame ")
        .and_then(|rest| {
            let (num, body) = rest.split_once(": ")?;
            num.chars().all(|c| c.is_ascii_digit()).then_some(body)
        })
        .unwrap_or(caption)
}

pub fn answer_to_string(a: Answer) -> &'static str {
    a.as_str()
}

/// "(a, b, ...)" in canonical vocabulary order.
pub fn format_answer_list(set: &AnswerSet) -> String {
    format!("({})", answer_items(set))
}

/// The comma-joined answers without parentheses.
pub fn answer_items(set: &AnswerSet) -> String {
    set.iter().map(Answer::as_str).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{figure_graph, figure_scene};
    use crate::task::{Frame, GraphBuilder, SceneObject, StimulusId};

    fn obj(category: Category, location: Location, ordinal: Option<u32>) -> SceneObject {
        SceneObject { stimulus: StimulusId { category, object_index: 0, view_index: 0 }, location, ordinal }
    }

    #[test]
    fn figure_instruction_is_exact() {
        let s = synth_instruction(&figure_graph(), &figure_scene()).unwrap();
        assert_eq!(
            s,
            "observe object 1 in frame 1, observe object 2 in frame 2, observe object 3 in frame 3, \
             observe object 4 in frame 4, observe object 5 in frame 5, delay, observe object 6 in frame 7, \
             delay, observe object 7 in frame 9, if identity of object 3 equals identity of object 2, then \
             location of object 7 not equals location of object 6 and identity of object 5 equals identity \
             of object 4? else location of object 1?"
        );
    }

    #[test]
    fn simple_report_and_compare() {
        let scene = Scene::new(vec![Frame { index: 0, objects: vec![obj(Category::Cars, Location::TopLeft, Some(1))] }])
            .unwrap();
        let mut b = GraphBuilder::new();
        let s = b.select(0, 1);
        let r = b.get_attr(AttributeKind::Location, s);
        assert_eq!(synth_instruction(&b.build(r), &scene).unwrap(), "observe object 1 in frame 1, location of object 1?");

        let scene = Scene::new(vec![
            Frame { index: 0, objects: vec![obj(Category::Cars, Location::TopLeft, Some(1))] },
            Frame { index: 1, objects: vec![obj(Category::Cars, Location::TopLeft, Some(2))] },
        ])
        .unwrap();
        let mut b = GraphBuilder::new();
        let (s1, s2) = (b.select(0, 1), b.select(1, 2));
        let r = b.is_same(AttributeKind::Category, s1, s2);
        assert_eq!(
            synth_instruction(&b.build(r), &scene).unwrap(),
            "observe object 1 in frame 1, observe object 2 in frame 2, category of object 1 equals category of object 2?"
        );
    }

    #[test]
    fn cued_clauses() {
        let scene = Scene::new(vec![Frame {
            index: 0,
            objects: vec![obj(Category::Chairs, Location::TopLeft, Some(1)), obj(Category::Boats, Location::BottomRight, None)],
        }])
        .unwrap();
        let mut b = GraphBuilder::new();
        let s = b.select_cued(0, Cue::Category(Category::Chairs), 1);
        let r = b.get_attr(AttributeKind::Location, s);
        assert_eq!(synth_instruction(&b.build(r), &scene).unwrap(), "observe the chairs in frame 1, location of object 1?");
        let mut b = GraphBuilder::new();
        let s = b.select_cued(0, Cue::Location(Location::BottomRight), 1);
        let r = b.get_attr(AttributeKind::Category, s);
        assert_eq!(
            synth_instruction(&b.build(r), &scene).unwrap(),
            "observe the object at the bottom right in frame 1, category of object 1?"
        );
    }

    #[test]
    fn captions() {
        let scene = Scene::new(vec![
            Frame { index: 0, objects: vec![obj(Category::Chairs, Location::TopLeft, Some(1))] },
            Frame {
                index: 1,
                objects: vec![obj(Category::Planes, Location::TopLeft, None), obj(Category::Cars, Location::BottomRight, None)],
            },
            Frame::blank(2),
        ])
        .unwrap();
        let caps = synth_ground_truth_captions(&scene);
        assert_eq!(
            caps,
            [
                "Frame 1: A chairs located at the top left",
                "Frame 2: A planes located at the top left; A cars located at the bottom right",
                "Frame 3: delay frame"
            ]
        );
        assert_eq!(caption_body(&caps[2]), "delay frame");
        assert_eq!(caption_body("no label"), "no label");

        let swapped = Scene::new(vec![Frame {
            index: 0,
            objects: vec![obj(Category::Cars, Location::BottomRight, None), obj(Category::Planes, Location::TopLeft, None)],
        }])
        .unwrap();
        assert_eq!(synth_ground_truth_captions(&swapped)[0], "Frame 1: A planes located at the top left; A cars located at the bottom right");
    }

    #[test]
    fn answer_lists() {
        use crate::task::AnswerType;
        assert_eq!(format_answer_list(&AnswerSet::of_type(AnswerType::Location)), "(bottom right, bottom left, top left, top right)");
        assert_eq!(format_answer_list(&AnswerSet::of_type(AnswerType::Bool)), "(true, false)");
        assert_eq!(AnswerSet::full().iter().count(), 14);
        assert_eq!(answer_to_string(Answer::Loc(Location::TopRight)), "top right");
        assert_eq!(answer_to_string(Answer::Cat(Category::Chairs)), "chairs");
        assert_eq!(answer_to_string(Answer::Bool(true)), "true");
    }
}
