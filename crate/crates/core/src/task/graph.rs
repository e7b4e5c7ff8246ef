//! Operator graphs describing a task, plus structural validation and typing.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::types::{AttributeKind, Cue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Node {
    /// Binds one object in `frame` (zero-based).
    Select { frame: usize, cue: Cue, ordinal: u32 },
    GetAttr { kind: AttributeKind, select: NodeId },
    IsSame { kind: AttributeKind, a: NodeId, b: NodeId },
    NotSame { kind: AttributeKind, a: NodeId, b: NodeId },
    And { a: NodeId, b: NodeId },
    Or { a: NodeId, b: NodeId },
    Switch { cond: NodeId, then: NodeId, otherwise: NodeId },
}

impl Node {
    pub fn children(&self) -> Vec<NodeId> {
        match *self {
            Node::Select { .. } => vec![],
            Node::GetAttr { select, .. } => vec![select],
            Node::IsSame { a, b, .. } | Node::NotSame { a, b, .. } => vec![a, b],
            Node::And { a, b } | Node::Or { a, b } => vec![a, b],
            Node::Switch { cond, then, otherwise } => vec![cond, then, otherwise],
        }
    }

    pub fn is_select(&self) -> bool {
        matches!(self, Node::Select { .. })
    }
}

/// A directed acyclic operator graph whose evaluation over a scene yields the
/// trial's answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskGraph {
    nodes: Vec<Node>,
    root: NodeId,
}

impl TaskGraph {
    /// Wraps raw nodes without checking them; see [`validate_graph`].
    pub fn from_parts(nodes: Vec<Node>, root: NodeId) -> Self {
        TaskGraph { nodes, root }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    /// Select nodes reachable from the root (through both Switch branches),
    /// each listed once, in ascending node order.
    pub fn reachable_selects(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        let mut out = Vec::new();
        while let Some(id) = stack.pop() {
            let Some(node) = self.nodes.get(id.0) else { continue };
            if std::mem::replace(&mut seen[id.0], true) {
                continue;
            }
            if node.is_select() {
                out.push(id);
            }
            stack.extend(node.children());
        }
        out.sort();
        out
    }

    pub fn count_nodes(&self, pred: impl Fn(&Node) -> bool) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        let mut n = 0;
        while let Some(id) = stack.pop() {
            let Some(node) = self.nodes.get(id.0) else { continue };
            if std::mem::replace(&mut seen[id.0], true) {
                continue;
            }
            if pred(node) {
                n += 1;
            }
            stack.extend(node.children());
        }
        n
    }
}

/// Incremental graph construction.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn select(&mut self, frame: usize, ordinal: u32) -> NodeId {
        self.push(Node::Select { frame, cue: Cue::None, ordinal })
    }

    pub fn select_cued(&mut self, frame: usize, cue: Cue, ordinal: u32) -> NodeId {
        self.push(Node::Select { frame, cue, ordinal })
    }

    pub fn get_attr(&mut self, kind: AttributeKind, select: NodeId) -> NodeId {
        self.push(Node::GetAttr { kind, select })
    }

    pub fn is_same(&mut self, kind: AttributeKind, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::IsSame { kind, a, b })
    }

    pub fn not_same(&mut self, kind: AttributeKind, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::NotSame { kind, a, b })
    }

    pub fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::And { a, b })
    }

    pub fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Or { a, b })
    }

    pub fn switch(&mut self, cond: NodeId, then: NodeId, otherwise: NodeId) -> NodeId {
        self.push(Node::Switch { cond, then, otherwise })
    }

    pub fn build(self, root: NodeId) -> TaskGraph {
        TaskGraph { nodes: self.nodes, root }
    }
}

/// Result type of a single graph value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    Bool,
    Location,
    Category,
    Identity,
    /// An object binding produced by Select; never an answer.
    Object,
}

/// Set of value types; a Switch node may carry several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TypeSet(u8);

impl TypeSet {
    pub fn single(t: ValueType) -> Self {
        TypeSet(1 << t as u8)
    }

    pub fn union(self, other: TypeSet) -> Self {
        TypeSet(self.0 | other.0)
    }

    pub fn contains(self, t: ValueType) -> bool {
        self.0 & (1 << t as u8) != 0
    }

    pub fn is_exactly(self, t: ValueType) -> bool {
        self == TypeSet::single(t)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ValueType> {
        [
            ValueType::Bool,
            ValueType::Location,
            ValueType::Category,
            ValueType::Identity,
            ValueType::Object,
        ]
        .into_iter()
        .filter(move |t| self.contains(*t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    EmptyGraph,
    DanglingReference(NodeId),
    Cycle,
    /// GetAttr / IsSame / NotSame operands must be Select nodes.
    OperandNotSelect(NodeId),
    NonBooleanOperand(NodeId),
    NonBooleanCondition(NodeId),
    SelectBranch(NodeId),
    RootNotAnswer,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::EmptyGraph => write!(f, "graph has no nodes"),
            ViolationKind::DanglingReference(id) => write!(f, "dangling reference to {id}"),
            ViolationKind::Cycle => write!(f, "cycle"),
            ViolationKind::OperandNotSelect(id) => write!(f, "operand {id} is not a Select"),
            ViolationKind::NonBooleanOperand(id) => write!(f, "non-boolean operand {id}"),
            ViolationKind::NonBooleanCondition(_) => write!(f, "non-boolean condition"),
            ViolationKind::SelectBranch(id) => write!(f, "branch {id} is a Select"),
            ViolationKind::RootNotAnswer => write!(f, "root must produce an Answer"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(id) => write!(f, "{id}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, pred: impl Fn(&ViolationKind) -> bool) -> bool {
        self.violations.iter().any(|v| pred(&v.kind))
    }
}

/// Checks every structural and typing invariant of a graph. Violations are
/// returned as data; the function itself never fails.
pub fn validate_graph(graph: &TaskGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let nodes = graph.nodes();
    if nodes.is_empty() {
        violations.push(Violation { node: None, kind: ViolationKind::EmptyGraph });
        return ValidationReport { violations };
    }
    if graph.root().0 >= nodes.len() {
        violations.push(Violation {
            node: None,
            kind: ViolationKind::DanglingReference(graph.root()),
        });
        return ValidationReport { violations };
    }
    for (i, node) in nodes.iter().enumerate() {
        for child in node.children() {
            if child.0 >= nodes.len() {
                violations.push(Violation {
                    node: Some(NodeId(i)),
                    kind: ViolationKind::DanglingReference(child),
                });
            }
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }
    if let Some(id) = find_cycle(nodes) {
        violations.push(Violation { node: Some(id), kind: ViolationKind::Cycle });
        return ValidationReport { violations };
    }

    let types = infer_types(graph);
    let is_bool = |id: NodeId| types[id.0].is_exactly(ValueType::Bool);
    for (i, node) in nodes.iter().enumerate() {
        let me = Some(NodeId(i));
        match *node {
            Node::Select { .. } => {}
            Node::GetAttr { select, .. } => {
                if !nodes[select.0].is_select() {
                    violations.push(Violation { node: me, kind: ViolationKind::OperandNotSelect(select) });
                }
            }
            Node::IsSame { a, b, .. } | Node::NotSame { a, b, .. } => {
                for x in [a, b] {
                    if !nodes[x.0].is_select() {
                        violations.push(Violation { node: me, kind: ViolationKind::OperandNotSelect(x) });
                    }
                }
            }
            Node::And { a, b } | Node::Or { a, b } => {
                for x in [a, b] {
                    if !is_bool(x) {
                        violations.push(Violation { node: me, kind: ViolationKind::NonBooleanOperand(x) });
                    }
                }
            }
            Node::Switch { cond, then, otherwise } => {
                if !is_bool(cond) {
                    violations.push(Violation { node: me, kind: ViolationKind::NonBooleanCondition(cond) });
                }
                for x in [then, otherwise] {
                    if nodes[x.0].is_select() {
                        violations.push(Violation { node: me, kind: ViolationKind::SelectBranch(x) });
                    }
                }
            }
        }
    }
    if nodes[graph.root().0].is_select() {
        violations.push(Violation { node: Some(graph.root()), kind: ViolationKind::RootNotAnswer });
    }
    ValidationReport { violations }
}

fn find_cycle(nodes: &[Node]) -> Option<NodeId> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; nodes.len()];
    for start in 0..nodes.len() {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        state[start] = 1;
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            let children = nodes[id].children();
            if *next < children.len() {
                let c = children[*next].0;
                *next += 1;
                match state[c] {
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Some(NodeId(c)),
                    _ => {}
                }
            } else {
                state[id] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Result types for every node. Assumes references are in range and the
/// graph is acyclic.
pub(crate) fn infer_types(graph: &TaskGraph) -> Vec<TypeSet> {
    let nodes = graph.nodes();
    let mut types: Vec<Option<TypeSet>> = vec![None; nodes.len()];
    for start in 0..nodes.len() {
        let mut stack = vec![start];
        while let Some(&id) = stack.last() {
            if types[id].is_some() {
                stack.pop();
                continue;
            }
            let pending: Vec<usize> = nodes[id]
                .children()
                .into_iter()
                .map(|c| c.0)
                .filter(|c| types[*c].is_none())
                .collect();
            if !pending.is_empty() {
                stack.extend(pending);
                continue;
            }
            let t = match nodes[id] {
                Node::Select { .. } => TypeSet::single(ValueType::Object),
                Node::GetAttr { kind, .. } => TypeSet::single(attr_type(kind)),
                Node::IsSame { .. } | Node::NotSame { .. } | Node::And { .. } | Node::Or { .. } => {
                    TypeSet::single(ValueType::Bool)
                }
                Node::Switch { then, otherwise, .. } => {
                    types[then.0].unwrap_or_default().union(types[otherwise.0].unwrap_or_default())
                }
            };
            types[id] = Some(t);
            stack.pop();
        }
    }
    types.into_iter().map(|t| t.unwrap_or_default()).collect()
}

pub(crate) fn attr_type(kind: AttributeKind) -> ValueType {
    match kind {
        AttributeKind::Location => ValueType::Location,
        AttributeKind::Category => ValueType::Category,
        AttributeKind::Identity => ValueType::Identity,
    }
}

/// Result types the root can produce, or `None` if the graph is invalid.
pub fn root_types(graph: &TaskGraph) -> Option<TypeSet> {
    if !validate_graph(graph).is_ok() {
        return None;
    }
    Some(infer_types(graph)[graph.root().0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_graph_is_valid() {
        let mut b = GraphBuilder::new();
        let s = b.select(0, 1);
        let root = b.get_attr(AttributeKind::Location, s);
        let g = b.build(root);
        assert!(validate_graph(&g).is_ok());
        assert_eq!(root_types(&g), Some(TypeSet::single(ValueType::Location)));
    }

    #[test]
    fn non_boolean_switch_condition_is_flagged() {
        let mut b = GraphBuilder::new();
        let s0 = b.select(0, 1);
        let s1 = b.select(1, 2);
        let cond = b.get_attr(AttributeKind::Location, s0);
        let then = b.get_attr(AttributeKind::Category, s1);
        let other = b.get_attr(AttributeKind::Category, s0);
        let root = b.switch(cond, then, other);
        let report = validate_graph(&b.build(root));
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| v.kind.to_string() == "non-boolean condition"));
    }

    #[test]
    fn select_root_is_flagged() {
        let mut b = GraphBuilder::new();
        let s = b.select(0, 1);
        let report = validate_graph(&b.build(s));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind.to_string(), "root must produce an Answer");
        assert_eq!(report.violations[0].node, Some(s));
    }

    #[test]
    fn cycles_and_dangling_references_are_flagged() {
        let cyc = TaskGraph::from_parts(
            vec![
                Node::And { a: NodeId(1), b: NodeId(1) },
                Node::Or { a: NodeId(0), b: NodeId(0) },
            ],
            NodeId(0),
        );
        assert!(validate_graph(&cyc).has(|k| *k == ViolationKind::Cycle));

        let dangling = TaskGraph::from_parts(
            vec![Node::GetAttr { kind: AttributeKind::Category, select: NodeId(7) }],
            NodeId(0),
        );
        assert!(validate_graph(&dangling).has(|k| matches!(k, ViolationKind::DanglingReference(_))));
        assert!(validate_graph(&TaskGraph::from_parts(vec![], NodeId(0)))
            .has(|k| *k == ViolationKind::EmptyGraph));
    }

    #[test]
    fn operand_rules() {
        let mut b = GraphBuilder::new();
        let s0 = b.select(0, 1);
        let s1 = b.select(1, 2);
        let loc = b.get_attr(AttributeKind::Location, s0);
        let same = b.is_same(AttributeKind::Category, loc, s1);
        let and = b.and(same, loc);
        let report = validate_graph(&b.build(and));
        assert!(report.has(|k| *k == ViolationKind::OperandNotSelect(loc)));
        assert!(report.has(|k| *k == ViolationKind::NonBooleanOperand(loc)));
    }

    #[test]
    fn mixed_switch_has_union_type() {
        let mut b = GraphBuilder::new();
        let s0 = b.select(0, 1);
        let s1 = b.select(1, 2);
        let cond = b.is_same(AttributeKind::Category, s0, s1);
        let then = b.not_same(AttributeKind::Location, s0, s1);
        let other = b.get_attr(AttributeKind::Location, s0);
        let root = b.switch(cond, then, other);
        let t = root_types(&b.build(root)).unwrap();
        assert!(t.contains(ValueType::Bool) && t.contains(ValueType::Location));
        assert!(!t.contains(ValueType::Category));
    }

    #[test]
    fn graph_serializes_with_op_tags() {
        let mut b = GraphBuilder::new();
        let s = b.select(2, 1);
        let root = b.get_attr(AttributeKind::Category, s);
        let g = b.build(root);
        let json = serde_json::to_value(&g).unwrap();
        assert_eq!(json["nodes"][0]["op"], "select");
        assert_eq!(json["nodes"][0]["cue"]["by"], "none");
        assert_eq!(json["nodes"][1]["op"], "get_attr");
        assert_eq!(json["root"], 1);
        let back: TaskGraph = serde_json::from_value(json).unwrap();
        assert_eq!(back, g);
    }
}
