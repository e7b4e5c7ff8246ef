use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    other_category, other_location, random_category, random_location, random_stimulus, random_view, rng_for,
    AutoTaskParams, GenError, RETRY_BUDGET,
};
use crate::stimuli::AssetPack;
use crate::task::{
    eval_graph, validate_graph, Answer, AttributeKind, Cue, Frame, Location, Node, NodeId, Scene, SceneObject,
    TaskError, TaskGraph, MAX_OBJECTS_PER_FRAME, OBJECTS_PER_CATEGORY,
};

const SCENE_STREAM: u64 = 0x5343_454e;

/// Enumerating leaf outcomes is exponential; past this many comparisons the
/// answer is left unbalanced.
const MAX_BALANCED_LEAVES: usize = 12;

/// Outcome class used for balancing: each boolean value on its own, all
/// non-boolean answers pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Bool(bool),
    Value,
}

impl Class {
    fn of(a: Answer) -> Self {
        match a {
            Answer::Bool(b) => Class::Bool(b),
            _ => Class::Value,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Compare {
    node: NodeId,
    a: NodeId,
    b: NodeId,
}

/// Fills the frames a graph observes with objects, adds distractors to
/// unobserved frames, and returns a scene on which the graph evaluates.
///
/// When every select feeds exactly one operator the generator first draws a
/// target outcome (true, false, or a reported value) uniformly among those
/// the graph can produce, then builds objects that realise it.
pub fn sample_scene(
    graph: &TaskGraph,
    params: &AutoTaskParams,
    seed: u64,
    pack: &AssetPack,
) -> Result<Scene, GenError> {
    let report = validate_graph(graph);
    if !report.is_ok() {
        return Err(TaskError::InvalidGraph(report.violations).into());
    }
    let mut rng = rng_for(seed, SCENE_STREAM);
    let selects: Vec<(NodeId, usize, Cue, u32)> = graph
        .reachable_selects()
        .into_iter()
        .map(|id| match graph.node(id) {
            Some(Node::Select { frame, cue, ordinal }) => (id, *frame, *cue, *ordinal),
            _ => unreachable!("reachable_selects returns selects"),
        })
        .collect();
    let max_ref = selects.iter().map(|s| s.1).max().unwrap_or(0);
    let len = params.n_frames.min.max(max_ref + 1);
    if len > params.n_frames.max {
        return Err(GenError::InvalidParams(format!(
            "graph reads frame {max_ref} but scenes are limited to {} frames",
            params.n_frames.max
        )));
    }

    let compares = independent_compares(graph, &selects);
    let plan = compares.as_ref().filter(|c| c.len() <= MAX_BALANCED_LEAVES).map(|c| outcome_classes(graph, c));
    let target = plan.as_ref().map(|classes| {
        let keys: Vec<Class> = classes.keys().copied().collect();
        *keys.choose(&mut rng).expect("at least one outcome")
    });

    for _ in 0..RETRY_BUDGET {
        let outcomes: HashMap<NodeId, bool> = match (&plan, target, &compares) {
            (Some(classes), Some(t), Some(cmps)) => {
                let mask = *classes[&t].choose(&mut rng).unwrap();
                cmps.iter().enumerate().map(|(i, c)| (c.node, mask >> i & 1 == 1)).collect()
            }
            _ => HashMap::new(),
        };
        let Some(frames) = place_objects(&mut rng, pack, graph, &selects, &outcomes, len) else { continue };
        let n_distractors = params.n_distractors.sample(&mut rng);
        let Some(frames) = add_distractors(&mut rng, pack, frames, n_distractors) else {
            return Err(GenError::GenerationFailure("no unobserved frame has room for distractors".into()));
        };
        let Ok(scene) = Scene::new(frames) else { continue };
        match eval_graph(graph, &scene) {
            Ok(a) if target.is_none_or(|t| Class::of(a) == t) => return Ok(scene),
            Ok(_) | Err(TaskError::UnresolvedSelect { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(GenError::GenerationFailure(format!("no consistent scene after {RETRY_BUDGET} attempts")))
}

/// The comparison leaves, if every select has exactly one consumer, sits in
/// its own frame and is uncued; `None` otherwise.
fn independent_compares(graph: &TaskGraph, selects: &[(NodeId, usize, Cue, u32)]) -> Option<Vec<Compare>> {
    let mut uses: HashMap<NodeId, usize> = HashMap::new();
    let mut compares = Vec::new();
    let mut seen = vec![false; graph.nodes().len()];
    let mut stack = vec![graph.root()];
    while let Some(id) = stack.pop() {
        if std::mem::replace(&mut seen[id.0], true) {
            continue;
        }
        let node = graph.node(id)?;
        if let Node::IsSame { a, b, .. } | Node::NotSame { a, b, .. } = *node {
            compares.push(Compare { node: id, a, b });
        }
        for c in node.children() {
            if graph.node(c).is_some_and(Node::is_select) {
                *uses.entry(c).or_default() += 1;
            }
            stack.push(c);
        }
    }
    let mut frames: Vec<usize> = selects.iter().map(|s| s.1).collect();
    frames.sort_unstable();
    frames.dedup();
    let ok = frames.len() == selects.len()
        && selects.iter().all(|s| s.2 == Cue::None && uses.get(&s.0) == Some(&1))
        && compares.iter().all(|c| c.a != c.b);
    compares.sort_by_key(|c| c.node);
    ok.then_some(compares)
}

/// Groups every assignment of comparison outcomes (as a bitmask) by the root
/// outcome it implies.
fn outcome_classes(graph: &TaskGraph, compares: &[Compare]) -> BTreeMap<Class, Vec<u32>> {
    let mut classes: BTreeMap<Class, Vec<u32>> = BTreeMap::new();
    for mask in 0..(1u32 << compares.len()) {
        let lookup: HashMap<NodeId, bool> =
            compares.iter().enumerate().map(|(i, c)| (c.node, mask >> i & 1 == 1)).collect();
        if let Some(class) = symbolic(graph, graph.root(), &lookup) {
            classes.entry(class).or_default().push(mask);
        }
    }
    classes
}

fn symbolic(graph: &TaskGraph, id: NodeId, leaves: &HashMap<NodeId, bool>) -> Option<Class> {
    match *graph.node(id)? {
        Node::IsSame { .. } | Node::NotSame { .. } => leaves.get(&id).map(|&b| Class::Bool(b)),
        Node::GetAttr { .. } => Some(Class::Value),
        Node::Select { .. } => None,
        Node::And { a, b } | Node::Or { a, b } => {
            let (Class::Bool(x), Class::Bool(y)) = (symbolic(graph, a, leaves)?, symbolic(graph, b, leaves)?) else {
                return None;
            };
            Some(Class::Bool(if matches!(graph.node(id)?, Node::And { .. }) { x && y } else { x || y }))
        }
        Node::Switch { cond, then, otherwise } => match symbolic(graph, cond, leaves)? {
            Class::Bool(true) => symbolic(graph, then, leaves),
            Class::Bool(false) => symbolic(graph, otherwise, leaves),
            Class::Value => None,
        },
    }
}

fn fresh_object(rng: &mut impl Rng, pack: &AssetPack, cue: Cue) -> SceneObject {
    let category = match cue {
        Cue::Category(c) => c,
        _ => random_category(rng),
    };
    let location = match cue {
        Cue::Location(l) => l,
        _ => random_location(rng),
    };
    SceneObject { stimulus: random_stimulus(rng, pack, category), location, ordinal: None }
}

/// An object that agrees (or not) with `base` on `kind`; other properties
/// are drawn freely.
fn related_object(rng: &mut impl Rng, pack: &AssetPack, base: &SceneObject, kind: AttributeKind, equal: bool) -> SceneObject {
    let mut o = fresh_object(rng, pack, Cue::None);
    match kind {
        AttributeKind::Location => o.location = if equal { base.location } else { other_location(rng, base.location) },
        AttributeKind::Category => {
            let c = if equal { base.stimulus.category } else { other_category(rng, base.stimulus.category) };
            o.stimulus = random_stimulus(rng, pack, c);
        }
        AttributeKind::Identity => {
            let (c, i) = if equal {
                base.stimulus.identity()
            } else {
                loop {
                    let c = random_category(rng);
                    let i = rng.gen_range(0..OBJECTS_PER_CATEGORY);
                    if (c, i) != base.stimulus.identity() {
                        break (c, i);
                    }
                }
            };
            o.stimulus = random_view(rng, pack, c, i);
        }
    }
    o
}

fn place_objects(
    rng: &mut impl Rng,
    pack: &AssetPack,
    graph: &TaskGraph,
    selects: &[(NodeId, usize, Cue, u32)],
    outcomes: &HashMap<NodeId, bool>,
    len: usize,
) -> Option<Vec<Frame>> {
    let info: HashMap<NodeId, (usize, Cue, u32)> = selects.iter().map(|s| (s.0, (s.1, s.2, s.3))).collect();
    let mut objects: BTreeMap<(usize, u32), SceneObject> = BTreeMap::new();

    let ensure = |rng: &mut _, objects: &mut BTreeMap<(usize, u32), SceneObject>, id: NodeId, seed_obj: Option<SceneObject>| {
        let (frame, cue, ordinal) = info[&id];
        objects.entry((frame, ordinal)).or_insert_with(|| {
            let mut o = seed_obj.unwrap_or_else(|| fresh_object(rng, pack, cue));
            match cue {
                Cue::Location(l) => o.location = l,
                Cue::Category(c) if o.stimulus.category != c => o.stimulus = random_stimulus(rng, pack, c),
                _ => {}
            }
            o.ordinal = Some(ordinal);
            o
        });
        (frame, ordinal)
    };

    let mut ids: Vec<&NodeId> = outcomes.keys().collect();
    ids.sort();
    for id in ids {
        let (kind, negate, a, b) = match *graph.node(*id)? {
            Node::IsSame { kind, a, b } => (kind, false, a, b),
            Node::NotSame { kind, a, b } => (kind, true, a, b),
            _ => continue,
        };
        let equal = outcomes[id] != negate;
        let ka = ensure(rng, &mut objects, a, None);
        let base = objects[&ka].clone();
        let related = related_object(rng, pack, &base, kind, equal);
        ensure(rng, &mut objects, b, Some(related));
    }
    for s in selects {
        ensure(rng, &mut objects, s.0, None);
    }

    let mut frames: Vec<Frame> = (0..len).map(Frame::blank).collect();
    for ((frame, _), obj) in objects {
        let f = &mut frames[frame];
        if f.object_at(obj.location).is_some() {
            return None;
        }
        f.objects.push(obj);
    }
    Some(frames)
}

fn add_distractors(rng: &mut impl Rng, pack: &AssetPack, mut frames: Vec<Frame>, n: usize) -> Option<Vec<Frame>> {
    let free: Vec<usize> = frames.iter().filter(|f| f.is_blank()).map(|f| f.index).collect();
    for _ in 0..n {
        let open: Vec<usize> = free.iter().copied().filter(|&i| frames[i].objects.len() < MAX_OBJECTS_PER_FRAME).collect();
        let &i = open.choose(rng)?;
        let empty: Vec<Location> = Location::ALL.into_iter().filter(|&l| frames[i].object_at(l).is_none()).collect();
        let &location = empty.choose(rng)?;
        let c = random_category(rng);
        let stimulus = random_stimulus(rng, pack, c);
        frames[i].objects.push(SceneObject { stimulus, location, ordinal: None });
    }
    Some(frames)
}
