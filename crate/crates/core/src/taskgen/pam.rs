use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    other_category, other_location, random_category, random_location, random_stimulus, rng_for, CountRange,
    Family, GenError, TaskKind, Variant,
};
use crate::stimuli::AssetPack;
use crate::task::{
    AttributeKind, Category, Cue, Frame, GraphBuilder, Location, NodeId, Scene, SceneObject, TaskGraph,
};

const PAM_STREAM: u64 = 0x50414d;

/// Knobs for the perception/attention/memory kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PamConfig {
    /// Delay frames between encoding and probe in memory kinds.
    pub delays: CountRange,
    /// Objects per frame in attention kinds.
    pub attention_objects: CountRange,
    /// Objects per delay frame in distractor kinds.
    pub distractors: CountRange,
}

impl Default for PamConfig {
    fn default() -> Self {
        PamConfig {
            delays: CountRange::new(2, 4),
            attention_objects: CountRange::new(2, 4),
            distractors: CountRange::new(1, 2),
        }
    }
}

impl PamConfig {
    fn validate(&self) -> Result<(), GenError> {
        let ok = self.delays.is_valid()
            && self.attention_objects.is_valid()
            && self.attention_objects.min >= 1
            && self.attention_objects.max <= 4
            && self.distractors.is_valid()
            && self.distractors.min >= 1
            && self.distractors.max <= 4;
        if ok {
            Ok(())
        } else {
            Err(GenError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Builds one trial of a perception, attention or memory kind. Compare kinds
/// alternate the correct answer with the seed's parity.
pub fn instantiate_pam(
    kind: TaskKind,
    seed: u64,
    pack: &AssetPack,
    cfg: &PamConfig,
) -> Result<(TaskGraph, Scene), GenError> {
    if kind.is_composite() {
        return Err(GenError::KindMismatch(kind));
    }
    cfg.validate()?;
    let mut rng = rng_for(seed, PAM_STREAM);
    let same = seed.is_multiple_of(2);
    let compare = kind.variant() == Some(Variant::Compare);
    let attr = kind.feature().attribute();
    let mut b = GraphBuilder::new();

    let (frames, root) = match kind.family() {
        Family::Perception => {
            if compare {
                let (o1, o2) = object_pair(&mut rng, pack, attr, same);
                let frames = vec![single(0, o1, 1), single(1, o2, 2)];
                let (s1, s2) = (b.select(0, 1), b.select(1, 2));
                (frames, b.is_same(attr, s1, s2))
            } else {
                let o = free_object(&mut rng, pack);
                let s = b.select(0, 1);
                (vec![single(0, o, 1)], b.get_attr(attr, s))
            }
        }
        Family::FeatureAttention | Family::SpatialAttention => {
            // Feature attention: cue category, ask location. Spatial: the reverse.
            let by_category = kind.family() == Family::FeatureAttention;
            let n_frames = if compare { 2 } else { 1 };
            let mut frames = Vec::new();
            let mut sels: Vec<NodeId> = Vec::new();
            let mut first: Option<(Category, Location)> = None;
            for f in 0..n_frames {
                let n = cfg.attention_objects.sample(&mut rng);
                let (cat, loc) = match first {
                    None => (random_category(&mut rng), random_location(&mut rng)),
                    Some((c0, l0)) => {
                        if by_category {
                            let l = if same { l0 } else { other_location(&mut rng, l0) };
                            (random_category(&mut rng), l)
                        } else {
                            let c = if same { c0 } else { other_category(&mut rng, c0) };
                            (c, random_location(&mut rng))
                        }
                    }
                };
                first.get_or_insert((cat, loc));
                let ordinal = f as u32 + 1;
                frames.push(attention_frame(&mut rng, pack, f, n, cat, loc, ordinal, by_category));
                let cue = if by_category { Cue::Category(cat) } else { Cue::Location(loc) };
                sels.push(b.select_cued(f, cue, ordinal));
            }
            let asked = if by_category { AttributeKind::Location } else { AttributeKind::Category };
            let root = if compare { b.is_same(asked, sels[0], sels[1]) } else { b.get_attr(asked, sels[0]) };
            (frames, root)
        }
        Family::Memory | Family::MemoryDistractor => {
            let distract = kind.family() == Family::MemoryDistractor;
            let d = cfg.delays.sample(&mut rng);
            let (o1, o2) = if compare {
                object_pair(&mut rng, pack, attr, same)
            } else {
                (free_object(&mut rng, pack), free_object(&mut rng, pack))
            };
            let mut frames = vec![single(0, o1, 1)];
            for i in 1..=d {
                frames.push(if distract { distractor_frame(&mut rng, pack, i, cfg.distractors) } else { Frame::blank(i) });
            }
            let s1 = b.select(0, 1);
            let root = if compare {
                frames.push(single(d + 1, o2, 2));
                let s2 = b.select(d + 1, 2);
                b.is_same(attr, s1, s2)
            } else {
                b.get_attr(attr, s1)
            };
            (frames, root)
        }
        Family::Composite(_) => unreachable!(),
    };

    let scene = Scene::new(frames).map_err(|e| GenError::GenerationFailure(e.to_string()))?;
    Ok((b.build(root), scene))
}

type Placed = (crate::task::StimulusId, Location);

fn free_object(rng: &mut impl Rng, pack: &AssetPack) -> Placed {
    let c = random_category(rng);
    (random_stimulus(rng, pack, c), random_location(rng))
}

/// Two objects agreeing or disagreeing on `attr`; other properties are free.
fn object_pair(rng: &mut impl Rng, pack: &AssetPack, attr: AttributeKind, same: bool) -> (Placed, Placed) {
    let a = free_object(rng, pack);
    let b = match attr {
        AttributeKind::Location => {
            let loc = if same { a.1 } else { other_location(rng, a.1) };
            let c = random_category(rng);
            (random_stimulus(rng, pack, c), loc)
        }
        AttributeKind::Category => {
            let c = if same { a.0.category } else { other_category(rng, a.0.category) };
            (random_stimulus(rng, pack, c), random_location(rng))
        }
        AttributeKind::Identity => unreachable!("named kinds compare category or location"),
    };
    (a, b)
}

fn single(index: usize, (stimulus, location): Placed, ordinal: u32) -> Frame {
    Frame { index, objects: vec![SceneObject { stimulus, location, ordinal: Some(ordinal) }] }
}

/// `n` objects in distinct quadrants, one of them the target. Under a
/// category cue no other object may share the target's category.
#[allow(clippy::too_many_arguments)]
fn attention_frame(
    rng: &mut impl Rng,
    pack: &AssetPack,
    index: usize,
    n: usize,
    cat: Category,
    loc: Location,
    ordinal: u32,
    by_category: bool,
) -> Frame {
    let mut others: Vec<Location> = Location::ALL.into_iter().filter(|&l| l != loc).collect();
    others.shuffle(rng);
    let mut objects = vec![SceneObject { stimulus: random_stimulus(rng, pack, cat), location: loc, ordinal: Some(ordinal) }];
    for &l in others.iter().take(n - 1) {
        let c = if by_category { other_category(rng, cat) } else { random_category(rng) };
        objects.push(SceneObject { stimulus: random_stimulus(rng, pack, c), location: l, ordinal: None });
    }
    objects.shuffle(rng);
    Frame { index, objects }
}

fn distractor_frame(rng: &mut impl Rng, pack: &AssetPack, index: usize, count: CountRange) -> Frame {
    let k = count.sample(rng);
    let mut locs = Location::ALL.to_vec();
    locs.shuffle(rng);
    let objects = locs
        .into_iter()
        .take(k)
        .map(|location| {
            let c = random_category(rng);
            SceneObject { stimulus: random_stimulus(rng, pack, c), location, ordinal: None }
        })
        .collect();
    Frame { index, objects }
}
