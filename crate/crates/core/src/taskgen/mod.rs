//! Instantiation of the named task kinds and random composite task generation.

mod autotask;
mod kinds;
mod pam;
mod scene;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stimuli::AssetPack;
use crate::task::{Category, Location, Scene, StimulusId, TaskError, TaskGraph, OBJECTS_PER_CATEGORY};

pub use autotask::{autotask, min_selects, AutoTaskParams, BoolOp, FeatureSelection, RootOp};
pub use kinds::{Complexity, Family, Feature, TaskKind, UnknownKind, Variant};
pub use pam::{instantiate_pam, PamConfig};
pub use scene::sample_scene;

/// Resample budget for constraint conflicts.
pub const RETRY_BUDGET: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("{0} cannot be generated by this routine")]
    KindMismatch(TaskKind),
    #[error("generation failed: {0}")]
    GenerationFailure(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        CountRange { min, max }
    }

    pub const fn exactly(n: usize) -> Self {
        CountRange { min: n, max: n }
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.min..=self.max).contains(&n)
    }

    pub fn is_valid(&self) -> bool {
        self.min <= self.max
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

/// Generates the (graph, scene) pair for one trial of a named kind.
pub fn instantiate(kind: TaskKind, seed: u64, pack: &AssetPack) -> Result<(TaskGraph, Scene), GenError> {
    if kind.is_composite() {
        instantiate_cvr(kind, seed, pack)
    } else {
        instantiate_pam(kind, seed, pack, &PamConfig::default())
    }
}

/// Composite kinds: AutoTask graph plus a sampled scene, using the kind's
/// preset with its category/location feature selection.
pub fn instantiate_cvr(kind: TaskKind, seed: u64, pack: &AssetPack) -> Result<(TaskGraph, Scene), GenError> {
    let params = AutoTaskParams::for_kind(kind).ok_or(GenError::KindMismatch(kind))?;
    let graph = autotask(&params, seed)?;
    let scene = sample_scene(&graph, &params, seed, pack)?;
    Ok((graph, scene))
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn random_stimulus(rng: &mut impl Rng, pack: &AssetPack, category: Category) -> StimulusId {
    let object_index = rng.gen_range(0..OBJECTS_PER_CATEGORY);
    random_view(rng, pack, category, object_index)
}

pub(crate) fn random_view(rng: &mut impl Rng, pack: &AssetPack, category: Category, object_index: u8) -> StimulusId {
    let views = pack.views(category, object_index).max(1);
    StimulusId { category, object_index, view_index: rng.gen_range(0..views) as u16 }
}

pub(crate) fn random_category(rng: &mut impl Rng) -> Category {
    Category::ALL[rng.gen_range(0..Category::ALL.len())]
}

pub(crate) fn random_location(rng: &mut impl Rng) -> Location {
    Location::ALL[rng.gen_range(0..Location::ALL.len())]
}

pub(crate) fn other_category(rng: &mut impl Rng, not: Category) -> Category {
    loop {
        let c = random_category(rng);
        if c != not {
            return c;
        }
    }
}

pub(crate) fn other_location(rng: &mut impl Rng, not: Location) -> Location {
    loop {
        let l = random_location(rng);
        if l != not {
            return l;
        }
    }
}
