//! Stimulus vocabulary and per-trial scene timeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the eight object categories. The string form is the plural noun.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Benches,
    Boats,
    Cars,
    Chairs,
    Couches,
    Lighting,
    Planes,
    Tables,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Benches,
        Category::Boats,
        Category::Cars,
        Category::Chairs,
        Category::Couches,
        Category::Lighting,
        Category::Planes,
        Category::Tables,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Benches => "benches",
            Category::Boats => "boats",
            Category::Cars => "cars",
            Category::Chairs => "chairs",
            Category::Couches => "couches",
            Category::Lighting => "lighting",
            Category::Planes => "planes",
            Category::Tables => "tables",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ParseVocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseVocabError(s.to_string()))
    }
}

/// Quadrant of the 2x2 canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    #[serde(rename = "top left")]
    TopLeft,
    #[serde(rename = "top right")]
    TopRight,
    #[serde(rename = "bottom left")]
    BottomLeft,
    #[serde(rename = "bottom right")]
    BottomRight,
}

impl Location {
    pub const ALL: [Location; 4] = [
        Location::TopLeft,
        Location::TopRight,
        Location::BottomLeft,
        Location::BottomRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Location::TopLeft => "top left",
            Location::TopRight => "top right",
            Location::BottomLeft => "bottom left",
            Location::BottomRight => "bottom right",
        }
    }

    /// (column, row) of the quadrant, each 0 or 1.
    pub fn grid_cell(self) -> (u32, u32) {
        match self {
            Location::TopLeft => (0, 0),
            Location::TopRight => (1, 0),
            Location::BottomLeft => (0, 1),
            Location::BottomRight => (1, 1),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Location {
    type Err = ParseVocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Location::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| ParseVocabError(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not in the answer vocabulary")]
pub struct ParseVocabError(pub String);

/// Number of distinct objects per category.
pub const OBJECTS_PER_CATEGORY: u8 = 8;

/// Maximum objects in a single frame (one per quadrant).
pub const MAX_OBJECTS_PER_FRAME: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StimulusId {
    pub category: Category,
    pub object_index: u8,
    pub view_index: u16,
}

impl StimulusId {
    /// Identity ignores the view: the same object seen from another angle is
    /// still the same object.
    pub fn identity(&self) -> (Category, u8) {
        (self.category, self.object_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneObject {
    pub stimulus: StimulusId,
    pub location: Location,
    /// The "object k" number used in instructions; `None` for distractors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub objects: Vec<SceneObject>,
}

impl Frame {
    pub fn blank(index: usize) -> Self {
        Frame { index, objects: Vec::new() }
    }

    pub fn is_blank(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object_at(&self, location: Location) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.location == location)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("frame at position {position} has index {index}")]
    NonContiguousIndex { position: usize, index: usize },
    #[error("frame {frame} holds {count} objects (at most 4 allowed)")]
    TooManyObjects { frame: usize, count: usize },
    #[error("frame {frame} has two objects at the {location}")]
    SharedLocation { frame: usize, location: Location },
    #[error("object ordinal {ordinal} appears more than once")]
    DuplicateOrdinal { ordinal: u32 },
    #[error("object ordinal must be at least 1")]
    ZeroOrdinal,
    #[error("object index {0} out of range")]
    ObjectIndexOutOfRange(u8),
    #[error("scene contains no objects")]
    NoObjects,
}

/// The stimulus timeline of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scene {
    pub frames: Vec<Frame>,
}

impl Scene {
    /// Builds a scene and checks its invariants.
    pub fn new(frames: Vec<Frame>) -> Result<Self, SceneError> {
        let scene = Scene { frames };
        scene.validate()?;
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, index: usize) -> Option<&Frame> {
        self.frames.get(index)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ordinals = std::collections::BTreeSet::new();
        let mut any_object = false;
        for (position, frame) in self.frames.iter().enumerate() {
            if frame.index != position {
                return Err(SceneError::NonContiguousIndex { position, index: frame.index });
            }
            if frame.objects.len() > MAX_OBJECTS_PER_FRAME {
                return Err(SceneError::TooManyObjects { frame: position, count: frame.objects.len() });
            }
            let mut seen = [false; 4];
            for obj in &frame.objects {
                any_object = true;
                let slot = &mut seen[obj.location as usize];
                if *slot {
                    return Err(SceneError::SharedLocation { frame: position, location: obj.location });
                }
                *slot = true;
                if obj.stimulus.object_index >= OBJECTS_PER_CATEGORY {
                    return Err(SceneError::ObjectIndexOutOfRange(obj.stimulus.object_index));
                }
                if let Some(k) = obj.ordinal {
                    if k == 0 {
                        return Err(SceneError::ZeroOrdinal);
                    }
                    if !ordinals.insert(k) {
                        return Err(SceneError::DuplicateOrdinal { ordinal: k });
                    }
                }
            }
        }
        if !any_object {
            return Err(SceneError::NoObjects);
        }
        Ok(())
    }
}

/// Which property of an object an operator reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Location,
    Category,
    /// Category plus object index, ignoring the view.
    Identity,
}

impl AttributeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Location => "location",
            AttributeKind::Category => "category",
            AttributeKind::Identity => "identity",
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a Select picks its object out of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "by", content = "value", rename_all = "snake_case")]
pub enum Cue {
    /// The frame's object carrying the select's ordinal.
    None,
    Location(Location),
    Category(Category),
}

impl Cue {
    pub fn matches(&self, obj: &SceneObject, ordinal: u32) -> bool {
        match *self {
            Cue::None => obj.ordinal == Some(ordinal),
            Cue::Location(l) => obj.location == l,
            Cue::Category(c) => obj.stimulus.category == c,
        }
    }
}
