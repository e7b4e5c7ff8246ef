//! The 14-word answer vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::types::{Category, Location, ParseVocabError};

/// Location answers in canonical vocabulary order.
const LOCATION_ORDER: [Location; 4] = [
    Location::BottomRight,
    Location::BottomLeft,
    Location::TopLeft,
    Location::TopRight,
];

/// A value a task can emit as its final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Answer {
    Bool(bool),
    Loc(Location),
    Cat(Category),
}

impl Answer {
    /// Every answer in canonical order: true, false, the four locations
    /// (bottom right first), then the eight categories.
    pub fn vocabulary() -> [Answer; 14] {
        let mut out = [Answer::Bool(true); 14];
        out[1] = Answer::Bool(false);
        for (i, l) in LOCATION_ORDER.into_iter().enumerate() {
            out[2 + i] = Answer::Loc(l);
        }
        for (i, c) in Category::ALL.into_iter().enumerate() {
            out[6 + i] = Answer::Cat(c);
        }
        out
    }

    /// Position in the canonical vocabulary.
    pub fn vocab_index(self) -> usize {
        match self {
            Answer::Bool(true) => 0,
            Answer::Bool(false) => 1,
            Answer::Loc(l) => 2 + LOCATION_ORDER.iter().position(|x| *x == l).unwrap_or(0),
            Answer::Cat(c) => 6 + c.index(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Bool(true) => "true",
            Answer::Bool(false) => "false",
            Answer::Loc(l) => l.as_str(),
            Answer::Cat(c) => c.as_str(),
        }
    }

    pub fn answer_type(self) -> AnswerType {
        match self {
            Answer::Bool(_) => AnswerType::Bool,
            Answer::Loc(_) => AnswerType::Location,
            Answer::Cat(_) => AnswerType::Category,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Answer {
    type Err = ParseVocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Answer::vocabulary()
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ParseVocabError(s.to_string()))
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result types that can reach the answer of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnswerType {
    Bool,
    Location,
    Category,
}

/// An ordered subset of the vocabulary; iteration follows canonical order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AnswerSet(u16);

impl AnswerSet {
    pub const EMPTY: AnswerSet = AnswerSet(0);

    pub fn full() -> Self {
        AnswerSet((1 << 14) - 1)
    }

    /// All answers of one type, e.g. the four locations.
    pub fn of_type(t: AnswerType) -> Self {
        match t {
            AnswerType::Bool => AnswerSet(0b11),
            AnswerType::Location => AnswerSet(0b1111 << 2),
            AnswerType::Category => AnswerSet(0xff << 6),
        }
    }

    pub fn insert(&mut self, a: Answer) {
        self.0 |= 1 << a.vocab_index();
    }

    pub fn union(self, other: AnswerSet) -> AnswerSet {
        AnswerSet(self.0 | other.0)
    }

    pub fn contains(&self, a: Answer) -> bool {
        self.0 & (1 << a.vocab_index()) != 0
    }

    pub fn is_subset(&self, other: &AnswerSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Answer> + '_ {
        Answer::vocabulary().into_iter().filter(move |a| self.contains(*a))
    }

    pub fn to_vec(&self) -> Vec<Answer> {
        self.iter().collect()
    }

    /// Case-insensitive lookup of a label in this set.
    pub fn find(&self, label: &str) -> Option<Answer> {
        let needle = label.trim();
        self.iter().find(|a| a.as_str().eq_ignore_ascii_case(needle))
    }
}

impl FromIterator<Answer> for AnswerSet {
    fn from_iter<I: IntoIterator<Item = Answer>>(iter: I) -> Self {
        let mut set = AnswerSet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}

impl fmt::Debug for AnswerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter().map(Answer::as_str)).finish()
    }
}

impl Serialize for AnswerSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for AnswerSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let items = Vec::<Answer>::deserialize(d)?;
        Ok(items.into_iter().collect())
    }
}

/// Which answers a trial lists as possible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSpacePolicy {
    /// Union of the answer spaces of every result type the root can produce.
    Exact,
    /// All fourteen answers.
    FullVocabulary,
}
