use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::task::{AnswerSpacePolicy, AttributeKind};

/// The 22 named tasks: 16 perception/attention/memory probes and 6
/// composite visual reasoning sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    PercCatR,
    PercCatC,
    PercLocR,
    PercLocC,
    AttFeatR,
    AttFeatC,
    AttSpaR,
    AttSpaC,
    MemCatR,
    MemCatC,
    MemLocR,
    MemLocC,
    MemDisCatR,
    MemDisCatC,
    MemDisLocR,
    MemDisLocC,
    CvrCatH,
    CvrLocH,
    CvrCatM,
    CvrLocM,
    CvrCatL,
    CvrLocL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Perception,
    FeatureAttention,
    SpatialAttention,
    Memory,
    MemoryDistractor,
    Composite(Complexity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Complexity {
    Low,
    Medium,
    High,
}

/// Report asks for a property; Compare asks whether two objects share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Report,
    Compare,
}

/// The object property a kind is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Category,
    Location,
}

impl Feature {
    pub fn attribute(self) -> AttributeKind {
        match self {
            Feature::Category => AttributeKind::Category,
            Feature::Location => AttributeKind::Location,
        }
    }
}

use TaskKind::*;

impl TaskKind {
    pub const ALL: [TaskKind; 22] = [
        PercCatR, PercCatC, PercLocR, PercLocC, AttFeatR, AttFeatC, AttSpaR, AttSpaC, MemCatR, MemCatC, MemLocR,
        MemLocC, MemDisCatR, MemDisCatC, MemDisLocR, MemDisLocC, CvrCatH, CvrLocH, CvrCatM, CvrLocM, CvrCatL,
        CvrLocL,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            PercCatR => "Perc-Cat-R",
            PercCatC => "Perc-Cat-C",
            PercLocR => "Perc-Loc-R",
            PercLocC => "Perc-Loc-C",
            AttFeatR => "Att-Feat-R",
            AttFeatC => "Att-Feat-C",
            AttSpaR => "Att-Spa-R",
            AttSpaC => "Att-Spa-C",
            MemCatR => "Mem-Cat-R",
            MemCatC => "Mem-Cat-C",
            MemLocR => "Mem-Loc-R",
            MemLocC => "Mem-Loc-C",
            MemDisCatR => "Mem-Dis-Cat-R",
            MemDisCatC => "Mem-Dis-Cat-C",
            MemDisLocR => "Mem-Dis-Loc-R",
            MemDisLocC => "Mem-Dis-Loc-C",
            CvrCatH => "CVR-Cat-H",
            CvrLocH => "CVR-Loc-H",
            CvrCatM => "CVR-Cat-M",
            CvrLocM => "CVR-Loc-M",
            CvrCatL => "CVR-Cat-L",
            CvrLocL => "CVR-Loc-L",
        }
    }

    pub fn family(self) -> Family {
        match self {
            PercCatR | PercCatC | PercLocR | PercLocC => Family::Perception,
            AttFeatR | AttFeatC => Family::FeatureAttention,
            AttSpaR | AttSpaC => Family::SpatialAttention,
            MemCatR | MemCatC | MemLocR | MemLocC => Family::Memory,
            MemDisCatR | MemDisCatC | MemDisLocR | MemDisLocC => Family::MemoryDistractor,
            CvrCatH | CvrLocH => Family::Composite(Complexity::High),
            CvrCatM | CvrLocM => Family::Composite(Complexity::Medium),
            CvrCatL | CvrLocL => Family::Composite(Complexity::Low),
        }
    }

    pub fn is_composite(self) -> bool {
        matches!(self.family(), Family::Composite(_))
    }

    /// The property reported or compared. Feature attention cues by category
    /// and asks about location; spatial attention the reverse.
    pub fn feature(self) -> Feature {
        match self {
            PercCatR | PercCatC | AttSpaR | AttSpaC | MemCatR | MemCatC | MemDisCatR | MemDisCatC | CvrCatH
            | CvrCatM | CvrCatL => Feature::Category,
            _ => Feature::Location,
        }
    }

    /// `None` for composite kinds, which mix reports and comparisons.
    pub fn variant(self) -> Option<Variant> {
        match self {
            PercCatR | PercLocR | AttFeatR | AttSpaR | MemCatR | MemLocR | MemDisCatR | MemDisLocR => {
                Some(Variant::Report)
            }
            PercCatC | PercLocC | AttFeatC | AttSpaC | MemCatC | MemLocC | MemDisCatC | MemDisLocC => {
                Some(Variant::Compare)
            }
            _ => None,
        }
    }

    /// High-complexity composites list the whole vocabulary; everything else
    /// lists only reachable answers.
    pub fn policy(self) -> AnswerSpacePolicy {
        match self {
            CvrCatH | CvrLocH => AnswerSpacePolicy::FullVocabulary,
            _ => AnswerSpacePolicy::Exact,
        }
    }

    /// Published chance level in whole percent.
    pub fn nominal_chance_percent(self) -> u32 {
        match self {
            CvrCatH | CvrLocH => 7,
            PercCatR | AttSpaR | MemCatR | MemDisCatR => 13,
            PercLocR | AttFeatR | MemLocR | MemDisLocR => 25,
            _ => 50,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for TaskKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.abbrev().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

impl Serialize for TaskKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.abbrev())
    }
}

impl<'de> Deserialize<'de> for TaskKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abbreviations_parse_back() {
        for k in TaskKind::ALL {
            assert_eq!(k.abbrev().parse::<TaskKind>().unwrap(), k);
        }
        assert_eq!(TaskKind::ALL.iter().filter(|k| k.is_composite()).count(), 6);
        assert!("Perc-Shape-R".parse::<TaskKind>().is_err());
    }

    #[test]
    fn compare_kinds_sit_at_fifty_percent() {
        for k in TaskKind::ALL {
            if k.variant() == Some(Variant::Compare) {
                assert_eq!(k.nominal_chance_percent(), 50, "{k}");
            }
        }
    }
}
