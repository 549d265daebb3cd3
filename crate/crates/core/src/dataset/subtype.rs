use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The eight bridge subtypes. Discriminants are the dataset label ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Subtype {
    ArchBottomBear = 0,
    ArchTopBear = 1,
    BeamThreeSpan = 2,
    BeamVType = 3,
    CableFanShaped = 4,
    CableHarpShaped = 5,
    SuspensionDiagonalSling = 6,
    SuspensionVerticalSling = 7,
}

pub const NUM_SUBTYPES: usize = 8;

impl Subtype {
    pub const ALL: [Subtype; NUM_SUBTYPES] = [
        Subtype::ArchBottomBear,
        Subtype::ArchTopBear,
        Subtype::BeamThreeSpan,
        Subtype::BeamVType,
        Subtype::CableFanShaped,
        Subtype::CableHarpShaped,
        Subtype::SuspensionDiagonalSling,
        Subtype::SuspensionVerticalSling,
    ];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Subtype> {
        Subtype::ALL.get(label as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Subtype::ArchBottomBear => "Arch Bottom_bear",
            Subtype::ArchTopBear => "Arch Top_bear",
            Subtype::BeamThreeSpan => "Beam Three_span",
            Subtype::BeamVType => "Beam V_type",
            Subtype::CableFanShaped => "Cable Fan_shaped",
            Subtype::CableHarpShaped => "Cable Harp_shaped",
            Subtype::SuspensionDiagonalSling => "Suspension Diagonal_sling",
            Subtype::SuspensionVerticalSling => "Suspension Vertical_sling",
        }
    }

    pub fn is_beam(self) -> bool {
        matches!(self, Subtype::BeamThreeSpan | Subtype::BeamVType)
    }

    /// Span lengths in meters, left to right.
    pub fn spans(self) -> [f64; 3] {
        if self.is_beam() {
            [80.0, 140.0, 80.0]
        } else {
            [67.0, 166.0, 67.0]
        }
    }

    /// Range of the animated member width in meters: girder depth for
    /// beams, rib thickness for arches, tower width for cable-stayed
    /// bridges and main-cable diameter for suspension bridges. Secondary
    /// members (stays, hangers) scale in proportion.
    pub fn member_range(self) -> (f64, f64) {
        match self {
            Subtype::BeamThreeSpan | Subtype::BeamVType => (1.0, 4.0),
            Subtype::ArchBottomBear | Subtype::ArchTopBear => (1.5, 4.0),
            Subtype::CableFanShaped | Subtype::CableHarpShaped => (2.0, 5.0),
            Subtype::SuspensionDiagonalSling | Subtype::SuspensionVerticalSling => (0.8, 2.5),
        }
    }
}

/// Name → label id, exactly as the dataset records it.
pub fn label_dictionary() -> BTreeMap<String, u8> {
    Subtype::ALL
        .iter()
        .map(|s| (s.name().to_string(), s.label()))
        .collect()
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subtype::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownSubtype(s.to_string()))
    }
}

impl TryFrom<String> for Subtype {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Subtype> for String {
    fn from(s: Subtype) -> String {
        s.name().to_string()
    }
}
