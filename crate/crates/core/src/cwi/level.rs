use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// CEFR band. The six named levels are totally ordered; `Unknown` is not
/// comparable to anything and must be resolved through a default first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CefrLevel {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl CefrLevel {
    pub const NAMED: [CefrLevel; 6] = [
        CefrLevel::A1,
        CefrLevel::A2,
        CefrLevel::B1,
        CefrLevel::B2,
        CefrLevel::C1,
        CefrLevel::C2,
    ];

    pub fn rank(self) -> Option<u8> {
        match self {
            CefrLevel::A1 => Some(0),
            CefrLevel::A2 => Some(1),
            CefrLevel::B1 => Some(2),
            CefrLevel::B2 => Some(3),
            CefrLevel::C1 => Some(4),
            CefrLevel::C2 => Some(5),
            CefrLevel::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        self.rank().is_some()
    }

    /// Replaces `Unknown` with `default`.
    pub fn or(self, default: CefrLevel) -> CefrLevel {
        if self.is_known() {
            self
        } else {
            default
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CefrLevel::A1 => "A1",
            CefrLevel::A2 => "A2",
            CefrLevel::B1 => "B1",
            CefrLevel::B2 => "B2",
            CefrLevel::C1 => "C1",
            CefrLevel::C2 => "C2",
            CefrLevel::Unknown => "UNKNOWN",
        }
    }
}

impl PartialOrd for CefrLevel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.rank()?.cmp(&other.rank()?))
    }
}

impl fmt::Display for CefrLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised CEFR level `{0}`")]
pub struct ParseLevelError(pub String);

impl FromStr for CefrLevel {
    type Err = ParseLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A1" => Ok(CefrLevel::A1),
            "A2" => Ok(CefrLevel::A2),
            "B1" => Ok(CefrLevel::B1),
            "B2" => Ok(CefrLevel::B2),
            "C1" => Ok(CefrLevel::C1),
            "C2" => Ok(CefrLevel::C2),
            "UNKNOWN" => Ok(CefrLevel::Unknown),
            _ => Err(ParseLevelError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_levels_are_totally_ordered() {
        for w in CefrLevel::NAMED.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(CefrLevel::C2 > CefrLevel::A1);
    }

    #[test]
    fn unknown_is_incomparable() {
        assert_eq!(CefrLevel::Unknown.partial_cmp(&CefrLevel::A1), None);
        assert_eq!(CefrLevel::Unknown.partial_cmp(&CefrLevel::C2), None);
        assert_eq!(CefrLevel::C1.partial_cmp(&CefrLevel::Unknown), None);
        assert_eq!(CefrLevel::Unknown.or(CefrLevel::C2), CefrLevel::C2);
        assert_eq!(CefrLevel::B1.or(CefrLevel::C2), CefrLevel::B1);
    }

    #[test]
    fn parse_roundtrip() {
        for l in CefrLevel::NAMED {
            assert_eq!(l.as_str().parse::<CefrLevel>().unwrap(), l);
        }
        assert_eq!("c1".parse::<CefrLevel>().unwrap(), CefrLevel::C1);
        assert!("D1".parse::<CefrLevel>().is_err());
    }
}
