//! Multiple-choice option labels (`O1`..`O4`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Highest option number accepted anywhere in the crate.
pub const MAX_OPTIONS: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid option label {0:?} (expected O1..O{MAX_OPTIONS})")]
pub struct OptionParseError(pub String);

/// An option label such as `O2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionId(u8);

impl OptionId {
    pub fn new(number: u8) -> Result<Self, OptionParseError> {
        if (1..=MAX_OPTIONS).contains(&number) {
            Ok(Self(number))
        } else {
            Err(OptionParseError(format!("O{number}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "O{}", self.0)
    }
}

impl FromStr for OptionId {
    type Err = OptionParseError;

    /// Accepts `O2` or `o2`; nothing else.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t
            .strip_prefix('O')
            .or_else(|| t.strip_prefix('o'))
            .ok_or_else(|| OptionParseError(s.to_string()))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(OptionParseError(s.to_string()));
        }
        let n: u8 = digits.parse().map_err(|_| OptionParseError(s.to_string()))?;
        OptionId::new(n).map_err(|_| OptionParseError(s.to_string()))
    }
}

impl Serialize for OptionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One answer option with its label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledOption {
    pub id: OptionId,
    pub text: String,
}

/// One option per line, `O1: text`.
pub fn format_options(options: &[LabeledOption]) -> String {
    options
        .iter()
        .map(|o| format!("{}: {}", o.id, o.text))
        .collect::<Vec<_>>()
        .join("\n")
}
