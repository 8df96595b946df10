//! Variable identifiers, assignable values and value canonicalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Identifier of a dialogue variable, rendered as `V1`, `V2`, ...
///
/// Ordering is numeric, so `V2 < V10`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> u32 {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V{}", self.0)
    }
}

impl FromStr for VarId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('V')
            .and_then(|n| n.parse::<u32>().ok())
            .map(VarId)
            .ok_or_else(|| Error::validation(format!("malformed variable id {s:?}")))
    }
}

impl Serialize for VarId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VarId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// A slot value mention such as "spanish".
    Value,
    /// An amount of knowledge-base instances such as "three".
    Count,
}

/// A value a variable can take.
///
/// The derived order (all counts ascending, then texts lexicographically) is the
/// value order used by the solver.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Count(u32),
    Text(String),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            Value::Count(_) => None,
        }
    }

    pub fn as_count(&self) -> Option<u32> {
        match self {
            Value::Count(n) => Some(*n),
            Value::Text(_) => None,
        }
    }

    pub fn kind(&self) -> VarKind {
        match self {
            Value::Text(_) => VarKind::Value,
            Value::Count(_) => VarKind::Count,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Count(n) => write!(f, "{n}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

pub(crate) const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Lowercase, trim and collapse inner whitespace.
pub fn canonical_text(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse an instance amount: digit strings, the words zero..ten, and "no"/"none".
pub fn parse_count(surface: &str) -> Result<u32> {
    let token = canonical_text(surface);
    if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) {
        return token.parse().map_err(|_| Error::NotACount(surface.to_string()));
    }
    if token == "no" || token == "none" {
        return Ok(0);
    }
    NUMBER_WORDS
        .iter()
        .position(|w| *w == token)
        .map(|n| n as u32)
        .ok_or_else(|| Error::NotACount(surface.to_string()))
}

/// Canonical form of a surface string for the given variable kind.
pub fn normalize_value(surface: &str, kind: VarKind) -> Result<Value> {
    match kind {
        VarKind::Value => Ok(Value::Text(canonical_text(surface))),
        VarKind::Count => parse_count(surface).map(Value::Count),
    }
}
