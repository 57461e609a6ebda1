//! Discrete drape controls (the style vector).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::{string_enum, GarmentCategory};

string_enum!(
    Tuck {
        FullTuck => "full_tuck",
        Untuck => "untuck",
        FrontTuck => "front_tuck",
        SideTuck => "side_tuck",
        HalfTuck => "half_tuck",
    }
);

string_enum!(
    Closure {
        Closed => "closed",
        Open => "open",
    }
);

impl Tuck {
    /// Numeric code of the two trained discrete values.
    pub fn code(self) -> Option<u8> {
        match self {
            Tuck::FullTuck => Some(0),
            Tuck::Untuck => Some(1),
            _ => None,
        }
    }
}

impl Closure {
    pub fn code(self) -> u8 {
        match self {
            Closure::Closed => 0,
            Closure::Open => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StyleVector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuck: Option<Tuck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<Closure>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StyleError {
    #[error("unknown style entry \"{0}\"")]
    UnknownEntry(String),
    #[error("invalid value \"{value}\" for style entry \"{entry}\"")]
    InvalidValue { entry: String, value: String },
}

impl StyleVector {
    pub const ENTRIES: &'static [&'static str] = &["tuck", "closure"];

    pub fn with_tuck(mut self, tuck: Tuck) -> Self {
        self.tuck = Some(tuck);
        self
    }

    pub fn with_closure(mut self, closure: Closure) -> Self {
        self.closure = Some(closure);
        self
    }

    pub fn set(&mut self, entry: &str, value: &str) -> Result<(), StyleError> {
        let invalid = || StyleError::InvalidValue {
            entry: entry.to_string(),
            value: value.to_string(),
        };
        match entry {
            "tuck" => self.tuck = Some(value.parse().map_err(|_| invalid())?),
            "closure" => self.closure = Some(value.parse().map_err(|_| invalid())?),
            other => return Err(StyleError::UnknownEntry(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, entry: &str) -> Option<&'static str> {
        match entry {
            "tuck" => self.tuck.map(Tuck::as_str),
            "closure" => self.closure.map(Closure::as_str),
            _ => None,
        }
    }

    /// Applies `other`'s set entries on top of this vector.
    pub fn overlay(mut self, other: &StyleVector) -> Self {
        if other.tuck.is_some() {
            self.tuck = other.tuck;
        }
        if other.closure.is_some() {
            self.closure = other.closure;
        }
        self
    }

    /// Keeps only the entries meaningful for `category` and fills their defaults
    /// (untucked tops, closed outerwear).
    pub fn resolved_for(&self, category: GarmentCategory) -> StyleVector {
        match category {
            GarmentCategory::Top => StyleVector {
                tuck: Some(self.tuck.unwrap_or(Tuck::Untuck)),
                closure: None,
            },
            GarmentCategory::Outerwear => StyleVector {
                tuck: None,
                closure: Some(self.closure.unwrap_or(Closure::Closed)),
            },
            _ => StyleVector::default(),
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for entry in Self::ENTRIES {
            if let Some(v) = self.get(entry) {
                out.insert(entry.to_string(), v.to_string());
            }
        }
        out
    }

    pub fn from_map<'a>(
        entries: impl IntoIterator<Item = (&'a String, &'a String)>,
    ) -> Result<Self, StyleError> {
        let mut style = StyleVector::default();
        for (k, v) in entries {
            style.set(k, v)?;
        }
        Ok(style)
    }
}

impl fmt::Display for StyleVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .to_map()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if parts.is_empty() {
            f.write_str("default")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}
