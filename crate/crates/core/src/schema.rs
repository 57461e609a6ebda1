//! Control-point schema: the 49 semantic points shared by every garment of a
//! category, with their group, side and category applicability.
//!
//! The schema is a versioned config document. Code never hard-codes point
//! names; it resolves them through [`ControlPointSchema`].

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

/// Number of control points in every schema.
pub const POINT_COUNT: usize = 49;

const DEFAULT_SCHEMA: &str = include_str!("../data/schema.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("expected {POINT_COUNT} points, found {0}")]
    Count(usize),
    #[error("point ids must be 0..{}; entry \"{name}\" has id {id}", POINT_COUNT - 1)]
    IdRange { name: String, id: usize },
    #[error("duplicate point id {id} (entry \"{name}\")")]
    DuplicateId { name: String, id: usize },
    #[error("duplicate point name \"{0}\"")]
    DuplicateName(String),
    #[error("entry \"{name}\": unknown {field} \"{value}\"")]
    UnknownValue {
        name: String,
        field: &'static str,
        value: String,
    },
    #[error("category {0} has no applicable points")]
    EmptyCategory(GarmentCategory),
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ::serde::Serialize, ::serde::Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        concat!("unknown ", stringify!($name), " \"{}\""),
                        other
                    )),
                }
            }
        }
    };
}
pub(crate) use string_enum;

string_enum!(
    /// Garment category (the garment's `a_t`).
    GarmentCategory {
        Top => "top",
        Bottom => "bottom",
        Skirt => "skirt",
        Outerwear => "outerwear",
        Dress => "dress",
    }
);

string_enum!(
    PointGroup {
        Collar => "collar",
        Shoulder => "shoulder",
        SleeveOuter => "sleeve_outer",
        SleeveInner => "sleeve_inner",
        TorsoSide => "torso_side",
        Waistline => "waistline",
        Hem => "hem",
        SplitEdge => "split_edge",
        Leg => "leg",
    }
);

string_enum!(
    /// Image side of a point: `Left` points sit at smaller canvas x.
    Side {
        Left => "left",
        Right => "right",
        Center => "center",
    }
);

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PointDef {
    pub id: usize,
    pub name: String,
    pub group: PointGroup,
    pub side: Side,
    pub categories: Vec<GarmentCategory>,
    /// Center points copied to both halves when outerwear is split.
    pub shared_on_split: bool,
}

impl PointDef {
    pub fn applies_to(&self, category: GarmentCategory) -> bool {
        self.categories.contains(&category)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSchema {
    pub version: String,
    points: Vec<PointDef>,
}

#[derive(Deserialize)]
struct SchemaDoc {
    version: String,
    points: Vec<PointDoc>,
}

#[derive(Deserialize)]
struct PointDoc {
    id: usize,
    name: String,
    group: String,
    side: String,
    categories: Vec<String>,
    #[serde(default)]
    shared_on_split: bool,
}

/// Parses and validates a schema document.
pub fn load_schema(text: &str) -> Result<ControlPointSchema, SchemaError> {
    let doc: SchemaDoc = toml::from_str(text).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    if doc.points.len() != POINT_COUNT {
        return Err(SchemaError::Count(doc.points.len()));
    }
    let mut slots: Vec<Option<PointDef>> = vec![None; POINT_COUNT];
    let mut names = HashSet::new();
    for p in doc.points {
        if p.id >= POINT_COUNT {
            return Err(SchemaError::IdRange { name: p.name, id: p.id });
        }
        if slots[p.id].is_some() {
            return Err(SchemaError::DuplicateId { name: p.name, id: p.id });
        }
        if !names.insert(p.name.clone()) {
            return Err(SchemaError::DuplicateName(p.name));
        }
        let unknown = |field: &'static str, value: &str| SchemaError::UnknownValue {
            name: p.name.clone(),
            field,
            value: value.to_string(),
        };
        let group = p.group.parse().map_err(|_| unknown("group", &p.group))?;
        let side = p.side.parse().map_err(|_| unknown("side", &p.side))?;
        let categories = p
            .categories
            .iter()
            .map(|c| c.parse().map_err(|_| unknown("category", c)))
            .collect::<Result<Vec<_>, _>>()?;
        slots[p.id] = Some(PointDef {
            id: p.id,
            name: p.name,
            group,
            side,
            categories,
            shared_on_split: p.shared_on_split,
        });
    }
    // Count and id uniqueness guarantee every slot is filled.
    let points: Vec<PointDef> = slots.into_iter().flatten().collect();
    let schema = ControlPointSchema {
        version: doc.version,
        points,
    };
    for &category in GarmentCategory::ALL {
        if schema.applicable(category).next().is_none() {
            return Err(SchemaError::EmptyCategory(category));
        }
    }
    Ok(schema)
}

/// The schema shipped with the crate.
pub fn default_schema() -> &'static ControlPointSchema {
    static SCHEMA: OnceLock<ControlPointSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| load_schema(DEFAULT_SCHEMA).expect("built-in schema is valid"))
}

impl ControlPointSchema {
    pub fn points(&self) -> &[PointDef] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &PointDef {
        &self.points[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&PointDef> {
        self.points.iter().find(|p| p.name == name)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.by_name(name).map(|p| p.id)
    }

    /// Points applicable to a category, in id order.
    pub fn applicable(&self, category: GarmentCategory) -> impl Iterator<Item = &PointDef> {
        self.points.iter().filter(move |p| p.applies_to(category))
    }

    pub fn applicability_mask(&self, category: GarmentCategory) -> [bool; POINT_COUNT] {
        let mut mask = [false; POINT_COUNT];
        for p in self.applicable(category) {
            mask[p.id] = true;
        }
        mask
    }

    pub fn group_ids(&self, group: PointGroup) -> Vec<usize> {
        self.points
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.id)
            .collect()
    }

    /// Ids whose names match a glob with at most one `*`.
    pub fn matching(&self, pattern: &str) -> Vec<usize> {
        self.points
            .iter()
            .filter(|p| glob_match(pattern, &p.name))
            .map(|p| p.id)
            .collect()
    }
}

/// Matches `name` against a pattern containing at most one `*` wildcard.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    match pattern.split_once('*') {
        None => pattern == name,
        Some((prefix, suffix)) => {
            name.len() >= prefix.len() + suffix.len()
                && name.starts_with(prefix)
                && name.ends_with(suffix)
        }
    }
}
