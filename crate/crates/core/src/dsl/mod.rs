//! The edit-template language.
//!
//! A template selects garments by metadata and edits their control points:
//!
//! ```text
//! template "front_tuck" for category=top {
//!     require other(category=bottom);
//!     set point(torso_center).y = other.point(waistline_center).y;
//! }
//! ```
//!
//! Parsing lints names against a schema, so every error carries a line and
//! column. [`print_template`] emits the canonical form; parsing it back yields
//! an equal AST.

mod eval;
mod fuzz;
mod lexer;
mod parser;
mod print;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::asset::{GarmentAsset, Gender};
use crate::schema::GarmentCategory;

pub use eval::{apply_template, applicable, EditError, EditOptions, EditReport, Outcome, PointMove, ReportEntry};
pub use fuzz::random_template;
pub use parser::{parse_template, parse_templates};
pub use print::{print_statement, print_template};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Syntax,
    Lint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DslError {
    pub pos: Pos,
    pub kind: ErrorKind,
    pub message: String,
    /// Source file, when known.
    pub file: Option<String>,
}

impl DslError {
    pub(crate) fn new(pos: Pos, kind: ErrorKind, message: String) -> Self {
        Self {
            pos,
            kind,
            message,
            file: None,
        }
    }

    fn in_file(mut self, path: &Path) -> Self {
        self.file = Some(path.display().to_string());
        self
    }
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Syntax => "syntax error",
            ErrorKind::Lint => "lint error",
        };
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}:{}: {kind}: {}", self.pos.line, self.pos.column, self.message)
    }
}

impl std::error::Error for DslError {}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Condition {
    Category(GarmentCategory),
    Tag(String),
    Gender(Gender),
}

/// Conjunction of metadata conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selector {
    pub conditions: Vec<Condition>,
}

impl Selector {
    pub fn matches(&self, garment: &GarmentAsset) -> bool {
        self.conditions.iter().all(|c| match c {
            Condition::Category(cat) => garment.category == *cat,
            Condition::Tag(tag) => garment.has_tag(tag),
            Condition::Gender(g) => garment.gender.satisfies(*g),
        })
    }

    /// Categories this selector can match, if it pins any.
    pub fn categories(&self) -> Vec<GarmentCategory> {
        self.conditions
            .iter()
            .filter_map(|c| match c {
                Condition::Category(cat) => Some(*cat),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// A literal in normalized canvas units, optionally scaled by the body height
/// (hip-to-neck distance) of the pose being edited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Number {
    pub value: f64,
    pub body_height: bool,
}

impl Number {
    pub fn lit(value: f64) -> Self {
        Self {
            value,
            body_height: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expr {
    Literal { value: Number },
    Other {
        point: String,
        axis: Axis,
        offset: Option<Number>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Statement {
    Offset { pattern: String, dx: Number, dy: Number },
    SetAxis { point: String, axis: Axis, expr: Expr },
    Align { pattern: String, point: String, axis: Axis },
    Disable { pattern: String },
    Enable { pattern: String },
    SetStyle { entry: String, value: String },
    ClampWithin { pattern: String },
}

impl Statement {
    pub fn uses_other(&self) -> bool {
        matches!(
            self,
            Statement::Align { .. }
                | Statement::ClampWithin { .. }
                | Statement::SetAxis {
                    expr: Expr::Other { .. },
                    ..
                }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditTemplate {
    pub name: String,
    pub selector: Selector,
    pub requires: Option<Selector>,
    pub statements: Vec<Statement>,
}

impl EditTemplate {
    /// The template with every offset multiplied by `factor`; used to step
    /// through an edit gradually.
    pub fn scaled_offsets(&self, factor: f64) -> EditTemplate {
        let mut t = self.clone();
        for s in t.statements.iter_mut() {
            if let Statement::Offset { dx, dy, .. } = s {
                dx.value *= factor;
                dy.value *= factor;
            }
        }
        t
    }

    pub fn sets_style(&self) -> bool {
        self.statements
            .iter()
            .any(|s| matches!(s, Statement::SetStyle { .. }))
    }
}

/// The template files shipped in the repository's `templates/` directory.
pub const SHIPPED: &[(&str, &str)] = &[
    ("closure.drape", include_str!("../../../../templates/closure.drape")),
    ("front_tuck.drape", include_str!("../../../../templates/front_tuck.drape")),
    ("half_tuck.drape", include_str!("../../../../templates/half_tuck.drape")),
    ("side_tuck.drape", include_str!("../../../../templates/side_tuck.drape")),
    ("waist_down.drape", include_str!("../../../../templates/waist_down.drape")),
    ("waist_up.drape", include_str!("../../../../templates/waist_up.drape")),
];

pub fn shipped_library(schema: &crate::schema::ControlPointSchema) -> Vec<EditTemplate> {
    SHIPPED
        .iter()
        .flat_map(|(file, text)| {
            parse_templates(text, schema).unwrap_or_else(|e| panic!("shipped {file}: {e}"))
        })
        .collect()
}

/// Templates from `dir` followed by shipped ones whose names `dir` does not
/// define.
pub fn library_with_shipped(
    dir: Option<&Path>,
    schema: &crate::schema::ControlPointSchema,
) -> Result<Vec<EditTemplate>, LibraryError> {
    let mut out = match dir {
        Some(d) => load_library(d, schema)?,
        None => Vec::new(),
    };
    for t in shipped_library(schema) {
        if !out.iter().any(|o| o.name == t.name) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Recursively collects `*.drape` files under `dir`, sorted by path.
pub fn template_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "drape") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] DslError),
    #[error("template \"{name}\" defined in both {first} and {second}")]
    Duplicate {
        name: String,
        first: String,
        second: String,
    },
}

pub fn parse_file(
    path: &Path,
    schema: &crate::schema::ControlPointSchema,
) -> Result<Vec<EditTemplate>, LibraryError> {
    let text = std::fs::read_to_string(path).map_err(|source| LibraryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_templates(&text, schema).map_err(|e| LibraryError::Parse(e.in_file(path)))
}

/// Every template under `dir`, keyed by unique name.
pub fn load_library(
    dir: &Path,
    schema: &crate::schema::ControlPointSchema,
) -> Result<Vec<EditTemplate>, LibraryError> {
    let files = template_files(dir).map_err(|source| LibraryError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut out: Vec<(EditTemplate, String)> = Vec::new();
    for path in files {
        for t in parse_file(&path, schema)? {
            if let Some((_, first)) = out.iter().find(|(o, _)| o.name == t.name) {
                return Err(LibraryError::Duplicate {
                    name: t.name,
                    first: first.clone(),
                    second: path.display().to_string(),
                });
            }
            out.push((t, path.display().to_string()));
        }
    }
    Ok(out.into_iter().map(|(t, _)| t).collect())
}
