//! Per-garment control-point sets in normalized canvas units.

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{ControlPointSchema, GarmentCategory, POINT_COUNT};
use crate::style::{StyleError, StyleVector};

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointsError {
    #[error("malformed point set: {0}")]
    Malformed(String),
    #[error("point id {0} out of range")]
    IdRange(usize),
    #[error("point id {0} listed twice")]
    DuplicateId(usize),
    #[error("point {0} has non-finite coordinates")]
    NonFinite(usize),
    #[error(transparent)]
    Style(#[from] StyleError),
}

/// Control points `K` of one garment: coordinates in `[0,1]²` (origin top-left,
/// y down), a presence mask, and the style the points were predicted for.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSet {
    pub schema_version: String,
    pub coords: [Point; POINT_COUNT],
    pub present: [bool; POINT_COUNT],
    pub style: StyleVector,
}

impl ControlPointSet {
    pub fn empty(schema_version: impl Into<String>) -> Self {
        Self {
            schema_version: schema_version.into(),
            coords: [Point::origin(); POINT_COUNT],
            present: [false; POINT_COUNT],
            style: StyleVector::default(),
        }
    }

    /// A set whose presence equals the category's applicability, all points at
    /// the origin.
    pub fn for_category(schema: &ControlPointSchema, category: GarmentCategory) -> Self {
        let mut set = Self::empty(schema.version.clone());
        set.present = schema.applicability_mask(category);
        set
    }

    pub fn present_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..POINT_COUNT).filter(move |&i| self.present[i])
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    /// Ids present in both sets, ascending.
    pub fn shared_ids(&self, other: &ControlPointSet) -> Vec<usize> {
        (0..POINT_COUNT)
            .filter(|&i| self.present[i] && other.present[i])
            .collect()
    }

    pub fn get(&self, id: usize) -> Option<Point> {
        self.present[id].then(|| self.coords[id])
    }

    pub fn set(&mut self, id: usize, p: Point) {
        self.coords[id] = p;
        self.present[id] = true;
    }

    /// Applies `f` to every coordinate, present or not.
    pub fn map_coords(&self, f: impl Fn(Point) -> Point) -> Self {
        let mut out = self.clone();
        for c in out.coords.iter_mut() {
            *c = f(*c);
        }
        out
    }

    pub fn to_toml(&self) -> String {
        let doc = PointSetDoc {
            schema_version: self.schema_version.clone(),
            style: self.style.to_map(),
            points: (0..POINT_COUNT)
                .map(|i| PointRecord {
                    id: i,
                    x: self.coords[i].x,
                    y: self.coords[i].y,
                    present: self.present[i],
                })
                .collect(),
        };
        toml::to_string(&doc).expect("point set serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, PointsError> {
        let doc: PointSetDoc =
            toml::from_str(text).map_err(|e| PointsError::Malformed(e.to_string()))?;
        Self::from_records(&doc.schema_version, &doc.points, &doc.style)
    }

    pub(crate) fn from_records(
        schema_version: &str,
        records: &[PointRecord],
        style: &std::collections::BTreeMap<String, String>,
    ) -> Result<Self, PointsError> {
        let mut set = Self::empty(schema_version);
        let mut seen = [false; POINT_COUNT];
        for r in records {
            if r.id >= POINT_COUNT {
                return Err(PointsError::IdRange(r.id));
            }
            if std::mem::replace(&mut seen[r.id], true) {
                return Err(PointsError::DuplicateId(r.id));
            }
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(PointsError::NonFinite(r.id));
            }
            set.coords[r.id] = Point::new(r.x, r.y);
            set.present[r.id] = r.present;
        }
        set.style = StyleVector::from_map(style)?;
        Ok(set)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PointRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    #[serde(default = "yes")]
    pub present: bool,
}

fn yes() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
struct PointSetDoc {
    schema_version: String,
    #[serde(default)]
    style: std::collections::BTreeMap<String, String>,
    points: Vec<PointRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;
    use crate::style::Tuck;

    #[test]
    fn toml_round_trip() {
        let schema = default_schema();
        let mut set = ControlPointSet::for_category(schema, GarmentCategory::Top);
        for (i, c) in set.coords.iter_mut().enumerate() {
            *c = Point::new(i as f64 / 49.0, 1.0 - i as f64 / 98.0);
        }
        set.style.tuck = Some(Tuck::FullTuck);
        let back = ControlPointSet::from_toml(&set.to_toml()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_duplicates_and_bad_style() {
        let text = "schema_version = \"v\"\n[[points]]\nid = 3\nx = 0.1\ny = 0.2\n[[points]]\nid = 3\nx = 0.1\ny = 0.2\n";
        assert_eq!(
            ControlPointSet::from_toml(text),
            Err(PointsError::DuplicateId(3))
        );
        let text = "schema_version = \"v\"\npoints = []\n[style]\ntuck = \"sideways\"\n";
        assert!(matches!(
            ControlPointSet::from_toml(text),
            Err(PointsError::Style(_))
        ));
    }
}
