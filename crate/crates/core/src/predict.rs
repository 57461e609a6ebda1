//! Control-point prediction by fitting canonical per-category templates to a
//! body pose.
//!
//! Each template stores the garment's control points on a reference pose plus
//! an anchor table that ties every point to a small set of joints. Prediction
//! fits one similarity per anchor set (reference joints to target joints) and
//! carries the template points along, so sleeves follow the arm chain and hems
//! follow the hips. Templates are keyed by category and discrete style; adding
//! a style means adding a template file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::asset::GarmentAsset;
use crate::points::{ControlPointSet, PointRecord, PointsError};
use crate::pose::{fit_similarity, BodyPose, Joint, JointDoc, PoseDoc, PoseError};
use crate::schema::{ControlPointSchema, GarmentCategory, PointGroup, Side, POINT_COUNT};
use crate::style::StyleVector;

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    ("top_untuck", include_str!("../data/pose_templates/top_untuck.toml")),
    ("top_full_tuck", include_str!("../data/pose_templates/top_full_tuck.toml")),
    ("outerwear_closed", include_str!("../data/pose_templates/outerwear_closed.toml")),
    ("outerwear_open", include_str!("../data/pose_templates/outerwear_open.toml")),
    ("skirt", include_str!("../data/pose_templates/skirt.toml")),
    ("bottom", include_str!("../data/pose_templates/bottom.toml")),
    ("dress", include_str!("../data/pose_templates/dress.toml")),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("no template for category {category} with style {style}")]
    NoTemplate {
        category: GarmentCategory,
        style: StyleVector,
    },
    #[error("template {name}: {reason}")]
    InvalidTemplate { name: String, reason: String },
    #[error("template {name}: io error: {reason}")]
    Io { name: String, reason: String },
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("anchor {joints}: {source}")]
    Anchor { joints: String, source: PoseError },
}

/// Which joints drive a set of points. Point lists take precedence over
/// group+side rules, which take precedence over group-only rules.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRule {
    pub group: Option<PointGroup>,
    pub side: Option<Side>,
    pub points: Vec<usize>,
    pub joints: Vec<Joint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTemplate {
    pub name: String,
    pub category: GarmentCategory,
    /// Style values this template serves, already resolved for the category.
    pub style: StyleVector,
    pub reference: BodyPose,
    pub anchors: Vec<AnchorRule>,
    pub points: ControlPointSet,
}

#[derive(Deserialize)]
struct TemplateDoc {
    category: String,
    #[serde(default)]
    style: BTreeMap<String, String>,
    reference: ReferenceDoc,
    anchors: Vec<AnchorDoc>,
    points: Vec<PointRecord>,
}

#[derive(Deserialize)]
struct ReferenceDoc {
    canvas_aspect: f64,
    joints: BTreeMap<String, JointDoc>,
}

#[derive(Deserialize)]
struct AnchorDoc {
    group: Option<String>,
    side: Option<String>,
    #[serde(default)]
    points: Vec<String>,
    joints: Vec<String>,
}

impl CanonicalTemplate {
    pub fn parse(
        name: &str,
        text: &str,
        schema: &ControlPointSchema,
    ) -> Result<Self, PredictError> {
        let invalid = |reason: String| PredictError::InvalidTemplate {
            name: name.to_string(),
            reason,
        };
        let doc: TemplateDoc = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let category: GarmentCategory = doc.category.parse().map_err(invalid)?;
        let style = StyleVector::from_map(&doc.style)
            .map_err(|e| invalid(e.to_string()))?
            .resolved_for(category);
        let reference = BodyPose::from_doc(PoseDoc {
            canvas_aspect: doc.reference.canvas_aspect,
            joints: doc.reference.joints,
        })?;
        let mut anchors = Vec::new();
        for a in doc.anchors {
            let group = a
                .group
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(invalid)?;
            let side = a
                .side
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(invalid)?;
            let points = a
                .points
                .iter()
                .map(|n| {
                    schema
                        .id_of(n)
                        .ok_or_else(|| invalid(format!("anchor names unknown point \"{n}\"")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let joints = a
                .joints
                .iter()
                .map(|j| j.parse::<Joint>().map_err(invalid))
                .collect::<Result<Vec<_>, _>>()?;
            if joints.len() < 2 {
                return Err(invalid("every anchor needs at least 2 joints".into()));
            }
            anchors.push(AnchorRule {
                group,
                side,
                points,
                joints,
            });
        }
        let mut points = ControlPointSet::from_records(&schema.version, &doc.points, &BTreeMap::new())
            .map_err(|e: PointsError| invalid(e.to_string()))?;
        points.style = style;
        let template = CanonicalTemplate {
            name: name.to_string(),
            category,
            style,
            reference,
            anchors,
            points,
        };
        template.lint(schema).map_err(invalid)?;
        Ok(template)
    }

    /// Anchor rule for a point, if any.
    pub fn anchor_for(&self, schema: &ControlPointSchema, id: usize) -> Option<&AnchorRule> {
        let def = schema.point(id);
        self.anchors
            .iter()
            .find(|a| a.points.contains(&id))
            .or_else(|| {
                self.anchors
                    .iter()
                    .find(|a| a.points.is_empty() && a.group == Some(def.group) && a.side == Some(def.side))
            })
            .or_else(|| {
                self.anchors
                    .iter()
                    .find(|a| a.points.is_empty() && a.group == Some(def.group) && a.side.is_none())
            })
    }

    /// Structural checks: presence within applicability, anchors for every
    /// applicable point, anchor joints present in the reference pose.
    pub fn lint(&self, schema: &ControlPointSchema) -> Result<(), String> {
        let applicable = schema.applicability_mask(self.category);
        for (id, &applies) in applicable.iter().enumerate() {
            let name = &schema.point(id).name;
            if self.points.present[id] && !applies {
                return Err(format!("point {name} is present but not applicable to {}", self.category));
            }
            if applies && self.anchor_for(schema, id).is_none() {
                return Err(format!("point {name} has no anchor"));
            }
        }
        if self.points.present_count() < 3 {
            return Err("fewer than 3 present points".into());
        }
        for a in &self.anchors {
            for &j in &a.joints {
                if self.reference.detected(j).is_none() {
                    return Err(format!("anchor joint {j} missing from the reference pose"));
                }
            }
        }
        self.reference.validate().map_err(|e| e.to_string())
    }

    /// Fits the template onto `pose`. Every applicable point is carried through
    /// its anchor's similarity; presence comes from the template.
    pub fn fit(&self, schema: &ControlPointSchema, pose: &BodyPose) -> Result<ControlPointSet, PredictError> {
        pose.validate()?;
        let mut out = self.points.clone();
        let applicable = schema.applicability_mask(self.category);
        let mut fits = HashMap::new();
        for id in (0..POINT_COUNT).filter(|&i| applicable[i]) {
            let rule = self
                .anchor_for(schema, id)
                .expect("lint guarantees an anchor for applicable points");
            let key = rule.joints.clone();
            let sim = match fits.get(&key) {
                Some(s) => *s,
                None => {
                    let s = self.fit_anchor(&rule.joints, pose)?;
                    fits.insert(key, s);
                    s
                }
            };
            let metric = self.reference.to_metric(self.points.coords[id]);
            out.coords[id] = pose.from_metric(sim.apply(metric));
        }
        Ok(out)
    }

    fn fit_anchor(
        &self,
        joints: &[Joint],
        pose: &BodyPose,
    ) -> Result<crate::pose::Similarity, PredictError> {
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        for &j in joints {
            if let (Some(r), Some(p)) = (self.reference.detected(j), pose.detected(j)) {
                src.push(self.reference.to_metric(r));
                dst.push(pose.to_metric(p));
            }
        }
        fit_similarity(&src, &dst).map_err(|source| PredictError::Anchor {
            joints: joints.iter().map(|j| j.as_str()).collect::<Vec<_>>().join("+"),
            source,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemplateLibrary {
    templates: Vec<CanonicalTemplate>,
}

impl TemplateLibrary {
    pub fn builtin(schema: &ControlPointSchema) -> Self {
        let templates = BUILTIN_TEMPLATES
            .iter()
            .map(|(name, text)| {
                CanonicalTemplate::parse(name, text, schema).expect("built-in templates are valid")
            })
            .collect();
        Self { templates }
    }

    /// Loads every `*.toml` template in `dir` (non-recursive).
    pub fn load_dir(dir: &Path, schema: &ControlPointSchema) -> Result<Self, PredictError> {
        let io = |e: std::io::Error| PredictError::Io {
            name: dir.display().to_string(),
            reason: e.to_string(),
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        paths.sort();
        let mut lib = Self::default();
        for path in paths {
            let name = path.file_stem().unwrap().to_string_lossy().to_string();
            let text = std::fs::read_to_string(&path).map_err(io)?;
            lib.insert(CanonicalTemplate::parse(&name, &text, schema)?);
        }
        Ok(lib)
    }

    /// Adds a template, replacing any existing one with the same key.
    pub fn insert(&mut self, template: CanonicalTemplate) {
        self.templates
            .retain(|t| !(t.category == template.category && t.style == template.style));
        self.templates.push(template);
    }

    pub fn templates(&self) -> &[CanonicalTemplate] {
        &self.templates
    }

    pub fn find(
        &self,
        category: GarmentCategory,
        style: &StyleVector,
    ) -> Result<&CanonicalTemplate, PredictError> {
        let wanted = style.resolved_for(category);
        self.templates
            .iter()
            .find(|t| t.category == category && t.style == wanted)
            .ok_or(PredictError::NoTemplate {
                category,
                style: wanted,
            })
    }

    /// Checks that templates of one category differing only in tuck differ
    /// only in waistline, hem and torso-side points, and that closure variants
    /// stay within split-edge, collar, hem and torso-side points.
    pub fn lint_style_locality(&self, schema: &ControlPointSchema) -> Vec<String> {
        let mut issues = Vec::new();
        for (i, a) in self.templates.iter().enumerate() {
            for b in &self.templates[i + 1..] {
                if a.category != b.category {
                    continue;
                }
                let allowed: HashSet<PointGroup> = if a.style.tuck != b.style.tuck {
                    [PointGroup::Waistline, PointGroup::Hem, PointGroup::TorsoSide].into()
                } else {
                    [
                        PointGroup::SplitEdge,
                        PointGroup::Collar,
                        PointGroup::Hem,
                        PointGroup::TorsoSide,
                    ]
                    .into()
                };
                for id in 0..POINT_COUNT {
                    let differs = a.points.present[id] != b.points.present[id]
                        || a.points.coords[id] != b.points.coords[id]
                        || a.anchor_for(schema, id) != b.anchor_for(schema, id);
                    let def = schema.point(id);
                    if differs && !allowed.contains(&def.group) {
                        issues.push(format!(
                            "{} vs {}: point {} ({}) differs outside the style's groups",
                            a.name, b.name, def.name, def.group
                        ));
                    }
                }
            }
        }
        issues
    }
}

/// Predicts on-body control points for `asset` on `pose` with the given style
/// overrides (unset entries fall back to category defaults).
pub fn predict_control_points(
    library: &TemplateLibrary,
    schema: &ControlPointSchema,
    asset: &GarmentAsset,
    pose: &BodyPose,
    style: &StyleVector,
) -> Result<ControlPointSet, PredictError> {
    let template = library.find(asset.category, style)?;
    template.fit(schema, pose)
}

/// The shared reference pose of the built-in templates.
pub fn reference_pose(library: &TemplateLibrary) -> Option<&BodyPose> {
    library.templates().first().map(|t| &t.reference)
}
