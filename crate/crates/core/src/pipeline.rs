//! Outfit rendering.
//!
//! Stages run in a fixed order: predict points for every garment, apply edit
//! templates, check or fix coordination, warp each garment, occlude the person
//! and composite innermost-first. The result is a geometric draft; nothing is
//! shaded or synthesized.
//!
//! [`Engine`] exposes the stages separately so an interactive session can
//! re-warp a single garment after a point edit.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::GarmentAsset;
use crate::coordination::{check_coordination, fix_coordination, Layer, Violation, DEFAULT_MARGIN};
use crate::dsl::{self, EditOptions, EditReport, EditTemplate, Selector, Statement};
use crate::layout::{adjacency, garment_class, rasterize_layout, LayoutClass, SemanticLayout};
use crate::points::{ControlPointSet, Point};
use crate::pose::BodyPose;
use crate::predict::TemplateLibrary;
use crate::raster::{self, image_dims, Dims, Mask};
use crate::schema::{default_schema, string_enum, ControlPointSchema, GarmentCategory};
use crate::style::{Closure, StyleVector};
use crate::warp::{warp_image, warp_split, WarpedGarment, DEFAULT_LAMBDA};

string_enum!(
    Stage {
        Load => "load",
        Validate => "validate",
        Predict => "predict",
        Edit => "edit",
        Coordinate => "coordinate",
        Warp => "warp",
        Composite => "composite",
        Output => "output",
    }
);

/// Whether a failure is the caller's input (validation) or happened while
/// rendering valid input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Validation,
    Render,
}

fn garment_suffix(garment: &Option<String>) -> String {
    garment.as_ref().map(|g| format!(" (garment {g})")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("{stage} failed{}: {message}", garment_suffix(.garment))]
pub struct PipelineError {
    pub stage: Stage,
    pub class: ErrorClass,
    pub garment: Option<String>,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, garment: Option<&str>, message: impl ToString) -> Self {
        let class = match stage {
            Stage::Load | Stage::Validate => ErrorClass::Validation,
            _ => ErrorClass::Render,
        };
        Self {
            stage,
            class,
            garment: garment.map(str::to_string),
            message: message.to_string(),
        }
    }

    pub fn validation(stage: Stage, garment: Option<&str>, message: impl ToString) -> Self {
        Self {
            class: ErrorClass::Validation,
            ..Self::new(stage, garment, message)
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinationMode {
    Off,
    #[default]
    Report,
    Fix,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_fill() -> [u8; 4] {
    [128, 128, 128, 255]
}

/// The on-disk outfit description. Relative paths resolve against the
/// directory holding the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutfitSpec {
    /// `[width, height]` in pixels; must match the person image.
    pub canvas: [u32; 2],
    pub person: PersonSpec,
    /// Innermost first.
    pub garments: Vec<GarmentSpec>,
    /// Template names, looked up in `template_dir` and then the caller's library.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub templates: Vec<String>,
    /// Template source text, applied after the named ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inline_templates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub coordination: CoordinationMode,
    /// RGBA written over occluded person pixels.
    #[serde(default = "default_fill")]
    pub occlusion_fill: [u8; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonSpec {
    pub image: PathBuf,
    pub pose: PathBuf,
    pub layout: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarmentSpec {
    /// Asset bundle directory.
    pub asset: PathBuf,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub style: BTreeMap<String, String>,
}

impl OutfitSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::new(Stage::Load, None, e))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Load, None, format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| PipelineError { message: format!("{}: {}", path.display(), e.message), ..e })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("outfit spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonScene {
    pub image: RgbaImage,
    pub pose: BodyPose,
    pub layout: SemanticLayout,
}

impl PersonScene {
    pub fn dims(&self) -> Dims {
        image_dims(&self.image)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Garment {
    pub asset: GarmentAsset,
    /// Style overrides; unset entries take category defaults.
    pub style: StyleVector,
}

/// A loaded, validated outfit.
#[derive(Debug, Clone, PartialEq)]
pub struct Outfit {
    pub person: PersonScene,
    pub garments: Vec<Garment>,
    pub templates: Vec<EditTemplate>,
    pub lambda: f64,
    pub coordination: CoordinationMode,
    pub occlusion_fill: Rgba<u8>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Outfit {
    /// An outfit with default settings and no templates.
    pub fn new(person: PersonScene, garments: Vec<Garment>) -> Self {
        Self {
            person,
            garments,
            templates: Vec::new(),
            lambda: DEFAULT_LAMBDA,
            coordination: CoordinationMode::default(),
            occlusion_fill: Rgba(default_fill()),
        }
    }

    pub fn canvas(&self) -> Dims {
        self.person.dims()
    }

    /// Loads everything `spec` references. Named templates resolve against the
    /// spec's `template_dir` first, then `library`.
    pub fn load(
        spec: &OutfitSpec,
        base: &Path,
        schema: &ControlPointSchema,
        library: &[EditTemplate],
    ) -> Result<Self> {
        let load_err = |m: String| PipelineError::new(Stage::Load, None, m);
        let p = &spec.person;
        let image = raster::load_rgba(&resolve(base, &p.image)).map_err(|e| load_err(e.to_string()))?;
        let pose_path = resolve(base, &p.pose);
        let pose_text = std::fs::read_to_string(&pose_path)
            .map_err(|e| load_err(format!("{}: {e}", pose_path.display())))?;
        let pose = BodyPose::from_toml(&pose_text).map_err(|e| load_err(format!("{}: {e}", pose_path.display())))?;
        let layout = SemanticLayout::load(&resolve(base, &p.layout)).map_err(|e| load_err(e.to_string()))?;

        let mut garments = Vec::with_capacity(spec.garments.len());
        for g in &spec.garments {
            let dir = resolve(base, &g.asset);
            let asset = GarmentAsset::load_bundle(&dir, schema).map_err(|e| load_err(e.to_string()))?;
            let style = StyleVector::from_map(&g.style)
                .map_err(|e| PipelineError::new(Stage::Load, Some(&asset.id), e))?;
            garments.push(Garment { asset, style });
        }

        let mut local = Vec::new();
        if let Some(dir) = &spec.template_dir {
            local = dsl::load_library(&resolve(base, dir), schema).map_err(|e| load_err(e.to_string()))?;
        }
        let mut templates = Vec::new();
        for name in &spec.templates {
            let t = local
                .iter()
                .chain(library)
                .find(|t| &t.name == name)
                .ok_or_else(|| load_err(format!("unknown template \"{name}\"")))?;
            templates.push(t.clone());
        }
        for src in &spec.inline_templates {
            templates.extend(dsl::parse_templates(src, schema).map_err(|e| load_err(e.to_string()))?);
        }

        let outfit = Outfit {
            person: PersonScene { image, pose, layout },
            garments,
            templates,
            lambda: spec.lambda,
            coordination: spec.coordination,
            occlusion_fill: Rgba(spec.occlusion_fill),
        };
        let canvas = Dims::new(spec.canvas[0], spec.canvas[1]);
        if outfit.canvas() != canvas {
            return Err(PipelineError::new(
                Stage::Validate,
                None,
                format!(
                    "canvas is {}x{} but the person image is {}x{}",
                    canvas.width,
                    canvas.height,
                    outfit.canvas().width,
                    outfit.canvas().height
                ),
            ));
        }
        outfit.validate(schema)?;
        Ok(outfit)
    }

    pub fn from_file(path: &Path, schema: &ControlPointSchema, library: &[EditTemplate]) -> Result<Self> {
        let spec = OutfitSpec::from_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::load(&spec, base, schema, library)
    }

    pub fn validate(&self, schema: &ControlPointSchema) -> Result<()> {
        let invalid = |g: Option<&str>, m: String| PipelineError::new(Stage::Validate, g, m);
        let canvas = self.canvas();
        if self.person.layout.dims() != canvas {
            return Err(invalid(None, "person layout and image dimensions differ".into()));
        }
        self.person.pose.validate().map_err(|e| invalid(None, e.to_string()))?;
        if (self.person.pose.canvas_aspect - canvas.aspect()).abs() > 1e-3 * canvas.aspect() {
            return Err(invalid(
                None,
                format!(
                    "pose canvas_aspect {} does not match the {}x{} canvas",
                    self.person.pose.canvas_aspect, canvas.width, canvas.height
                ),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid(None, format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.garments.is_empty() {
            return Err(invalid(None, "outfit has no garments".into()));
        }
        let mut ids = HashSet::new();
        let mut outer_seen: Option<&str> = None;
        for g in &self.garments {
            let a = &g.asset;
            if !ids.insert(a.id.as_str()) {
                return Err(invalid(Some(&a.id), "garment listed twice".into()));
            }
            a.validate(schema).map_err(|e| invalid(Some(&a.id), e.to_string()))?;
            match (a.category, outer_seen) {
                (GarmentCategory::Outerwear, _) => outer_seen = Some(&a.id),
                (GarmentCategory::Top | GarmentCategory::Dress, Some(o)) => {
                    return Err(invalid(
                        Some(&a.id),
                        format!("{} layered over outerwear {o}", a.category),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ApplicationOutcome {
    Applied {
        report: EditReport,
        /// The template changed the discrete style and the garment was
        /// re-predicted before its statements ran.
        restyled: bool,
    },
    Skipped {
        reason: String,
    },
}

/// One template considered for one garment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateApplication {
    pub template: String,
    pub garment: usize,
    pub garment_id: String,
    /// Id of the garment `other` resolved to.
    pub other: Option<String>,
    #[serde(flatten)]
    pub outcome: ApplicationOutcome,
}

impl TemplateApplication {
    pub fn applied(&self) -> Option<&EditReport> {
        match &self.outcome {
            ApplicationOutcome::Applied { report, .. } => Some(report),
            ApplicationOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinationReport {
    pub mode: CoordinationMode,
    /// Violations found on the edited points.
    pub violations: Vec<Violation>,
    /// Violations left after fixing; equals `violations` unless the mode is fix.
    pub remaining: Vec<Violation>,
}

/// Occluded person, draft and layouts for a set of warped garments.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    /// The person with every occluded layout region filled.
    pub occluded: RgbaImage,
    pub draft: RgbaImage,
    pub layout: SemanticLayout,
    /// Per garment, the final layout without that garment's class.
    pub garment_layouts: Vec<SemanticLayout>,
}

/// Everything a render produces. Vectors are aligned with the outfit's garments.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub predicted: Vec<ControlPointSet>,
    pub points: Vec<ControlPointSet>,
    pub edits: Vec<Vec<TemplateApplication>>,
    pub coordination: CoordinationReport,
    pub warped: Vec<WarpedGarment>,
    pub composite: Composite,
}

impl RenderResult {
    pub fn draft(&self) -> &RgbaImage {
        &self.composite.draft
    }

    pub fn layout(&self) -> &SemanticLayout {
        &self.composite.layout
    }

    /// Writes the draft, layouts, points and reports into `dir`.
    pub fn write(&self, outfit: &Outfit, dir: &Path) -> Result<Vec<PathBuf>> {
        let err = |m: String| PipelineError::new(Stage::Output, None, m);
        let io = |p: &Path, e: std::io::Error| err(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir.join("points")).map_err(|e| io(dir, e))?;
        let mut written = Vec::new();

        let c = &self.composite;
        for (name, img) in [("draft.png", &c.draft), ("occluded.png", &c.occluded)] {
            let p = dir.join(name);
            raster::save_image(img, &p).map_err(|e| err(e.to_string()))?;
            written.push(p);
        }
        let p = dir.join("layout.png");
        c.layout.save(&p).map_err(|e| err(e.to_string()))?;
        written.push(p);
        for (i, g) in outfit.garments.iter().enumerate() {
            let stem = format!("{i}_{}", file_safe(&g.asset.id));
            let p = dir.join(format!("layout_without_{stem}.png"));
            c.garment_layouts[i].save(&p).map_err(|e| err(e.to_string()))?;
            written.push(p);
            for (kind, set) in [("predicted", &self.predicted[i]), ("final", &self.points[i])] {
                let p = dir.join("points").join(format!("{stem}.{kind}.toml"));
                std::fs::write(&p, set.to_toml()).map_err(|e| io(&p, e))?;
                written.push(p);
            }
        }
        let p = dir.join("reports.json");
        std::fs::write(&p, self.reports_json(outfit)).map_err(|e| io(&p, e))?;
        written.push(p);
        Ok(written)
    }

    pub fn reports_json(&self, outfit: &Outfit) -> String {
        #[derive(Serialize)]
        struct GarmentEntry<'a> {
            index: usize,
            id: &'a str,
            category: GarmentCategory,
            style: BTreeMap<String, String>,
            edits: &'a [TemplateApplication],
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            garments: Vec<GarmentEntry<'a>>,
            coordination: &'a CoordinationReport,
        }
        let doc = Doc {
            garments: outfit
                .garments
                .iter()
                .enumerate()
                .map(|(i, g)| GarmentEntry {
                    index: i,
                    id: &g.asset.id,
                    category: g.asset.category,
                    style: self.points[i].style.to_map(),
                    edits: &self.edits[i],
                })
                .collect(),
            coordination: &self.coordination,
        };
        serde_json::to_string_pretty(&doc).expect("reports serialize")
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Schema plus canonical pose templates; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    pub schema: &'static ControlPointSchema,
    pub library: TemplateLibrary,
}

impl Default for Engine {
    fn default() -> Self {
        let schema = default_schema();
        Self {
            schema,
            library: TemplateLibrary::builtin(schema),
        }
    }
}

impl Engine {
    pub fn new(schema: &'static ControlPointSchema, library: TemplateLibrary) -> Self {
        Self { schema, library }
    }

    /// Predicts garment `i` with `style` laid over its spec overrides.
    pub fn predict(&self, outfit: &Outfit, i: usize, style: &StyleVector) -> Result<ControlPointSet> {
        let g = &outfit.garments[i];
        let style = g.style.overlay(style);
        self.library
            .find(g.asset.category, &style)
            .and_then(|t| t.fit(self.schema, &outfit.person.pose))
            .map_err(|e| PipelineError::new(Stage::Predict, Some(&g.asset.id), e))
    }

    pub fn predict_all(&self, outfit: &Outfit) -> Result<Vec<ControlPointSet>> {
        (0..outfit.garments.len())
            .map(|i| self.predict(outfit, i, &StyleVector::default()))
            .collect()
    }

    /// The garment `other` refers to for garment `i`: the nearest in layering
    /// order matching `requires`. Equal distance on both sides is an error.
    pub fn resolve_other(
        &self,
        outfit: &Outfit,
        i: usize,
        requires: &Selector,
        template: &str,
    ) -> Result<Option<usize>> {
        let mut best: Vec<usize> = Vec::new();
        let mut best_d = usize::MAX;
        for (j, g) in outfit.garments.iter().enumerate() {
            if j == i || !requires.matches(&g.asset) {
                continue;
            }
            let d = j.abs_diff(i);
            if d < best_d {
                best_d = d;
                best.clear();
            }
            if d == best_d {
                best.push(j);
            }
        }
        match best.as_slice() {
            [] => Ok(None),
            [j] => Ok(Some(*j)),
            many => Err(PipelineError::validation(
                Stage::Edit,
                Some(&outfit.garments[i].asset.id),
                format!(
                    "template \"{template}\": other is ambiguous between {}",
                    many.iter()
                        .map(|&j| outfit.garments[j].asset.id.as_str())
                        .collect::<Vec<_>>()
                        .join(" and ")
                ),
            )),
        }
    }

    /// Applies `t` to garment `i` given the current points of every garment.
    /// Returns the garment's new points; a skipped application returns them
    /// unchanged.
    pub fn apply_to(
        &self,
        outfit: &Outfit,
        points: &[ControlPointSet],
        t: &EditTemplate,
        i: usize,
    ) -> Result<(ControlPointSet, TemplateApplication)> {
        let g = &outfit.garments[i];
        let id = g.asset.id.as_str();
        let mut app = TemplateApplication {
            template: t.name.clone(),
            garment: i,
            garment_id: id.to_string(),
            other: None,
            outcome: ApplicationOutcome::Skipped {
                reason: String::new(),
            },
        };
        let skip = |mut app: TemplateApplication, reason: &str| {
            app.outcome = ApplicationOutcome::Skipped {
                reason: reason.to_string(),
            };
            Ok((points[i].clone(), app))
        };
        if !dsl::applicable(t, &g.asset) {
            return skip(app, "selector does not match");
        }
        let other = match &t.requires {
            None => None,
            Some(sel) => match self.resolve_other(outfit, i, sel, &t.name)? {
                None => return skip(app, "no garment in the outfit matches the requirement"),
                Some(j) => Some(j),
            },
        };
        app.other = other.map(|j| outfit.garments[j].asset.id.clone());

        let mut base = points[i].clone();
        let mut restyled = false;
        if t.sets_style() {
            let mut style = base.style;
            for s in &t.statements {
                if let Statement::SetStyle { entry, value } = s {
                    style
                        .set(entry, value)
                        .map_err(|e| PipelineError::new(Stage::Edit, Some(id), e))?;
                }
            }
            let cat = g.asset.category;
            if style.resolved_for(cat) != base.style.resolved_for(cat) {
                base = self.predict(outfit, i, &style).map_err(|e| PipelineError {
                    stage: Stage::Edit,
                    message: format!("template \"{}\": {}", t.name, e.message),
                    ..e
                })?;
                restyled = true;
            }
        }
        let opts = EditOptions {
            body_height: outfit.person.pose.body_height().ok(),
            ..EditOptions::default()
        };
        let other = other.map(|j| (&points[j], &outfit.garments[j].asset));
        let (out, report) = dsl::apply_template(t, self.schema, &base, &g.asset, other, &opts)
            .map_err(|e| PipelineError::new(Stage::Edit, Some(id), e))?;
        app.outcome = ApplicationOutcome::Applied { report, restyled };
        Ok((out, app))
    }

    /// Applies each template in order to every garment it selects.
    pub fn apply_templates(
        &self,
        outfit: &Outfit,
        points: &mut [ControlPointSet],
        templates: &[EditTemplate],
    ) -> Result<Vec<Vec<TemplateApplication>>> {
        let mut edits = vec![Vec::new(); outfit.garments.len()];
        for t in templates {
            for i in 0..outfit.garments.len() {
                if !dsl::applicable(t, &outfit.garments[i].asset) {
                    continue;
                }
                let (out, app) = self.apply_to(outfit, points, t, i)?;
                points[i] = out;
                edits[i].push(app);
            }
        }
        Ok(edits)
    }

    pub fn coordinate(&self, outfit: &Outfit, points: &mut [ControlPointSet]) -> Result<CoordinationReport> {
        let mode = outfit.coordination;
        if mode == CoordinationMode::Off {
            return Ok(CoordinationReport {
                mode,
                violations: Vec::new(),
                remaining: Vec::new(),
            });
        }
        let layers = |pts: &[ControlPointSet]| -> Vec<ControlPointSet> { pts.to_vec() };
        let snapshot = layers(points);
        let outfit_layers: Vec<Layer<'_>> = outfit
            .garments
            .iter()
            .zip(&snapshot)
            .map(|(g, k)| Layer {
                category: g.asset.category,
                points: k,
            })
            .collect();
        let violations = check_coordination(&outfit_layers);
        if mode == CoordinationMode::Report || violations.is_empty() {
            return Ok(CoordinationReport {
                mode,
                remaining: violations.clone(),
                violations,
            });
        }
        let fixed = fix_coordination(&outfit_layers, &violations, DEFAULT_MARGIN).map_err(|e| {
            let garment = match &e {
                crate::coordination::CoordinationError::DegenerateHull { outer } => Some(*outer),
                crate::coordination::CoordinationError::EmptyRegion { inner } => Some(*inner),
                _ => None,
            };
            PipelineError::new(
                Stage::Coordinate,
                garment.map(|i| outfit.garments[i].asset.id.as_str()),
                e,
            )
        })?;
        let after: Vec<Layer<'_>> = outfit
            .garments
            .iter()
            .zip(&fixed)
            .map(|(g, k)| Layer {
                category: g.asset.category,
                points: k,
            })
            .collect();
        let remaining = check_coordination(&after);
        points.clone_from_slice(&fixed);
        Ok(CoordinationReport {
            mode,
            violations,
            remaining,
        })
    }

    /// Warps garment `i` onto the canvas. Open outerwear is cut along its
    /// split line and each half is warped on its own.
    pub fn warp(&self, outfit: &Outfit, i: usize, points: &ControlPointSet) -> Result<WarpedGarment> {
        let g = &outfit.garments[i];
        let canvas = outfit.canvas();
        let open = g.asset.category == GarmentCategory::Outerwear
            && points.style.resolved_for(GarmentCategory::Outerwear).closure == Some(Closure::Open);
        let warped = if open {
            warp_split(&g.asset, self.schema, points, canvas, outfit.lambda)
        } else {
            warp_image(&g.asset, points, canvas, outfit.lambda)
        };
        warped.map_err(|e| PipelineError::new(Stage::Warp, Some(&g.asset.id), e))
    }

    /// Warps every garment, in parallel; the result is in layering order.
    pub fn warp_all(&self, outfit: &Outfit, points: &[ControlPointSet]) -> Result<Vec<WarpedGarment>> {
        (0..outfit.garments.len())
            .into_par_iter()
            .map(|i| self.warp(outfit, i, &points[i]))
            .collect()
    }

    /// Occludes the person and composites the warped garments innermost-first.
    pub fn compose(&self, outfit: &Outfit, warped: &[WarpedGarment]) -> Result<Composite> {
        let err = |m: String| PipelineError::new(Stage::Composite, None, m);
        let person = &outfit.person;
        let mut cleared: Vec<LayoutClass> = Vec::new();
        for g in &outfit.garments {
            let cat = g.asset.category;
            for c in std::iter::once(garment_class(cat)).chain(adjacency(cat).iter().copied()) {
                if !cleared.contains(&c) {
                    cleared.push(c);
                }
            }
        }
        let mut occluded = person.image.clone();
        for (x, y, px) in occluded.enumerate_pixels_mut() {
            if cleared.contains(&person.layout.get(x, y)) {
                *px = outfit.occlusion_fill;
            }
        }
        let mut draft = occluded.clone();
        for w in warped {
            raster::composite_over(&mut draft, &w.image).map_err(|e| err(e.to_string()))?;
        }
        let masks: Vec<(&Mask, GarmentCategory)> = warped
            .iter()
            .zip(&outfit.garments)
            .map(|(w, g)| (&w.mask, g.asset.category))
            .collect();
        let layout = rasterize_layout(&person.layout.clear(&cleared), &masks).map_err(|e| err(e.to_string()))?;
        let garment_layouts = outfit
            .garments
            .iter()
            .map(|g| layout.clear(&[garment_class(g.asset.category)]))
            .collect();
        Ok(Composite {
            occluded,
            draft,
            layout,
            garment_layouts,
        })
    }

    /// Coordination onward, for points already predicted and edited.
    pub fn finish(
        &self,
        outfit: &Outfit,
        predicted: Vec<ControlPointSet>,
        mut points: Vec<ControlPointSet>,
        edits: Vec<Vec<TemplateApplication>>,
    ) -> Result<RenderResult> {
        let coordination = self.coordinate(outfit, &mut points)?;
        let warped = self.warp_all(outfit, &points)?;
        let composite = self.compose(outfit, &warped)?;
        Ok(RenderResult {
            predicted,
            points,
            edits,
            coordination,
            warped,
            composite,
        })
    }

    pub fn render(&self, outfit: &Outfit) -> Result<RenderResult> {
        self.render_with(outfit, &outfit.templates)
    }

    /// Renders with `templates` in place of the outfit's own.
    pub fn render_with(&self, outfit: &Outfit, templates: &[EditTemplate]) -> Result<RenderResult> {
        let predicted = self.predict_all(outfit)?;
        let mut points = predicted.clone();
        let edits = self.apply_templates(outfit, &mut points, templates)?;
        self.finish(outfit, predicted, points, edits)
    }
}

/// Normalized distance from `p` to the nearest boundary pixel center of `mask`.
pub fn boundary_distance(mask: &Mask, p: Point) -> Option<f64> {
    let dims = mask.dims();
    mask.boundary_pixels()
        .into_iter()
        .map(|(x, y)| (dims.pixel_center(x, y) - p).norm())
        .min_by(f64::total_cmp)
}

/// Normalized distance from `p` to `mask`; zero when the pixel under `p` is set.
pub fn mask_distance(mask: &Mask, p: Point) -> Option<f64> {
    let dims = mask.dims();
    let (px, py) = dims.to_pixel(p);
    let (x, y) = (px.round(), py.round());
    if x >= 0.0 && y >= 0.0 && x < dims.width as f64 && y < dims.height as f64 && mask.get(x as u32, y as u32) {
        return Some(0.0);
    }
    boundary_distance(mask, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationStep {
    pub step: usize,
    pub factor: f64,
    pub result: RenderResult,
    /// Largest distance from a point the template moved to the silhouette
    /// boundary of its warped garment.
    pub deviation: f64,
}

/// Renders `template` in `steps` increments: step k scales every offset by
/// k/steps, so the edited points move a small amount each step.
pub fn interpolate(
    engine: &Engine,
    outfit: &Outfit,
    template: &EditTemplate,
    steps: usize,
) -> Result<Vec<InterpolationStep>> {
    if steps == 0 {
        return Err(PipelineError::new(Stage::Validate, None, "steps must be at least 1"));
    }
    (1..=steps)
        .map(|k| {
            let factor = k as f64 / steps as f64;
            let mut templates = outfit.templates.clone();
            templates.push(template.scaled_offsets(factor));
            let result = engine.render_with(outfit, &templates)?;
            let deviation = moved_point_deviation(&result, &template.name);
            Ok(InterpolationStep {
                step: k,
                factor,
                result,
                deviation,
            })
        })
        .collect()
}

fn moved_point_deviation(result: &RenderResult, template: &str) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, apps) in result.edits.iter().enumerate() {
        for report in apps.iter().filter(|a| a.template == template).filter_map(|a| a.applied()) {
            for m in &report.moved {
                let Some(p) = result.points[i].get(m.id) else { continue };
                if let Some(d) = boundary_distance(&result.warped[i].mask, p) {
                    worst = worst.max(d);
                }
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchOutcome {
    Rendered(Box<RenderResult>),
    Skipped { reason: String },
    Failed(PipelineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub garment_id: String,
    pub outcome: BatchOutcome,
}

/// Renders every catalog garment the template selects, alone on `person`.
/// Per-garment failures are collected, never fatal.
pub fn batch_apply(
    engine: &Engine,
    catalog: &[GarmentAsset],
    template: &EditTemplate,
    person: &PersonScene,
) -> Vec<BatchItem> {
    catalog
        .par_iter()
        .map(|asset| {
            let outcome = if !dsl::applicable(template, asset) {
                BatchOutcome::Skipped {
                    reason: format!("template \"{}\" does not select {}", template.name, asset.id),
                }
            } else {
                let mut outfit = Outfit::new(
                    person.clone(),
                    vec![Garment {
                        asset: asset.clone(),
                        style: StyleVector::default(),
                    }],
                );
                outfit.templates = vec![template.clone()];
                match outfit.validate(engine.schema).and_then(|_| engine.render(&outfit)) {
                    Ok(r) => BatchOutcome::Rendered(Box::new(r)),
                    Err(e) => BatchOutcome::Failed(e),
                }
            };
            BatchItem {
                garment_id: asset.id.clone(),
                outcome,
            }
        })
        .collect()
}
