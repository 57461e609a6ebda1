//! One editing session: an outfit, its current control points and the edit
//! history. Everything here is synchronous; the HTTP layer serializes access.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use drape_core::dsl::{parse_template, print_template, EditTemplate};
use drape_core::pipeline::{
    CoordinationReport, Engine, Outfit, OutfitSpec, PipelineError, TemplateApplication,
};
use drape_core::raster::encode_png;
use drape_core::warp::WarpedGarment;
use drape_core::{ControlPointSet, GarmentCategory, Point};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// A point addressed by schema id or name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointRef {
    Id(usize),
    Name(String),
}

/// Requested change to one point: exactly one of `delta` and `position`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointChange {
    pub point: PointRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
}

/// A recorded edit. Point edits store resolved absolute positions and template
/// edits store canonical source, so replay does not depend on the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    Points {
        garment: usize,
        moves: Vec<(usize, [f64; 2])>,
    },
    Template {
        source: String,
        garment: Option<usize>,
    },
}

#[derive(Debug, Clone)]
struct HistoryEntry {
    edit: Edit,
    before: Vec<ControlPointSet>,
}

#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub hash: String,
    pub png: Arc<Vec<u8>>,
}

impl RenderedImage {
    fn new(png: Vec<u8>) -> Self {
        let digest = Sha256::digest(&png);
        let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            hash,
            png: Arc::new(png),
        }
    }
}

#[derive(Debug, Clone)]
struct Render {
    draft: RenderedImage,
    layout: RenderedImage,
    coordination: CoordinationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GarmentSummary {
    pub index: usize,
    pub id: String,
    pub category: GarmentCategory,
    pub style: BTreeMap<String, String>,
    /// One entry per schema point; `null` where absent.
    pub points: Vec<Option<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenderLinks {
    pub draft: String,
    pub layout: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub garments: Vec<GarmentSummary>,
    pub history_depth: usize,
    pub render: RenderLinks,
    pub coordination: CoordinationReport,
}

/// What is persisted: enough to rebuild the session by replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub id: String,
    pub spec: OutfitSpec,
    pub base: PathBuf,
    pub history: Vec<Edit>,
}

pub struct Session {
    pub id: String,
    spec: OutfitSpec,
    base: PathBuf,
    outfit: Outfit,
    engine: Arc<Engine>,
    initial: Vec<ControlPointSet>,
    points: Vec<ControlPointSet>,
    history: Vec<HistoryEntry>,
    warps: Vec<Option<(ControlPointSet, WarpedGarment)>>,
    render: Option<Render>,
    /// Changed since the last snapshot.
    pub dirty: bool,
}

fn coords(p: Point) -> [f64; 2] {
    [p.x, p.y]
}

impl Session {
    /// Loads the outfit, predicts and applies the spec's templates, renders.
    pub fn create(
        id: String,
        spec: OutfitSpec,
        base: &Path,
        engine: Arc<Engine>,
        library: &[EditTemplate],
    ) -> Result<Self, SessionError> {
        let outfit = Outfit::load(&spec, base, engine.schema, library)?;
        let mut points = engine.predict_all(&outfit)?;
        engine.apply_templates(&outfit, &mut points, &outfit.templates)?;
        let mut s = Session {
            id,
            spec,
            base: base.to_path_buf(),
            warps: vec![None; outfit.garments.len()],
            outfit,
            engine,
            initial: points.clone(),
            points,
            history: Vec::new(),
            render: None,
            dirty: true,
        };
        s.rerender()?;
        Ok(s)
    }

    pub fn restore(doc: SnapshotDoc, engine: Arc<Engine>, library: &[EditTemplate]) -> Result<Self, SessionError> {
        let mut s = Self::create(doc.id, doc.spec, &doc.base, engine, library)?;
        for edit in doc.history {
            let before = s.points.clone();
            s.points = s.replay_one(&s.points, &edit)?;
            s.history.push(HistoryEntry { edit, before });
        }
        s.rerender()?;
        s.dirty = false;
        Ok(s)
    }

    pub fn snapshot(&self) -> SnapshotDoc {
        SnapshotDoc {
            id: self.id.clone(),
            spec: self.spec.clone(),
            base: self.base.clone(),
            history: self.history.iter().map(|h| h.edit.clone()).collect(),
        }
    }

    pub fn points(&self) -> &[ControlPointSet] {
        &self.points
    }

    pub fn history_depth(&self) -> usize {
        self.history.len()
    }

    pub fn draft(&self) -> &RenderedImage {
        &self.render.as_ref().expect("sessions are rendered on creation").draft
    }

    pub fn layout(&self) -> &RenderedImage {
        &self.render.as_ref().expect("sessions are rendered on creation").layout
    }

    /// The image with `hash`, if it is this session's current draft or layout.
    pub fn image(&self, hash: &str) -> Option<Arc<Vec<u8>>> {
        [self.draft(), self.layout()]
            .into_iter()
            .find(|i| i.hash == hash)
            .map(|i| i.png.clone())
    }

    fn garment_index(&self, garment: usize) -> Result<(), SessionError> {
        if garment < self.outfit.garments.len() {
            Ok(())
        } else {
            Err(SessionError::NotFound(format!("garment {garment}")))
        }
    }

    /// Moves points of one garment. Coordinates outside `[0,1]` are clamped
    /// and reported in the returned warnings. An empty change list is a no-op.
    pub fn patch(&mut self, garment: usize, changes: &[PointChange]) -> Result<Vec<String>, SessionError> {
        self.garment_index(garment)?;
        if changes.is_empty() {
            return Ok(Vec::new());
        }
        let schema = self.engine.schema;
        let mut current = self.points[garment].clone();
        let mut moves = Vec::with_capacity(changes.len());
        let mut warnings = Vec::new();
        for c in changes {
            let id = match &c.point {
                PointRef::Id(i) if *i < schema.points().len() => *i,
                PointRef::Id(i) => return Err(SessionError::Invalid(format!("unknown point id {i}"))),
                PointRef::Name(n) => schema
                    .id_of(n)
                    .ok_or_else(|| SessionError::Invalid(format!("unknown point '{n}'")))?,
            };
            let name = &schema.point(id).name;
            let p = current
                .get(id)
                .ok_or_else(|| SessionError::Invalid(format!("point {name} is absent on this garment")))?;
            let target = match (c.delta, c.position) {
                (Some([dx, dy]), None) => [p.x + dx, p.y + dy],
                (None, Some(pos)) => pos,
                _ => {
                    return Err(SessionError::Invalid(format!(
                        "point {name}: give exactly one of delta and position"
                    )))
                }
            };
            if !target.iter().all(|v| v.is_finite()) {
                return Err(SessionError::Invalid(format!("point {name}: non-finite coordinates")));
            }
            let clamped = target.map(|v| v.clamp(0.0, 1.0));
            if clamped != target {
                warnings.push(format!(
                    "point {name}: ({}, {}) clamped to ({}, {})",
                    target[0], target[1], clamped[0], clamped[1]
                ));
            }
            current.coords[id] = Point::new(clamped[0], clamped[1]);
            moves.push((id, clamped));
        }
        self.commit(Edit::Points { garment, moves })?;
        Ok(warnings)
    }

    /// Applies `t` to one garment, or to every garment it selects when
    /// `garment` is `None`. Nothing applied is a conflict and leaves the state
    /// unchanged.
    pub fn apply_template(
        &mut self,
        t: &EditTemplate,
        garment: Option<usize>,
    ) -> Result<Vec<TemplateApplication>, SessionError> {
        if let Some(g) = garment {
            self.garment_index(g)?;
        }
        let (points, apps) = self.run_template(&self.points, t, garment)?;
        if !apps.iter().any(|a| a.applied().is_some()) {
            let reasons: Vec<String> = apps
                .iter()
                .map(|a| match &a.outcome {
                    drape_core::pipeline::ApplicationOutcome::Skipped { reason } => {
                        format!("{}: {reason}", a.garment_id)
                    }
                    _ => unreachable!(),
                })
                .collect();
            let detail = if reasons.is_empty() {
                "it selects no garment in this outfit".to_string()
            } else {
                reasons.join("; ")
            };
            return Err(SessionError::Conflict(format!("template \"{}\" not applied: {detail}", t.name)));
        }
        let edit = Edit::Template {
            source: print_template(t),
            garment,
        };
        let before = std::mem::replace(&mut self.points, points);
        self.history.push(HistoryEntry { edit, before });
        self.dirty = true;
        if let Err(e) = self.rerender() {
            self.undo_unrendered();
            return Err(e);
        }
        Ok(apps)
    }

    pub fn undo(&mut self) -> Result<(), SessionError> {
        if self.history.is_empty() {
            return Err(SessionError::Conflict("nothing to undo".into()));
        }
        self.undo_unrendered();
        self.dirty = true;
        self.rerender()
    }

    fn undo_unrendered(&mut self) {
        if let Some(h) = self.history.pop() {
            self.points = h.before;
        }
    }

    fn commit(&mut self, edit: Edit) -> Result<(), SessionError> {
        let next = self.replay_one(&self.points, &edit)?;
        let before = std::mem::replace(&mut self.points, next);
        self.history.push(HistoryEntry { edit, before });
        self.dirty = true;
        if let Err(e) = self.rerender() {
            self.undo_unrendered();
            return Err(e);
        }
        Ok(())
    }

    fn run_template(
        &self,
        points: &[ControlPointSet],
        t: &EditTemplate,
        garment: Option<usize>,
    ) -> Result<(Vec<ControlPointSet>, Vec<TemplateApplication>), SessionError> {
        let mut out = points.to_vec();
        let targets: Vec<usize> = match garment {
            Some(g) => vec![g],
            None => (0..self.outfit.garments.len())
                .filter(|&i| drape_core::dsl::applicable(t, &self.outfit.garments[i].asset))
                .collect(),
        };
        let mut apps = Vec::new();
        for i in targets {
            let (k, app) = self.engine.apply_to(&self.outfit, &out, t, i)?;
            out[i] = k;
            apps.push(app);
        }
        Ok((out, apps))
    }

    fn replay_one(&self, points: &[ControlPointSet], edit: &Edit) -> Result<Vec<ControlPointSet>, SessionError> {
        let mut out = points.to_vec();
        match edit {
            Edit::Points { garment, moves } => {
                self.garment_index(*garment)?;
                for &(id, [x, y]) in moves {
                    out[*garment].coords[id] = Point::new(x, y);
                }
            }
            Edit::Template { source, garment } => {
                let t = parse_template(source, self.engine.schema)
                    .map_err(|e| SessionError::Invalid(format!("recorded template: {e}")))?;
                out = self.run_template(points, &t, *garment)?.0;
            }
        }
        Ok(out)
    }

    /// Current points rebuilt from the initial prediction and the history.
    pub fn replay(&self) -> Result<Vec<ControlPointSet>, SessionError> {
        let mut points = self.initial.clone();
        for h in &self.history {
            points = self.replay_one(&points, &h.edit)?;
        }
        Ok(points)
    }

    /// Re-warps garments whose (coordinated) points changed and recomposes.
    fn rerender(&mut self) -> Result<(), SessionError> {
        let mut points = self.points.clone();
        let coordination = self.engine.coordinate(&self.outfit, &mut points)?;
        let stale: Vec<usize> = (0..points.len())
            .filter(|&i| !matches!(&self.warps[i], Some((k, _)) if *k == points[i]))
            .collect();
        let fresh: Vec<(usize, WarpedGarment)> = std::thread::scope(|scope| {
            let handles: Vec<_> = stale
                .iter()
                .map(|&i| {
                    let (engine, outfit, k) = (&self.engine, &self.outfit, &points[i]);
                    scope.spawn(move || engine.warp(outfit, i, k).map(|w| (i, w)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("warp thread"))
                .collect::<Result<_, _>>()
        })?;
        for (i, w) in fresh {
            self.warps[i] = Some((points[i].clone(), w));
        }
        let warped: Vec<WarpedGarment> = self
            .warps
            .iter()
            .map(|w| w.as_ref().expect("every garment warped").1.clone())
            .collect();
        let composite = self.engine.compose(&self.outfit, &warped)?;
        self.render = Some(Render {
            draft: RenderedImage::new(encode_png(&composite.draft)),
            layout: RenderedImage::new(composite.layout.encode_png()),
            coordination,
        });
        Ok(())
    }

    pub fn summary(&self) -> SessionSummary {
        let render = self.render.as_ref().expect("sessions are rendered on creation");
        SessionSummary {
            id: self.id.clone(),
            garments: self
                .outfit
                .garments
                .iter()
                .zip(&self.points)
                .enumerate()
                .map(|(index, (g, k))| GarmentSummary {
                    index,
                    id: g.asset.id.clone(),
                    category: g.asset.category,
                    style: k.style.to_map(),
                    points: (0..k.coords.len()).map(|i| k.get(i).map(coords)).collect(),
                })
                .collect(),
            history_depth: self.history.len(),
            render: RenderLinks {
                draft: format!("/images/{}.png", render.draft.hash),
                layout: format!("/images/{}.png", render.layout.hash),
            },
            coordination: render.coordination.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use drape_core::demo;
    use drape_core::dsl::shipped_library;

    fn session(dir: &Path) -> Session {
        let spec_path = demo::write_outfit(dir).unwrap();
        let spec = OutfitSpec::from_file(&spec_path).unwrap();
        let engine = Arc::new(Engine::default());
        let lib = shipped_library(engine.schema);
        Session::create("s1".into(), spec, dir, engine, &lib).unwrap()
    }

    fn template(name: &str) -> EditTemplate {
        shipped_library(drape_core::default_schema())
            .into_iter()
            .find(|t| t.name == name)
            .unwrap()
    }

    #[test]
    fn patch_undo_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        let start = s.points().to_vec();
        let draft0 = s.draft().hash.clone();

        assert!(s.patch(2, &[]).unwrap().is_empty());
        assert_eq!(s.history_depth(), 0);
        assert_eq!(s.draft().hash, draft0);

        let change = PointChange {
            point: PointRef::Name("split_left_mid".into()),
            delta: Some([-0.03, 0.0]),
            position: None,
        };
        s.patch(2, &[change]).unwrap();
        assert_eq!(s.history_depth(), 1);
        assert_ne!(s.draft().hash, draft0);
        assert_eq!(s.replay().unwrap(), s.points());

        s.apply_template(&template("open_wider"), Some(2)).unwrap();
        assert_eq!(s.replay().unwrap(), s.points());

        s.undo().unwrap();
        s.undo().unwrap();
        assert_eq!(s.points(), &start[..]);
        assert_eq!(s.draft().hash, draft0);
        assert!(matches!(s.undo(), Err(SessionError::Conflict(_))));
    }

    #[test]
    fn moved_split_point_drags_the_silhouette() {
        use drape_core::pipeline::boundary_distance;
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        let id = drape_core::default_schema().id_of("split_left_mid").unwrap();
        let mask_before = s.warps[2].as_ref().unwrap().1.mask.clone();
        s.patch(
            2,
            &[PointChange {
                point: PointRef::Id(id),
                delta: Some([-0.03, 0.0]),
                position: None,
            }],
        )
        .unwrap();
        let p = s.points()[2].coords[id];
        let mask_after = &s.warps[2].as_ref().unwrap().1.mask;
        let after = boundary_distance(mask_after, p).unwrap();
        let before = boundary_distance(&mask_before, p).unwrap();
        assert!(after < 0.02, "{after}");
        assert!(before > after + 0.01, "old boundary {before}, new {after}");
    }

    #[test]
    fn clamping_and_bad_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        let warnings = s
            .patch(
                0,
                &[PointChange {
                    point: PointRef::Name("hem_center".into()),
                    delta: None,
                    position: Some([0.5, 1.4]),
                }],
            )
            .unwrap();
        assert_eq!(warnings.len(), 1);
        let hem = drape_core::default_schema().id_of("hem_center").unwrap();
        assert_eq!(s.points()[0].coords[hem].y, 1.0);

        let absent = PointChange {
            point: PointRef::Name("crotch".into()),
            delta: Some([0.0, 0.0]),
            position: None,
        };
        assert!(matches!(s.patch(0, &[absent]), Err(SessionError::Invalid(_))));
        assert!(matches!(s.patch(9, &[]), Err(SessionError::NotFound(_))));
        assert_eq!(s.history_depth(), 1);
    }

    #[test]
    fn inapplicable_template_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        let before = s.points().to_vec();
        let e = s.apply_template(&template("waist_up"), Some(1)).unwrap_err();
        assert!(matches!(e, SessionError::Conflict(_)), "{e}");
        assert_eq!(s.points(), &before[..]);
        assert_eq!(s.history_depth(), 0);
    }

    #[test]
    fn snapshot_restore_reproduces_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        s.apply_template(&template("waist_up"), None).unwrap();
        s.patch(
            1,
            &[PointChange {
                point: PointRef::Id(0),
                delta: Some([0.01, 0.01]),
                position: None,
            }],
        )
        .unwrap();
        let doc = s.snapshot();
        let text = serde_json::to_string(&doc).unwrap();
        let doc: SnapshotDoc = serde_json::from_str(&text).unwrap();
        let engine = Arc::new(Engine::default());
        let lib = shipped_library(engine.schema);
        let r = Session::restore(doc, engine, &lib).unwrap();
        assert_eq!(r.points(), s.points());
        assert_eq!(r.history_depth(), 2);
        assert_eq!(r.draft().hash, s.draft().hash);
    }
}
