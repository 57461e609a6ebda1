use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::{print_statement, Axis, EditTemplate, Expr, Number, Statement};
use crate::asset::GarmentAsset;
use crate::coordination::DEFAULT_MARGIN;
use crate::geometry::ConvexHull;
use crate::points::{ControlPointSet, Point};
use crate::schema::ControlPointSchema;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error("template \"{template}\" does not apply to garment {garment}")]
    NotApplicable { template: String, garment: String },
    #[error("template \"{template}\": requirement unmet: {reason}")]
    RequiresUnmet { template: String, reason: String },
    #[error("template \"{template}\": other garment has no point {point}")]
    AbsentOtherPoint { template: String, point: String },
    #[error("template \"{template}\" uses body_height but no pose was supplied")]
    MissingBodyHeight { template: String },
    #[error("template \"{template}\": the other garment's point hull is degenerate")]
    DegenerateHull { template: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditOptions {
    /// Hip-to-neck distance for `* body_height` literals.
    pub body_height: Option<f64>,
    /// Inward margin used by `clamp ... within other`.
    pub clamp_margin: f64,
}

impl Default for EditOptions {
    fn default() -> Self {
        Self {
            body_height: None,
            clamp_margin: DEFAULT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Applied,
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub index: usize,
    pub statement: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMove {
    pub id: usize,
    pub name: String,
    pub before: [f64; 2],
    pub after: [f64; 2],
}

/// What a template did to one garment. Every statement has exactly one entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EditReport {
    pub template: String,
    pub garment: String,
    pub entries: Vec<ReportEntry>,
    /// Net movement per point, in id order.
    pub moved: Vec<PointMove>,
    pub disabled: Vec<usize>,
    pub enabled: Vec<usize>,
    pub style: BTreeMap<String, String>,
    /// Coordinates written by more than one statement (last writer wins).
    pub overrides: Vec<String>,
}

impl EditReport {
    pub fn applied_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.outcome == Outcome::Applied)
            .count()
    }
}

/// Whether the template's selector matches the garment's metadata.
pub fn applicable(t: &EditTemplate, garment: &GarmentAsset) -> bool {
    t.selector.matches(garment)
}

fn resolve(n: &Number, t: &EditTemplate, opts: &EditOptions) -> Result<f64, EditError> {
    if n.body_height {
        let h = opts.body_height.ok_or_else(|| EditError::MissingBodyHeight {
            template: t.name.clone(),
        })?;
        Ok(n.value * h)
    } else {
        Ok(n.value)
    }
}

fn axis_of(p: Point, axis: Axis) -> f64 {
    match axis {
        Axis::X => p.x,
        Axis::Y => p.y,
    }
}

fn set_axis(p: &mut Point, axis: Axis, v: f64) {
    match axis {
        Axis::X => p.x = v,
        Axis::Y => p.y = v,
    }
}

/// Applies the statements in source order to a copy of `target`.
///
/// Style statements only rewrite the style vector; re-predicting points for a
/// new discrete style is the caller's job and must happen before the
/// coordinate statements are applied.
pub fn apply_template(
    t: &EditTemplate,
    schema: &ControlPointSchema,
    target: &ControlPointSet,
    target_asset: &GarmentAsset,
    other: Option<(&ControlPointSet, &GarmentAsset)>,
    opts: &EditOptions,
) -> Result<(ControlPointSet, EditReport), EditError> {
    if !applicable(t, target_asset) {
        return Err(EditError::NotApplicable {
            template: t.name.clone(),
            garment: target_asset.id.clone(),
        });
    }
    let other = match (&t.requires, other) {
        (Some(_), None) => {
            return Err(EditError::RequiresUnmet {
                template: t.name.clone(),
                reason: "no other garment supplied".into(),
            })
        }
        (Some(sel), Some((_, asset))) if !sel.matches(asset) => {
            return Err(EditError::RequiresUnmet {
                template: t.name.clone(),
                reason: format!("garment {} does not match", asset.id),
            })
        }
        (Some(_), o) => o,
        (None, _) => None,
    };
    let other_point = |name: &str| -> Result<Point, EditError> {
        let absent = || EditError::AbsentOtherPoint {
            template: t.name.clone(),
            point: name.to_string(),
        };
        let (points, _) = other.ok_or_else(absent)?;
        let id = schema.id_of(name).ok_or_else(absent)?;
        points.get(id).ok_or_else(absent)
    };

    let mut out = target.clone();
    let mut report = EditReport {
        template: t.name.clone(),
        garment: target_asset.id.clone(),
        ..Default::default()
    };
    let mut written: BTreeMap<(usize, Axis), usize> = BTreeMap::new();
    let present_matching = |out: &ControlPointSet, pattern: &str| -> Vec<usize> {
        schema
            .matching(pattern)
            .into_iter()
            .filter(|&i| out.present[i])
            .collect()
    };
    let skipped = |reason: &str| Outcome::Skipped {
        reason: reason.to_string(),
    };

    for (index, stmt) in t.statements.iter().enumerate() {
        let mut note_write = |id: usize, axis: Axis, overrides: &mut Vec<String>| {
            if let Some(prev) = written.insert((id, axis), index) {
                overrides.push(format!(
                    "{}.{} set by statement {} then {}",
                    schema.point(id).name,
                    axis.as_str(),
                    prev,
                    index
                ));
            }
        };
        let outcome = match stmt {
            Statement::Offset { pattern, dx, dy } => {
                let ids = present_matching(&out, pattern);
                let (dx, dy) = (resolve(dx, t, opts)?, resolve(dy, t, opts)?);
                for &id in &ids {
                    out.coords[id].x += dx;
                    out.coords[id].y += dy;
                }
                if ids.is_empty() {
                    skipped("no present point matches")
                } else {
                    Outcome::Applied
                }
            }
            Statement::SetAxis { point, axis, expr } => {
                let id = schema.id_of(point).expect("linted point name");
                let value = match expr {
                    Expr::Literal { value } => resolve(value, t, opts)?,
                    Expr::Other {
                        point,
                        axis,
                        offset,
                    } => {
                        let base = axis_of(other_point(point)?, *axis);
                        match offset {
                            Some(o) => base + resolve(o, t, opts)?,
                            None => base,
                        }
                    }
                };
                if out.present[id] {
                    set_axis(&mut out.coords[id], *axis, value);
                    note_write(id, *axis, &mut report.overrides);
                    Outcome::Applied
                } else {
                    skipped("target point absent")
                }
            }
            Statement::Align {
                pattern,
                point,
                axis,
            } => {
                let value = axis_of(other_point(point)?, *axis);
                let ids = present_matching(&out, pattern);
                for &id in &ids {
                    set_axis(&mut out.coords[id], *axis, value);
                    note_write(id, *axis, &mut report.overrides);
                }
                if ids.is_empty() {
                    skipped("no present point matches")
                } else {
                    Outcome::Applied
                }
            }
            Statement::Disable { pattern } => {
                let ids = present_matching(&out, pattern);
                for &id in &ids {
                    out.present[id] = false;
                    report.disabled.push(id);
                    report.enabled.retain(|&e| e != id);
                }
                if ids.is_empty() {
                    skipped("no present point matches")
                } else {
                    Outcome::Applied
                }
            }
            Statement::Enable { pattern } => {
                let ids: Vec<usize> = schema
                    .matching(pattern)
                    .into_iter()
                    .filter(|&i| !out.present[i] && schema.point(i).applies_to(target_asset.category))
                    .collect();
                for &id in &ids {
                    out.present[id] = true;
                    report.enabled.push(id);
                    report.disabled.retain(|&d| d != id);
                }
                if ids.is_empty() {
                    skipped("no absent applicable point matches")
                } else {
                    Outcome::Applied
                }
            }
            Statement::SetStyle { entry, value } => {
                out.style.set(entry, value).expect("linted style entry");
                report.style.insert(entry.clone(), value.clone());
                Outcome::Applied
            }
            Statement::ClampWithin { pattern } => {
                let (points, _) = other.expect("requires checked");
                let hull_pts: Vec<Point> = points.present_ids().map(|i| points.coords[i]).collect();
                let hull = ConvexHull::new(&hull_pts);
                if hull.is_degenerate() {
                    return Err(EditError::DegenerateHull {
                        template: t.name.clone(),
                    });
                }
                let ids = present_matching(&out, pattern);
                let mut moved = 0;
                for &id in &ids {
                    let p = out.coords[id];
                    let q = hull.pull_inside(p, opts.clamp_margin);
                    if q != p {
                        out.coords[id] = q;
                        moved += 1;
                    }
                }
                if ids.is_empty() {
                    skipped("no present point matches")
                } else if moved == 0 {
                    skipped("all points already inside")
                } else {
                    Outcome::Applied
                }
            }
        };
        report.entries.push(ReportEntry {
            index,
            statement: print_statement(stmt),
            outcome,
        });
    }

    report.disabled.sort_unstable();
    report.enabled.sort_unstable();
    for id in 0..out.coords.len() {
        if out.coords[id] != target.coords[id] {
            report.moved.push(PointMove {
                id,
                name: schema.point(id).name.clone(),
                before: [target.coords[id].x, target.coords[id].y],
                after: [out.coords[id].x, out.coords[id].y],
            });
        }
    }
    Ok((out, report))
}
