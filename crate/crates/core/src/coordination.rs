//! Multi-garment coordination: garments layered under outerwear must stay
//! inside the outerwear's silhouette, approximated by the convex hull of its
//! present control points.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::ConvexHull;
use crate::points::{ControlPointSet, Point};
use crate::schema::GarmentCategory;

/// Default inward margin for fixes, in normalized units.
pub const DEFAULT_MARGIN: f64 = 0.01;
/// Containment tolerance of the check; keeps the check boundary-inclusive
/// under rounding.
pub const CHECK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Layer index of the inner garment.
    pub inner: usize,
    /// Layer index of the outerwear it sticks out of.
    pub outer: usize,
    pub point_id: usize,
    /// Distance outside the hull.
    pub distance: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordinationError {
    #[error("outer garment {outer}: control-point hull is degenerate")]
    DegenerateHull { outer: usize },
    #[error("garment {inner}: the hulls of the outerwear above it do not overlap")]
    EmptyRegion { inner: usize },
    #[error("margin must be finite and >= 0, got {0}")]
    InvalidMargin(f64),
}

/// One garment of an outfit, listed innermost first.
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub category: GarmentCategory,
    pub points: &'a ControlPointSet,
}

fn hull_of(points: &ControlPointSet) -> ConvexHull {
    let pts: Vec<Point> = points.present_ids().map(|i| points.coords[i]).collect();
    ConvexHull::new(&pts)
}

fn outer_indices<'a>(outfit: &'a [Layer<'_>], inner: usize) -> impl Iterator<Item = usize> + 'a {
    (inner + 1..outfit.len()).filter(move |&o| outfit[o].category == GarmentCategory::Outerwear)
}

/// Every present point of a garment that lies outside the hull of an
/// outerwear layered above it. Degenerate hulls are skipped here and reported
/// by [`fix_coordination`].
pub fn check_coordination(outfit: &[Layer<'_>]) -> Vec<Violation> {
    let hulls: Vec<Option<ConvexHull>> = outfit
        .iter()
        .map(|l| (l.category == GarmentCategory::Outerwear).then(|| hull_of(l.points)))
        .collect();
    let mut out = Vec::new();
    for inner in 0..outfit.len() {
        for outer in outer_indices(outfit, inner) {
            let hull = hulls[outer].as_ref().expect("outerwear hull");
            if hull.is_degenerate() {
                continue;
            }
            for id in outfit[inner].points.present_ids() {
                let p = outfit[inner].points.coords[id];
                if !hull.contains(p, CHECK_EPS) {
                    out.push(Violation {
                        inner,
                        outer,
                        point_id: id,
                        distance: hull.signed_distance(p),
                    });
                }
            }
        }
    }
    out
}

/// Projects each violating point into the region shared by all outerwear above
/// its garment, then `margin` further in. Returns the edited point sets.
///
/// Layers are fixed outermost first against the already-fixed outerwear. When
/// an outerwear layer moves, every point beneath it is re-checked against the
/// new region, so one pass leaves [`check_coordination`] empty.
pub fn fix_coordination(
    outfit: &[Layer<'_>],
    violations: &[Violation],
    margin: f64,
) -> Result<Vec<ControlPointSet>, CoordinationError> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(CoordinationError::InvalidMargin(margin));
    }
    let mut fixed: Vec<ControlPointSet> = outfit.iter().map(|l| l.points.clone()).collect();
    let mut moved = vec![false; outfit.len()];
    for inner in (0..outfit.len()).rev() {
        let mut ids: Vec<usize> = violations
            .iter()
            .filter(|v| v.inner == inner)
            .map(|v| v.point_id)
            .collect();
        let outer_moved = outer_indices(outfit, inner).any(|o| moved[o]);
        if ids.is_empty() && !outer_moved {
            continue;
        }
        let mut region: Option<ConvexHull> = None;
        for outer in outer_indices(outfit, inner) {
            let hull = hull_of(&fixed[outer]);
            if hull.is_degenerate() {
                return Err(CoordinationError::DegenerateHull { outer });
            }
            region = Some(match region {
                None => hull,
                Some(r) => r.intersection(&hull),
            });
        }
        let Some(region) = region else { continue };
        if region.is_degenerate() {
            return Err(CoordinationError::EmptyRegion { inner });
        }
        if outer_moved {
            let k = &fixed[inner];
            ids.extend(k.present_ids().filter(|&id| !region.contains(k.coords[id], CHECK_EPS)));
        }
        for id in ids {
            let p = fixed[inner].coords[id];
            let q = region.pull_inside(p, margin);
            if q != p {
                fixed[inner].coords[id] = q;
                moved[inner] = true;
            }
        }
    }
    Ok(fixed)
}
