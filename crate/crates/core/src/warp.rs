//! Garment warping onto the person canvas.
//!
//! The warp is fitted backward (canvas → garment image) over the control points
//! present in both the asset and the on-body set, then every canvas pixel is
//! back-mapped and sampled bilinearly from the in-mask neighbours of the neutral
//! image. Output colors are convex combinations of at most four source pixels,
//! so the garment's appearance is resampled, never synthesized.

use image::{Rgba, RgbaImage};
use rayon::prelude::*;
use thiserror::Error;

use crate::asset::GarmentAsset;
use crate::points::{ControlPointSet, Point};
use crate::raster::{self, check_dims, Dims, Mask, RasterError};
use crate::schema::{ControlPointSchema, Side};
use crate::tps::{TpsError, TpsWarp};

/// Default TPS smoothing in normalized units.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("need at least 3 shared control points, found {0}")]
    InsufficientCorrespondences(usize),
    #[error("warp fit failed: {0}")]
    Fit(#[from] TpsError),
    #[error("asset {0} has no split polyline")]
    NoSplitLine(String),
    #[error("split polyline of {id} covers y in [{top:.4}, {bottom:.4}] but the mask spans [{mask_top:.4}, {mask_bottom:.4}]")]
    SplitSpan {
        id: String,
        top: f64,
        bottom: f64,
        mask_top: f64,
        mask_bottom: f64,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpHandles {
    /// Garment image → canvas.
    pub forward: TpsWarp,
    /// Canvas → garment image.
    pub backward: TpsWarp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedGarment {
    pub image: RgbaImage,
    /// Nonzero-alpha support of `image`.
    pub mask: Mask,
    /// One entry per independently warped piece (two for split outerwear).
    pub warps: Vec<WarpHandles>,
}

impl WarpedGarment {
    pub fn dims(&self) -> Dims {
        raster::image_dims(&self.image)
    }
}

fn correspondences(asset: &GarmentAsset, on_body: &ControlPointSet) -> (Vec<Point>, Vec<Point>) {
    asset
        .source_points
        .shared_ids(on_body)
        .into_iter()
        .map(|i| (asset.source_points.coords[i], on_body.coords[i]))
        .unzip()
}

/// Fits forward and backward warps between the asset and on-body points.
pub fn fit_warps(
    asset: &GarmentAsset,
    on_body: &ControlPointSet,
    lambda: f64,
) -> Result<WarpHandles, WarpError> {
    let (garment_pts, body_pts) = correspondences(asset, on_body);
    if garment_pts.len() < 3 {
        return Err(WarpError::InsufficientCorrespondences(garment_pts.len()));
    }
    Ok(WarpHandles {
        forward: TpsWarp::fit(&garment_pts, &body_pts, lambda)?,
        backward: TpsWarp::fit(&body_pts, &garment_pts, lambda)?,
    })
}

pub fn warp_image(
    asset: &GarmentAsset,
    on_body: &ControlPointSet,
    canvas: Dims,
    lambda: f64,
) -> Result<WarpedGarment, WarpError> {
    let handles = fit_warps(asset, on_body, lambda)?;
    let image = resample(asset, &handles.backward, canvas);
    let mask = Mask::from_alpha(&image);
    Ok(WarpedGarment {
        image,
        mask,
        warps: vec![handles],
    })
}

fn resample(asset: &GarmentAsset, backward: &TpsWarp, canvas: Dims) -> RgbaImage {
    let src_dims = asset.dims();
    let width = canvas.width as usize;
    let mut buf = vec![0u8; canvas.area() * 4];
    buf.par_chunks_mut(width * 4)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let q = backward.transform(canvas.pixel_center(x as u32, y as u32));
                let (px, py) = src_dims.to_pixel(q);
                let (nx, ny) = (px.round(), py.round());
                if nx < 0.0 || ny < 0.0 || nx >= src_dims.width as f64 || ny >= src_dims.height as f64 {
                    continue;
                }
                if !asset.mask.get(nx as u32, ny as u32) {
                    continue;
                }
                if let Some(Rgba(p)) = raster::sample_masked(&asset.image, &asset.mask, px, py) {
                    row[x * 4..x * 4 + 4].copy_from_slice(&p);
                }
            }
        });
    RgbaImage::from_raw(canvas.width, canvas.height, buf).expect("buffer sized to canvas")
}

fn polyline_x(line: &[Point], y: f64) -> f64 {
    if y <= line[0].y {
        return line[0].x;
    }
    for w in line.windows(2) {
        if y <= w[1].y {
            let t = (y - w[0].y) / (w[1].y - w[0].y);
            return w[0].x + t * (w[1].x - w[0].x);
        }
    }
    line[line.len() - 1].x
}

/// Cuts split outerwear into left and right halves along its polyline.
///
/// Masks partition the original exactly. Points go to the half of their side;
/// center points flagged `shared_on_split` go to both.
pub fn split_garment(
    asset: &GarmentAsset,
    schema: &ControlPointSchema,
) -> Result<(GarmentAsset, GarmentAsset), WarpError> {
    let line = asset
        .split_polyline
        .as_ref()
        .filter(|l| l.len() >= 2)
        .ok_or_else(|| WarpError::NoSplitLine(asset.id.clone()))?;
    let dims = asset.dims();
    let (top, bottom) = (line[0].y, line[line.len() - 1].y);
    if let Some((y0, y1)) = asset.mask.row_extent() {
        let mask_top = dims.pixel_center(0, y0).y;
        let mask_bottom = dims.pixel_center(0, y1).y;
        if top > mask_top || bottom < mask_bottom {
            return Err(WarpError::SplitSpan {
                id: asset.id.clone(),
                top,
                bottom,
                mask_top,
                mask_bottom,
            });
        }
    }

    let mut left_mask = Mask::new(dims);
    let mut right_mask = Mask::new(dims);
    for y in 0..dims.height {
        let cut = polyline_x(line, dims.pixel_center(0, y).y);
        for x in 0..dims.width {
            if asset.mask.get(x, y) {
                if dims.pixel_center(x, y).x < cut {
                    left_mask.set(x, y, true);
                } else {
                    right_mask.set(x, y, true);
                }
            }
        }
    }

    let half = |side: Side, mask: Mask, suffix: &str| {
        let mut points = asset.source_points.clone();
        for def in schema.points() {
            let keep = def.side == side || (def.side == Side::Center && def.shared_on_split);
            points.present[def.id] &= keep;
        }
        GarmentAsset {
            id: format!("{}/{suffix}", asset.id),
            mask,
            source_points: points,
            ..asset.clone()
        }
    };
    Ok((
        half(Side::Left, left_mask, "left"),
        half(Side::Right, right_mask, "right"),
    ))
}

/// Right half composited over the left; mask is the union.
pub fn merge_warped(left: &WarpedGarment, right: &WarpedGarment) -> Result<WarpedGarment, WarpError> {
    check_dims(left.dims(), right.dims())?;
    let mut image = left.image.clone();
    raster::composite_over(&mut image, &right.image)?;
    let mask = left.mask.union(&right.mask)?;
    debug_assert_eq!(mask, Mask::from_alpha(&image));
    Ok(WarpedGarment {
        image,
        mask,
        warps: left.warps.iter().chain(&right.warps).cloned().collect(),
    })
}

/// Warps outerwear as two independently fitted halves and merges them.
pub fn warp_split(
    asset: &GarmentAsset,
    schema: &ControlPointSchema,
    on_body: &ControlPointSet,
    canvas: Dims,
    lambda: f64,
) -> Result<WarpedGarment, WarpError> {
    let (left, right) = split_garment(asset, schema)?;
    let (l, r) = rayon::join(
        || warp_image(&left, on_body, canvas, lambda),
        || warp_image(&right, on_body, canvas, lambda),
    );
    merge_warped(&l?, &r?)
}
