//! Neutral garment assets and their on-disk bundles.
//!
//! A bundle is a directory holding `image.png` (RGBA, straight alpha),
//! `mask.png`, `points.toml` (control points in garment-image normalized
//! coordinates) and `meta.toml`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::points::{ControlPointSet, Point, PointsError};
use crate::raster::{self, image_dims, Dims, Mask, RasterError};
use crate::schema::{string_enum, ControlPointSchema, GarmentCategory};

string_enum!(
    Gender {
        Female => "female",
        Male => "male",
        Unisex => "unisex",
    }
);

impl Gender {
    /// Whether a selector asking for `wanted` accepts this garment. Unisex
    /// garments satisfy any gender condition.
    pub fn satisfies(self, wanted: Gender) -> bool {
        self == wanted || self == Gender::Unisex
    }
}

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("asset {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("asset bundle {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("asset bundle {path}: {source}")]
    Raster {
        path: String,
        #[source]
        source: RasterError,
    },
    #[error("asset bundle {path}: {source}")]
    Points {
        path: String,
        #[source]
        source: PointsError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarmentAsset {
    pub id: String,
    pub category: GarmentCategory,
    pub tags: BTreeSet<String>,
    pub gender: Gender,
    pub image: RgbaImage,
    pub mask: Mask,
    pub source_points: ControlPointSet,
    /// Vertical cut line in garment-image normalized coordinates, y increasing.
    pub split_polyline: Option<Vec<Point>>,
}

#[derive(Serialize, Deserialize)]
struct MetaDoc {
    id: String,
    category: String,
    #[serde(default)]
    tags: BTreeSet<String>,
    #[serde(default = "unisex")]
    gender: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split_polyline: Option<Vec<[f64; 2]>>,
}

fn unisex() -> String {
    "unisex".into()
}

impl GarmentAsset {
    pub fn dims(&self) -> Dims {
        image_dims(&self.image)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }

    pub fn validate(&self, schema: &ControlPointSchema) -> Result<(), AssetError> {
        let invalid = |reason: String| AssetError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.mask.dims() != self.dims() {
            return Err(invalid("mask and image dimensions differ".into()));
        }
        if self.mask.is_empty() {
            return Err(invalid("mask is empty".into()));
        }
        if self.source_points.present != schema.applicability_mask(self.category) {
            return Err(invalid(format!(
                "source point presence does not match {} applicability",
                self.category
            )));
        }
        match (&self.split_polyline, self.category) {
            (Some(line), GarmentCategory::Outerwear) => {
                if line.len() < 2 {
                    return Err(invalid("split polyline needs at least 2 vertices".into()));
                }
                if line.windows(2).any(|w| w[1].y <= w[0].y) {
                    return Err(invalid("split polyline y must increase".into()));
                }
            }
            (None, GarmentCategory::Outerwear) => {
                return Err(invalid("outerwear requires a split polyline".into()))
            }
            (Some(_), c) => return Err(invalid(format!("{c} must not carry a split polyline"))),
            (None, _) => {}
        }
        Ok(())
    }

    pub fn load_bundle(dir: &Path, schema: &ControlPointSchema) -> Result<Self, AssetError> {
        let path = dir.display().to_string();
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name)).map_err(|e| AssetError::Io {
                path: path.clone(),
                reason: format!("{name}: {e}"),
            })
        };
        let meta: MetaDoc = toml::from_str(&read("meta.toml")?).map_err(|e| AssetError::Io {
            path: path.clone(),
            reason: format!("meta.toml: {e}"),
        })?;
        let bad_meta = |reason: String| AssetError::Invalid {
            id: meta.id.clone(),
            reason,
        };
        let category = meta.category.parse().map_err(bad_meta)?;
        let gender = meta.gender.parse().map_err(bad_meta)?;
        let source_points =
            ControlPointSet::from_toml(&read("points.toml")?).map_err(|source| AssetError::Points {
                path: path.clone(),
                source,
            })?;
        let raster_err = |source| AssetError::Raster {
            path: path.clone(),
            source,
        };
        let image = raster::load_rgba(&dir.join("image.png")).map_err(raster_err)?;
        let mask = Mask::load_png(&dir.join("mask.png")).map_err(raster_err)?;
        let asset = GarmentAsset {
            id: meta.id.clone(),
            category,
            tags: meta.tags,
            gender,
            image,
            mask,
            source_points,
            split_polyline: meta
                .split_polyline
                .map(|v| v.into_iter().map(|[x, y]| Point::new(x, y)).collect()),
        };
        asset.validate(schema)?;
        Ok(asset)
    }

    pub fn save_bundle(&self, dir: &Path) -> Result<(), AssetError> {
        let path = dir.display().to_string();
        let io = |e: std::io::Error| AssetError::Io {
            path: path.clone(),
            reason: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let meta = MetaDoc {
            id: self.id.clone(),
            category: self.category.to_string(),
            tags: self.tags.clone(),
            gender: self.gender.to_string(),
            split_polyline: self
                .split_polyline
                .as_ref()
                .map(|v| v.iter().map(|p| [p.x, p.y]).collect()),
        };
        std::fs::write(dir.join("meta.toml"), toml::to_string(&meta).expect("meta serializes"))
            .map_err(io)?;
        std::fs::write(dir.join("points.toml"), self.source_points.to_toml()).map_err(io)?;
        let raster_err = |source| AssetError::Raster {
            path: path.clone(),
            source,
        };
        raster::save_image(&self.image, &dir.join("image.png")).map_err(raster_err)?;
        self.mask.save_png(&dir.join("mask.png")).map_err(raster_err)?;
        Ok(())
    }
}

/// Bundle directories directly under `root` (those containing `meta.toml`),
/// sorted by path.
pub fn catalog_dirs(root: &Path) -> Result<Vec<PathBuf>, AssetError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| AssetError::Io {
            path: root.display().to_string(),
            reason: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.toml").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
