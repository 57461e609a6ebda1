//! Controllable garment drape engine.
//!
//! Garments are placed on a 2D body through a fixed schema of semantic control
//! points. Points are predicted from the body pose, edited by instance-independent
//! rule templates, and drive thin-plate-spline warps of the neutral garment
//! image, which are composited innermost-first over the occluded person.

pub mod asset;
pub mod coordination;
pub mod demo;
pub mod dsl;
pub mod geometry;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod points;
pub mod pose;
pub mod predict;
pub mod raster;
pub mod schema;
pub mod style;
pub mod tps;
pub mod warp;

pub use asset::{GarmentAsset, Gender};
pub use layout::{LayoutClass, SemanticLayout};
pub use points::{ControlPointSet, Point, Vector};
pub use pose::{BodyPose, Joint};
pub use predict::TemplateLibrary;
pub use raster::{Dims, Mask};
pub use schema::{default_schema, ControlPointSchema, GarmentCategory};
pub use style::{Closure, StyleVector, Tuck};
