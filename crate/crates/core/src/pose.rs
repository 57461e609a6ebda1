//! Body poses and 2D similarity fitting between joint sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::points::{Point, Vector};
use crate::schema::string_enum;

string_enum!(
    /// The 18 body joints. Like control points, `left_*` joints are on the
    /// image-left side.
    Joint {
        Head => "head",
        Neck => "neck",
        LeftShoulder => "left_shoulder",
        RightShoulder => "right_shoulder",
        LeftElbow => "left_elbow",
        RightElbow => "right_elbow",
        LeftWrist => "left_wrist",
        RightWrist => "right_wrist",
        LeftHip => "left_hip",
        RightHip => "right_hip",
        LeftKnee => "left_knee",
        RightKnee => "right_knee",
        LeftAnkle => "left_ankle",
        RightAnkle => "right_ankle",
        LeftEye => "left_eye",
        RightEye => "right_eye",
        LeftEar => "left_ear",
        RightEar => "right_ear",
    }
);

pub const JOINT_COUNT: usize = 18;

impl Joint {
    pub fn index(self) -> usize {
        Joint::ALL.iter().position(|&j| j == self).unwrap()
    }
}

/// Joints that must be detected for any fit.
pub const ANCHOR_JOINTS: [Joint; 5] = [
    Joint::Neck,
    Joint::LeftShoulder,
    Joint::RightShoulder,
    Joint::LeftHip,
    Joint::RightHip,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("malformed pose: {0}")]
    Malformed(String),
    #[error("unknown joint \"{0}\"")]
    UnknownJoint(String),
    #[error("required joint {0} is missing (confidence 0)")]
    MissingAnchor(Joint),
    #[error("joint {joint}: {reason}")]
    InvalidJoint { joint: Joint, reason: String },
    #[error("degenerate fit: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointObservation {
    pub position: Point,
    pub confidence: f64,
}

impl Default for JointObservation {
    fn default() -> Self {
        Self {
            position: Point::origin(),
            confidence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyPose {
    pub joints: [JointObservation; JOINT_COUNT],
    /// Canvas width / height.
    pub canvas_aspect: f64,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PoseDoc {
    pub canvas_aspect: f64,
    pub joints: BTreeMap<String, JointDoc>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct JointDoc {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

impl BodyPose {
    pub fn new(canvas_aspect: f64) -> Self {
        Self {
            joints: [JointObservation::default(); JOINT_COUNT],
            canvas_aspect,
        }
    }

    pub fn with_joint(mut self, joint: Joint, position: Point, confidence: f64) -> Self {
        self.joints[joint.index()] = JointObservation {
            position,
            confidence,
        };
        self
    }

    pub fn joint(&self, joint: Joint) -> &JointObservation {
        &self.joints[joint.index()]
    }

    pub fn detected(&self, joint: Joint) -> Option<Point> {
        let obs = self.joint(joint);
        (obs.confidence > 0.0).then_some(obs.position)
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.canvas_aspect.is_finite() && self.canvas_aspect > 0.0) {
            return Err(PoseError::Malformed(format!(
                "canvas_aspect must be positive, got {}",
                self.canvas_aspect
            )));
        }
        for (&joint, obs) in Joint::ALL.iter().zip(&self.joints) {
            if !(0.0..=1.0).contains(&obs.confidence) {
                return Err(PoseError::InvalidJoint {
                    joint,
                    reason: format!("confidence {} outside [0,1]", obs.confidence),
                });
            }
            if !(obs.position.x.is_finite() && obs.position.y.is_finite()) {
                return Err(PoseError::InvalidJoint {
                    joint,
                    reason: "non-finite position".into(),
                });
            }
        }
        for joint in ANCHOR_JOINTS {
            if self.detected(joint).is_none() {
                return Err(PoseError::MissingAnchor(joint));
            }
        }
        Ok(())
    }

    /// Normalized canvas coordinates to an isotropic frame (x scaled by aspect).
    pub fn to_metric(&self, p: Point) -> Point {
        Point::new(p.x * self.canvas_aspect, p.y)
    }

    pub fn from_metric(&self, p: Point) -> Point {
        Point::new(p.x / self.canvas_aspect, p.y)
    }

    /// Hip-to-neck distance in normalized canvas units.
    pub fn body_height(&self) -> Result<f64, PoseError> {
        let neck = self.detected(Joint::Neck).ok_or(PoseError::MissingAnchor(Joint::Neck))?;
        let l = self
            .detected(Joint::LeftHip)
            .ok_or(PoseError::MissingAnchor(Joint::LeftHip))?;
        let r = self
            .detected(Joint::RightHip)
            .ok_or(PoseError::MissingAnchor(Joint::RightHip))?;
        Ok((nalgebra::center(&l, &r) - neck).norm())
    }

    /// Applies `f` to every joint position, keeping confidences.
    pub fn map_joints(&self, f: impl Fn(Point) -> Point) -> Self {
        let mut out = self.clone();
        for j in out.joints.iter_mut() {
            j.position = f(j.position);
        }
        out
    }

    pub(crate) fn from_doc(doc: PoseDoc) -> Result<Self, PoseError> {
        let mut pose = BodyPose::new(doc.canvas_aspect);
        for (name, j) in doc.joints {
            let joint: Joint = name.parse().map_err(|_| PoseError::UnknownJoint(name))?;
            pose.joints[joint.index()] = JointObservation {
                position: Point::new(j.x, j.y),
                confidence: j.confidence,
            };
        }
        Ok(pose)
    }

    pub(crate) fn to_doc(&self) -> PoseDoc {
        PoseDoc {
            canvas_aspect: self.canvas_aspect,
            joints: Joint::ALL
                .iter()
                .zip(&self.joints)
                .filter(|(_, o)| o.confidence > 0.0)
                .map(|(j, o)| {
                    (
                        j.as_str().to_string(),
                        JointDoc {
                            x: o.position.x,
                            y: o.position.y,
                            confidence: o.confidence,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PoseError> {
        let doc: PoseDoc = toml::from_str(text).map_err(|e| PoseError::Malformed(e.to_string()))?;
        let pose = Self::from_doc(doc)?;
        pose.validate()?;
        Ok(pose)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_doc()).expect("pose serializes")
    }
}

/// `p ↦ scale · R(rotation) · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Vector,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            translation: Vector::zeros(),
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.translation.x,
            self.scale * (s * p.x + c * p.y) + self.translation.y,
        )
    }
}

/// Least-squares similarity mapping `src` onto `dst` (2D Procrustes without
/// reflection).
pub fn fit_similarity(src: &[Point], dst: &[Point]) -> Result<Similarity, PoseError> {
    if src.len() != dst.len() {
        return Err(PoseError::Degenerate(format!(
            "{} source vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 2 {
        return Err(PoseError::Degenerate("need at least 2 points".into()));
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point]| pts.iter().fold(Vector::zeros(), |acc, p| acc + p.coords) / n;
    let src_mean = mean(src);
    let dst_mean = mean(dst);

    // Treating points as complex numbers, the optimum is c / |a|² with
    // c = Σ conj(a_i)·b_i over centered points.
    let (mut re, mut im, mut norm, mut spread) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let a = p.coords - src_mean;
        let b = q.coords - dst_mean;
        re += a.x * b.x + a.y * b.y;
        im += a.x * b.y - a.y * b.x;
        norm += a.norm_squared();
        spread += b.norm_squared();
    }
    if norm < 1e-18 {
        return Err(PoseError::Degenerate("source points are coincident".into()));
    }
    if spread < 1e-18 {
        return Err(PoseError::Degenerate("destination points are coincident".into()));
    }
    let scale = re.hypot(im) / norm;
    let rotation = im.atan2(re);
    let rotated = Similarity {
        scale,
        rotation,
        translation: Vector::zeros(),
    }
    .apply(Point::from(src_mean));
    Ok(Similarity {
        scale,
        rotation,
        translation: dst_mean - rotated.coords,
    })
}
