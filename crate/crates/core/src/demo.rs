//! Synthetic garments, people and poses for demos and tests.
//!
//! Garments are drawn from the canonical templates: the template points are
//! jittered, cropped into a garment image frame and joined into an outline that
//! becomes the mask. The result is a flat product shot whose control points lie
//! on (or inside) its silhouette.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asset::{Gender, GarmentAsset};
use crate::layout::{LayoutClass, SemanticLayout};
use crate::points::{ControlPointSet, Point};
use crate::pose::{BodyPose, Joint};
use crate::predict::{reference_pose, TemplateLibrary};
use crate::pipeline::{CoordinationMode, GarmentSpec, OutfitSpec, PersonSpec, PipelineError, Stage};
use crate::raster::{self, fill_capsule, fill_ellipse, fill_polygon, Dims, Mask};
use crate::schema::{ControlPointSchema, GarmentCategory, PointGroup, Side};
use crate::style::StyleVector;
use crate::warp::DEFAULT_LAMBDA;

pub const CANVAS: Dims = Dims {
    width: 512,
    height: 768,
};

/// Garment image pixels per canvas pixel.
const GARMENT_SCALE: f64 = 0.75;
const FRAME_PAD: f64 = 0.015;

const UPPER_LEFT: &[&str] = &[
    "collar_left",
    "shoulder_left",
    "sleeve_outer_left_elbow",
    "cuff_outer_left",
    "cuff_inner_left",
    "sleeve_inner_left_elbow",
    "armpit_left",
    "torso_side_left_upper",
    "torso_side_left_lower",
    "waistline_left",
];
const HEM: &[&str] = &["hem_left", "hem_left_mid", "hem_center", "hem_right_mid", "hem_right"];
const LEG_LEFT: &[&str] = &[
    "thigh_outer_left",
    "knee_outer_left",
    "ankle_outer_left",
    "ankle_inner_left",
    "knee_inner_left",
    "thigh_inner_left",
];

fn mirrored(names: &[&str]) -> Vec<String> {
    names.iter().rev().map(|n| n.replace("left", "right")).collect()
}

/// Outline of a garment in clockwise image order, starting at the top left.
/// Names not applicable to the category are skipped.
fn outline(category: GarmentCategory) -> Vec<String> {
    let s = |v: &[&str]| v.iter().map(|n| n.to_string()).collect::<Vec<_>>();
    match category {
        GarmentCategory::Top | GarmentCategory::Outerwear | GarmentCategory::Dress => {
            let mut v = s(UPPER_LEFT);
            v.extend(s(HEM));
            v.extend(mirrored(UPPER_LEFT));
            v.push("collar_center".into());
            v
        }
        GarmentCategory::Skirt => {
            let mut v = s(&["waistline_left", "waistline_center", "waistline_right"]);
            v.extend(s(HEM).into_iter().rev());
            v
        }
        GarmentCategory::Bottom => {
            let mut v = s(&["waistline_left", "waistline_center", "waistline_right"]);
            v.extend(LEG_LEFT.iter().map(|n| n.replace("left", "right")));
            v.push("crotch".into());
            v.extend(s(LEG_LEFT).into_iter().rev());
            v
        }
    }
}

fn builtin() -> &'static TemplateLibrary {
    static LIB: std::sync::OnceLock<TemplateLibrary> = std::sync::OnceLock::new();
    LIB.get_or_init(|| TemplateLibrary::builtin(crate::schema::default_schema()))
}

/// The template geometry a neutral garment is drawn from: closed for
/// outerwear (split points on the center line), untucked for tops.
fn neutral_points(category: GarmentCategory) -> ControlPointSet {
    let style = match category {
        GarmentCategory::Outerwear => StyleVector::default().with_closure(crate::style::Closure::Closed),
        _ => StyleVector::default(),
    };
    let t = builtin().find(category, &style).expect("built-in template");
    let mut points = t.points.clone();
    if category == GarmentCategory::Outerwear {
        // The closed template hides the split edge; in the flat garment it
        // runs down the center line.
        let schema = crate::schema::default_schema();
        for id in schema.group_ids(PointGroup::SplitEdge) {
            points.present[id] = true;
        }
    }
    points
}

/// A synthetic neutral garment. Different seeds vary proportions, colors and
/// pattern.
pub fn garment(
    schema: &ControlPointSchema,
    category: GarmentCategory,
    id: &str,
    seed: u64,
) -> GarmentAsset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = neutral_points(category);
    let top = base
        .present_ids()
        .map(|i| base.coords[i].y)
        .fold(f64::INFINITY, f64::min);
    let (sx, sy) = (rng.gen_range(0.92..1.08), rng.gen_range(0.95..1.05));
    let mut canvas_pts = base.clone();
    canvas_pts.style = StyleVector::default();
    for i in base.present_ids() {
        let def = schema.point(i);
        let p = base.coords[i];
        let mut q = Point::new(0.5 + (p.x - 0.5) * sx, top + (p.y - top) * sy);
        let pinned = def.group == PointGroup::SplitEdge;
        if !pinned {
            if def.side != Side::Center {
                q.x += rng.gen_range(-0.003..0.003);
            }
            q.y += rng.gen_range(-0.003..0.003);
        }
        canvas_pts.coords[i] = q;
    }
    if category == GarmentCategory::Outerwear {
        // Split points sit on the center line at their hem/neck heights.
        for id in schema.group_ids(PointGroup::SplitEdge) {
            canvas_pts.coords[id].x = 0.5;
        }
    }

    let present: Vec<Point> = canvas_pts.present_ids().map(|i| canvas_pts.coords[i]).collect();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &present {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (x0, y0, x1, y1) = (x0 - FRAME_PAD, y0 - FRAME_PAD, x1 + FRAME_PAD, y1 + FRAME_PAD);
    let dims = Dims::new(
        ((x1 - x0) * CANVAS.width as f64 * GARMENT_SCALE).ceil() as u32,
        ((y1 - y0) * CANVAS.height as f64 * GARMENT_SCALE).ceil() as u32,
    );
    let to_frame = |p: Point| Point::new((p.x - x0) / (x1 - x0), (p.y - y0) / (y1 - y0));
    let source_points = canvas_pts.map_coords(to_frame);

    let polygon: Vec<Point> = outline(category)
        .iter()
        .filter_map(|n| schema.id_of(n))
        .filter_map(|i| source_points.get(i))
        .collect();
    let mut mask = Mask::new(dims);
    fill_polygon(&mut mask, &polygon);

    let image = texture(&mut rng, &mask);
    let split_polyline = (category == GarmentCategory::Outerwear).then(|| {
        let cx = to_frame(Point::new(0.5, 0.0)).x;
        vec![Point::new(cx, 0.0), Point::new(cx, 1.0)]
    });
    let mut tags = std::collections::BTreeSet::new();
    tags.insert(format!("demo_{category}"));
    if category == GarmentCategory::Outerwear && seed.is_multiple_of(2) {
        tags.insert("cropped_jacket".into());
    }
    GarmentAsset {
        id: id.to_string(),
        category,
        tags,
        gender: [Gender::Female, Gender::Male, Gender::Unisex][(seed % 3) as usize],
        image,
        mask,
        source_points,
        split_polyline,
    }
}

fn texture(rng: &mut ChaCha8Rng, mask: &Mask) -> RgbaImage {
    let base: [u8; 3] = [rng.gen_range(30..220), rng.gen_range(30..220), rng.gen_range(30..220)];
    let accent: [u8; 3] = [255 - base[0], 255 - base[1] / 2, 255 - base[2]];
    let period = rng.gen_range(6..16u32);
    let checker = rng.gen_bool(0.5);
    let dims = mask.dims();
    RgbaImage::from_fn(dims.width, dims.height, |x, y| {
        if !mask.get(x, y) {
            return Rgba([0, 0, 0, 0]);
        }
        let band = if checker {
            (x / period + y / period) % 2 == 0
        } else {
            (y / period) % 2 == 0
        };
        let c = if band { base } else { accent };
        Rgba([c[0], c[1], c[2], 255])
    })
}

/// A catalog of `n` garments of one category with ids `{prefix}_{k:02}`.
pub fn catalog(
    schema: &ControlPointSchema,
    category: GarmentCategory,
    prefix: &str,
    n: usize,
    seed: u64,
) -> Vec<GarmentAsset> {
    (0..n)
        .map(|k| garment(schema, category, &format!("{prefix}_{k:02}"), seed.wrapping_mul(1000).wrapping_add(k as u64)))
        .collect()
}

/// The templates' reference pose with the arms swung slightly outward.
pub fn pose() -> BodyPose {
    let mut pose = reference_pose(builtin()).expect("built-in templates").clone();
    let shift = |pose: &mut BodyPose, joint: Joint, dx: f64, dy: f64| {
        let j = &mut pose.joints[joint.index()];
        j.position = Point::new(j.position.x + dx, j.position.y + dy);
    };
    shift(&mut pose, Joint::LeftElbow, -0.012, 0.0);
    shift(&mut pose, Joint::RightElbow, 0.012, 0.0);
    shift(&mut pose, Joint::LeftWrist, -0.025, -0.01);
    shift(&mut pose, Joint::RightWrist, 0.025, -0.01);
    pose.canvas_aspect = CANVAS.aspect();
    pose
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub image: RgbaImage,
    pub layout: SemanticLayout,
}

fn class_color(class: LayoutClass) -> [u8; 3] {
    match class {
        LayoutClass::Background => [236, 236, 232],
        LayoutClass::Hair => [70, 45, 30],
        LayoutClass::Face => [232, 190, 160],
        LayoutClass::NecklineSkin | LayoutClass::Arms | LayoutClass::Legs => [222, 178, 148],
        LayoutClass::Top => [245, 245, 245],
        LayoutClass::Bottom => [60, 60, 70],
        LayoutClass::Shoes => [30, 30, 30],
        other => other.color(),
    }
}

/// A synthetic person in base clothing (a plain top and shorts), with a layout
/// drawn from the pose.
pub fn person(canvas: Dims, pose: &BodyPose) -> Person {
    let j = |joint: Joint| pose.joint(joint).position;
    let px = canvas.width as f64 / 512.0;
    let mut layers: Vec<(LayoutClass, Mask)> = Vec::new();
    let mut add = |class: LayoutClass, draw: &dyn Fn(&mut Mask)| {
        let mut m = Mask::new(canvas);
        draw(&mut m);
        layers.push((class, m));
    };
    add(LayoutClass::Legs, &|m| {
        for (hip, knee, ankle) in [
            (Joint::LeftHip, Joint::LeftKnee, Joint::LeftAnkle),
            (Joint::RightHip, Joint::RightKnee, Joint::RightAnkle),
        ] {
            fill_capsule(m, j(hip), j(knee), 20.0 * px);
            fill_capsule(m, j(knee), j(ankle), 15.0 * px);
        }
    });
    add(LayoutClass::Bottom, &|m| {
        let (l, r) = (j(Joint::LeftHip), j(Joint::RightHip));
        let (lk, rk) = (j(Joint::LeftKnee), j(Joint::RightKnee));
        let mid = |a: Point, b: Point, t: f64| a + (b - a) * t;
        fill_polygon(
            m,
            &[
                Point::new(l.x - 0.04, l.y - 0.02),
                Point::new(r.x + 0.04, r.y - 0.02),
                mid(r, rk, 0.3) + crate::points::Vector::new(0.045, 0.0),
                mid(r, rk, 0.3) - crate::points::Vector::new(0.03, 0.0),
                Point::new(0.5 * (l.x + r.x), l.y + 0.06),
                mid(l, lk, 0.3) + crate::points::Vector::new(0.03, 0.0),
                mid(l, lk, 0.3) - crate::points::Vector::new(0.045, 0.0),
            ],
        );
    });
    add(LayoutClass::Top, &|m| {
        let (ls, rs) = (j(Joint::LeftShoulder), j(Joint::RightShoulder));
        let (lh, rh) = (j(Joint::LeftHip), j(Joint::RightHip));
        fill_polygon(
            m,
            &[
                Point::new(ls.x - 0.01, ls.y),
                Point::new(rs.x + 0.01, rs.y),
                Point::new(rh.x + 0.025, rh.y),
                Point::new(lh.x - 0.025, lh.y),
            ],
        );
    });
    add(LayoutClass::Arms, &|m| {
        for (s, e, w) in [
            (Joint::LeftShoulder, Joint::LeftElbow, Joint::LeftWrist),
            (Joint::RightShoulder, Joint::RightElbow, Joint::RightWrist),
        ] {
            fill_capsule(m, j(s), j(e), 14.0 * px);
            fill_capsule(m, j(e), j(w), 11.0 * px);
        }
    });
    add(LayoutClass::NecklineSkin, &|m| {
        let neck = j(Joint::Neck);
        fill_capsule(m, neck - crate::points::Vector::new(0.0, 0.04), neck + crate::points::Vector::new(0.0, 0.035), 22.0 * px);
    });
    add(LayoutClass::Face, &|m| {
        fill_ellipse(m, j(Joint::Head), 0.065, 0.06);
    });
    add(LayoutClass::Hair, &|m| {
        let h = j(Joint::Head);
        let mut cap = Mask::new(m.dims());
        fill_ellipse(&mut cap, h - crate::points::Vector::new(0.0, 0.015), 0.075, 0.065);
        for y in 0..m.dims().height {
            for x in 0..m.dims().width {
                let c = m.dims().pixel_center(x, y);
                if cap.get(x, y) && c.y < h.y - 0.02 {
                    m.set(x, y, true);
                }
            }
        }
    });
    add(LayoutClass::Shoes, &|m| {
        for a in [Joint::LeftAnkle, Joint::RightAnkle] {
            fill_ellipse(m, j(a) + crate::points::Vector::new(0.0, 0.012), 0.035, 0.018);
        }
    });

    let mut layout = SemanticLayout::new(canvas);
    for (class, mask) in &layers {
        layout.paint(mask, *class).expect("same canvas");
    }
    let image = RgbaImage::from_fn(canvas.width, canvas.height, |x, y| {
        let c = class_color(layout.get(x, y));
        // Gentle vertical shading so the draft is not flat.
        let shade = 1.0 - 0.08 * (y as f64 / canvas.height as f64);
        Rgba([
            (c[0] as f64 * shade).round() as u8,
            (c[1] as f64 * shade).round() as u8,
            (c[2] as f64 * shade).round() as u8,
            255,
        ])
    });
    Person { image, layout }
}

/// Writes the demo outfit (a top and a skirt under an open coat, front-tucked)
/// into `dir` and returns the spec path.
pub fn write_outfit(dir: &Path) -> Result<PathBuf, PipelineError> {
    let schema = crate::schema::default_schema();
    let err = |m: String| PipelineError::new(Stage::Output, None, m);
    let pose = pose();
    let person = person(CANVAS, &pose);
    std::fs::create_dir_all(dir).map_err(|e| err(format!("{}: {e}", dir.display())))?;
    raster::save_image(&person.image, &dir.join("person.png")).map_err(|e| err(e.to_string()))?;
    person.layout.save(&dir.join("layout.png")).map_err(|e| err(e.to_string()))?;
    std::fs::write(dir.join("pose.toml"), pose.to_toml()).map_err(|e| err(e.to_string()))?;

    let pieces = [
        (GarmentCategory::Skirt, "skirt", 11, BTreeMap::new()),
        (GarmentCategory::Top, "top", 12, BTreeMap::new()),
        (
            GarmentCategory::Outerwear,
            "coat",
            13,
            BTreeMap::from([("closure".to_string(), "open".to_string())]),
        ),
    ];
    let mut garments = Vec::new();
    for (category, name, seed, style) in pieces {
        let rel = PathBuf::from("garments").join(name);
        garment(schema, category, &format!("demo_{name}"), seed)
            .save_bundle(&dir.join(&rel))
            .map_err(|e| err(e.to_string()))?;
        garments.push(GarmentSpec { asset: rel, style });
    }
    let spec = OutfitSpec {
        canvas: [CANVAS.width, CANVAS.height],
        person: PersonSpec {
            image: "person.png".into(),
            pose: "pose.toml".into(),
            layout: "layout.png".into(),
        },
        garments,
        templates: vec!["front_tuck_skirt".into()],
        inline_templates: Vec::new(),
        template_dir: None,
        lambda: DEFAULT_LAMBDA,
        coordination: CoordinationMode::Report,
        occlusion_fill: [128, 128, 128, 255],
    };
    let path = dir.join("outfit.toml");
    std::fs::write(&path, spec.to_toml()).map_err(|e| err(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;

    #[test]
    fn garments_validate_and_contain_their_points() {
        let schema = default_schema();
        for (k, &cat) in GarmentCategory::ALL.iter().enumerate() {
            let g = garment(schema, cat, "g", k as u64);
            g.validate(schema).unwrap();
            let dims = g.dims();
            let inside = g
                .source_points
                .present_ids()
                .filter(|&i| {
                    let (x, y) = dims.to_pixel(g.source_points.coords[i]);
                    let (x, y) = (x.round().clamp(0.0, dims.width as f64 - 1.0), y.round().clamp(0.0, dims.height as f64 - 1.0));
                    // Within a pixel of the mask.
                    (-1i64..=1).any(|dx| (-1i64..=1).any(|dy| {
                        let (u, v) = (x as i64 + dx, y as i64 + dy);
                        u >= 0 && v >= 0 && u < dims.width as i64 && v < dims.height as i64 && g.mask.get(u as u32, v as u32)
                    }))
                })
                .count();
            // collar_center sits in the neckline notch.
            assert!(inside + 1 >= g.source_points.present_count(), "{cat}: {inside}");
        }
    }

    #[test]
    fn garments_are_deterministic() {
        let schema = default_schema();
        let a = garment(schema, GarmentCategory::Top, "t", 4);
        let b = garment(schema, GarmentCategory::Top, "t", 4);
        let c = garment(schema, GarmentCategory::Top, "t", 5);
        assert_eq!(a, b);
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn person_layout_has_body_parts() {
        let p = person(CANVAS, &pose());
        for class in [
            LayoutClass::Hair,
            LayoutClass::Face,
            LayoutClass::NecklineSkin,
            LayoutClass::Arms,
            LayoutClass::Legs,
            LayoutClass::Top,
            LayoutClass::Bottom,
            LayoutClass::Shoes,
        ] {
            assert!(p.layout.count(class) > 100, "{class}");
        }
        pose().validate().unwrap();
    }

    #[test]
    fn written_outfit_loads_and_renders() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_outfit(dir.path()).unwrap();
        let schema = default_schema();
        let library = crate::dsl::shipped_library(schema);
        let outfit = crate::pipeline::Outfit::from_file(&path, schema, &library).unwrap();
        assert_eq!(outfit.garments.len(), 3);
        let r = crate::pipeline::Engine::default().render(&outfit).unwrap();
        assert!(r.edits[1][0].applied().is_some());
        assert_eq!(r.warped[2].warps.len(), 2);
        let written = r.write(&outfit, &dir.path().join("out")).unwrap();
        assert!(written.iter().all(|p| p.exists()));
    }
}
