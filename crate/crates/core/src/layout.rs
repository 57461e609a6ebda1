//! Semantic layouts, the occlusion rule and heuristic style labels.

use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::points::ControlPointSet;
use crate::pose::{BodyPose, Joint};
use crate::raster::{check_dims, Dims, Mask, RasterError};
use crate::schema::{string_enum, ControlPointSchema, GarmentCategory, PointGroup};
use crate::style::{Closure, Tuck};

pub const LAYOUT_CLASS_VERSION: &str = "drape-layout/1";

string_enum!(
    LayoutClass {
        Background => "background",
        Hair => "hair",
        Face => "face",
        NecklineSkin => "neckline_skin",
        Arms => "arms",
        Legs => "legs",
        Top => "top",
        Bottom => "bottom",
        Outerwear => "outerwear",
        Dress => "dress",
        Shoes => "shoes",
    }
);

const PALETTE: [[u8; 3]; 11] = [
    [0, 0, 0],
    [90, 60, 30],
    [240, 200, 170],
    [220, 170, 140],
    [200, 150, 120],
    [180, 130, 100],
    [230, 60, 60],
    [60, 90, 220],
    [60, 160, 80],
    [200, 80, 200],
    [40, 40, 40],
];

impl LayoutClass {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn is_skin(self) -> bool {
        matches!(
            self,
            LayoutClass::Face | LayoutClass::NecklineSkin | LayoutClass::Arms | LayoutClass::Legs
        )
    }

    pub fn color(self) -> [u8; 3] {
        PALETTE[self as usize]
    }
}

/// Layout class painted for a garment category. Skirts share the bottom class.
pub fn garment_class(category: GarmentCategory) -> LayoutClass {
    match category {
        GarmentCategory::Top => LayoutClass::Top,
        GarmentCategory::Bottom | GarmentCategory::Skirt => LayoutClass::Bottom,
        GarmentCategory::Outerwear => LayoutClass::Outerwear,
        GarmentCategory::Dress => LayoutClass::Dress,
    }
}

/// Skin classes directly connected to a garment category.
pub fn adjacency(category: GarmentCategory) -> &'static [LayoutClass] {
    use LayoutClass::*;
    match category {
        GarmentCategory::Top | GarmentCategory::Outerwear => &[Arms, NecklineSkin],
        GarmentCategory::Bottom | GarmentCategory::Skirt => &[Legs],
        GarmentCategory::Dress => &[Arms, NecklineSkin, Legs],
    }
}

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("layout has no outerwear pixels")]
    NoOuterwear,
    #[error("tuck label needs {0}")]
    MissingInput(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticLayout {
    width: u32,
    height: u32,
    data: Vec<LayoutClass>,
}

impl SemanticLayout {
    pub fn new(dims: Dims) -> Self {
        Self {
            width: dims.width,
            height: dims.height,
            data: vec![LayoutClass::Background; dims.area()],
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(u32, u32) -> LayoutClass) -> Self {
        let mut l = Self::new(dims);
        for y in 0..dims.height {
            for x in 0..dims.width {
                l.set(x, y, f(x, y));
            }
        }
        l
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> LayoutClass {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, class: LayoutClass) {
        self.data[(y * self.width + x) as usize] = class;
    }

    pub fn pixels(&self) -> &[LayoutClass] {
        &self.data
    }

    pub fn count(&self, class: LayoutClass) -> usize {
        self.data.iter().filter(|&&c| c == class).count()
    }

    pub fn class_mask(&self, class: LayoutClass) -> Mask {
        Mask::from_fn(self.dims(), |x, y| self.get(x, y) == class)
    }

    /// Replaces every listed class with background.
    pub fn clear(&self, classes: &[LayoutClass]) -> Self {
        let mut out = self.clone();
        for c in out.data.iter_mut() {
            if classes.contains(c) {
                *c = LayoutClass::Background;
            }
        }
        out
    }

    /// Paints `class` wherever `mask` holds.
    pub fn paint(&mut self, mask: &Mask, class: LayoutClass) -> Result<(), LayoutError> {
        check_dims(self.dims(), mask.dims())?;
        for y in 0..self.height {
            for x in 0..self.width {
                if mask.get(x, y) {
                    self.set(x, y, class);
                }
            }
        }
        Ok(())
    }

    /// Indexed 8-bit PNG with the class palette.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(PALETTE.concat());
            let mut writer = enc.write_header().expect("in-memory png header");
            let bytes: Vec<u8> = self.data.iter().map(|c| c.id()).collect();
            writer.write_image_data(&bytes).expect("in-memory png data");
        }
        out
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, String> {
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        // Keep palette indices as-is.
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
        let info = reader.info();
        if info.color_type != png::ColorType::Indexed && info.color_type != png::ColorType::Grayscale {
            return Err(format!("expected an indexed or grayscale PNG, got {:?}", info.color_type));
        }
        if info.bit_depth != png::BitDepth::Eight {
            return Err(format!("expected 8-bit samples, got {:?}", info.bit_depth));
        }
        let dims = Dims::new(info.width, info.height);
        let mut buf = vec![0u8; reader.output_buffer_size().ok_or("image too large")?];
        let frame = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
        let mut layout = Self::new(dims);
        for (i, &id) in buf[..frame.buffer_size()].iter().enumerate() {
            layout.data[i] = LayoutClass::from_id(id).ok_or_else(|| format!("invalid class id {id}"))?;
        }
        Ok(layout)
    }

    /// Sidecar class table written next to a layout PNG.
    pub fn class_table() -> String {
        let mut s = format!("# {LAYOUT_CLASS_VERSION}\n");
        for c in LayoutClass::ALL {
            s.push_str(&format!("{} {}\n", c.id(), c));
        }
        s
    }

    pub fn sidecar_path(png_path: &Path) -> PathBuf {
        png_path.with_extension("classes.txt")
    }

    /// Writes the PNG and its sidecar class table.
    pub fn save(&self, path: &Path) -> Result<(), LayoutError> {
        let io = |e: std::io::Error| LayoutError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let file = std::fs::File::create(path).map_err(io)?;
        use std::io::Write;
        BufWriter::new(file).write_all(&self.encode_png()).map_err(io)?;
        std::fs::write(Self::sidecar_path(path), Self::class_table()).map_err(io)?;
        Ok(())
    }

    /// Loads a layout PNG. When a sidecar table exists its version must match.
    pub fn load(path: &Path) -> Result<Self, LayoutError> {
        let err = |reason: String| LayoutError::Io {
            path: path.display().to_string(),
            reason,
        };
        let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
        if let Ok(table) = std::fs::read_to_string(Self::sidecar_path(path)) {
            if table != Self::class_table() {
                return Err(err(format!(
                    "class table differs from {LAYOUT_CLASS_VERSION}"
                )));
            }
        }
        Self::decode_png(&bytes).map_err(err)
    }
}

/// The occlusion rule: clears the garment's own class and its connected skin
/// classes; everything else is untouched.
pub fn occlude(layout: &SemanticLayout, category: GarmentCategory) -> SemanticLayout {
    let mut classes = vec![garment_class(category)];
    classes.extend_from_slice(adjacency(category));
    layout.clear(&classes)
}

/// Painter's rasterization: garments are listed innermost first and later
/// ones overwrite earlier ones.
pub fn rasterize_layout(
    base: &SemanticLayout,
    garments: &[(&Mask, GarmentCategory)],
) -> Result<SemanticLayout, LayoutError> {
    let mut out = base.clone();
    for (mask, category) in garments {
        out.paint(mask, garment_class(*category))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StyleLabel {
    pub tuck: Option<Tuck>,
    pub closure: Option<Closure>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureThresholds {
    /// Minimum component area as a fraction of the canvas.
    pub min_fraction: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for ClosureThresholds {
    fn default() -> Self {
        Self {
            min_fraction: 0.05,
            ratio_min: 0.5,
            ratio_max: 2.0,
        }
    }
}

/// Component sizes of a mask under 4-connectivity, largest first.
pub fn component_sizes(mask: &Mask) -> Vec<usize> {
    let dims = mask.dims();
    let (w, h) = (dims.width as usize, dims.height as usize);
    let mut seen = vec![false; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.get((start % w) as u32, (start / w) as u32) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && mask.get((j % w) as u32, (j / w) as u32) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Open iff the two largest outerwear components are both large and of
/// similar size.
pub fn label_closure(
    layout: &SemanticLayout,
    thresholds: &ClosureThresholds,
) -> Result<StyleLabel, LayoutError> {
    let sizes = component_sizes(&layout.class_mask(LayoutClass::Outerwear));
    if sizes.is_empty() {
        return Err(LayoutError::NoOuterwear);
    }
    let area = layout.dims().area() as f64;
    let min_size = thresholds.min_fraction * area;
    let mut notes = vec![format!(
        "{} outerwear component(s), largest {:.4} of canvas",
        sizes.len(),
        sizes[0] as f64 / area
    )];
    let open = match sizes.as_slice() {
        [a, b, ..] => {
            let ratio = *a as f64 / *b as f64;
            notes.push(format!("second {:.4} of canvas, ratio {ratio:.3}", *b as f64 / area));
            *a as f64 > min_size
                && *b as f64 > min_size
                && (thresholds.ratio_min..=thresholds.ratio_max).contains(&ratio)
        }
        _ => false,
    };
    Ok(StyleLabel {
        tuck: None,
        closure: Some(if open { Closure::Open } else { Closure::Closed }),
        notes,
    })
}

/// Hem heights may sit this far below the waist and still count as tucked.
pub const TUCK_TOLERANCE: f64 = 0.01;

/// Thresholds hem heights (waistline points if no hem is present) against the
/// mean hip height.
pub fn label_tuck(
    schema: &ControlPointSchema,
    points: &ControlPointSet,
    pose: &BodyPose,
) -> Result<StyleLabel, LayoutError> {
    let (Some(l), Some(r)) = (pose.detected(Joint::LeftHip), pose.detected(Joint::RightHip)) else {
        return Err(LayoutError::MissingInput("both hip joints".into()));
    };
    let waist = (l.y + r.y) / 2.0;
    let heights = |group: PointGroup| -> Vec<f64> {
        schema
            .group_ids(group)
            .into_iter()
            .filter_map(|i| points.get(i).map(|p| p.y))
            .collect()
    };
    let (group, ys) = match heights(PointGroup::Hem) {
        ys if !ys.is_empty() => (PointGroup::Hem, ys),
        _ => (PointGroup::Waistline, heights(PointGroup::Waistline)),
    };
    if ys.is_empty() {
        return Err(LayoutError::MissingInput("hem or waistline points".into()));
    }
    let limit = waist + TUCK_TOLERANCE;
    let tuck = if ys.iter().all(|&y| y <= limit) {
        Tuck::FullTuck
    } else if ys.iter().all(|&y| y >= limit) {
        Tuck::Untuck
    } else {
        Tuck::HalfTuck
    };
    Ok(StyleLabel {
        tuck: Some(tuck),
        closure: None,
        notes: vec![format!(
            "waist y {waist:.4}; {} {group} point(s) in [{:.4}, {:.4}]",
            ys.len(),
            ys.iter().cloned().fold(f64::INFINITY, f64::min),
            ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )],
    })
}
