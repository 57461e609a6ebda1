//! Raster helpers: binary masks, straight-alpha RGBA compositing, polygon
//! filling and PNG IO.

use std::path::Path;

use image::{GrayImage, Luma};
pub use image::{Rgba, RgbaImage};
use thiserror::Error;

use crate::points::Point;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(u32, u32, u32, u32),
    #[error("{0}")]
    Invalid(String),
}

/// Canvas or image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// Normalized coordinates of a pixel center.
    pub fn pixel_center(&self, x: u32, y: u32) -> Point {
        Point::new(
            (x as f64 + 0.5) / self.width as f64,
            (y as f64 + 0.5) / self.height as f64,
        )
    }

    /// Continuous pixel coordinates (pixel centers at integers) of a normalized point.
    pub fn to_pixel(&self, p: Point) -> (f64, f64) {
        (
            p.x * self.width as f64 - 0.5,
            p.y * self.height as f64 - 0.5,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: Dims) -> Self {
        Self {
            width: dims.width,
            height: dims.height,
            data: vec![false; dims.area()],
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(dims);
        for y in 0..dims.height {
            for x in 0..dims.width {
                m.data[(y * dims.width + x) as usize] = f(x, y);
            }
        }
        m
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip(other, |a, b| a && b)
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask, RasterError> {
        check_dims(self.dims(), other.dims())?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Nonzero-alpha support of an image.
    pub fn from_alpha(img: &RgbaImage) -> Self {
        let dims = Dims::new(img.width(), img.height());
        Self::from_fn(dims, |x, y| img.get_pixel(x, y)[3] > 0)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let dims = Dims::new(img.width(), img.height());
        Self::from_fn(dims, |x, y| img.get_pixel(x, y)[0] >= 128)
    }

    /// Row range `[min, max]` containing set pixels.
    pub fn row_extent(&self) -> Option<(u32, u32)> {
        let rows: Vec<u32> = (0..self.height)
            .filter(|&y| (0..self.width).any(|x| self.get(x, y)))
            .collect();
        Some((*rows.first()?, *rows.last()?))
    }

    /// Set pixels with at least one 4-neighbour unset (or on the canvas edge).
    pub fn boundary_pixels(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || x + 1 == self.width
                    || y + 1 == self.height
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1);
                if edge {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        save_image(&self.to_gray(), path)
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path).map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_gray(&img.to_luma8()))
    }
}

pub fn check_dims(a: Dims, b: Dims) -> Result<(), RasterError> {
    if a != b {
        return Err(RasterError::DimMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(())
}

pub fn image_dims(img: &RgbaImage) -> Dims {
    Dims::new(img.width(), img.height())
}

pub fn load_rgba(path: &Path) -> Result<RgbaImage, RasterError> {
    image::open(path)
        .map(|i| i.to_rgba8())
        .map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })
}

pub fn save_image<P, C>(img: &image::ImageBuffer<P, C>, path: &Path) -> Result<(), RasterError>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Straight-alpha source-over of one pixel.
#[inline]
pub fn over(src: Rgba<u8>, dst: Rgba<u8>) -> Rgba<u8> {
    let sa = src[3] as f64 / 255.0;
    if src[3] == 0 {
        return dst;
    }
    if src[3] == 255 {
        return src;
    }
    let da = dst[3] as f64 / 255.0;
    let out_a = sa + da * (1.0 - sa);
    let mut out = [0u8; 4];
    for c in 0..3 {
        let v = (src[c] as f64 * sa + dst[c] as f64 * da * (1.0 - sa)) / out_a;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    out[3] = (out_a * 255.0).round().clamp(1.0, 255.0) as u8;
    Rgba(out)
}

/// Composites `src` over `dst` in place.
pub fn composite_over(dst: &mut RgbaImage, src: &RgbaImage) -> Result<(), RasterError> {
    check_dims(image_dims(dst), image_dims(src))?;
    for (d, s) in dst.pixels_mut().zip(src.pixels()) {
        *d = over(*s, *d);
    }
    Ok(())
}

/// Bilinear sample at continuous pixel coordinates, using only the neighbours
/// where `mask` holds and renormalizing their weights. The result is a convex
/// combination of at most four source pixels; `None` if no neighbour is in the
/// mask (or the location is off the image).
pub fn sample_masked(img: &RgbaImage, mask: &Mask, px: f64, py: f64) -> Option<Rgba<u8>> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    if !(px > -1.0 && py > -1.0 && px < w as f64 && py < h as f64) {
        return None;
    }
    let x0 = px.floor() as i64;
    let y0 = py.floor() as i64;
    let fx = px - x0 as f64;
    let fy = py - y0 as f64;
    let mut acc = [0.0f64; 4];
    let mut total = 0.0;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (x, y) = (x0 + dx, y0 + dy);
        if wgt <= 0.0 || x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        if !mask.get(x as u32, y as u32) {
            continue;
        }
        let p = img.get_pixel(x as u32, y as u32);
        for c in 0..4 {
            acc[c] += wgt * p[c] as f64;
        }
        total += wgt;
    }
    if total <= 0.0 {
        return None;
    }
    let mut out = [0u8; 4];
    for c in 0..4 {
        out[c] = (acc[c] / total).round().clamp(0.0, 255.0) as u8;
    }
    Some(Rgba(out))
}

/// Even-odd scanline fill of a polygon given in normalized coordinates;
/// a pixel is inside when its center is.
pub fn fill_polygon(mask: &mut Mask, polygon: &[Point]) {
    let dims = mask.dims();
    let n = polygon.len();
    if n < 3 {
        return;
    }
    let pts: Vec<(f64, f64)> = polygon
        .iter()
        .map(|p| (p.x * dims.width as f64, p.y * dims.height as f64))
        .collect();
    for y in 0..dims.height {
        let cy = y as f64 + 0.5;
        let mut xs = Vec::new();
        for i in 0..n {
            let (x1, y1) = pts[i];
            let (x2, y2) = pts[(i + 1) % n];
            if (y1 <= cy && y2 > cy) || (y2 <= cy && y1 > cy) {
                xs.push(x1 + (cy - y1) / (y2 - y1) * (x2 - x1));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks(2) {
            if let [a, b] = pair {
                let start = (a - 0.5).ceil().max(0.0) as i64;
                let end = (b - 0.5).floor().min(dims.width as f64 - 1.0) as i64;
                for x in start..=end {
                    if (x as f64 + 0.5) >= *a && (x as f64 + 0.5) < *b {
                        mask.set(x as u32, y, true);
                    }
                }
            }
        }
    }
}

/// Fills a disc given center and radius in normalized x/y units.
pub fn fill_ellipse(mask: &mut Mask, center: Point, rx: f64, ry: f64) {
    let dims = mask.dims();
    for y in 0..dims.height {
        for x in 0..dims.width {
            let p = dims.pixel_center(x, y);
            let dx = (p.x - center.x) / rx;
            let dy = (p.y - center.y) / ry;
            if dx * dx + dy * dy <= 1.0 {
                mask.set(x, y, true);
            }
        }
    }
}

/// Fills a capsule (thick segment) of the given half-width in canvas pixels.
pub fn fill_capsule(mask: &mut Mask, a: Point, b: Point, half_width_px: f64) {
    let dims = mask.dims();
    let (ax, ay) = (a.x * dims.width as f64, a.y * dims.height as f64);
    let (bx, by) = (b.x * dims.width as f64, b.y * dims.height as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    for y in 0..dims.height {
        for x in 0..dims.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
            if qx * qx + qy * qy <= half_width_px * half_width_px {
                mask.set(x, y, true);
            }
        }
    }
}
