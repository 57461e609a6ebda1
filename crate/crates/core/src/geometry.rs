//! Convex hulls, containment and projection onto hull boundaries.

use crate::points::{Point, Vector};

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex polygon with vertices in counter-clockwise order (in a y-up frame;
/// the orientation is only used consistently, never displayed).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    vertices: Vec<Point>,
}

impl ConvexHull {
    /// Andrew's monotone chain. Collinear points are dropped.
    pub fn new(points: &[Point]) -> Self {
        let mut pts: Vec<Point> = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() < 3 {
            return Self { vertices: pts };
        }
        let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
        for pass in [&pts[..], &pts.iter().rev().copied().collect::<Vec<_>>()[..]] {
            let start = hull.len();
            for &p in pass {
                while hull.len() >= start + 2
                    && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
                {
                    hull.pop();
                }
                hull.push(p);
            }
            // The last point of each chain starts the next one.
            hull.pop();
        }
        Self { vertices: hull }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Fewer than three non-collinear vertices.
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3 || self.area() <= 1e-15
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            twice += a.x * b.y - b.x * a.y;
        }
        twice.abs() / 2.0
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        Point::from(self.vertices.iter().fold(Vector::zeros(), |acc, p| acc + p.coords) / n)
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let (closest, _) = self.closest_boundary_point(p);
        let d = (p - closest).norm();
        if self.contains(p, 0.0) {
            -d
        } else {
            d
        }
    }

    /// Inclusive containment with tolerance `eps` on every edge's half-plane.
    pub fn contains(&self, p: Point, eps: f64) -> bool {
        if self.is_degenerate() {
            return false;
        }
        self.edges().all(|(a, b)| {
            let len = (b - a).norm();
            cross(a, b, p) / len >= -eps
        })
    }

    /// Closest point on the boundary and the inward direction there: the edge
    /// normal, or the bisector of the two edge normals at a vertex.
    pub fn closest_boundary_point(&self, p: Point) -> (Point, Vector) {
        let n = self.vertices.len();
        let mut best = (f64::INFINITY, self.vertices[0], Vector::zeros());
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d = (p - q).norm_squared();
            if d < best.0 {
                let inward = if t <= 0.0 {
                    self.vertex_bisector(i)
                } else if t >= 1.0 {
                    self.vertex_bisector((i + 1) % n)
                } else {
                    inward_normal(a, b)
                };
                best = (d, q, inward);
            }
        }
        (best.1, best.2)
    }

    fn vertex_bisector(&self, i: usize) -> Vector {
        let n = self.vertices.len();
        let prev = self.vertices[(i + n - 1) % n];
        let cur = self.vertices[i];
        let next = self.vertices[(i + 1) % n];
        let v = inward_normal(prev, cur) + inward_normal(cur, next);
        v.normalize()
    }

    /// Intersection of two convex polygons (Sutherland-Hodgman clipping).
    pub fn intersection(&self, other: &ConvexHull) -> ConvexHull {
        if self.is_degenerate() || other.is_degenerate() {
            return ConvexHull { vertices: vec![] };
        }
        let mut poly = self.vertices.clone();
        for (a, b) in other.edges() {
            if poly.is_empty() {
                break;
            }
            let input = std::mem::take(&mut poly);
            for i in 0..input.len() {
                let cur = input[i];
                let prev = input[(i + input.len() - 1) % input.len()];
                let (dc, dp) = (cross(a, b, cur), cross(a, b, prev));
                if dc >= 0.0 {
                    if dp < 0.0 {
                        poly.push(prev + (cur - prev) * (dp / (dp - dc)));
                    }
                    poly.push(cur);
                } else if dp >= 0.0 {
                    poly.push(prev + (cur - prev) * (dp / (dp - dc)));
                }
            }
        }
        ConvexHull::new(&poly)
    }

    /// Moves `p` onto the hull, then `margin` further inside. Points already
    /// inside are returned unchanged.
    pub fn pull_inside(&self, p: Point, margin: f64) -> Point {
        if self.contains(p, 0.0) {
            return p;
        }
        let (q, inward) = self.closest_boundary_point(p);
        if margin <= 0.0 {
            return q;
        }
        let candidate = q + inward * margin;
        if self.contains(candidate, 0.0) {
            return candidate;
        }
        // Margin wider than the hull locally: head for the centroid instead.
        let c = self.centroid();
        let to_c = c - q;
        if to_c.norm() <= margin {
            c
        } else {
            q + to_c.normalize() * margin
        }
    }
}

/// Unit normal pointing into a counter-clockwise polygon from edge `a → b`.
fn inward_normal(a: Point, b: Point) -> Vector {
    let d = (b - a).normalize();
    Vector::new(-d.y, d.x)
}
