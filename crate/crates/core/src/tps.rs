//! Thin-plate spline warps between 2D point sets.
//!
//! A fitted warp maps `p` to `A·p + t + Σ wᵢ·U(‖p − sᵢ‖)` with kernel
//! `U(r) = r²·log r²` (`U(0) = 0`). The weights satisfy the side conditions
//! `Pᵀw = 0`, so an affine correspondence is reproduced with zero weights.
//! `lambda` is added to the kernel diagonal; `lambda = 0` interpolates exactly.

use nalgebra::{DMatrix, Matrix2, Matrix2x3};
use thiserror::Error;

use crate::points::{Point, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TpsError {
    #[error("source and destination lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 correspondences, got {0}")]
    TooFew(usize),
    #[error("rank-deficient system: {0}")]
    RankDeficient(String),
    #[error("regularization must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
}

/// Kernel evaluated on the squared distance.
#[inline]
pub fn kernel_sq(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpsWarp {
    pub sites: Vec<Point>,
    /// `[[a11, a12, tx], [a21, a22, ty]]`.
    pub affine: Matrix2x3<f64>,
    pub rbf_weights: Vec<Vector>,
    pub lambda: f64,
}

const COINCIDENT_EPS: f64 = 1e-9;
const COLLINEAR_RATIO: f64 = 1e-10;

fn check_sites(src: &[Point]) -> Result<(), TpsError> {
    for (i, a) in src.iter().enumerate() {
        for (j, b) in src.iter().enumerate().skip(i + 1) {
            if (a - b).norm() < COINCIDENT_EPS {
                return Err(TpsError::RankDeficient(format!(
                    "source points {i} and {j} coincide"
                )));
            }
        }
    }
    let n = src.len() as f64;
    let mean = src.iter().fold(Vector::zeros(), |acc, p| acc + p.coords) / n;
    let cov = src.iter().fold(Matrix2::zeros(), |acc, p| {
        let d = p.coords - mean;
        acc + d * d.transpose()
    }) / n;
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi <= 0.0 || lo <= COLLINEAR_RATIO * hi {
        return Err(TpsError::RankDeficient("source points are collinear".into()));
    }
    Ok(())
}

impl TpsWarp {
    pub fn fit(src: &[Point], dst: &[Point], lambda: f64) -> Result<Self, TpsError> {
        if src.len() != dst.len() {
            return Err(TpsError::LengthMismatch(src.len(), dst.len()));
        }
        if src.len() < 3 {
            return Err(TpsError::TooFew(src.len()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(TpsError::InvalidLambda(lambda));
        }
        check_sites(src)?;

        let n = src.len();
        let mut system = DMatrix::<f64>::zeros(n + 3, n + 3);
        let mut rhs = DMatrix::<f64>::zeros(n + 3, 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let u = kernel_sq((src[i] - src[j]).norm_squared());
                system[(i, j)] = u;
                system[(j, i)] = u;
            }
            system[(i, i)] = lambda;
            let row = [1.0, src[i].x, src[i].y];
            for (k, v) in row.into_iter().enumerate() {
                system[(i, n + k)] = v;
                system[(n + k, i)] = v;
            }
            rhs[(i, 0)] = dst[i].x;
            rhs[(i, 1)] = dst[i].y;
        }
        let solution = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| TpsError::RankDeficient("singular system".into()))?;
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(TpsError::RankDeficient("non-finite solution".into()));
        }
        let rbf_weights = (0..n)
            .map(|i| Vector::new(solution[(i, 0)], solution[(i, 1)]))
            .collect();
        let affine = Matrix2x3::new(
            solution[(n + 1, 0)],
            solution[(n + 2, 0)],
            solution[(n, 0)],
            solution[(n + 1, 1)],
            solution[(n + 2, 1)],
            solution[(n, 1)],
        );
        Ok(Self {
            sites: src.to_vec(),
            affine,
            rbf_weights,
            lambda,
        })
    }

    pub fn control_count(&self) -> usize {
        self.sites.len()
    }

    pub fn transform(&self, p: Point) -> Point {
        let a = &self.affine;
        let mut x = a[(0, 0)] * p.x + a[(0, 1)] * p.y + a[(0, 2)];
        let mut y = a[(1, 0)] * p.x + a[(1, 1)] * p.y + a[(1, 2)];
        for (s, w) in self.sites.iter().zip(&self.rbf_weights) {
            let dx = p.x - s.x;
            let dy = p.y - s.y;
            let u = kernel_sq(dx * dx + dy * dy);
            x += w.x * u;
            y += w.y * u;
        }
        Point::new(x, y)
    }

    pub fn transform_points(&self, pts: &[Point]) -> Vec<Point> {
        pts.iter().map(|&p| self.transform(p)).collect()
    }

    /// `‖Pᵀw‖`: how far the weights are from the side conditions.
    pub fn side_condition_residual(&self) -> f64 {
        let mut sums = [Vector::zeros(); 3];
        for (s, w) in self.sites.iter().zip(&self.rbf_weights) {
            sums[0] += w;
            sums[1] += w * s.x;
            sums[2] += w * s.y;
        }
        sums.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn weight_norm(&self) -> f64 {
        self.rbf_weights
            .iter()
            .map(|w| w.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ]
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_sq(0.0), 0.0);
        assert_eq!(kernel_sq(1.0), 0.0);
        // r = 2: r² log r² = 4 ln 4
        assert!((kernel_sq(4.0) - 4.0 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identity_interpolant() {
        let sq = unit_square();
        let w = TpsWarp::fit(&sq, &sq, 0.0).unwrap();
        assert!((w.affine - Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!(w.weight_norm() < 1e-12);
        let p = Point::new(0.37, 0.81);
        assert!((w.transform(p) - p).norm() < 1e-12);
    }

    #[test]
    fn translation_is_affine() {
        let sq = unit_square();
        let dst: Vec<Point> = sq.iter().map(|p| p + Vector::new(0.1, 0.0)).collect();
        let w = TpsWarp::fit(&sq, &dst, 0.0).unwrap();
        assert!(w.weight_norm() <= 1e-9);
        assert!((w.affine - Matrix2x3::new(1.0, 0.0, 0.1, 0.0, 1.0, 0.0)).norm() < 1e-12);
        let out = w.transform(Point::new(0.2, 0.2));
        assert!((out - Point::new(0.3, 0.2)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let line: Vec<Point> = (0..5).map(|i| Point::new(i as f64 * 0.1, i as f64 * 0.2)).collect();
        assert!(matches!(
            TpsWarp::fit(&line, &line, 0.0),
            Err(TpsError::RankDeficient(_))
        ));
        let mut dup = unit_square();
        dup.push(Point::new(1.0, 1.0));
        assert!(matches!(
            TpsWarp::fit(&dup, &dup, 0.1),
            Err(TpsError::RankDeficient(_))
        ));
        let sq = unit_square();
        assert_eq!(
            TpsWarp::fit(&sq, &sq[..3], 0.0),
            Err(TpsError::LengthMismatch(4, 3))
        );
        assert_eq!(TpsWarp::fit(&sq[..2], &sq[..2], 0.0), Err(TpsError::TooFew(2)));
        assert!(matches!(
            TpsWarp::fit(&sq, &sq, -1.0),
            Err(TpsError::InvalidLambda(_))
        ));
    }

    fn residual(w: &TpsWarp, src: &[Point], dst: &[Point]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(s, d)| (w.transform(*s) - d).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    fn spread(points: &[(f64, f64)]) -> bool {
        let pts: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        check_sites(&pts).is_ok()
            && pts.iter().enumerate().all(|(i, a)| {
                pts.iter().skip(i + 1).all(|b| (a - b).norm() > 0.02)
            })
    }

    proptest! {
        #[test]
        fn side_conditions_hold(
            pairs in prop::collection::vec(((0.0..1.0f64, 0.0..1.0f64), (0.0..1.0f64, 0.0..1.0f64)), 4..15),
            lambda in 0.0..0.1f64,
        ) {
            let src: Vec<(f64, f64)> = pairs.iter().map(|p| p.0).collect();
            prop_assume!(spread(&src));
            let src: Vec<Point> = src.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let dst: Vec<Point> = pairs.iter().map(|p| Point::new(p.1 .0, p.1 .1)).collect();
            let w = TpsWarp::fit(&src, &dst, lambda).unwrap();
            prop_assert!(w.side_condition_residual() < 1e-8);
        }

        #[test]
        fn smoothing_is_monotone(
            pairs in prop::collection::vec(((0.0..1.0f64, 0.0..1.0f64), (-0.05..0.05f64, -0.05..0.05f64)), 5..12),
        ) {
            let src: Vec<(f64, f64)> = pairs.iter().map(|p| p.0).collect();
            prop_assume!(spread(&src));
            let src: Vec<Point> = src.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let dst: Vec<Point> = src
                .iter()
                .zip(&pairs)
                .map(|(s, p)| s + Vector::new(p.1 .0, p.1 .1))
                .collect();
            let mut last = 0.0;
            for lambda in [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
                let w = TpsWarp::fit(&src, &dst, lambda).unwrap();
                let r = residual(&w, &src, &dst);
                prop_assert!(r + 1e-10 >= last, "lambda {}: {} < {}", lambda, r, last);
                last = r;
            }
        }
    }
}
