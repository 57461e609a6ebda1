//! Point-set metrics: pairwise distance matrices, the structural consistency
//! loss and the weighted L1/L2/structural combination.
//!
//! Every metric is restricted to ids present in both sets, so coordinates of
//! absent points never matter.

use thiserror::Error;

use crate::points::ControlPointSet;
use crate::schema::POINT_COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty intersection: the point sets share no present points")]
    EmptyIntersection,
    #[error("schema mismatch: {0} vs {1}")]
    SchemaMismatch(String, String),
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
}

/// Pairwise euclidean distances between all 49 points. Rows and columns of
/// absent points are computed but flagged through `present`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Box<[[f64; POINT_COUNT]; POINT_COUNT]>,
    pub present: [bool; POINT_COUNT],
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[[f64; POINT_COUNT]; POINT_COUNT] {
        &self.values
    }
}

pub fn distance_matrix(k: &ControlPointSet) -> DistanceMatrix {
    let mut values = Box::new([[0.0; POINT_COUNT]; POINT_COUNT]);
    for i in 0..POINT_COUNT {
        for j in (i + 1)..POINT_COUNT {
            let d = (k.coords[i] - k.coords[j]).norm();
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    DistanceMatrix {
        values,
        present: k.present,
    }
}

fn shared(k: &ControlPointSet, k_prime: &ControlPointSet) -> Result<Vec<usize>, MetricError> {
    if k.schema_version != k_prime.schema_version {
        return Err(MetricError::SchemaMismatch(
            k.schema_version.clone(),
            k_prime.schema_version.clone(),
        ));
    }
    let ids = k.shared_ids(k_prime);
    if ids.is_empty() {
        return Err(MetricError::EmptyIntersection);
    }
    Ok(ids)
}

/// Frobenius norm of `D - D'` over the ids present in both sets.
pub fn structural_loss(k: &ControlPointSet, k_prime: &ControlPointSet) -> Result<f64, MetricError> {
    let ids = shared(k, k_prime)?;
    let mut sum = 0.0;
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let d = (k.coords[i] - k.coords[j]).norm();
            let d_prime = (k_prime.coords[i] - k_prime.coords[j]).norm();
            sum += (d - d_prime).powi(2);
        }
    }
    // Off-diagonal pairs appear twice in the full matrix.
    Ok((2.0 * sum).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self, MetricError> {
        let w = Self {
            lambda1,
            lambda2,
            lambda3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let all = [self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MetricError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(MetricError::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLosses {
    pub l1: f64,
    pub l2: f64,
    pub ls: f64,
    pub total: f64,
}

/// Mean absolute and mean squared per-coordinate errors plus the structural
/// loss, combined with `weights`.
pub fn point_losses(
    k: &ControlPointSet,
    k_prime: &ControlPointSet,
    weights: LossWeights,
) -> Result<PointLosses, MetricError> {
    weights.validate()?;
    let ids = shared(k, k_prime)?;
    let n = (2 * ids.len()) as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for &i in &ids {
        let d = k.coords[i] - k_prime.coords[i];
        abs += d.x.abs() + d.y.abs();
        sq += d.x * d.x + d.y * d.y;
    }
    let l1 = abs / n;
    let l2 = sq / n;
    let ls = structural_loss(k, k_prime)?;
    Ok(PointLosses {
        l1,
        l2,
        ls,
        total: weights.lambda1 * l1 + weights.lambda2 * l2 + weights.lambda3 * ls,
    })
}
