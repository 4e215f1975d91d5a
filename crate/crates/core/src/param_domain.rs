//! Box-shaped parameter domains, their vertices, and convex coordinates.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when deciding whether a parameter value lies in the box.
pub const BOX_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("DegenerateInterval: parameter {index} has lower {lower} >= upper {upper}")]
    DegenerateInterval {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("parameter box needs at least one parameter")]
    Empty,
    #[error("lower has {lower} entries but upper has {upper}")]
    LengthMismatch { lower: usize, upper: usize },
    #[error("ParameterOutOfRange: component {index} = {value} outside [{lower}, {upper}]")]
    ParameterOutOfRange {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("parameter vector has {got} components, expected {expected}")]
    WrongArity { expected: usize, got: usize },
}

/// Hyper-rectangle `[lower_1, upper_1] x ... x [lower_r, upper_r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DomainError> {
        if lower.len() != upper.len() {
            return Err(DomainError::LengthMismatch {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(DomainError::Empty);
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            // also rejects NaN bounds
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(DomainError::DegenerateInterval {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(ParameterBox { lower, upper })
    }

    /// One-parameter interval.
    pub fn interval(lower: f64, upper: f64) -> Result<Self, DomainError> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Number of parameters `r`.
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Number of vertices `N = 2^r`.
    pub fn vertex_count(&self) -> usize {
        1 << self.len()
    }

    /// Vertex `j`: bit `k` of `j` selects `upper_k` when set.
    pub fn vertex(&self, j: usize) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                if j >> k & 1 == 1 {
                    self.upper[k]
                } else {
                    self.lower[k]
                }
            })
            .collect()
    }

    pub fn enumerate_vertices(&self) -> VertexSet {
        VertexSet {
            vertices: (0..self.vertex_count()).map(|j| self.vertex(j)).collect(),
        }
    }

    pub fn contains(&self, rho: &[f64]) -> bool {
        self.check(rho).is_ok()
    }

    fn check(&self, rho: &[f64]) -> Result<(), DomainError> {
        if rho.len() != self.len() {
            return Err(DomainError::WrongArity {
                expected: self.len(),
                got: rho.len(),
            });
        }
        for (index, &value) in rho.iter().enumerate() {
            let (lo, hi) = (self.lower[index], self.upper[index]);
            if !(value >= lo - BOX_SLACK && value <= hi + BOX_SLACK) {
                return Err(DomainError::ParameterOutOfRange {
                    index,
                    value,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    /// Multilinear convex coordinates of `rho` with respect to the vertices.
    ///
    /// `alpha_j` is the product over `k` of the 1-D barycentric weight
    /// `(upper_k - rho_k) / (upper_k - lower_k)` (bit `k` clear) or its
    /// complement (bit `k` set).
    pub fn coords(&self, rho: &[f64]) -> Result<ConvexCoordinates, DomainError> {
        self.check(rho)?;
        let upper_weights: Vec<f64> = rho
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let t = (v - self.lower[k]) / (self.upper[k] - self.lower[k]);
                t.clamp(0.0, 1.0)
            })
            .collect();
        let alpha = (0..self.vertex_count())
            .map(|j| {
                upper_weights
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| if j >> k & 1 == 1 { t } else { 1.0 - t })
                    .product()
            })
            .collect();
        Ok(ConvexCoordinates { alpha })
    }

    /// Uniform grid with `points_per_axis` samples per parameter, endpoints
    /// included, so every vertex is a grid point.
    pub fn grid(&self, points_per_axis: usize) -> Vec<Vec<f64>> {
        let points = points_per_axis.max(2);
        let total = points.pow(self.len() as u32);
        (0..total)
            .map(|mut idx| {
                (0..self.len())
                    .map(|k| {
                        let i = idx % points;
                        idx /= points;
                        let t = i as f64 / (points - 1) as f64;
                        if i == points - 1 {
                            self.upper[k]
                        } else {
                            self.lower[k] + t * (self.upper[k] - self.lower[k])
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// The `2^r` vertices of a [`ParameterBox`] in binary-encoding order.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub vertices: Vec<Vec<f64>>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Barycentric weights `alpha` over the polytope vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCoordinates {
    alpha: Vec<f64>,
}

impl ConvexCoordinates {
    /// Checks nonnegativity and unit sum (to 1e-12).
    pub fn new(alpha: Vec<f64>) -> Option<Self> {
        let sum: f64 = alpha.iter().sum();
        if alpha.iter().all(|&a| a >= 0.0) && (sum - 1.0).abs() <= 1e-12 {
            Some(ConvexCoordinates { alpha })
        } else {
            None
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `sum_i alpha_i * items_i` for anything that scales and adds.
    pub fn combine<T>(&self, items: &[T]) -> T
    where
        T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        assert_eq!(items.len(), self.alpha.len(), "one item per vertex");
        let mut acc = items[0].clone() * self.alpha[0];
        for (item, &a) in items.iter().zip(&self.alpha).skip(1) {
            acc = acc + item.clone() * a;
        }
        acc
    }
}

/// A parameter trajectory `t -> rho(t)` declared to stay inside a box.
#[derive(Clone)]
pub struct ParamTrajectory {
    sampler: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    bounds: ParameterBox,
}

impl fmt::Debug for ParamTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamTrajectory")
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

impl ParamTrajectory {
    pub fn new(
        bounds: ParameterBox,
        sampler: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ParamTrajectory {
            sampler: Arc::new(sampler),
            bounds,
        }
    }

    pub fn bounds(&self) -> &ParameterBox {
        &self.bounds
    }

    /// Samples `rho(t)`, failing if the value leaves the declared box.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>, DomainError> {
        let rho = (self.sampler)(t);
        self.bounds.check(&rho)?;
        Ok(rho)
    }
}
