use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::SimilarityTransform;
use crate::error::{Error, Result};

pub const WORLD_FRAME: &str = "world";

/// Positions with optional per-point colors in a named coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    positions: Vec<Point3<f64>>,
    colors: Option<Vec<[f64; 3]>>,
    frame: String,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3<f64>>, frame: impl Into<String>) -> Result<Self> {
        Self::with_colors(positions, None, frame)
    }

    pub fn with_colors(
        positions: Vec<Point3<f64>>,
        colors: Option<Vec<[f64; 3]>>,
        frame: impl Into<String>,
    ) -> Result<Self> {
        if let Some(bad) = positions
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::invalid(format!(
                "point {bad} has non-finite coordinates"
            )));
        }
        if let Some(c) = &colors {
            if c.len() != positions.len() {
                return Err(Error::invalid(format!(
                    "{} colors for {} points",
                    c.len(),
                    positions.len()
                )));
            }
        }
        Ok(PointCloud {
            positions,
            colors,
            frame: frame.into(),
        })
    }

    pub fn empty(frame: impl Into<String>) -> Self {
        PointCloud {
            positions: Vec::new(),
            colors: None,
            frame: frame.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn colors(&self) -> Option<&[[f64; 3]]> {
        self.colors.as_deref()
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn relabeled(mut self, frame: impl Into<String>) -> Self {
        self.frame = frame.into();
        self
    }

    pub fn into_parts(self) -> (Vec<Point3<f64>>, Option<Vec<[f64; 3]>>, String) {
        (self.positions, self.colors, self.frame)
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|p| t.apply(p)).collect(),
            colors: self.colors.clone(),
            frame: self.frame.clone(),
        }
    }

    /// Concatenation keeping `self`'s frame label. Colors survive only when
    /// both sides carry them (or one side is empty).
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let colors = match (&self.colors, &other.colors) {
            (Some(a), Some(b)) => Some([a.as_slice(), b.as_slice()].concat()),
            (Some(a), None) if other.is_empty() => Some(a.clone()),
            (None, Some(b)) if self.is_empty() => Some(b.clone()),
            _ => None,
        };
        PointCloud {
            positions,
            colors,
            frame: self.frame.clone(),
        }
    }

    /// Subset by index, preserving order.
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        PointCloud {
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
            frame: self.frame.clone(),
        }
    }

    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.positions.first()?;
        Some(
            self.positions
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.is_empty() {
            return None;
        }
        let sum = self
            .positions
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.len() as f64))
    }
}
