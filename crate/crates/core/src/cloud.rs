use crate::geometry::{transform_point, Pose, Vec3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("non-finite position at index {0}")]
    NonFinite(usize),
    #[error("colors have length {colors} but positions have length {positions}")]
    ColorLength { positions: usize, colors: usize },
}

/// Point positions with optional per-point RGB in [0, 1].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Option<Vec<[f64; 3]>>) -> Result<Self, CloudError> {
        let cloud = Self { positions, colors };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            colors: None,
        }
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(CloudError::NonFinite(i));
        }
        if let Some(c) = &self.colors {
            if c.len() != self.positions.len() {
                return Err(CloudError::ColorLength {
                    positions: self.positions.len(),
                    colors: c.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Axis-aligned bounds, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(
            self.positions
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|p| transform_point(pose, p)).collect(),
            colors: self.colors.clone(),
        }
    }

    /// Appends `other`. Colors survive only if both sides carry them.
    pub fn extend(&mut self, other: PointCloud) {
        let n = self.positions.len();
        self.colors = match (self.colors.take(), other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            (None, Some(b)) if n == 0 => Some(b),
            _ => None,
        };
        self.positions.extend(other.positions);
    }
}
