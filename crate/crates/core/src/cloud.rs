use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point3;

/// Body-part label. `0` is background, `1..=K` are parts.
pub type PartId = u8;

pub const BACKGROUND: PartId = 0;

/// A 3D point cloud with one part label per point and, optionally, a human
/// instance id per point (`0` = no human).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPointCloud {
    pub points: Vec<Point3>,
    pub labels: Vec<PartId>,
    pub human_ids: Option<Vec<u8>>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3>, labels: Vec<PartId>) -> Result<Self> {
        let cloud = Self {
            points,
            labels,
            human_ids: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn with_human_ids(mut self, ids: Vec<u8>) -> Result<Self> {
        if ids.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "human ids",
                expected: self.points.len(),
                got: ids.len(),
            });
        }
        self.human_ids = Some(ids);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "point labels",
                expected: self.points.len(),
                got: self.labels.len(),
            });
        }
        if let Some(ids) = &self.human_ids {
            if ids.len() != self.points.len() {
                return Err(Error::DimensionMismatch {
                    what: "human ids",
                    expected: self.points.len(),
                    got: ids.len(),
                });
            }
        }
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points with a non-background label.
    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != BACKGROUND).count()
    }

    /// Axis-aligned bounding-box center of the non-background points, or of
    /// all points when every point is background.
    pub fn foreground_bbox_center(&self) -> Option<Point3> {
        let fg: Vec<&Point3> = self
            .points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l != BACKGROUND)
            .map(|(p, _)| p)
            .collect();
        let pts: Vec<&Point3> = if fg.is_empty() {
            self.points.iter().collect()
        } else {
            fg
        };
        let first = pts.first()?;
        let (mut lo, mut hi) = (**first, **first);
        for p in &pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some((lo + hi) * 0.5)
    }

    /// Human instance ids present among the non-background points, ascending.
    /// A cloud without instance ids is treated as a single instance `1`.
    pub fn instances(&self) -> Vec<u8> {
        match &self.human_ids {
            None => vec![1],
            Some(ids) => {
                let mut seen = [false; 256];
                for (&id, &l) in ids.iter().zip(&self.labels) {
                    if id != 0 && l != BACKGROUND {
                        seen[id as usize] = true;
                    }
                }
                (1..=255u8).filter(|&i| seen[i as usize]).collect()
            }
        }
    }

    /// The sub-cloud of one human instance (its non-background points).
    /// Without instance ids this is every non-background point.
    pub fn instance(&self, id: u8) -> LabeledPointCloud {
        let keep = |i: usize| {
            self.labels[i] != BACKGROUND
                && match &self.human_ids {
                    None => true,
                    Some(ids) => ids[i] == id,
                }
        };
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        LabeledPointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            human_ids: None,
        }
    }
}
