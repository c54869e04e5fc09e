//! Part-restricted, robust, one-sided Chamfer data term.

use nalgebra::Vector3;

use super::{huber_derivative, huber_unchecked, NnIndex, Point3};
use crate::cloud::{LabeledPointCloud, PartId, BACKGROUND};
use crate::error::{Error, Result};

/// One nearest-neighbor index per part over that part's vertices.
#[derive(Debug, Clone)]
pub struct PartIndex {
    /// Indexed by part id; slot 0 holds the whole-mesh index when built
    /// with [`PartIndex::whole`].
    parts: Vec<Option<(NnIndex, Vec<u32>)>>,
    whole: bool,
}

impl PartIndex {
    /// `part_vertices[k]` lists the vertex indices owned by part `k`
    /// (entry 0 is ignored).
    pub fn build(vertices: &[Point3], part_vertices: &[Vec<u32>]) -> Self {
        let parts = part_vertices
            .iter()
            .enumerate()
            .map(|(k, ids)| {
                if k == 0 || ids.is_empty() {
                    return None;
                }
                let pts: Vec<Point3> = ids.iter().map(|&i| vertices[i as usize]).collect();
                NnIndex::build(&pts).ok().map(|idx| (idx, ids.clone()))
            })
            .collect();
        Self { parts, whole: false }
    }

    pub fn from_labels(vertices: &[Point3], vertex_labels: &[PartId]) -> Self {
        let max = vertex_labels.iter().copied().max().unwrap_or(0) as usize;
        let mut lists = vec![Vec::new(); max + 1];
        for (i, &l) in vertex_labels.iter().enumerate() {
            if l != BACKGROUND {
                lists[l as usize].push(i as u32);
            }
        }
        Self::build(vertices, &lists)
    }

    /// A single index over every vertex; part labels are ignored on lookup.
    pub fn whole(vertices: &[Point3]) -> Result<Self> {
        let idx = NnIndex::build(vertices)?;
        Ok(Self {
            parts: vec![Some((idx, (0..vertices.len() as u32).collect()))],
            whole: true,
        })
    }

    /// Nearest vertex of `part` as `(vertex index, squared distance)`.
    pub fn nearest(&self, part: PartId, q: &Point3) -> Result<(u32, f64)> {
        let slot = if self.whole { 0 } else { part as usize };
        match self.parts.get(slot).and_then(|s| s.as_ref()) {
            Some((idx, ids)) => {
                let (local, d2) = idx.nearest_one(q);
                Ok((ids[local], d2))
            }
            None => Err(Error::EmptyPart { part }),
        }
    }
}

/// A frozen cloud-point → mesh-vertex assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correspondence {
    pub point: u32,
    pub vertex: u32,
}

/// Nearest-vertex correspondences for every non-background cloud point.
pub(crate) fn resolve(cloud: &LabeledPointCloud, index: &PartIndex) -> Result<Vec<Correspondence>> {
    let mut out = Vec::with_capacity(cloud.len());
    for (i, (p, &l)) in cloud.points.iter().zip(&cloud.labels).enumerate() {
        if l == BACKGROUND {
            continue;
        }
        let (v, _) = index.nearest(l, p)?;
        out.push(Correspondence {
            point: i as u32,
            vertex: v,
        });
    }
    Ok(out)
}

/// Robust loss over frozen correspondences, optionally accumulating
/// `∂loss/∂vertex` into `vertex_grad`.
pub(crate) fn correspondence_loss(
    points: &[Point3],
    vertices: &[Point3],
    corr: &[Correspondence],
    delta: f64,
    mut vertex_grad: Option<&mut [Vector3<f64>]>,
) -> f64 {
    let mut loss = 0.0;
    for c in corr {
        let diff = vertices[c.vertex as usize] - points[c.point as usize];
        let r = diff.norm();
        loss += huber_unchecked(r, delta);
        if let Some(g) = vertex_grad.as_deref_mut() {
            if r > 0.0 {
                g[c.vertex as usize] += diff * (huber_derivative(r, delta) / r);
            }
        }
    }
    loss
}

/// `Σ_k Σ_{p labeled k} huber(min_{v ∈ V_k} ‖p − v‖)`. Background points add
/// nothing; model regions without data add nothing.
pub fn data_term(
    cloud: &LabeledPointCloud,
    posed_vertices: &[Point3],
    vertex_labels: &[PartId],
    delta: f64,
) -> Result<f64> {
    if posed_vertices.len() != vertex_labels.len() {
        return Err(Error::DimensionMismatch {
            what: "vertex labels",
            expected: posed_vertices.len(),
            got: vertex_labels.len(),
        });
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("huber delta must be positive, got {delta}")));
    }
    cloud.validate()?;
    let index = PartIndex::from_labels(posed_vertices, vertex_labels);
    let corr = resolve(cloud, &index)?;
    Ok(correspondence_loss(&cloud.points, posed_vertices, &corr, delta, None))
}
