//! Part-label operations: post-fit refinement by inverse-distance weighted
//! nearest-vertex voting, synthetic label corruption, and pseudo-label
//! filtering/export.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{LabeledPointCloud, PartId, BACKGROUND};
use crate::error::{Error, Result};
use crate::geom::{NnIndex, Point3};
use crate::io;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    /// Mesh vertices consulted per point.
    pub neighbors: usize,
    /// Points whose nearest vertex is farther than this become background.
    pub background_distance: f64,
    /// Stabilizer in the vote weight `1 / (d + epsilon)`.
    pub epsilon: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            neighbors: 5,
            background_distance: 0.1,
            epsilon: 1e-3,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors < 1 {
            return Err(Error::InvalidArgument("refine: neighbors must be >= 1".into()));
        }
        if !(self.background_distance > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(
                "refine: background_distance and epsilon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Weighted vote over `(label, distance)` neighbors; ties go to the lower
/// part id.
pub fn vote(neighbors: &[(PartId, f64)], epsilon: f64) -> PartId {
    let mut score = [0.0f64; 256];
    for &(l, d) in neighbors {
        score[l as usize] += 1.0 / (d + epsilon);
    }
    let mut best = BACKGROUND;
    let mut best_score = 0.0;
    for (l, &s) in score.iter().enumerate().skip(1) {
        if s > best_score {
            best_score = s;
            best = l as PartId;
        }
    }
    best
}

/// New per-point labels from the fitted mesh.
pub fn refine_labels(
    cloud: &LabeledPointCloud,
    posed_vertices: &[Point3],
    vertex_labels: &[PartId],
    config: &RefineConfig,
    exec: Execution,
) -> Result<Vec<PartId>> {
    config.validate()?;
    if posed_vertices.is_empty() {
        return Err(Error::Empty("refinement mesh has no vertices"));
    }
    if posed_vertices.len() != vertex_labels.len() {
        return Err(Error::DimensionMismatch {
            what: "vertex labels",
            expected: posed_vertices.len(),
            got: vertex_labels.len(),
        });
    }
    let index = NnIndex::build(posed_vertices)?;
    let k = config.neighbors.min(index.len());
    let labels = par::map(exec, &cloud.points, |_, p| -> Result<PartId> {
        let nn = index.nearest(p, k)?;
        if nn[0].1 > config.background_distance {
            return Ok(BACKGROUND);
        }
        let votes: Vec<(PartId, f64)> = nn.iter().map(|&(i, d)| (vertex_labels[i], d)).collect();
        Ok(vote(&votes, config.epsilon))
    });
    labels.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionRates {
    pub uniform_flip: f64,
    pub lr_swap: f64,
    pub clutter_leak: f64,
}

impl Default for CorruptionRates {
    fn default() -> Self {
        Self {
            uniform_flip: 0.10,
            lr_swap: 0.05,
            clutter_leak: 0.05,
        }
    }
}

impl CorruptionRates {
    pub fn none() -> Self {
        Self {
            uniform_flip: 0.0,
            lr_swap: 0.0,
            clutter_leak: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.uniform_flip, self.lr_swap, self.clutter_leak] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!("corruption rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Corrupted labels and instance ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    pub labels: Vec<PartId>,
    pub human_ids: Vec<u8>,
}

/// Simulates segmentation-network errors.
///
/// Each foreground point independently becomes a uniformly random part with
/// probability `uniform_flip`, otherwise swaps to its left/right counterpart
/// with probability `lr_swap`. Each background point independently takes the
/// part (and instance) of its nearest foreground point with probability
/// `clutter_leak`.
pub fn corrupt_labels(
    points: &[Point3],
    true_labels: &[PartId],
    human_ids: &[u8],
    num_parts: usize,
    mirror: &[PartId],
    rates: &CorruptionRates,
    seed: u64,
) -> Result<Corrupted> {
    rates.validate()?;
    if true_labels.len() != points.len() || human_ids.len() != points.len() {
        return Err(Error::DimensionMismatch {
            what: "corruption inputs",
            expected: points.len(),
            got: true_labels.len().min(human_ids.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fg: Vec<usize> = (0..points.len()).filter(|&i| true_labels[i] != BACKGROUND).collect();
    let fg_index = if rates.clutter_leak > 0.0 && !fg.is_empty() {
        Some(NnIndex::build(&fg.iter().map(|&i| points[i]).collect::<Vec<_>>())?)
    } else {
        None
    };
    let mut labels = true_labels.to_vec();
    let mut ids = human_ids.to_vec();
    for i in 0..points.len() {
        let l = true_labels[i];
        if l != BACKGROUND {
            if rng.random::<f64>() < rates.uniform_flip {
                labels[i] = rng.random_range(1..=num_parts as u32) as PartId;
            } else if rng.random::<f64>() < rates.lr_swap {
                labels[i] = mirror.get(l as usize).copied().unwrap_or(l);
            }
        } else if rng.random::<f64>() < rates.clutter_leak {
            if let Some(idx) = &fg_index {
                let (j, _) = idx.nearest_one(&points[i]);
                labels[i] = true_labels[fg[j]];
                ids[i] = human_ids[fg[j]];
            }
        }
    }
    Ok(Corrupted { labels, human_ids: ids })
}

fn drop_count(fraction: f64, n: usize) -> usize {
    // Guard against products like 0.7 * 10 = 7.000000000000001.
    let raw = fraction * n as f64;
    let rounded = raw.round();
    let c = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (c as usize).min(n)
}

/// Splits result indices into `(kept, dropped)`, dropping the
/// `ceil(fraction·N)` highest losses (ties drop the higher index). Both lists
/// are ascending.
pub fn filter_pseudo_labels(final_losses: &[f64], fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if final_losses.is_empty() {
        return Err(Error::Empty("no fit results to filter"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("drop fraction {fraction} outside [0, 1]")));
    }
    let n = final_losses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| final_losses[b].total_cmp(&final_losses[a]).then(b.cmp(&a)));
    let d = drop_count(fraction, n);
    let mut dropped = order[..d].to_vec();
    let mut kept = order[d..].to_vec();
    dropped.sort_unstable();
    kept.sort_unstable();
    Ok((kept, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub file: String,
    pub source_index: usize,
    pub source: String,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoManifest {
    pub format_version: u32,
    pub config_digest: String,
    pub drop_fraction: f64,
    pub entries: Vec<PseudoEntry>,
}

/// One candidate scan for the pseudo-label dataset.
pub struct PseudoSample<'a> {
    pub cloud: &'a LabeledPointCloud,
    pub refined_labels: &'a [PartId],
    pub source: String,
    pub final_loss: f64,
}

/// Writes the kept scans with refined labels as labeled PLY plus a manifest.
pub fn export_pseudo_dataset(
    samples: &[PseudoSample<'_>],
    kept: &[usize],
    dir: &Path,
    config_digest: &str,
    drop_fraction: f64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(kept.len());
    for &i in kept {
        let s = samples
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("kept index {i} out of range")))?;
        let mut cloud = s.cloud.clone();
        if s.refined_labels.len() != cloud.len() {
            return Err(Error::DimensionMismatch {
                what: "refined labels",
                expected: cloud.len(),
                got: s.refined_labels.len(),
            });
        }
        cloud.labels = s.refined_labels.to_vec();
        let file = format!("pseudo_{i:04}.ply");
        io::write_ply(&dir.join(&file), &cloud)?;
        entries.push(PseudoEntry {
            file,
            source_index: i,
            source: s.source.clone(),
            final_loss: s.final_loss,
        });
    }
    let manifest = PseudoManifest {
        format_version: io::FORMAT_VERSION,
        config_digest: config_digest.to_string(),
        drop_fraction,
        entries,
    };
    let path = dir.join("manifest.json");
    io::write_json(&path, &manifest)?;
    Ok(path)
}
