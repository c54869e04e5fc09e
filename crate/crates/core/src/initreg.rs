//! Segmentation-driven initialization: scan part centroids, weighted rigid
//! alignment of model centroids onto them, a centroid-only pose solve, and
//! the four-yaw multi-start used when no segmentation is available.

use nalgebra::Vector3;

use crate::cloud::{LabeledPointCloud, PartId, BACKGROUND};
use crate::error::{Error, Result};
use crate::fit::adam::{Adam, EarlyStop};
use crate::fit::FitConfig;
use crate::geom::{kabsch, so3, Point3};
use crate::model::{BodyParams, RiggedTemplate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartCentroid {
    pub centroid: Point3,
    pub count: usize,
}

/// Per-part scan centroids; entry `k − 1` is part `k`, `None` when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCentroids {
    pub parts: Vec<Option<PartCentroid>>,
}

impl ScanCentroids {
    pub fn present(&self) -> impl Iterator<Item = (PartId, &PartCentroid)> {
        self.parts
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| ((i + 1) as PartId, c)))
    }

    pub fn num_present(&self) -> usize {
        self.parts.iter().filter(|c| c.is_some()).count()
    }
}

pub fn scan_part_centroids(cloud: &LabeledPointCloud, num_parts: usize) -> Result<ScanCentroids> {
    if cloud.is_empty() {
        return Err(Error::Empty("cloud has no points"));
    }
    let mut sums = vec![Vector3::zeros(); num_parts];
    let mut counts = vec![0usize; num_parts];
    for (p, &l) in cloud.points.iter().zip(&cloud.labels) {
        if l == BACKGROUND {
            continue;
        }
        let k = l as usize;
        if k > num_parts {
            return Err(Error::InvalidArgument(format!("label {l} exceeds part count {num_parts}")));
        }
        sums[k - 1] += p;
        counts[k - 1] += 1;
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Empty("cloud has no non-background points"));
    }
    Ok(ScanCentroids {
        parts: sums
            .into_iter()
            .zip(counts)
            .map(|(s, n)| {
                (n > 0).then(|| PartCentroid {
                    centroid: s / n as f64,
                    count: n,
                })
            })
            .collect(),
    })
}

/// Output of [`centroid_init`].
#[derive(Debug, Clone)]
pub struct CentroidInit {
    pub params: BodyParams,
    /// Count-weighted RMS centroid residual after the rigid phase.
    pub rigid_rms: f64,
    /// Count-weighted RMS centroid residual after the pose solve.
    pub pose_rms: f64,
    /// Best-so-far pose-solve objective, one entry per Adam step.
    pub trace: Vec<f64>,
}

fn centroid_objective(
    template: &RiggedTemplate,
    params: &BodyParams,
    targets: &[(usize, Point3, f64)],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let posed = template.pose(params)?;
    let centroids = template.part_centroids_of(&posed.vertices);
    let mut loss = 0.0;
    let mut vgrad = want_grad.then(|| vec![Vector3::zeros(); template.num_vertices()]);
    for &(k, target, w) in targets {
        let diff = centroids[k] - target;
        loss += w * diff.norm_squared();
        if let Some(g) = vgrad.as_mut() {
            let ids = &template.part_vertices()[k + 1];
            let per = diff * (2.0 * w / ids.len() as f64);
            for &i in ids {
                g[i as usize] += per;
            }
        }
    }
    let grad = vgrad.map(|g| {
        let mut flat = template.backprop(params, &posed, &g).to_flat();
        // Shape stays fixed during initialization.
        let nb = template.num_betas();
        let o = 3 * template.num_joints();
        flat[o..o + nb].iter_mut().for_each(|x| *x = 0.0);
        flat
    });
    Ok((loss, grad))
}

/// Rigid alignment of identity-pose model centroids onto the scan centroids
/// (weights = part point counts), followed by an optional centroid-only pose
/// solve over θ and t.
pub fn centroid_init(scan: &ScanCentroids, template: &RiggedTemplate, config: &FitConfig) -> Result<CentroidInit> {
    if scan.parts.len() != template.num_parts() {
        return Err(Error::DimensionMismatch {
            what: "scan centroid parts",
            expected: template.num_parts(),
            got: scan.parts.len(),
        });
    }
    let present: Vec<(PartId, PartCentroid)> = scan.present().map(|(k, c)| (k, *c)).collect();
    if present.len() < 3 {
        return Err(Error::DegenerateInit(format!(
            "only {} body parts observed; centroid alignment needs at least 3",
            present.len()
        )));
    }
    let identity = template.identity_params();
    let model = template.model_part_centroids(&identity)?;
    let source: Vec<Point3> = present.iter().map(|(k, _)| model[*k as usize - 1]).collect();
    let target: Vec<Point3> = present.iter().map(|(_, c)| c.centroid).collect();
    let weights: Vec<f64> = present.iter().map(|(_, c)| c.count as f64).collect();
    let total_weight: f64 = weights.iter().sum();

    let mut params = identity;
    let root = template.root();
    let root_rest = template.rest_joints()[root];
    if config.init_rigid {
        let rigid = kabsch(&source, &target, &weights).map_err(|e| match e {
            Error::Degenerate(msg) => Error::DegenerateInit(msg),
            other => other,
        })?;
        // Posing the root rotates about its rest position:
        // v' = R(v − j) + j + t  ⇒  t = t_rigid + R·j − j.
        params.theta[root] = so3::log(&rigid.rotation);
        params.translation = rigid.translation + rigid.rotation * root_rest - root_rest;
    } else {
        let sc: Point3 = source.iter().zip(&weights).map(|(p, w)| p * *w).sum::<Point3>() / total_weight;
        let tc: Point3 = target.iter().zip(&weights).map(|(p, w)| p * *w).sum::<Point3>() / total_weight;
        params.translation = tc - sc;
    }

    let targets: Vec<(usize, Point3, f64)> = present
        .iter()
        .map(|(k, c)| (*k as usize - 1, c.centroid, c.count as f64))
        .collect();
    let (rigid_loss, _) = centroid_objective(template, &params, &targets, false)?;
    let rigid_rms = (rigid_loss / total_weight).sqrt();

    let mut trace = Vec::new();
    let mut best = params.clone();
    let mut best_loss = rigid_loss;
    if config.init_pose_solve && config.init_steps > 0 {
        let mut x = params.to_flat();
        let mut opt = Adam::with_epsilon(x.len(), config.adam_epsilon);
        let mut stop = EarlyStop::new(rigid_loss, config.early_stop_patience, config.early_stop_min_relative_improvement);
        let mut current = params.clone();
        let (_, mut grad) = centroid_objective(template, &current, &targets, true)?;
        for step in 0..config.init_steps {
            opt.step(&mut x, grad.as_ref().expect("gradient requested"), config.init_learning_rate);
            current.set_flat(&x);
            let (loss, g) = centroid_objective(template, &current, &targets, true)?;
            if !loss.is_finite() {
                return Err(Error::NumericFailure {
                    step,
                    detail: "centroid pose solve diverged".into(),
                });
            }
            grad = g;
            let (improved, done) = stop.observe(loss);
            if improved {
                best = current.clone();
                best_loss = loss;
            }
            trace.push(best_loss);
            if done {
                break;
            }
        }
    }
    Ok(CentroidInit {
        params: best.canonicalized(),
        rigid_rms,
        pose_rms: (best_loss / total_weight).sqrt(),
        trace,
    })
}

pub const MULTI_START_YAWS_DEG: [f64; 4] = [0.0, 90.0, 180.0, 270.0];

/// Four identity-pose seeds differing only in root yaw, with the root placed
/// at the bounding-box center of the cloud's foreground.
pub fn multi_start(cloud: &LabeledPointCloud, template: &RiggedTemplate) -> Result<[BodyParams; 4]> {
    let center = cloud
        .foreground_bbox_center()
        .ok_or(Error::Empty("cloud has no points"))?;
    let root = template.root();
    let translation = center - template.rest_joints()[root];
    Ok(MULTI_START_YAWS_DEG.map(|deg| {
        let mut p = template.identity_params();
        p.theta[root] = so3::canonicalize(&Vector3::new(0.0, 0.0, deg.to_radians()));
        p.translation = translation;
        p
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_humanoid;

    fn cloud_from_vertices(t: &RiggedTemplate, params: &BodyParams) -> LabeledPointCloud {
        let v = t.pose_mesh(params).unwrap();
        LabeledPointCloud::new(v, t.vertex_part().to_vec()).unwrap()
    }

    #[test]
    fn centroids_of_constant_part() {
        let cloud = LabeledPointCloud::new(vec![Point3::new(1.0, 2.0, 3.0); 7], vec![4; 7]).unwrap();
        let c = scan_part_centroids(&cloud, 15).unwrap();
        let p = c.parts[3].unwrap();
        assert_eq!(p.centroid, Point3::new(1.0, 2.0, 3.0));
        assert_eq!(p.count, 7);
        assert_eq!(c.num_present(), 1);
    }

    #[test]
    fn symmetric_points_give_symmetric_centroids() {
        let pts = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 1.0, 0.0), Point3::new(-1.0, 0.0, 0.0), Point3::new(-2.0, 1.0, 0.0)];
        let c = scan_part_centroids(&LabeledPointCloud::new(pts, vec![1, 1, 2, 2]).unwrap(), 2).unwrap();
        let (a, b) = (c.parts[0].unwrap().centroid, c.parts[1].unwrap().centroid);
        assert_eq!(a, Point3::new(-b.x, b.y, b.z));
    }

    #[test]
    fn background_only_is_error() {
        let cloud = LabeledPointCloud::new(vec![Point3::zeros(); 3], vec![0; 3]).unwrap();
        assert!(scan_part_centroids(&cloud, 15).is_err());
        let empty = LabeledPointCloud::new(vec![], vec![]).unwrap();
        assert!(scan_part_centroids(&empty, 15).is_err());
    }

    #[test]
    fn shifted_identity_scan() {
        let t = builtin_humanoid(0);
        let mut p = t.identity_params();
        p.translation = Vector3::new(1.0, 0.0, 0.0);
        let cloud = cloud_from_vertices(&t, &p);
        let sc = scan_part_centroids(&cloud, 15).unwrap();
        let init = centroid_init(&sc, &t, &FitConfig::default()).unwrap();
        assert!(so3::exp(&init.params.theta[0]).relative_eq(&nalgebra::Matrix3::identity(), 1e-9, 1e-9));
        assert!((init.params.translation - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        assert!(init.rigid_rms < 1e-9);
        assert!(init.params.theta[1..].iter().all(|w| w.norm() < 1e-6));
    }

    #[test]
    fn collinear_parts_are_degenerate() {
        let t = builtin_humanoid(0);
        let cloud = cloud_from_vertices(&t, &t.identity_params());
        let mut sc = scan_part_centroids(&cloud, 15).unwrap();
        for k in 3..15 {
            sc.parts[k] = None;
        }
        assert!(matches!(centroid_init(&sc, &t, &FitConfig::default()), Err(Error::DegenerateInit(_))));
    }

    #[test]
    fn multi_start_yaws_and_translation() {
        let t = builtin_humanoid(0);
        let cloud = LabeledPointCloud::new(
            vec![Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 2.0, 4.0), Point3::new(50.0, 50.0, 50.0)],
            vec![2, 3, 0],
        )
        .unwrap();
        let seeds = multi_start(&cloud, &t).unwrap();
        for (seed, deg) in seeds.iter().zip(MULTI_START_YAWS_DEG) {
            let r = so3::exp(&seed.theta[0]);
            assert!((r - so3::rot_z(deg.to_radians())).abs().max() < 1e-12);
            assert_eq!(seed.translation, Vector3::new(0.0, 1.0, 2.0));
            assert!(seed.theta[1..].iter().all(|w| w.norm() == 0.0));
        }
    }
}
