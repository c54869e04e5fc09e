//! Synthetic ground-truth scenes and single-view scans.
//!
//! A scene is one or more posed copies of the template plus optional box
//! occluders and floating clutter. The scan is an area-weighted surface
//! sampling with z-buffer hidden-point removal, depth noise along the camera
//! rays, storage rounding to `f32`, and finally synthetic label corruption.

mod raster;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{LabeledPointCloud, PartId, BACKGROUND};
use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::model::{BodyParams, RiggedTemplate};
use crate::par::{self, Execution};
use crate::seglab::{corrupt_labels, CorruptionRates};

pub use raster::{point_triangle_distance, CameraFrame, DepthBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    /// Full vertical and horizontal field of view, degrees.
    pub fov_deg: f64,
    /// Square z-buffer side, pixels.
    pub resolution: usize,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxOccluder {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

/// How per-frame randomness is drawn in a rendered sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSeeds {
    /// Surface samples, occluders and clutter are shared by all frames;
    /// noise and label corruption are redrawn per frame.
    Shared,
    /// Every frame is an independent scan with its own seed.
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRecipe {
    pub seed: u64,
    /// Per-joint, per-axis sampling half-range, radians.
    pub pose_magnitude: f64,
    /// Root yaw sampling half-range, radians.
    pub yaw_range: f64,
    /// Horizontal placement jitter half-range, meters.
    pub placement_range: f64,
    pub beta_range: f64,
    pub camera: Camera,
    pub samples_per_m2: f64,
    pub noise_sigma: f64,
    pub occluder_count: usize,
    /// (min, max) occluder edge length, meters.
    pub occluder_size: [f64; 2],
    /// Fixed occluders added to the random ones.
    pub occluders: Vec<BoxOccluder>,
    pub clutter_points: usize,
    /// (min corner, max corner) of the clutter volume.
    pub clutter_box: [[f64; 3]; 2],
    pub corruption: CorruptionRates,
    pub humans: usize,
    /// Distance between neighboring humans along x, meters.
    pub human_spacing: f64,
    pub sequence_seeds: SequenceSeeds,
}

impl Default for ScanRecipe {
    fn default() -> Self {
        Self {
            seed: 42,
            pose_magnitude: 0.3,
            yaw_range: 1.8,
            placement_range: 0.1,
            beta_range: 0.3,
            camera: Camera {
                position: [0.0, -3.0, 0.2],
                look_at: [0.0, 0.0, -0.05],
                fov_deg: 45.0,
                resolution: 256,
            },
            samples_per_m2: 3000.0,
            noise_sigma: 0.005,
            occluder_count: 1,
            occluder_size: [0.15, 0.4],
            occluders: Vec::new(),
            clutter_points: 150,
            clutter_box: [[-1.0, -0.8, -1.0], [1.0, 0.8, 1.0]],
            corruption: CorruptionRates::default(),
            humans: 1,
            human_spacing: 1.2,
            sequence_seeds: SequenceSeeds::Shared,
        }
    }
}

impl ScanRecipe {
    /// Unoccluded, clutter-free, uncorrupted variant of a recipe.
    pub fn clean(&self) -> Self {
        Self {
            occluder_count: 0,
            occluders: Vec::new(),
            clutter_points: 0,
            corruption: CorruptionRates::none(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("recipe: {m}")));
        let nonneg = [
            self.pose_magnitude,
            self.yaw_range,
            self.placement_range,
            self.beta_range,
            self.samples_per_m2,
            self.noise_sigma,
            self.human_spacing,
            self.occluder_size[0],
            self.occluder_size[1],
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("ranges, densities and sizes must be finite and nonnegative");
        }
        if self.occluder_size[0] > self.occluder_size[1] {
            return bad("occluder_size must be (min, max)");
        }
        if self.humans < 1 || self.humans > 255 {
            return bad("humans must be in 1..=255");
        }
        let c = &self.camera;
        if !(c.fov_deg > 0.0 && c.fov_deg < 180.0) || c.resolution < 1 {
            return bad("camera fov must be in (0, 180) and resolution >= 1");
        }
        if c.position.iter().chain(&c.look_at).any(|v| !v.is_finite()) || c.position == c.look_at {
            return bad("camera position and look_at must be finite and distinct");
        }
        for o in &self.occluders {
            if o.half_extents.iter().any(|h| !(*h >= 0.0)) || o.center.iter().any(|v| !v.is_finite()) {
                return bad("occluder extents must be nonnegative");
            }
        }
        let [lo, hi] = self.clutter_box;
        if (0..3).any(|i| !(lo[i] <= hi[i])) {
            return bad("clutter_box must be (min, max)");
        }
        self.corruption.validate()
    }
}

/// Ground truth of one human in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanTruth {
    pub params: BodyParams,
    pub joints: Vec<Point3>,
    /// Posed vertices; not stored on disk, see [`GroundTruth::restore_vertices`].
    #[serde(skip)]
    pub vertices: Vec<Point3>,
}

/// Everything the generator knows about an emitted cloud, before corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub humans: Vec<HumanTruth>,
    /// True part label per emitted point.
    pub labels: Vec<PartId>,
    /// Instance per emitted point, `1..=humans` or `0` for scene points.
    pub human_ids: Vec<u8>,
    /// Mean of the emitted points per true part (entry `k − 1` is part `k`).
    pub part_means: Vec<Option<Point3>>,
}

impl GroundTruth {
    pub fn restore_vertices(&mut self, template: &RiggedTemplate) -> Result<()> {
        for h in &mut self.humans {
            h.vertices = template.pose_mesh(&h.params)?;
        }
        Ok(())
    }

    /// Truth of instance `id` (1-based, as in `human_ids`).
    pub fn human(&self, id: u8) -> Option<&HumanTruth> {
        self.humans.get((id as usize).checked_sub(1)?)
    }
}

/// A generated scan with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: LabeledPointCloud,
    pub truth: GroundTruth,
}

mod stream {
    pub const POSE: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const OCCLUDERS: u64 = 4;
    pub const CLUTTER: u64 = 5;
    pub const CORRUPTION: u64 = 6;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of scan `index` of a benchmark with base seed `base`.
pub fn scan_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, half_range: f64) -> f64 {
    if half_range > 0.0 {
        rng.random_range(-half_range..=half_range)
    } else {
        0.0
    }
}

/// Random pose: every non-root joint axis uniform in ±pose_magnitude clamped
/// to the template's joint limits, root yaw uniform in ±yaw_range, β uniform
/// in ±beta_range, horizontal jitter in ±placement_range.
pub fn sample_pose(template: &RiggedTemplate, recipe: &ScanRecipe, rng: &mut ChaCha8Rng) -> BodyParams {
    let mut p = template.identity_params();
    let root = template.root();
    let limits = template.joint_limits();
    for j in 0..template.num_joints() {
        if j == root {
            continue;
        }
        for a in 0..3 {
            let v = uniform(rng, recipe.pose_magnitude);
            p.theta[j][a] = v.clamp(limits[j].lower[a], limits[j].upper[a]);
        }
    }
    p.theta[root] = Vector3::new(0.0, 0.0, uniform(rng, recipe.yaw_range));
    for b in &mut p.beta {
        *b = uniform(rng, recipe.beta_range);
    }
    p.translation = Vector3::new(uniform(rng, recipe.placement_range), uniform(rng, recipe.placement_range), 0.0);
    p
}

/// Ground-truth parameters for every human of a scene.
pub fn sample_scene(template: &RiggedTemplate, recipe: &ScanRecipe) -> Vec<BodyParams> {
    let mut rng = rng_for(recipe.seed, stream::POSE);
    (0..recipe.humans)
        .map(|h| {
            let mut p = sample_pose(template, recipe, &mut rng);
            p.translation.x += (h as f64 - 0.5 * (recipe.humans as f64 - 1.0)) * recipe.human_spacing;
            p
        })
        .collect()
}

struct Surface {
    vertices: Vec<Point3>,
    faces: Vec<[u32; 3]>,
    face_label: Vec<PartId>,
    human_id: u8,
}

impl Surface {
    fn area_cdf(&self) -> (Vec<f64>, f64) {
        let mut acc = 0.0;
        let cdf = self
            .faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i as usize]);
                acc += 0.5 * (b - a).cross(&(c - a)).norm();
                acc
            })
            .collect();
        (cdf, acc)
    }

    /// `count` area-uniform surface samples as (point, face).
    fn sample(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<(Point3, usize)> {
        let (cdf, total) = self.area_cdf();
        if total <= 0.0 {
            return Vec::new();
        }
        (0..count)
            .map(|_| {
                let x = rng.random::<f64>() * total;
                let f = cdf.partition_point(|&c| c <= x).min(cdf.len() - 1);
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let s = r1.sqrt();
                let [a, b, c] = self.faces[f].map(|i| self.vertices[i as usize]);
                (a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2), f)
            })
            .collect()
    }

    fn expected_count(&self, density: f64) -> usize {
        (self.area_cdf().1 * density).round() as usize
    }
}

fn box_surface(b: &BoxOccluder) -> Surface {
    let c = Vector3::from(b.center);
    let h = Vector3::from(b.half_extents);
    let vertices: Vec<Point3> = (0..8)
        .map(|i| {
            let s = Vector3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            c + h.component_mul(&s)
        })
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect::<Vec<_>>();
    Surface {
        face_label: vec![BACKGROUND; faces.len()],
        vertices,
        faces,
        human_id: 0,
    }
}

fn human_surface(template: &RiggedTemplate, vertices: Vec<Point3>, human_id: u8) -> Surface {
    let faces = template.faces().to_vec();
    let face_label = faces.iter().map(|f| template.vertex_part()[f[0] as usize]).collect();
    Surface {
        vertices,
        faces,
        face_label,
        human_id,
    }
}

/// Random occluders stand this far clear of every body surface, so no
/// background point is sampled inside a limb.
const OCCLUDER_CLEARANCE: f64 = 0.1;

fn box_distance(b: &BoxOccluder, p: &Point3) -> f64 {
    (0..3).map(|a| ((p[a] - b.center[a]).abs() - b.half_extents[a]).max(0.0).powi(2)).sum::<f64>().sqrt()
}

fn random_occluders(recipe: &ScanRecipe, humans: &[BodyParams], meshes: &[&[Point3]], rng: &mut ChaCha8Rng) -> Vec<BoxOccluder> {
    let cam = Vector3::from(recipe.camera.position);
    let [lo, hi] = recipe.occluder_size;
    (0..recipe.occluder_count)
        .map(|_| {
            let h = rng.random_range(0..humans.len());
            let target = humans[h].translation + Vector3::new(rng.random_range(-0.3..=0.3), 0.0, rng.random_range(-0.9..=0.7));
            let mut half = [0.0; 3];
            for v in &mut half {
                *v = 0.5 * if hi > lo { rng.random_range(lo..=hi) } else { lo };
            }
            let dir = (cam - target).normalize();
            let mut standoff = 0.5 + half[1];
            loop {
                let b = BoxOccluder {
                    center: (target + dir * standoff).into(),
                    half_extents: half,
                };
                let near = meshes.iter().flat_map(|m| m.iter()).any(|v| box_distance(&b, v) < OCCLUDER_CLEARANCE);
                if !near || standoff > 2.0 {
                    break b;
                }
                standoff += 0.05;
            }
        })
        .collect()
}

/// Slightly irrational direction so that parity rays avoid mesh edges.
const PARITY_DIR: [f64; 3] = [0.431_257_3, 0.271_918_6, 0.860_250_4];

fn ray_hits_triangle(o: &Point3, d: &Vector3<f64>, tri: [Point3; 3]) -> bool {
    // Möller–Trumbore
    let [a, b, c] = tri;
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&qv) * inv > 0.0
}

/// True when `point` lies inside any closed per-part surface of the mesh.
pub fn inside_mesh(template: &RiggedTemplate, vertices: &[Point3], point: &Point3) -> bool {
    let d = Vector3::from(PARITY_DIR).normalize();
    let mut crossings = vec![0usize; template.num_parts() + 1];
    for f in template.faces() {
        let tri = f.map(|i| vertices[i as usize]);
        if ray_hits_triangle(point, &d, tri) {
            crossings[template.vertex_part()[f[0] as usize] as usize] += 1;
        }
    }
    crossings.iter().any(|c| c % 2 == 1)
}

/// Randomness sources of one rendered frame.
struct FrameSeeds {
    sampling: u64,
    noise: u64,
    occluders: u64,
    clutter: u64,
    corruption: u64,
}

impl FrameSeeds {
    fn single(seed: u64) -> Self {
        Self {
            sampling: seed,
            noise: seed,
            occluders: seed,
            clutter: seed,
            corruption: seed,
        }
    }
}

/// Renders a scan of the given humans under the recipe's camera, noise,
/// occlusion, clutter and corruption settings, seeded by `recipe.seed`.
pub fn render_scan(template: &RiggedTemplate, humans: &[BodyParams], recipe: &ScanRecipe) -> Result<Scan> {
    render_with(template, humans, recipe, &FrameSeeds::single(recipe.seed), None)
}

fn render_with(template: &RiggedTemplate, humans: &[BodyParams], recipe: &ScanRecipe, seeds: &FrameSeeds, placed: Option<&[BoxOccluder]>) -> Result<Scan> {
    recipe.validate()?;
    if humans.is_empty() || humans.len() > 255 {
        return Err(Error::InvalidArgument("a scene needs 1..=255 humans".into()));
    }
    let cam = CameraFrame::new(&recipe.camera)?;
    let mut truths = Vec::with_capacity(humans.len());
    let mut surfaces = Vec::new();
    for (h, params) in humans.iter().enumerate() {
        let posed = template.pose(params)?;
        if inside_mesh(template, &posed.vertices, &cam.position) {
            return Err(Error::CameraInsideMesh { human: h + 1 });
        }
        truths.push(HumanTruth {
            params: params.clone(),
            joints: posed.joints.clone(),
            vertices: posed.vertices.clone(),
        });
        surfaces.push(human_surface(template, posed.vertices, (h + 1) as u8));
    }
    let mut occluders = recipe.occluders.clone();
    match placed {
        Some(p) => occluders.extend_from_slice(p),
        None => {
            let meshes: Vec<&[Point3]> = truths.iter().map(|t| t.vertices.as_slice()).collect();
            occluders.extend(random_occluders(recipe, humans, &meshes, &mut rng_for(seeds.occluders, stream::OCCLUDERS)));
        }
    }
    surfaces.extend(occluders.iter().map(box_surface));

    let mut depth = DepthBuffer::new(&cam);
    for s in &surfaces {
        for f in &s.faces {
            depth.rasterize(f.map(|i| s.vertices[i as usize]));
        }
    }

    let mut sampling = rng_for(seeds.sampling, stream::SAMPLING);
    let mut noise_rng = rng_for(seeds.noise, stream::NOISE);
    let normal = Normal::new(0.0, recipe.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let clamp = 4.0 * recipe.noise_sigma;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for s in &surfaces {
        let n = s.expected_count(recipe.samples_per_m2);
        for (p, f) in s.sample(n, &mut sampling) {
            // every candidate consumes one noise draw so visibility does not
            // shift the noise of later points
            let eps: f64 = if recipe.noise_sigma > 0.0 {
                normal.sample(&mut noise_rng).clamp(-clamp, clamp)
            } else {
                0.0
            };
            if !depth.visible(&p) {
                continue;
            }
            let ray = (p - cam.position).normalize();
            points.push(round_f32(&(p + ray * eps)));
            labels.push(s.face_label[f]);
            ids.push(s.human_id);
        }
    }
    let mut clutter_rng = rng_for(seeds.clutter, stream::CLUTTER);
    let [lo, hi] = recipe.clutter_box;
    for _ in 0..recipe.clutter_points {
        let mut p = Point3::zeros();
        for a in 0..3 {
            p[a] = if hi[a] > lo[a] { clutter_rng.random_range(lo[a]..hi[a]) } else { lo[a] };
        }
        points.push(round_f32(&p));
        labels.push(BACKGROUND);
        ids.push(0);
    }

    let corrupted = corrupt_labels(
        &points,
        &labels,
        &ids,
        template.num_parts(),
        template.mirror(),
        &recipe.corruption,
        rng_for(seeds.corruption, stream::CORRUPTION).random(),
    )?;
    let part_means = part_means(&points, &labels, template.num_parts());
    let cloud = LabeledPointCloud::new(points, corrupted.labels)?.with_human_ids(corrupted.human_ids)?;
    Ok(Scan {
        cloud,
        truth: GroundTruth {
            humans: truths,
            labels,
            human_ids: ids,
            part_means,
        },
    })
}

fn round_f32(p: &Point3) -> Point3 {
    p.map(|c| c as f32 as f64)
}

fn part_means(points: &[Point3], labels: &[PartId], num_parts: usize) -> Vec<Option<Point3>> {
    let mut sum = vec![Point3::zeros(); num_parts];
    let mut count = vec![0usize; num_parts];
    for (p, &l) in points.iter().zip(labels) {
        if l != BACKGROUND && (l as usize) <= num_parts {
            sum[l as usize - 1] += p;
            count[l as usize - 1] += 1;
        }
    }
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Samples a scene from `recipe.seed` and renders it.
pub fn generate_scan(template: &RiggedTemplate, recipe: &ScanRecipe) -> Result<Scan> {
    let humans = sample_scene(template, recipe);
    render_scan(template, &humans, recipe)
}

/// `count` scans; scan `i` uses seed `scan_seed(recipe.seed, i)`.
pub fn generate_benchmark(template: &RiggedTemplate, recipe: &ScanRecipe, count: usize, exec: Execution) -> Result<Vec<Scan>> {
    recipe.validate()?;
    par::map_range(exec, count, |i| {
        let r = ScanRecipe {
            seed: scan_seed(recipe.seed, i as u64),
            ..recipe.clone()
        };
        generate_scan(template, &r)
    })
    .into_iter()
    .collect()
}

/// Renders one scan per frame of `motion` (frame-major, one params entry per
/// human), following `recipe.sequence_seeds`.
pub fn render_sequence(template: &RiggedTemplate, motion: &[Vec<BodyParams>], recipe: &ScanRecipe, exec: Execution) -> Result<Vec<Scan>> {
    recipe.validate()?;
    // shared occluders keep their clearance from the body in every frame
    let placed = match (recipe.sequence_seeds, motion.first()) {
        (SequenceSeeds::Shared, Some(first)) => {
            let posed = par::map(exec, motion, |_, humans| humans.iter().map(|p| template.pose_mesh(p)).collect::<Result<Vec<_>>>())
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let meshes: Vec<&[Point3]> = posed.iter().flatten().map(Vec::as_slice).collect();
            Some(random_occluders(recipe, first, &meshes, &mut rng_for(recipe.seed, stream::OCCLUDERS)))
        }
        _ => None,
    };
    par::map(exec, motion, |t, humans| {
        let frame = scan_seed(recipe.seed, t as u64);
        let seeds = match recipe.sequence_seeds {
            SequenceSeeds::PerFrame => FrameSeeds::single(frame),
            SequenceSeeds::Shared => FrameSeeds {
                sampling: recipe.seed,
                noise: frame,
                occluders: recipe.seed,
                clutter: recipe.seed,
                corruption: frame,
            },
        };
        render_with(template, humans, recipe, &seeds, placed.as_deref())
    })
    .into_iter()
    .collect()
}

/// Linear interpolation of parameters, `s` in [0, 1].
pub fn lerp_params(a: &BodyParams, b: &BodyParams, s: f64) -> BodyParams {
    BodyParams {
        theta: a.theta.iter().zip(&b.theta).map(|(x, y)| x + (y - x) * s).collect(),
        beta: a.beta.iter().zip(&b.beta).map(|(x, y)| x + (y - x) * s).collect(),
        translation: a.translation + (b.translation - a.translation) * s,
    }
}

/// A slow motion for every human of the recipe's scene: `frames` poses
/// interpolated between two sampled poses, scaled so that no joint's
/// axis-angle vector moves more than `max_step` radians per frame. Shape and
/// placement stay fixed.
pub fn slow_motion(template: &RiggedTemplate, recipe: &ScanRecipe, frames: usize, max_step: f64) -> Vec<Vec<BodyParams>> {
    let start = sample_scene(template, recipe);
    let end_recipe = ScanRecipe {
        seed: scan_seed(recipe.seed, u64::MAX),
        ..recipe.clone()
    };
    let mut end = sample_scene(template, &end_recipe);
    let steps = frames.saturating_sub(1).max(1) as f64;
    for (a, b) in start.iter().zip(&mut end) {
        b.beta = a.beta.clone();
        b.translation = a.translation;
        let widest = a.theta.iter().zip(&b.theta).map(|(x, y)| (y - x).norm()).fold(0.0, f64::max) / steps;
        if widest > max_step {
            *b = lerp_params(a, b, max_step / widest);
        }
    }
    (0..frames)
        .map(|t| {
            start
                .iter()
                .zip(&end)
                .map(|(a, b)| lerp_params(a, b, t as f64 / steps))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_humanoid;

    fn quiet(recipe: &ScanRecipe) -> ScanRecipe {
        ScanRecipe {
            noise_sigma: 0.0,
            ..recipe.clean()
        }
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let t = builtin_humanoid(0);
        let r = ScanRecipe {
            pose_magnitude: 0.0,
            yaw_range: 0.0,
            placement_range: 0.0,
            beta_range: 0.0,
            ..ScanRecipe::default()
        };
        let mut rng = rng_for(1, 0);
        assert_eq!(sample_pose(&t, &r, &mut rng), t.identity_params());
    }

    #[test]
    fn default_scan_has_body_points() {
        let t = builtin_humanoid(0);
        let s = generate_scan(&t, &ScanRecipe::default()).unwrap();
        let fg = s.truth.labels.iter().filter(|&&l| l != 0).count();
        assert!(fg > 1000, "{fg}");
        assert_eq!(s.cloud.len(), s.truth.labels.len());
    }

    #[test]
    fn clean_render_lies_on_surface() {
        let t = builtin_humanoid(0);
        let s = generate_scan(&t, &quiet(&ScanRecipe::default())).unwrap();
        let v = &s.truth.humans[0].vertices;
        assert!(s.cloud.labels == s.truth.labels);
        for (i, p) in s.cloud.points.iter().enumerate().step_by(7) {
            let best = t
                .faces()
                .iter()
                .filter(|f| t.vertex_part()[f[0] as usize] == s.truth.labels[i])
                .map(|f| raster::point_triangle_distance(p, f.map(|k| v[k as usize])))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "point {i} is {best} from its part surface");
        }
    }

    #[test]
    fn camera_inside_is_error() {
        let t = builtin_humanoid(0);
        let mut r = ScanRecipe::default();
        r.camera.position = [0.0, 0.0, 0.3];
        r.camera.look_at = [0.0, -1.0, 0.3];
        assert!(matches!(generate_scan(&t, &r), Err(Error::CameraInsideMesh { human: 1 })));
    }
}
