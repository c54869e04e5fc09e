#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segfit::model::builtin_humanoid;
use segfit::synth::{generate_scan, Scan, ScanRecipe};
use segfit::{BodyParams, LabeledPointCloud, Point3, RiggedTemplate};
use std::sync::OnceLock;

pub fn humanoid() -> &'static RiggedTemplate {
    static T: OnceLock<RiggedTemplate> = OnceLock::new();
    T.get_or_init(|| builtin_humanoid(0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(t: &RiggedTemplate, rng: &mut ChaCha8Rng, magnitude: f64) -> BodyParams {
    let mut p = t.identity_params();
    for th in p.theta.iter_mut() {
        *th = Vector3::new(
            rng.random_range(-magnitude..magnitude),
            rng.random_range(-magnitude..magnitude),
            rng.random_range(-magnitude..magnitude),
        );
    }
    for b in p.beta.iter_mut() {
        *b = rng.random_range(-1.0..1.0);
    }
    p.translation = Vector3::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
    );
    p
}

/// Every posed vertex as a cloud point carrying its part label.
pub fn vertex_cloud(t: &RiggedTemplate, p: &BodyParams) -> LabeledPointCloud {
    LabeledPointCloud::new(t.pose_mesh(p).unwrap(), t.vertex_part().to_vec()).unwrap()
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let w = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    segfit::geom::so3::exp(&w)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| Point3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect()
}

pub fn default_scan(seed: u64) -> Scan {
    generate_scan(humanoid(), &ScanRecipe { seed, ..ScanRecipe::default() }).unwrap()
}

pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}
