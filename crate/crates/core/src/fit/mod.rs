//! The combined fitting energy, its analytic gradient, Adam with early
//! stopping, the four ablation variants, and video fitting.

pub mod adam;

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::geom::chamfer::{correspondence_loss, resolve};
use crate::geom::{Correspondence, PartIndex, DEFAULT_HUBER_DELTA};
use crate::initreg::{centroid_init, multi_start, scan_part_centroids, MULTI_START_YAWS_DEG};
use crate::model::{BodyParams, Posed, RiggedTemplate};
use crate::par::{self, Execution};
use adam::{Adam, EarlyStop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub lambda_data: f64,
    pub lambda_pose: f64,
    pub lambda_shape: f64,
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied every `lr_decay_every` steps.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub early_stop_patience: usize,
    pub early_stop_min_relative_improvement: f64,
    pub huber_delta: f64,
    pub use_part_labels: bool,
    pub use_centroid_init: bool,
    pub optimize: bool,
    /// Rigid centroid alignment phase of the initialization.
    pub init_rigid: bool,
    /// Centroid-only pose solve phase of the initialization.
    pub init_pose_solve: bool,
    pub init_steps: usize,
    pub init_learning_rate: f64,
    /// Adam denominator offset; 0 makes the updates exactly invariant to a
    /// common scaling of the three λ.
    pub adam_epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_data: 1.0,
            lambda_pose: 0.5,
            lambda_shape: 0.5,
            max_steps: 200,
            learning_rate: 0.03,
            lr_decay: 0.97,
            lr_decay_every: 10,
            early_stop_patience: 10,
            early_stop_min_relative_improvement: 1e-5,
            huber_delta: DEFAULT_HUBER_DELTA,
            use_part_labels: true,
            use_centroid_init: true,
            optimize: true,
            init_rigid: true,
            init_pose_solve: true,
            init_steps: 50,
            init_learning_rate: 0.02,
            adam_epsilon: adam::EPSILON,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("fit config: {m}")));
        if [self.lambda_data, self.lambda_pose, self.lambda_shape]
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return bad("lambdas must be finite and nonnegative");
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.init_learning_rate > 0.0 && self.init_learning_rate.is_finite()) {
            return bad("init_learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_decay_every == 0 {
            return bad("lr_decay must be in (0, 1] with lr_decay_every >= 1");
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return bad("huber_delta must be positive");
        }
        if !(self.adam_epsilon >= 0.0 && self.adam_epsilon.is_finite()) {
            return bad("adam_epsilon must be finite and nonnegative");
        }
        if !(self.early_stop_min_relative_improvement >= 0.0) {
            return bad("early_stop_min_relative_improvement must be nonnegative");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((step / self.lr_decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub pose: f64,
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BodyParams,
    pub loss: LossBreakdown,
    pub initial_loss: f64,
    pub steps_taken: usize,
    /// Seconds, summed over every optimization the result aggregates.
    pub wall_time: f64,
    pub converged: bool,
    pub init_used: String,
    pub optimizations: usize,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        self.loss.total
    }

    /// Equality on everything except wall-clock time.
    pub fn same_outcome(&self, other: &FitResult) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        &a == other
    }
}

/// The fitting energy for one cloud and template.
pub struct Objective<'a> {
    cloud: &'a LabeledPointCloud,
    template: &'a RiggedTemplate,
    config: &'a FitConfig,
}

impl<'a> Objective<'a> {
    pub fn new(cloud: &'a LabeledPointCloud, template: &'a RiggedTemplate, config: &'a FitConfig) -> Self {
        Self { cloud, template, config }
    }

    /// Nearest-vertex correspondences at `params`: per-part when part labels
    /// are in use, over the whole mesh otherwise.
    pub fn correspondences(&self, params: &BodyParams) -> Result<Vec<Correspondence>> {
        let posed = self.template.pose(params)?;
        self.correspondences_for(&posed)
    }

    fn correspondences_for(&self, posed: &Posed) -> Result<Vec<Correspondence>> {
        let index = if self.config.use_part_labels {
            PartIndex::build(&posed.vertices, self.template.part_vertices())
        } else {
            PartIndex::whole(&posed.vertices)?
        };
        resolve(self.cloud, &index)
    }

    /// Loss (and optionally its flat gradient) with correspondences resolved
    /// at `params`.
    pub fn evaluate(&self, params: &BodyParams, want_grad: bool) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let posed = self.template.pose(params)?;
        if !posed.vertices.iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(Error::NumericFailure {
                step: 0,
                detail: "posed mesh is not finite".into(),
            });
        }
        let corr = self.correspondences_for(&posed)?;
        Ok(self.evaluate_posed(params, &posed, &corr, want_grad))
    }

    /// Loss with a fixed correspondence set; smooth in the parameters.
    pub fn evaluate_frozen(
        &self,
        params: &BodyParams,
        corr: &[Correspondence],
        want_grad: bool,
    ) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let posed = self.template.pose(params)?;
        Ok(self.evaluate_posed(params, &posed, corr, want_grad))
    }

    fn evaluate_posed(
        &self,
        params: &BodyParams,
        posed: &Posed,
        corr: &[Correspondence],
        want_grad: bool,
    ) -> (LossBreakdown, Option<Vec<f64>>) {
        let cfg = self.config;
        let mut vgrad = want_grad.then(|| vec![Vector3::zeros(); posed.vertices.len()]);
        let data = correspondence_loss(&self.cloud.points, &posed.vertices, corr, cfg.huber_delta, vgrad.as_deref_mut());

        let root = self.template.root();
        let rest = self.template.rest_pose();
        let pose: f64 = params
            .theta
            .iter()
            .zip(rest)
            .enumerate()
            .filter(|(j, _)| *j != root)
            .map(|(_, (t, t0))| (t - t0).norm_squared())
            .sum();
        let shape: f64 = params.beta.iter().map(|b| b * b).sum();
        let loss = LossBreakdown {
            total: cfg.lambda_data * data + cfg.lambda_pose * pose + cfg.lambda_shape * shape,
            data,
            pose,
            shape,
        };

        let grad = vgrad.map(|mut g| {
            if cfg.lambda_data != 1.0 {
                g.iter_mut().for_each(|v| *v *= cfg.lambda_data);
            }
            let mut pg = self.template.backprop(params, posed, &g);
            for (j, (gt, (t, t0))) in pg.theta.iter_mut().zip(params.theta.iter().zip(rest)).enumerate() {
                if j != root {
                    *gt += (t - t0) * (2.0 * cfg.lambda_pose);
                }
            }
            for (gb, b) in pg.beta.iter_mut().zip(&params.beta) {
                *gb += 2.0 * cfg.lambda_shape * b;
            }
            pg.to_flat()
        });
        (loss, grad)
    }
}

/// Total loss and its components at `params`.
pub fn objective(
    cloud: &LabeledPointCloud,
    template: &RiggedTemplate,
    params: &BodyParams,
    config: &FitConfig,
) -> Result<LossBreakdown> {
    Ok(Objective::new(cloud, template, config).evaluate(params, false)?.0)
}

/// Analytic gradient in [`BodyParams::to_flat`] layout, with correspondences
/// resolved at `params` and held fixed.
pub fn gradient(
    cloud: &LabeledPointCloud,
    template: &RiggedTemplate,
    params: &BodyParams,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    let (_, g) = Objective::new(cloud, template, config).evaluate(params, true)?;
    Ok(g.expect("gradient requested"))
}

/// Adam on (θ, β, t) from `init`, returning the best iterate seen.
pub fn fit(cloud: &LabeledPointCloud, template: &RiggedTemplate, config: &FitConfig, init: &BodyParams) -> Result<FitResult> {
    fit_labeled(cloud, template, config, init, "given")
}

fn fit_labeled(
    cloud: &LabeledPointCloud,
    template: &RiggedTemplate,
    config: &FitConfig,
    init: &BodyParams,
    init_used: &str,
) -> Result<FitResult> {
    let start = Instant::now();
    config.validate()?;
    template.check_params(init)?;
    let obj = Objective::new(cloud, template, config);
    let (loss0, grad0) = obj.evaluate(init, config.optimize)?;
    if !loss0.total.is_finite() {
        return Err(Error::NumericFailure {
            step: 0,
            detail: format!("initial loss is {}", loss0.total),
        });
    }

    let mut best = init.clone();
    let mut best_loss = loss0;
    let mut steps = 0;
    let mut converged = false;
    if config.optimize {
        let mut x = init.to_flat();
        let mut current = init.clone();
        let mut opt = Adam::with_epsilon(x.len(), config.adam_epsilon);
        let mut stop = EarlyStop::new(loss0.total, config.early_stop_patience, config.early_stop_min_relative_improvement);
        let mut grad = grad0.expect("gradient requested");
        for step in 0..config.max_steps {
            opt.step(&mut x, &grad, config.learning_rate_at(step));
            current.set_flat(&x);
            steps = step + 1;
            let (loss, g) = obj.evaluate(&current, true).map_err(|e| match e {
                Error::NumericFailure { detail, .. } => Error::NumericFailure { step: steps, detail },
                e => e,
            })?;
            if !loss.total.is_finite() || !current.is_finite() {
                return Err(Error::NumericFailure {
                    step: steps,
                    detail: format!("loss became {}", loss.total),
                });
            }
            grad = g.expect("gradient requested");
            let (improved, done) = stop.observe(loss.total);
            if improved {
                best.clone_from(&current);
                best_loss = loss;
            }
            if done {
                converged = true;
                break;
            }
        }
    }

    let canonical = best.canonicalized();
    if canonical != best {
        best_loss = obj.evaluate(&canonical, false)?.0;
        best = canonical;
    }
    Ok(FitResult {
        params: best,
        loss: best_loss,
        initial_loss: loss0.total,
        steps_taken: steps,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        init_used: init_used.to_string(),
        optimizations: usize::from(config.optimize),
    })
}

/// The four method variants compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// No part labels in the data term; best of four yaw seeds.
    NoLabelsMultiStart = 1,
    /// Part labels in the data term; a single generic seed.
    LabelsGenericInit = 2,
    /// Centroid initialization only, no optimization.
    CentroidsOnly = 3,
    /// Centroid initialization followed by the labeled fit.
    Full = 4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::NoLabelsMultiStart,
        Variant::LabelsGenericInit,
        Variant::CentroidsOnly,
        Variant::Full,
    ];

    pub fn from_index(i: u8) -> Option<Variant> {
        Variant::ALL.get((i as usize).wrapping_sub(1)).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Picks the variant implied by the config's feature flags.
    pub fn from_flags(config: &FitConfig) -> Variant {
        match (config.use_centroid_init, config.optimize, config.use_part_labels) {
            (true, false, _) => Variant::CentroidsOnly,
            (true, true, _) => Variant::Full,
            (false, _, true) => Variant::LabelsGenericInit,
            (false, _, false) => Variant::NoLabelsMultiStart,
        }
    }

    pub fn config(self, base: &FitConfig) -> FitConfig {
        let (labels, centroid, optimize) = match self {
            Variant::NoLabelsMultiStart => (false, false, true),
            Variant::LabelsGenericInit => (true, false, true),
            Variant::CentroidsOnly => (true, true, false),
            Variant::Full => (true, true, true),
        };
        FitConfig {
            use_part_labels: labels,
            use_centroid_init: centroid,
            optimize,
            ..base.clone()
        }
    }
}

fn centroid_seed(cloud: &LabeledPointCloud, template: &RiggedTemplate, config: &FitConfig) -> Result<BodyParams> {
    let sc = scan_part_centroids(cloud, template.num_parts())?;
    Ok(centroid_init(&sc, template, config)?.params)
}

pub fn run_variant(
    cloud: &LabeledPointCloud,
    template: &RiggedTemplate,
    config: &FitConfig,
    variant: Variant,
) -> Result<FitResult> {
    let cfg = variant.config(config);
    match variant {
        Variant::NoLabelsMultiStart => {
            let seeds = multi_start(cloud, template)?;
            let mut best: Option<FitResult> = None;
            let mut total_time = 0.0;
            for (seed, deg) in seeds.iter().zip(MULTI_START_YAWS_DEG) {
                let r = fit_labeled(cloud, template, &cfg, seed, &format!("multi-start yaw {deg}°"))?;
                total_time += r.wall_time;
                if best.as_ref().is_none_or(|b| r.final_loss() < b.final_loss()) {
                    best = Some(r);
                }
            }
            let mut best = best.expect("four seeds");
            best.wall_time = total_time;
            best.optimizations = seeds.len();
            // steps_taken stays that of the winning branch; wall_time covers all four
            Ok(best)
        }
        Variant::LabelsGenericInit => {
            let seeds = multi_start(cloud, template)?;
            fit_labeled(cloud, template, &cfg, &seeds[0], "generic yaw 0°")
        }
        Variant::CentroidsOnly | Variant::Full => {
            let start = Instant::now();
            let init = centroid_seed(cloud, template, &cfg)?;
            let init_time = start.elapsed().as_secs_f64();
            let mut r = fit_labeled(cloud, template, &cfg, &init, "centroid")?;
            r.wall_time += init_time;
            Ok(r)
        }
    }
}

/// Fits every human instance of a scene cloud, in ascending instance id.
pub fn fit_scene(
    cloud: &LabeledPointCloud,
    template: &RiggedTemplate,
    config: &FitConfig,
    variant: Variant,
) -> Vec<(u8, Result<FitResult>)> {
    cloud
        .instances()
        .into_iter()
        .map(|id| (id, run_variant(&cloud.instance(id), template, config, variant)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceMode {
    /// Each frame warm-starts from the previous frame's solution.
    Sequential,
    /// Each frame is fitted from its own centroid initialization.
    Individual,
}

pub fn fit_sequence(
    frames: &[LabeledPointCloud],
    template: &RiggedTemplate,
    config: &FitConfig,
    mode: SequenceMode,
    exec: Execution,
) -> Result<Vec<Result<FitResult>>> {
    if frames.is_empty() {
        return Err(Error::Empty("sequence has no frames"));
    }
    match mode {
        SequenceMode::Individual => Ok(par::map(exec, frames, |_, f| run_variant(f, template, config, Variant::Full))),
        SequenceMode::Sequential => {
            let cfg = Variant::Full.config(config);
            let mut out: Vec<Result<FitResult>> = Vec::with_capacity(frames.len());
            let mut prev: Option<BodyParams> = None;
            for frame in frames {
                let r = match &prev {
                    None => run_variant(frame, template, config, Variant::Full),
                    Some(p) => fit_labeled(frame, template, &cfg, p, "warm start"),
                };
                if let Ok(res) = &r {
                    prev = Some(res.params.clone());
                }
                out.push(r);
            }
            Ok(out)
        }
    }
}
