//! Metrics, experiment harnesses (ablation, grid search, video fitting) and
//! report rendering.
//!
//! Distances are reported in millimeters, segmentation scores in percent.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::PartId;
use crate::error::{Error, Result};
use crate::fit::{fit_scene, fit_sequence, FitConfig, FitResult, SequenceMode, Variant};
use crate::geom::Point3;
use crate::model::RiggedTemplate;
use crate::par::{self, Execution};
use crate::synth::{GroundTruth, Scan};

pub const MAP_DEFINITION: &str =
    "mAP = macro-averaged per-class precision over classes present in prediction or ground truth";

fn mean_distance_mm(a: &[Point3], b: &[Point3], what: &'static str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what,
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty(what));
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64 * 1000.0)
}

/// Mean vertex-to-vertex distance, mm.
pub fn v2v(pred: &[Point3], gt: &[Point3]) -> Result<f64> {
    mean_distance_mm(pred, gt, "mesh vertices")
}

/// Mean per-joint position error, mm.
pub fn mpjpe(pred: &[Point3], gt: &[Point3]) -> Result<f64> {
    mean_distance_mm(pred, gt, "joints")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: PartId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub acc: f64,
    /// Classes (background included) present in the ground truth.
    pub iou: Vec<ClassScore>,
    pub miou: f64,
    /// Classes present in the prediction or the ground truth.
    pub precision: Vec<ClassScore>,
    pub map: f64,
}

pub fn seg_metrics(pred: &[PartId], gt: &[PartId], num_parts: usize) -> Result<SegMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            what: "label lists",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::Empty("label lists"));
    }
    let k = num_parts + 1;
    let mut tp = vec![0usize; k];
    let mut in_pred = vec![0usize; k];
    let mut in_gt = vec![0usize; k];
    for (&p, &g) in pred.iter().zip(gt) {
        if p as usize >= k || g as usize >= k {
            return Err(Error::InvalidArgument(format!("label {} outside 0..={num_parts}", p.max(g))));
        }
        in_pred[p as usize] += 1;
        in_gt[g as usize] += 1;
        if p == g {
            tp[p as usize] += 1;
        }
    }
    let acc = 100.0 * tp.iter().sum::<usize>() as f64 / gt.len() as f64;
    let mut iou = Vec::new();
    let mut precision = Vec::new();
    for c in 0..k {
        if in_gt[c] > 0 {
            let union = in_gt[c] + in_pred[c] - tp[c];
            iou.push(ClassScore {
                class: c as PartId,
                value: 100.0 * tp[c] as f64 / union as f64,
            });
        }
        if in_gt[c] > 0 || in_pred[c] > 0 {
            let v = if in_pred[c] > 0 { 100.0 * tp[c] as f64 / in_pred[c] as f64 } else { 0.0 };
            precision.push(ClassScore { class: c as PartId, value: v });
        }
    }
    let mean = |s: &[ClassScore]| s.iter().map(|c| c.value).sum::<f64>() / s.len() as f64;
    Ok(SegMetrics {
        acc,
        miou: mean(&iou),
        map: mean(&precision),
        iou,
        precision,
    })
}

/// Error of one fitted human against the generator's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub scan: usize,
    pub human_id: u8,
    pub v2v: f64,
    pub mpjpe: f64,
    pub wall_time: f64,
    pub steps_taken: usize,
    pub final_loss: f64,
}

pub fn evaluate_fit(template: &RiggedTemplate, fit: &FitResult, truth: &GroundTruth, human_id: u8) -> Result<(f64, f64)> {
    let gt = truth
        .human(human_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no ground truth for human {human_id}")))?;
    let posed = template.pose(&fit.params)?;
    let gt_vertices = if gt.vertices.is_empty() {
        template.pose_mesh(&gt.params)?
    } else {
        gt.vertices.clone()
    };
    Ok((v2v(&posed.vertices, &gt_vertices)?, mpjpe(&posed.joints, &gt.joints)?))
}

/// All instance fits of one variant over a set of scans.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub variant: Variant,
    /// Per scan, per instance: the fit, or the failure message.
    pub fits: Vec<Vec<(u8, std::result::Result<FitResult, String>)>>,
    pub evals: Vec<InstanceEval>,
    pub failures: Vec<String>,
}

impl BenchmarkRun {
    /// The fit of the given scan's instance, when it succeeded.
    pub fn fit(&self, scan: usize, human_id: u8) -> Option<&FitResult> {
        self.fits
            .get(scan)?
            .iter()
            .find(|(id, _)| *id == human_id)
            .and_then(|(_, r)| r.as_ref().ok())
    }
}

pub fn run_benchmark(
    scans: &[Scan],
    template: &RiggedTemplate,
    config: &FitConfig,
    variant: Variant,
    exec: Execution,
) -> BenchmarkRun {
    let fits = par::map(exec, scans, |_, s| {
        fit_scene(&s.cloud, template, config, variant)
            .into_iter()
            .map(|(id, r)| (id, r.map_err(|e| e.to_string())))
            .collect::<Vec<_>>()
    });
    let mut evals = Vec::new();
    let mut failures = Vec::new();
    for (i, (scan, fs)) in scans.iter().zip(&fits).enumerate() {
        for (id, r) in fs {
            let outcome = r
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|f| evaluate_fit(template, f, &scan.truth, *id).map(|m| (f, m)).map_err(|e| e.to_string()));
            match outcome {
                Ok((f, (v, m))) => evals.push(InstanceEval {
                    scan: i,
                    human_id: *id,
                    v2v: v,
                    mpjpe: m,
                    wall_time: f.wall_time,
                    steps_taken: f.steps_taken,
                    final_loss: f.final_loss(),
                }),
                Err(e) => failures.push(format!("scan {i} human {id}: {e}")),
            }
        }
    }
    BenchmarkRun {
        variant,
        fits,
        evals,
        failures,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: u8,
    pub labels: bool,
    pub centroids: bool,
    pub v2v: f64,
    pub mpjpe: f64,
    pub time: f64,
    pub fitted: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub scans: usize,
    pub rows: Vec<AblationRow>,
    pub failures: Vec<String>,
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant.index())
    }
}

pub fn ablation_from_runs(scans: usize, runs: &[BenchmarkRun]) -> AblationReport {
    let rows = runs
        .iter()
        .map(|run| {
            let cfg = run.variant.config(&FitConfig::default());
            AblationRow {
                variant: run.variant.index(),
                labels: cfg.use_part_labels,
                centroids: cfg.use_centroid_init,
                v2v: mean(run.evals.iter().map(|e| e.v2v)),
                mpjpe: mean(run.evals.iter().map(|e| e.mpjpe)),
                time: mean(run.evals.iter().map(|e| e.wall_time)),
                fitted: run.evals.len(),
                failed: run.failures.len(),
            }
        })
        .collect();
    let failures = runs
        .iter()
        .flat_map(|r| r.failures.iter().map(move |f| format!("variant {}: {f}", r.variant.index())))
        .collect();
    AblationReport { scans, rows, failures }
}

const MIN_BENCHMARK_SCANS: usize = 10;

fn check_benchmark(scans: &[Scan]) -> Result<()> {
    if scans.len() < MIN_BENCHMARK_SCANS {
        return Err(Error::InvalidArgument(format!(
            "benchmark needs at least {MIN_BENCHMARK_SCANS} scans, got {}",
            scans.len()
        )));
    }
    Ok(())
}

/// Runs all four variants and tabulates V2V, MPJPE and time.
pub fn ablation_report(
    scans: &[Scan],
    template: &RiggedTemplate,
    config: &FitConfig,
    exec: Execution,
) -> Result<(AblationReport, Vec<BenchmarkRun>)> {
    check_benchmark(scans)?;
    let runs: Vec<BenchmarkRun> = Variant::ALL
        .iter()
        .map(|&v| run_benchmark(scans, template, config, v, exec))
        .collect();
    Ok((ablation_from_runs(scans.len(), &runs), runs))
}

pub const GRID_VALUES: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub scans: usize,
    pub values: Vec<f64>,
    /// `v2v[i][j]` is the mean V2V at λ_shape = values[i], λ_pose = values[j].
    pub v2v: Vec<Vec<f64>>,
    pub failed: Vec<Vec<usize>>,
}

impl GridReport {
    pub fn min(&self) -> f64 {
        self.v2v.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn cell(&self, shape: f64, pose: f64) -> Option<f64> {
        let i = self.values.iter().position(|&v| v == shape)?;
        let j = self.values.iter().position(|&v| v == pose)?;
        Some(self.v2v[i][j])
    }
}

/// Full-method mean V2V over a (λ_shape × λ_pose) grid.
pub fn grid_search(
    scans: &[Scan],
    template: &RiggedTemplate,
    config: &FitConfig,
    values: &[f64],
    exec: Execution,
) -> Result<GridReport> {
    check_benchmark(scans)?;
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("grid values must be finite and nonnegative".into()));
    }
    let mut v2v = Vec::new();
    let mut failed = Vec::new();
    for &shape in values {
        let mut row = Vec::new();
        let mut row_failed = Vec::new();
        for &pose in values {
            let cfg = FitConfig {
                lambda_shape: shape,
                lambda_pose: pose,
                ..config.clone()
            };
            let run = run_benchmark(scans, template, &cfg, Variant::Full, exec);
            row.push(mean(run.evals.iter().map(|e| e.v2v)));
            row_failed.push(run.failures.len());
        }
        v2v.push(row);
        failed.push(row_failed);
    }
    Ok(GridReport {
        scans: scans.len(),
        values: values.to_vec(),
        v2v,
        failed,
    })
}

/// One evaluated frame of a fitted sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub wall_time: f64,
    pub v2v: f64,
    pub mpjpe: f64,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSequence {
    pub name: String,
    /// Weight in the weighted average, normally the number of humans.
    pub weight: f64,
    pub sequential: Vec<FrameEval>,
    pub individual: Vec<FrameEval>,
}

/// Fits every human of a sequence in both modes and evaluates every frame.
/// Frames where either mode fails are skipped in both.
pub fn evaluate_sequence(
    name: &str,
    weight: f64,
    frames: &[Scan],
    template: &RiggedTemplate,
    config: &FitConfig,
    exec: Execution,
) -> Result<VideoSequence> {
    let first = frames.first().ok_or(Error::Empty("sequence has no frames"))?;
    let mut out = VideoSequence {
        name: name.to_string(),
        weight,
        sequential: Vec::new(),
        individual: Vec::new(),
    };
    for id in 1..=first.truth.humans.len() as u8 {
        let clouds: Vec<_> = frames.iter().map(|s| s.cloud.instance(id)).collect();
        let seq = fit_sequence(&clouds, template, config, SequenceMode::Sequential, exec)?;
        let ind = fit_sequence(&clouds, template, config, SequenceMode::Individual, exec)?;
        for ((s, i), scan) in seq.iter().zip(&ind).zip(frames) {
            let (Ok(s), Ok(i)) = (s, i) else { continue };
            for (fit, dst) in [(s, &mut out.sequential), (i, &mut out.individual)] {
                let (v, m) = evaluate_fit(template, fit, &scan.truth, id)?;
                dst.push(FrameEval {
                    wall_time: fit.wall_time,
                    v2v: v,
                    mpjpe: m,
                    steps_taken: fit.steps_taken,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub time: f64,
    pub v2v: f64,
    pub j2j: f64,
    pub steps: f64,
}

fn summarize(frames: &[FrameEval]) -> ModeSummary {
    ModeSummary {
        time: mean(frames.iter().map(|f| f.wall_time)),
        v2v: mean(frames.iter().map(|f| f.v2v)),
        j2j: mean(frames.iter().map(|f| f.mpjpe)),
        steps: mean(frames.iter().map(|f| f.steps_taken as f64)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoColumn {
    pub name: String,
    pub weight: f64,
    pub sequential: ModeSummary,
    pub individual: ModeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub sequences: Vec<VideoColumn>,
    pub mean: VideoColumn,
    pub weighted: VideoColumn,
}

fn combine(cols: &[VideoColumn], weights: &[f64], name: &str) -> VideoColumn {
    let total: f64 = weights.iter().sum();
    let avg = |f: &dyn Fn(&VideoColumn) -> ModeSummary| {
        let pick = |g: fn(&ModeSummary) -> f64| cols.iter().zip(weights).map(|(c, w)| g(&f(c)) * w).sum::<f64>() / total;
        ModeSummary {
            time: pick(|m| m.time),
            v2v: pick(|m| m.v2v),
            j2j: pick(|m| m.j2j),
            steps: pick(|m| m.steps),
        }
    };
    VideoColumn {
        name: name.to_string(),
        weight: total,
        sequential: avg(&|c| c.sequential),
        individual: avg(&|c| c.individual),
    }
}

pub fn video_report(sequences: &[VideoSequence]) -> Result<VideoReport> {
    if sequences.is_empty() {
        return Err(Error::Empty("no sequences"));
    }
    for s in sequences {
        if s.sequential.len() != s.individual.len() || s.sequential.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "sequence {}: {} sequential vs {} individual frames",
                s.name,
                s.sequential.len(),
                s.individual.len()
            )));
        }
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(Error::InvalidArgument(format!("sequence {}: weight must be positive", s.name)));
        }
    }
    let cols: Vec<VideoColumn> = sequences
        .iter()
        .map(|s| VideoColumn {
            name: s.name.clone(),
            weight: s.weight,
            sequential: summarize(&s.sequential),
            individual: summarize(&s.individual),
        })
        .collect();
    let ones = vec![1.0; cols.len()];
    let weights: Vec<f64> = cols.iter().map(|c| c.weight).collect();
    Ok(VideoReport {
        mean: combine(&cols, &ones, "Average"),
        weighted: combine(&cols, &weights, "Weighted Average"),
        sequences: cols,
    })
}

fn header(out: &mut String, title: &str) {
    writeln!(out, "# {title}").unwrap();
    writeln!(out, "# {MAP_DEFINITION}").unwrap();
}

fn table(out: &mut String, rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
}

fn mark(b: bool) -> String {
    if b { "x" } else { "-" }.to_string()
}

pub fn ablation_text(report: &AblationReport) -> String {
    let mut out = String::new();
    header(&mut out, &format!("ablation over {} scans (V2V and MPJPE in mm, Time in s)", report.scans));
    let mut rows = vec![["variant", "B.P.", "Cent.", "V2V", "MPJPE", "Time", "fitted", "failed"].map(String::from).to_vec()];
    for r in &report.rows {
        rows.push(vec![
            r.variant.to_string(),
            mark(r.labels),
            mark(r.centroids),
            format!("{:.1}", r.v2v),
            format!("{:.1}", r.mpjpe),
            format!("{:.3}", r.time),
            r.fitted.to_string(),
            r.failed.to_string(),
        ]);
    }
    table(&mut out, &rows);
    out
}

pub fn grid_text(report: &GridReport) -> String {
    let mut out = String::new();
    header(&mut out, &format!("mean V2V (mm) over {} scans; rows lambda_shape, columns lambda_pose", report.scans));
    let mut head = vec!["shape\\pose".to_string()];
    head.extend(report.values.iter().map(|v| format!("{v:.1}")));
    let mut rows = vec![head];
    for (i, row) in report.v2v.iter().enumerate() {
        let mut r = vec![format!("{:.1}", report.values[i])];
        r.extend(row.iter().map(|v| format!("{v:.1}")));
        rows.push(r);
    }
    table(&mut out, &rows);
    out
}

pub fn video_text(report: &VideoReport) -> String {
    let mut out = String::new();
    header(&mut out, "video fitting (Time in s, V2V and J2J in mm)");
    let cols: Vec<&VideoColumn> = report.sequences.iter().chain([&report.mean, &report.weighted]).collect();
    let mut head = vec!["".to_string(), "".to_string()];
    head.extend(cols.iter().map(|c| c.name.clone()));
    let mut rows = vec![head];
    let mut weights = vec!["Number of Humans".to_string(), "".to_string()];
    weights.extend(cols.iter().map(|c| format!("{}", c.weight)));
    rows.push(weights);
    for (mode, pick) in [
        ("Sequential", (|c: &VideoColumn| c.sequential) as fn(&VideoColumn) -> ModeSummary),
        ("Individual", |c: &VideoColumn| c.individual),
    ] {
        for (metric, f) in [
            ("Time", (|m: &ModeSummary| format!("{:.3}", m.time)) as fn(&ModeSummary) -> String),
            ("V2V", |m: &ModeSummary| format!("{:.1}", m.v2v)),
            ("J2J", |m: &ModeSummary| format!("{:.1}", m.j2j)),
            ("Steps", |m: &ModeSummary| format!("{:.1}", m.steps)),
        ] {
            let mut r = vec![mode.to_string(), metric.to_string()];
            r.extend(cols.iter().map(|c| f(&pick(c))));
            rows.push(r);
        }
    }
    table(&mut out, &rows);
    out
}

pub fn seg_text(rows: &[(String, SegMetrics)]) -> String {
    let mut out = String::new();
    header(&mut out, "segmentation (percent)");
    let mut t = vec![["scan", "Acc", "mIoU", "mAP"].map(String::from).to_vec()];
    for (name, m) in rows {
        t.push(vec![name.clone(), format!("{:.2}", m.acc), format!("{:.2}", m.miou), format!("{:.2}", m.map)]);
    }
    table(&mut out, &t);
    out
}
