use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use segfit::eval::{self, SegMetrics};
use segfit::fit::{fit_scene, FitConfig, Variant};
use segfit::io::{self, GenManifest, GtFile, HumanFit, HumanOutcome, HumanTiming, ResultFile, ScanEntry, SequenceInfo, TimingFile, FORMAT_VERSION};
use segfit::model::builtin_humanoid;
use segfit::seglab::{self, PseudoSample, RefineConfig};
use segfit::synth::{self, Scan, ScanRecipe};
use segfit::{Execution, LabeledPointCloud, PartId, Point3, RiggedTemplate};

const TEMPLATE_ENV: &str = "SEGFIT_TEMPLATE";

#[derive(Parser)]
#[command(name = "segfit", version, about = "Fit an articulated humanoid to labeled point clouds")]
struct Cli {
    /// Base seed for everything random; recorded in every output document.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for batch commands (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct TemplateArg {
    /// Template file; defaults to $SEGFIT_TEMPLATE, then the built-in humanoid.
    #[arg(long)]
    template: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Fit config file (every field required).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReportOut {
    /// Machine-readable report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aligned text table; printed to stdout when omitted.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scans with ground truth.
    Gen {
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long, default_value_t = 50, conflicts_with = "frames")]
        count: usize,
        /// Render one slow motion of this many frames instead of independent scans.
        #[arg(long)]
        frames: Option<usize>,
        /// Largest per-frame joint rotation for --frames, degrees.
        #[arg(long, default_value_t = 2.0, requires = "frames")]
        max_step_deg: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        template: TemplateArg,
    },
    /// Fit every human of a scan.
    Fit {
        #[arg(long)]
        scan: PathBuf,
        #[command(flatten)]
        template: TemplateArg,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
        variant: u8,
        /// Result document; timing goes next to it as <stem>.timing.json.
        #[arg(long)]
        out: PathBuf,
        /// Fitted mesh; defaults to <stem>.obj next to the result.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Relabel a scan from its fitted mesh.
    Refine {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        result: PathBuf,
        /// Refine config file (every field required).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        template: TemplateArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score fit results and, optionally, labels against ground truth.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        results: Vec<PathBuf>,
        /// Predicted-label PLY files, one per ground-truth file.
        #[arg(long, num_args = 1..)]
        labels: Vec<PathBuf>,
        #[command(flatten)]
        template: TemplateArg,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Compare the four method variants on a benchmark directory.
    Ablate {
        bench: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        template: TemplateArg,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Mean V2V over a grid of regularizer weights.
    Grid {
        bench: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = eval::GRID_VALUES.to_vec())]
        values: Vec<f64>,
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        template: TemplateArg,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Sequential against per-frame fitting on generated sequences.
    Video {
        #[arg(required = true)]
        sequences: Vec<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        template: TemplateArg,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Export refined labels of the lowest-loss fits as a pseudo-label dataset.
    ExportPseudo {
        #[arg(long, num_args = 1.., required = true)]
        scans: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        drop_fraction: f64,
        /// Refine config file (every field required).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        template: TemplateArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in template.
    Template {
        #[arg(long, default_value_t = 0)]
        subdivision: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print or write a default config file.
    Defaults {
        what: ConfigKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Fit,
    Refine,
    Recipe,
}

/// Envelope for experiment reports.
#[derive(Serialize, Deserialize)]
struct Report<T> {
    format_version: u32,
    seed: u64,
    config_digest: String,
    inputs: Vec<String>,
    report: T,
}

#[derive(Serialize, Deserialize)]
struct HumanScore {
    human_id: u8,
    v2v: f64,
    mpjpe: f64,
}

#[derive(Serialize, Deserialize)]
struct ScanScore {
    gt: String,
    result: Option<String>,
    humans: Vec<HumanScore>,
    failed: Vec<u8>,
    seg: Option<SegMetrics>,
}

#[derive(Serialize, Deserialize)]
struct EvalSummary {
    v2v: Option<f64>,
    mpjpe: Option<f64>,
    acc: Option<f64>,
    miou: Option<f64>,
    map: Option<f64>,
    scans: Vec<ScanScore>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            let code = exit_code(&e);
            if code == 3 {
                eprintln!("hint: centroid initialization needs enough labeled parts; try --variant 1");
            }
            ExitCode::from(code)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use segfit::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Degenerate(_) | E::DegenerateInit(_) => 3,
                E::NumericFailure { .. } => 4,
                _ => 2,
            };
        }
    }
    2
}

fn execution(jobs: usize) -> Result<Execution> {
    if jobs == 1 {
        return Ok(Execution::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("starting worker pool")?;
        Ok(Execution::Parallel)
    }
    #[cfg(not(feature = "parallel"))]
    {
        eprintln!("warning: built without the parallel feature, running sequentially");
        Ok(Execution::Sequential)
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = execution(cli.jobs)?;
    let seed = cli.seed;
    match cli.command {
        Command::Gen { recipe, count, frames, max_step_deg, out, template } => {
            gen(seed, recipe.as_deref(), count, frames, max_step_deg, &out, &template, exec)
        }
        Command::Fit { scan, template, config, variant, out, mesh } => {
            fit(seed, &scan, &template, &config, variant, &out, mesh.as_deref())
        }
        Command::Refine { scan, result, config, template, out } => {
            let template = load_template(&template)?;
            let cfg: RefineConfig = load_config(config.as_deref())?;
            cfg.validate()?;
            let cloud = io::read_ply(&scan)?;
            let res = io::read_result(&result)?;
            let refined = refine(&cloud, &res, &template, &cfg, exec)?;
            io::write_ply(&out, &refined)?;
            Ok(())
        }
        Command::Eval { gt, results, labels, template, report } => {
            evaluate(seed, &gt, &results, &labels, &template, &report)
        }
        Command::Ablate { bench, config, template, report } => {
            let template = load_template(&template)?;
            let cfg = load_fit_config(&config)?;
            let (_, scans) = load_bench(&bench, &template)?;
            let (r, _) = eval::ablation_report(&scans, &template, &cfg, exec)?;
            emit(seed, &cfg, &[&bench], &r, &eval::ablation_text(&r), &report)
        }
        Command::Grid { bench, values, config, template, report } => {
            let template = load_template(&template)?;
            let cfg = load_fit_config(&config)?;
            let (_, scans) = load_bench(&bench, &template)?;
            let r = eval::grid_search(&scans, &template, &cfg, &values, exec)?;
            emit(seed, &cfg, &[&bench], &r, &eval::grid_text(&r), &report)
        }
        Command::Video { sequences, config, template, report } => {
            let template = load_template(&template)?;
            let cfg = load_fit_config(&config)?;
            let mut evals = Vec::new();
            for dir in &sequences {
                let (m, frames) = load_bench(dir, &template)?;
                if m.sequence.is_none() {
                    bail!("{}: not a sequence directory (generate it with gen --frames)", dir.display());
                }
                let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                evals.push(eval::evaluate_sequence(&name, m.recipe.humans as f64, &frames, &template, &cfg, exec)?);
            }
            let r = eval::video_report(&evals)?;
            let inputs: Vec<&Path> = sequences.iter().map(PathBuf::as_path).collect();
            emit(seed, &cfg, &inputs, &r, &eval::video_text(&r), &report)
        }
        Command::ExportPseudo { scans, results, drop_fraction, config, template, out } => {
            if scans.len() != results.len() {
                bail!(segfit::Error::InvalidArgument(format!(
                    "{} scans but {} results",
                    scans.len(),
                    results.len()
                )));
            }
            let template = load_template(&template)?;
            let cfg: RefineConfig = load_config(config.as_deref())?;
            cfg.validate()?;
            let mut clouds = Vec::new();
            let mut losses = Vec::new();
            let mut fit_digests = Vec::new();
            for (s, r) in scans.iter().zip(&results) {
                let cloud = io::read_ply(s)?;
                let res = io::read_result(r)?;
                let refined = refine(&cloud, &res, &template, &cfg, exec)?;
                losses.push(res.final_loss());
                fit_digests.push(res.config_digest.clone());
                clouds.push((cloud, refined.labels));
            }
            let (kept, _) = seglab::filter_pseudo_labels(&losses, drop_fraction)?;
            let samples: Vec<PseudoSample> = clouds
                .iter()
                .zip(&scans)
                .zip(&losses)
                .map(|(((cloud, labels), src), &loss)| PseudoSample {
                    cloud,
                    refined_labels: labels,
                    source: src.display().to_string(),
                    final_loss: loss,
                })
                .collect();
            let digest = io::json_digest(&(&cfg, &fit_digests, drop_fraction));
            seglab::export_pseudo_dataset(&samples, &kept, &out, &digest, drop_fraction)?;
            Ok(())
        }
        Command::Template { subdivision, out } => {
            if subdivision > 3 {
                bail!(segfit::Error::InvalidArgument("subdivision must be at most 3".into()));
            }
            io::write_template(&out, &builtin_humanoid(subdivision))?;
            Ok(())
        }
        Command::Defaults { what, out } => {
            let text = match what {
                ConfigKind::Fit => io::to_json_string(&FitConfig::default()),
                ConfigKind::Refine => io::to_json_string(&RefineConfig::default()),
                ConfigKind::Recipe => io::to_json_string(&ScanRecipe::default()),
            };
            match out {
                Some(p) => io::write_text(&p, &text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn load_template(arg: &TemplateArg) -> Result<RiggedTemplate> {
    let path = arg
        .template
        .clone()
        .or_else(|| std::env::var_os(TEMPLATE_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(io::read_template(&p)?),
        None => Ok(builtin_humanoid(0)),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    Ok(match path {
        Some(p) => io::read_json(p)?,
        None => T::default(),
    })
}

fn load_fit_config(arg: &ConfigArg) -> Result<FitConfig> {
    let cfg: FitConfig = load_config(arg.config.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[allow(clippy::too_many_arguments)]
fn gen(
    seed: Option<u64>,
    recipe: Option<&Path>,
    count: usize,
    frames: Option<usize>,
    max_step_deg: f64,
    out: &Path,
    template: &TemplateArg,
    exec: Execution,
) -> Result<()> {
    let template = load_template(template)?;
    let mut recipe: ScanRecipe = load_config(recipe)?;
    if let Some(s) = seed {
        recipe.seed = s;
    }
    recipe.validate()?;
    let (scans, sequence) = match frames {
        Some(n) => {
            if n == 0 || !(max_step_deg > 0.0) {
                bail!(segfit::Error::InvalidArgument("--frames and --max-step-deg must be positive".into()));
            }
            let max_step = max_step_deg.to_radians();
            let motion = synth::slow_motion(&template, &recipe, n, max_step);
            (synth::render_sequence(&template, &motion, &recipe, exec)?, Some(SequenceInfo { frames: n, max_step }))
        }
        None => (synth::generate_benchmark(&template, &recipe, count, exec)?, None),
    };
    let recipe_digest = io::json_digest(&recipe);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries = Vec::with_capacity(scans.len());
    for (i, scan) in scans.iter().enumerate() {
        let ply = format!("scan_{i:04}.ply");
        let gt = format!("scan_{i:04}.gt.json");
        io::write_ply(&out.join(&ply), &scan.cloud)?;
        io::write_json(
            &out.join(&gt),
            &GtFile {
                format_version: FORMAT_VERSION,
                seed: recipe.seed,
                recipe_digest: recipe_digest.clone(),
                scan: ply.clone(),
                truth: scan.truth.clone(),
            },
        )?;
        entries.push(ScanEntry { ply, gt });
    }
    io::write_json(
        &out.join("manifest.json"),
        &GenManifest {
            format_version: FORMAT_VERSION,
            seed: recipe.seed,
            recipe_digest,
            recipe,
            sequence,
            scans: entries,
        },
    )?;
    Ok(())
}

fn load_bench(dir: &Path, template: &RiggedTemplate) -> Result<(GenManifest, Vec<Scan>)> {
    let manifest = io::read_manifest(&dir.join("manifest.json"))?;
    let mut scans = Vec::with_capacity(manifest.scans.len());
    for e in &manifest.scans {
        let cloud = io::read_ply(&dir.join(&e.ply))?;
        let mut truth = io::read_gt(&dir.join(&e.gt))?.truth;
        truth.restore_vertices(template)?;
        scans.push(Scan { cloud, truth });
    }
    Ok((manifest, scans))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn fit(seed: Option<u64>, scan: &Path, template: &TemplateArg, config: &ConfigArg, variant: u8, out: &Path, mesh: Option<&Path>) -> Result<()> {
    let template = load_template(template)?;
    let cfg = load_fit_config(config)?;
    let variant = Variant::from_index(variant).expect("clap checks the range");
    let bytes = std::fs::read(scan).with_context(|| format!("reading {}", scan.display()))?;
    let cloud = io::parse_ply(scan, &String::from_utf8_lossy(&bytes))?;
    let start = Instant::now();
    let outcomes = fit_scene(&cloud, &template, &cfg, variant);
    let total = start.elapsed().as_secs_f64();
    if outcomes.is_empty() {
        bail!(segfit::Error::Empty("scan has no labeled human points"));
    }

    let mut humans = Vec::new();
    let mut timing = Vec::new();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces = Vec::new();
    let mut first_error = None;
    for (id, r) in outcomes {
        match r {
            Ok(f) => {
                timing.push(HumanTiming { human_id: id, wall_time: f.wall_time });
                let base = vertices.len() as u32;
                vertices.extend(template.pose_mesh(&f.params)?);
                faces.extend(template.faces().iter().map(|t| t.map(|v| v + base)));
                humans.push(HumanFit { human_id: id, outcome: HumanOutcome::Ok { fit: (&f).into() } });
            }
            Err(e) => {
                let kind = match &e {
                    segfit::Error::Degenerate(_) | segfit::Error::DegenerateInit(_) => "degenerate",
                    segfit::Error::NumericFailure { .. } => "numeric",
                    _ => "input",
                };
                humans.push(HumanFit {
                    human_id: id,
                    outcome: HumanOutcome::Error { kind: kind.into(), message: e.to_string() },
                });
                first_error.get_or_insert(anyhow::Error::new(e).context(format!("human {id}")));
            }
        }
    }
    let doc = ResultFile {
        format_version: FORMAT_VERSION,
        seed: seed.unwrap_or(0),
        scan: file_name(scan),
        scan_digest: io::digest(&bytes),
        template_digest: io::digest(io::template_string(&template).as_bytes()),
        variant: variant.index(),
        config_digest: io::json_digest(&cfg),
        config: cfg,
        humans,
    };
    io::write_json(out, &doc)?;
    io::write_json(&sibling(out, ".timing.json"), &TimingFile { format_version: FORMAT_VERSION, humans: timing, total })?;
    if !vertices.is_empty() {
        let mesh = mesh.map(Path::to_path_buf).unwrap_or_else(|| sibling(out, ".obj"));
        io::write_obj(&mesh, &vertices, &faces)?;
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Combined posed mesh and per-vertex part labels of every fitted human.
fn fitted_mesh(res: &ResultFile, template: &RiggedTemplate) -> Result<(Vec<Point3>, Vec<PartId>)> {
    let mut vertices = Vec::new();
    let mut labels = Vec::new();
    for (_, f) in res.fits() {
        vertices.extend(template.pose_mesh(&f.params)?);
        labels.extend_from_slice(template.vertex_part());
    }
    Ok((vertices, labels))
}

fn refine(cloud: &LabeledPointCloud, res: &ResultFile, template: &RiggedTemplate, cfg: &RefineConfig, exec: Execution) -> Result<LabeledPointCloud> {
    let (vertices, vertex_labels) = fitted_mesh(res, template)?;
    let labels = seglab::refine_labels(cloud, &vertices, &vertex_labels, cfg, exec)?;
    let mut out = cloud.clone();
    out.labels = labels;
    Ok(out)
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn evaluate(seed: Option<u64>, gt: &[PathBuf], results: &[PathBuf], labels: &[PathBuf], template: &TemplateArg, report: &ReportOut) -> Result<()> {
    for (what, n) in [("results", results.len()), ("labels", labels.len())] {
        if n != 0 && n != gt.len() {
            bail!(segfit::Error::InvalidArgument(format!("{} ground-truth files but {n} {what}", gt.len())));
        }
    }
    let template = load_template(template)?;
    let mut scans = Vec::with_capacity(gt.len());
    for (i, g) in gt.iter().enumerate() {
        let mut truth: GtFile = io::read_gt(g)?;
        truth.truth.restore_vertices(&template)?;
        let mut score = ScanScore { gt: file_name(g), result: None, humans: Vec::new(), failed: Vec::new(), seg: None };
        if let Some(r) = results.get(i) {
            let res = io::read_result(r)?;
            score.result = Some(file_name(r));
            for h in &res.humans {
                match &h.outcome {
                    HumanOutcome::Ok { fit } => {
                        let gt_h = truth.truth.human(h.human_id).ok_or_else(|| {
                            segfit::Error::InvalidArgument(format!("{}: no ground truth for human {}", g.display(), h.human_id))
                        })?;
                        let posed = template.pose(&fit.params)?;
                        score.humans.push(HumanScore {
                            human_id: h.human_id,
                            v2v: eval::v2v(&posed.vertices, &gt_h.vertices)?,
                            mpjpe: eval::mpjpe(&posed.joints, &gt_h.joints)?,
                        });
                    }
                    HumanOutcome::Error { .. } => score.failed.push(h.human_id),
                }
            }
        }
        if let Some(l) = labels.get(i) {
            let pred = io::read_ply(l)?;
            score.seg = Some(eval::seg_metrics(&pred.labels, &truth.truth.labels, template.num_parts())?);
        }
        scans.push(score);
    }
    let humans = || scans.iter().flat_map(|s| &s.humans);
    let segs = || scans.iter().filter_map(|s| s.seg.as_ref());
    let summary = EvalSummary {
        v2v: mean(humans().map(|h| h.v2v)),
        mpjpe: mean(humans().map(|h| h.mpjpe)),
        acc: mean(segs().map(|m| m.acc)),
        miou: mean(segs().map(|m| m.miou)),
        map: mean(segs().map(|m| m.map)),
        scans,
    };
    let text = eval_text(&summary);
    let inputs: Vec<&Path> = gt.iter().chain(results).chain(labels).map(PathBuf::as_path).collect();
    emit(seed, &(), &inputs, &summary, &text, report)
}

fn eval_text(s: &EvalSummary) -> String {
    let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
    let mut rows = vec![["scan", "humans", "failed", "V2V", "MPJPE", "Acc", "mIoU", "mAP"].map(String::from).to_vec()];
    for sc in &s.scans {
        rows.push(vec![
            sc.gt.clone(),
            sc.humans.len().to_string(),
            sc.failed.len().to_string(),
            f(mean(sc.humans.iter().map(|h| h.v2v)), 1),
            f(mean(sc.humans.iter().map(|h| h.mpjpe)), 1),
            f(sc.seg.as_ref().map(|m| m.acc), 2),
            f(sc.seg.as_ref().map(|m| m.miou), 2),
            f(sc.seg.as_ref().map(|m| m.map), 2),
        ]);
    }
    rows.push(vec![
        "mean".into(),
        String::new(),
        String::new(),
        f(s.v2v, 1),
        f(s.mpjpe, 1),
        f(s.acc, 2),
        f(s.miou, 2),
        f(s.map, 2),
    ]);
    let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = format!("# evaluation (V2V and MPJPE in mm, segmentation in percent)\n# {}\n", eval::MAP_DEFINITION);
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn emit<C: Serialize, T: Serialize>(seed: Option<u64>, config: &C, inputs: &[&Path], report: &T, text: &str, out: &ReportOut) -> Result<()> {
    if let Some(p) = &out.out {
        io::write_json(
            p,
            &Report {
                format_version: FORMAT_VERSION,
                seed: seed.unwrap_or(0),
                config_digest: io::json_digest(config),
                inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
                report,
            },
        )?;
    }
    match &out.text {
        Some(p) => io::write_text(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
