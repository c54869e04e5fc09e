//! File formats: ASCII labeled PLY, JSON documents, OBJ meshes, digests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloud::{LabeledPointCloud, PartId};
use crate::error::{Error, Result};
use crate::fit::{FitConfig, FitResult, LossBreakdown};
use crate::geom::Point3;
use crate::model::{BodyParams, RiggedTemplate, TemplateData};
use crate::synth::{GroundTruth, ScanRecipe};

/// Version written into every structured document.
pub const FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of a byte string.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the compact JSON encoding of a value.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    digest(&serde_json::to_vec(value).expect("serializable value"))
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Fails unless a document carries the supported `format_version`.
pub fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    Ok(())
}

fn push_f32(out: &mut String, v: f64) {
    let f = v as f32;
    if f == 0.0 {
        // avoid "-0"
        out.push('0');
    } else {
        write!(out, "{f}").unwrap();
    }
}

/// Renders a cloud as ASCII PLY. Coordinates are stored as 32-bit floats in
/// shortest round-trip notation.
pub fn ply_string(cloud: &LabeledPointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32 + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", cloud.len()).unwrap();
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar part_label\n");
    if cloud.human_ids.is_some() {
        out.push_str("property uchar human_id\n");
    }
    out.push_str("end_header\n");
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        for (c, v) in p.iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            push_f32(&mut out, *v);
        }
        write!(out, " {}", cloud.labels[i]).unwrap();
        if let Some(ids) = &cloud.human_ids {
            write!(out, " {}", ids[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_ply(path: &Path, cloud: &LabeledPointCloud) -> Result<()> {
    cloud.validate()?;
    write_text(path, &ply_string(cloud))
}

#[derive(Clone, Copy, PartialEq)]
enum Prop {
    X(bool),
    Y(bool),
    Z(bool),
    Label,
    Human,
    Other,
}

/// Parses ASCII PLY with `x y z` and `part_label` vertex properties and an
/// optional `human_id`. Other vertex properties are ignored.
pub fn parse_ply(path: &Path, text: &str) -> Result<LabeledPointCloud> {
    let bad = |msg: String| Error::format(path, msg);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut count: Option<usize> = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or_else(|| bad("unterminated header".into()))?.trim();
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => ascii = true,
            ["format", f, _] => return Err(bad(format!("unsupported PLY format '{f}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| bad(format!("bad vertex count '{n}'")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err(bad("list property on vertex".into())),
            ["property", ty, name] if in_vertex => {
                let single = matches!(*ty, "float" | "float32");
                let p = match *name {
                    "x" => Prop::X(single),
                    "y" => Prop::Y(single),
                    "z" => Prop::Z(single),
                    "part_label" => Prop::Label,
                    "human_id" => Prop::Human,
                    _ => Prop::Other,
                };
                let ok = match p {
                    Prop::X(_) | Prop::Y(_) | Prop::Z(_) => matches!(*ty, "float" | "float32" | "double" | "float64"),
                    Prop::Label | Prop::Human => matches!(*ty, "uchar" | "uint8"),
                    Prop::Other => true,
                };
                if !ok {
                    return Err(bad(format!("property {name} has unsupported type {ty}")));
                }
                props.push(p);
            }
            ["property", ..] => {}
            _ => return Err(bad(format!("unrecognized header line '{line}'"))),
        }
    }
    if !ascii {
        return Err(bad("missing ascii format line".into()));
    }
    let n = count.ok_or_else(|| bad("no vertex element".into()))?;
    let has = |f: fn(&Prop) -> bool| props.iter().any(f);
    if !(has(|p| matches!(p, Prop::X(_)))
        && has(|p| matches!(p, Prop::Y(_)))
        && has(|p| matches!(p, Prop::Z(_)))
        && has(|p| *p == Prop::Label))
    {
        {
            return Err(bad("vertex element needs x, y, z and part_label".into()));
        }
    }
    let has_human = props.contains(&Prop::Human);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(if has_human { n } else { 0 });
    for row in 0..n {
        let line = lines.next().ok_or_else(|| bad(format!("expected {n} vertices, found {row}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != props.len() {
            return Err(bad(format!("vertex {row}: expected {} fields", props.len())));
        }
        let mut p = Point3::zeros();
        let mut label = 0;
        let mut id = 0;
        for (f, prop) in fields.iter().zip(&props) {
            let float = |single: bool| -> Result<f64> {
                let err = |_| bad(format!("vertex {row}: bad number '{f}'"));
                if single {
                    f.parse::<f32>().map(f64::from).map_err(err)
                } else {
                    f.parse::<f64>().map_err(err)
                }
            };
            let byte = || -> Result<u8> {
                f.parse::<u8>().map_err(|_| bad(format!("vertex {row}: bad uchar '{f}'")))
            };
            match prop {
                Prop::X(s) => p.x = float(*s)?,
                Prop::Y(s) => p.y = float(*s)?,
                Prop::Z(s) => p.z = float(*s)?,
                Prop::Label => label = byte()?,
                Prop::Human => id = byte()?,
                Prop::Other => {}
            }
        }
        points.push(p);
        labels.push(label as PartId);
        if has_human {
            ids.push(id);
        }
    }
    let cloud = LabeledPointCloud::new(points, labels).map_err(|e| bad(e.to_string()))?;
    if has_human {
        cloud.with_human_ids(ids).map_err(|e| bad(e.to_string()))
    } else {
        Ok(cloud)
    }
}

pub fn read_ply(path: &Path) -> Result<LabeledPointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(path, &text)
}

/// Wavefront OBJ text for a triangle mesh.
pub fn obj_string(vertices: &[Point3], faces: &[[u32; 3]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 40 + faces.len() * 20);
    for v in vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    out
}

pub fn write_obj(path: &Path, vertices: &[Point3], faces: &[[u32; 3]]) -> Result<()> {
    write_text(path, &obj_string(vertices, faces))
}

/// On-disk template document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFile {
    pub format_version: u32,
    pub num_parts: usize,
    pub template: TemplateData,
}

pub fn template_string(template: &RiggedTemplate) -> String {
    to_json_string(&TemplateFile {
        format_version: FORMAT_VERSION,
        num_parts: template.num_parts(),
        template: template.data().clone(),
    })
}

pub fn write_template(path: &Path, template: &RiggedTemplate) -> Result<()> {
    write_text(path, &template_string(template))
}

pub fn read_template(path: &Path) -> Result<RiggedTemplate> {
    let file: TemplateFile = read_json(path)?;
    check_version(path, file.format_version)?;
    if file.num_parts != file.template.part_names.len() {
        return Err(Error::format(
            path,
            format!("num_parts {} disagrees with {} part names", file.num_parts, file.template.part_names.len()),
        ));
    }
    RiggedTemplate::new(file.template)
}

/// A fit outcome without wall-clock time, so that result documents are
/// reproducible byte for byte. Timing goes to a separate [`TimingFile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub params: BodyParams,
    pub loss: LossBreakdown,
    pub initial_loss: f64,
    pub steps_taken: usize,
    pub converged: bool,
    pub init_used: String,
    pub optimizations: usize,
}

impl From<&FitResult> for FitRecord {
    fn from(r: &FitResult) -> Self {
        Self {
            params: r.params.clone(),
            loss: r.loss,
            initial_loss: r.initial_loss,
            steps_taken: r.steps_taken,
            converged: r.converged,
            init_used: r.init_used.clone(),
            optimizations: r.optimizations,
        }
    }
}

impl FitRecord {
    pub fn final_loss(&self) -> f64 {
        self.loss.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HumanOutcome {
    Ok { fit: FitRecord },
    Error { kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanFit {
    pub human_id: u8,
    pub outcome: HumanOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub format_version: u32,
    pub seed: u64,
    pub scan: String,
    pub scan_digest: String,
    pub template_digest: String,
    pub variant: u8,
    pub config: FitConfig,
    pub config_digest: String,
    pub humans: Vec<HumanFit>,
}

impl ResultFile {
    pub fn fits(&self) -> impl Iterator<Item = (u8, &FitRecord)> {
        self.humans.iter().filter_map(|h| match &h.outcome {
            HumanOutcome::Ok { fit } => Some((h.human_id, fit)),
            HumanOutcome::Error { .. } => None,
        })
    }

    /// Sum of the final losses of all fitted humans.
    pub fn final_loss(&self) -> f64 {
        self.fits().map(|(_, f)| f.final_loss()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanTiming {
    pub human_id: u8,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingFile {
    pub format_version: u32,
    pub humans: Vec<HumanTiming>,
    pub total: f64,
}

/// Ground-truth document written next to every generated scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFile {
    pub format_version: u32,
    pub seed: u64,
    pub recipe_digest: String,
    pub scan: String,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanEntry {
    pub ply: String,
    pub gt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceInfo {
    pub frames: usize,
    /// Largest per-frame joint rotation, radians.
    pub max_step: f64,
}

/// Index of a generated benchmark or sequence directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenManifest {
    pub format_version: u32,
    pub seed: u64,
    pub recipe_digest: String,
    pub recipe: ScanRecipe,
    /// Present when the scans are consecutive frames of one motion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceInfo>,
    pub scans: Vec<ScanEntry>,
}

pub fn read_gt(path: &Path) -> Result<GtFile> {
    let g: GtFile = read_json(path)?;
    check_version(path, g.format_version)?;
    Ok(g)
}

pub fn read_result(path: &Path) -> Result<ResultFile> {
    let r: ResultFile = read_json(path)?;
    check_version(path, r.format_version)?;
    Ok(r)
}

pub fn read_manifest(path: &Path) -> Result<GenManifest> {
    let m: GenManifest = read_json(path)?;
    check_version(path, m.format_version)?;
    Ok(m)
}
