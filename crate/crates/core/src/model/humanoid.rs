//! Procedural capsule-limb humanoid with 15 parts, 16 joints and two shape
//! directions (height, girth).
//!
//! Frame: z up, the body faces −y, the body's left side is +x. The pelvis
//! joint sits at the origin.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::{Blendshape, Influence, Joint, JointLimit, RiggedTemplate, TemplateData};
use crate::cloud::PartId;
use crate::geom::Point3;

pub const PART_NAMES: [&str; 15] = [
    "head",
    "torso",
    "hips",
    "left_upper_arm",
    "right_upper_arm",
    "left_lower_arm",
    "right_lower_arm",
    "left_hand",
    "right_hand",
    "left_upper_leg",
    "right_upper_leg",
    "left_lower_leg",
    "right_lower_leg",
    "left_foot",
    "right_foot",
];

const HEIGHT_SCALE: f64 = 0.10;
const GIRTH_SCALE: f64 = 0.15;
const BASE_EDGE: f64 = 0.03;
const BLEND_LENGTH: f64 = 0.08;

struct JointDef {
    name: &'static str,
    parent: Option<usize>,
    position: [f64; 3],
    /// (lower, upper) per axis for the left/center version.
    limits: [(f64, f64); 3],
}

const fn sym(a: f64) -> (f64, f64) {
    (-a, a)
}

/// Left and center joints; right joints are mirrored from their left twins.
const JOINTS: [JointDef; 16] = [
    JointDef { name: "pelvis", parent: None, position: [0.0, 0.0, 0.0], limits: [sym(PI), sym(PI), sym(PI)] },
    JointDef { name: "spine", parent: Some(0), position: [0.0, 0.0, 0.10], limits: [sym(0.35), sym(0.25), sym(0.3)] },
    JointDef { name: "neck", parent: Some(1), position: [0.0, 0.0, 0.50], limits: [sym(0.2), sym(0.2), sym(0.2)] },
    JointDef { name: "head", parent: Some(2), position: [0.0, 0.0, 0.56], limits: [sym(0.3), sym(0.25), sym(0.25)] },
    JointDef { name: "left_shoulder", parent: Some(2), position: [0.17, 0.0, 0.45], limits: [sym(0.2), sym(0.9), sym(0.8)] },
    JointDef { name: "left_elbow", parent: Some(4), position: [0.45, 0.0, 0.45], limits: [sym(0.2), sym(0.1), (-1.6, 0.0)] },
    JointDef { name: "left_wrist", parent: Some(5), position: [0.72, 0.0, 0.45], limits: [sym(0.2), sym(0.5), sym(0.4)] },
    JointDef { name: "right_shoulder", parent: Some(2), position: [-0.17, 0.0, 0.45], limits: [(0.0, 0.0); 3] },
    JointDef { name: "right_elbow", parent: Some(7), position: [-0.45, 0.0, 0.45], limits: [(0.0, 0.0); 3] },
    JointDef { name: "right_wrist", parent: Some(8), position: [-0.72, 0.0, 0.45], limits: [(0.0, 0.0); 3] },
    JointDef { name: "left_hip", parent: Some(0), position: [0.09, 0.0, -0.08], limits: [(-1.0, 0.3), sym(0.4), sym(0.2)] },
    JointDef { name: "left_knee", parent: Some(10), position: [0.09, 0.0, -0.50], limits: [(0.0, 1.6), sym(0.1), sym(0.1)] },
    JointDef { name: "left_ankle", parent: Some(11), position: [0.09, 0.0, -0.90], limits: [sym(0.35), sym(0.2), sym(0.2)] },
    JointDef { name: "right_hip", parent: Some(0), position: [-0.09, 0.0, -0.08], limits: [(0.0, 0.0); 3] },
    JointDef { name: "right_knee", parent: Some(13), position: [-0.09, 0.0, -0.50], limits: [(0.0, 0.0); 3] },
    JointDef { name: "right_ankle", parent: Some(14), position: [-0.09, 0.0, -0.90], limits: [(0.0, 0.0); 3] },
];

/// (right joint, left twin).
const MIRRORED_JOINTS: [(usize, usize); 6] = [(7, 4), (8, 5), (9, 6), (13, 10), (14, 11), (15, 12)];

struct CapsuleDef {
    part: PartId,
    start: [f64; 3],
    end: [f64; 3],
    radius: f64,
    joint: usize,
}

/// Center and left parts.
const CAPSULES: [CapsuleDef; 9] = [
    CapsuleDef { part: 1, start: [0.0, 0.0, 0.66], end: [0.0, 0.0, 0.72], radius: 0.10, joint: 3 },
    CapsuleDef { part: 2, start: [0.0, 0.0, 0.12], end: [0.0, 0.0, 0.42], radius: 0.14, joint: 1 },
    CapsuleDef { part: 3, start: [-0.07, 0.0, -0.04], end: [0.07, 0.0, -0.04], radius: 0.12, joint: 0 },
    CapsuleDef { part: 4, start: [0.20, 0.0, 0.45], end: [0.44, 0.0, 0.45], radius: 0.05, joint: 4 },
    CapsuleDef { part: 6, start: [0.48, 0.0, 0.45], end: [0.70, 0.0, 0.45], radius: 0.04, joint: 5 },
    CapsuleDef { part: 8, start: [0.75, 0.0, 0.45], end: [0.83, 0.0, 0.45], radius: 0.035, joint: 6 },
    CapsuleDef { part: 10, start: [0.09, 0.0, -0.14], end: [0.09, 0.0, -0.47], radius: 0.07, joint: 10 },
    CapsuleDef { part: 12, start: [0.09, 0.0, -0.54], end: [0.09, 0.0, -0.85], radius: 0.05, joint: 11 },
    CapsuleDef { part: 14, start: [0.09, -0.02, -0.93], end: [0.09, -0.17, -0.93], radius: 0.04, joint: 12 },
];

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Point3>,
    faces: Vec<[u32; 3]>,
    part: Vec<PartId>,
    skin: Vec<Vec<Influence>>,
    girth: Vec<Vector3<f64>>,
}

impl MeshBuilder {
    /// Appends a closed capsule mesh. Vertices near the start cap blend
    /// toward the parent joint. Returns the vertex range added.
    fn capsule(&mut self, def: &CapsuleDef, parent_joint: Option<usize>, edge: f64) -> std::ops::Range<usize> {
        let a = Vector3::from(def.start);
        let b = Vector3::from(def.end);
        let r = def.radius;
        let axis_vec = b - a;
        let len = axis_vec.norm();
        let d = axis_vec / len;
        let u = if d.z.abs() < 0.9 {
            d.cross(&Vector3::z()).normalize()
        } else {
            d.cross(&Vector3::x()).normalize()
        };
        let w = d.cross(&u);

        let around = (((2.0 * PI * r / edge).ceil() as usize).max(12) + 3) / 4 * 4;
        let lat = ((0.5 * PI * r / edge).ceil() as usize).max(3);
        let cyl = ((len / edge).ceil() as usize).max(1);

        // (center, axial offset, ring radius); poles have radius 0.
        let mut rings: Vec<(Vector3<f64>, f64, f64)> = Vec::new();
        for k in 1..lat {
            let phi = -0.5 * PI + k as f64 * 0.5 * PI / lat as f64;
            rings.push((a, r * phi.sin(), r * phi.cos()));
        }
        for c in 0..=cyl {
            rings.push((a + axis_vec * (c as f64 / cyl as f64), 0.0, r));
        }
        for k in 1..lat {
            let phi = k as f64 * 0.5 * PI / lat as f64;
            rings.push((b, r * phi.sin(), r * phi.cos()));
        }

        let base = self.vertices.len();
        let bottom = a - d * r;
        let top = b + d * r;
        let push = |this: &mut Self, p: Point3, axis_point: Point3| {
            let along = (p - bottom).dot(&d);
            let mut infl = Vec::with_capacity(2);
            match parent_joint {
                Some(q) if along < BLEND_LENGTH => {
                    let wq = 0.5 * (1.0 - along.max(0.0) / BLEND_LENGTH);
                    infl.push(Influence { joint: def.joint as u16, weight: 1.0 - wq });
                    infl.push(Influence { joint: q as u16, weight: wq });
                }
                _ => infl.push(Influence { joint: def.joint as u16, weight: 1.0 }),
            }
            this.vertices.push(p);
            this.part.push(def.part);
            this.skin.push(infl);
            this.girth.push((p - axis_point) * GIRTH_SCALE);
        };

        push(self, bottom, a);
        for (center, off, rad) in &rings {
            let c = center + d * *off;
            for m in 0..around {
                let ang = 2.0 * PI * m as f64 / around as f64;
                let p = c + (u * ang.cos() + w * ang.sin()) * *rad;
                push(self, p, *center);
            }
        }
        push(self, top, b);

        let ring_start = |i: usize| (base + 1 + i * around) as u32;
        let n_rings = rings.len();
        let bottom_id = base as u32;
        let top_id = (base + 1 + n_rings * around) as u32;
        for m in 0..around {
            let m1 = (m + 1) % around;
            let r0 = ring_start(0);
            self.faces.push([bottom_id, r0 + m1 as u32, r0 + m as u32]);
        }
        for i in 0..n_rings - 1 {
            let (r0, r1) = (ring_start(i), ring_start(i + 1));
            for m in 0..around {
                let m1 = (m + 1) % around;
                let (a0, a1, b0, b1) = (r0 + m as u32, r0 + m1 as u32, r1 + m as u32, r1 + m1 as u32);
                self.faces.push([a0, a1, b1]);
                self.faces.push([a0, b1, b0]);
            }
        }
        let rl = ring_start(n_rings - 1);
        for m in 0..around {
            let m1 = (m + 1) % around;
            self.faces.push([top_id, rl + m as u32, rl + m1 as u32]);
        }
        base..self.vertices.len()
    }
}

fn mirror_vec(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-v.x, v.y, v.z)
}

/// Axis-angle components transform as a pseudo-vector under x ↦ −x.
fn mirror_angle_limits(l: &[(f64, f64); 3]) -> [(f64, f64); 3] {
    [l[0], (-l[1].1, -l[1].0), (-l[2].1, -l[2].0)]
}

/// Builds the procedural humanoid. `subdivision` halves the target edge
/// length per level.
pub fn builtin_humanoid(subdivision: u32) -> RiggedTemplate {
    let edge = BASE_EDGE / f64::powi(2.0, subdivision.min(6) as i32);

    let mut positions: Vec<Vector3<f64>> = JOINTS.iter().map(|j| Vector3::from(j.position)).collect();
    let mut limits: Vec<[(f64, f64); 3]> = JOINTS.iter().map(|j| j.limits).collect();
    for (right, left) in MIRRORED_JOINTS {
        positions[right] = mirror_vec(&positions[left]);
        limits[right] = mirror_angle_limits(&limits[left]);
    }
    let mirror_joint = |j: usize| {
        MIRRORED_JOINTS
            .iter()
            .find(|(_, l)| *l == j)
            .map_or(j, |(r, _)| *r)
    };

    let mut mesh = MeshBuilder::default();
    for def in &CAPSULES {
        let parent = JOINTS[def.joint].parent;
        let range = mesh.capsule(def, parent, edge);
        let is_left = def.part >= 4;
        if !is_left {
            continue;
        }
        // Mirror the left part into its right twin, reversing winding.
        let offset = mesh.vertices.len() as u32 - range.start as u32;
        let right_part = def.part + 1;
        let face_range: Vec<[u32; 3]> = mesh
            .faces
            .iter()
            .filter(|f| (f[0] as usize) >= range.start && (f[0] as usize) < range.end)
            .copied()
            .collect();
        for i in range.clone() {
            let p = mirror_vec(&mesh.vertices[i]);
            let infl = mesh.skin[i]
                .iter()
                .map(|w| Influence { joint: mirror_joint(w.joint as usize) as u16, weight: w.weight })
                .collect();
            let g = mirror_vec(&mesh.girth[i]);
            mesh.vertices.push(p);
            mesh.part.push(right_part);
            mesh.skin.push(infl);
            mesh.girth.push(g);
        }
        for f in face_range {
            mesh.faces.push([f[0] + offset, f[2] + offset, f[1] + offset]);
        }
    }

    let joints: Vec<Joint> = JOINTS
        .iter()
        .enumerate()
        .map(|(j, def)| Joint {
            name: def.name.to_string(),
            parent: def.parent,
            offset: match def.parent {
                None => positions[j],
                Some(p) => positions[j] - positions[p],
            },
        })
        .collect();

    let height = Blendshape {
        name: "height".into(),
        vertex_offsets: mesh.vertices.iter().map(|v| Vector3::new(0.0, 0.0, HEIGHT_SCALE * v.z)).collect(),
        joint_offsets: positions.iter().map(|p| Vector3::new(0.0, 0.0, HEIGHT_SCALE * p.z)).collect(),
    };
    let girth = Blendshape {
        name: "girth".into(),
        vertex_offsets: mesh.girth.clone(),
        joint_offsets: vec![Vector3::zeros(); JOINTS.len()],
    };

    let mut mirror: Vec<PartId> = (0..=15).collect();
    for left in [4u8, 6, 8, 10, 12, 14] {
        mirror[left as usize] = left + 1;
        mirror[left as usize + 1] = left;
    }

    let data = TemplateData {
        rest_vertices: mesh.vertices,
        faces: mesh.faces,
        vertex_part: mesh.part,
        part_names: PART_NAMES.iter().map(|s| s.to_string()).collect(),
        mirror,
        joints,
        skin: mesh.skin,
        blendshapes: vec![height, girth],
        rest_pose: vec![Vector3::zeros(); JOINTS.len()],
        joint_limits: limits
            .iter()
            .map(|l| JointLimit {
                lower: Vector3::new(l[0].0, l[1].0, l[2].0),
                upper: Vector3::new(l[0].1, l[1].1, l[2].1),
            })
            .collect(),
    };
    RiggedTemplate::new(data).expect("builtin humanoid satisfies template invariants")
}
