//! The rigged parametric body: template data, forward kinematics, linear
//! blend skinning, shape blendshapes and the reverse-mode gradient of the
//! posed mesh with respect to pose, shape and translation.

mod humanoid;

pub use humanoid::builtin_humanoid;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::PartId;
use crate::error::{Error, Result};
use crate::geom::{so3, Point3};

const WEIGHT_TOLERANCE: f64 = 1e-9;
pub const MAX_INFLUENCES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub name: String,
    /// `None` for the root.
    pub parent: Option<usize>,
    /// Rest offset from the parent joint; the root's offset is its absolute
    /// rest position.
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Influence {
    pub joint: u16,
    pub weight: f64,
}

/// One linear shape direction, moving both rest vertices and rest joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blendshape {
    pub name: String,
    pub vertex_offsets: Vec<Vector3<f64>>,
    pub joint_offsets: Vec<Vector3<f64>>,
}

/// Per-axis bounds on a joint's axis-angle components, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimit {
    pub lower: Vector3<f64>,
    pub upper: Vector3<f64>,
}

/// Plain template contents, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateData {
    pub rest_vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
    /// Part id per vertex, in `1..=K`.
    pub vertex_part: Vec<PartId>,
    /// Names of parts `1..=K`.
    pub part_names: Vec<String>,
    /// Left/right counterpart of every part id (`mirror[k] == k` for
    /// unpaired parts); index 0 is background.
    pub mirror: Vec<PartId>,
    pub joints: Vec<Joint>,
    pub skin: Vec<Vec<Influence>>,
    pub blendshapes: Vec<Blendshape>,
    /// Rest pose θ₀ per joint.
    pub rest_pose: Vec<Vector3<f64>>,
    pub joint_limits: Vec<JointLimit>,
}

/// A validated, immutable rigged body template.
#[derive(Debug, Clone)]
pub struct RiggedTemplate {
    data: TemplateData,
    order: Vec<usize>,
    rest_joints: Vec<Point3>,
    part_vertices: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyParams {
    /// Axis-angle per joint; the root entry is the global orientation.
    pub theta: Vec<Vector3<f64>>,
    pub beta: Vec<f64>,
    pub translation: Vector3<f64>,
}

/// Gradient with the same layout as [`BodyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsGrad {
    pub theta: Vec<Vector3<f64>>,
    pub beta: Vec<f64>,
    pub translation: Vector3<f64>,
}

/// Everything the forward pass produces that the backward pass reuses.
#[derive(Debug, Clone)]
pub struct Posed {
    pub vertices: Vec<Point3>,
    /// World joint origins.
    pub joints: Vec<Point3>,
    /// World joint rotations.
    pub rotations: Vec<Matrix3<f64>>,
    /// Shaped rest vertices.
    pub shaped: Vec<Point3>,
    /// Shaped rest joint positions.
    pub shaped_joints: Vec<Point3>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidTemplate(msg.into())
}

impl RiggedTemplate {
    pub fn new(data: TemplateData) -> Result<Self> {
        let nv = data.rest_vertices.len();
        let nj = data.joints.len();
        let k = data.part_names.len();
        if nv == 0 || nj == 0 {
            return Err(invalid("template needs vertices and joints"));
        }
        if k == 0 || k > 254 {
            return Err(invalid(format!("part count {k} outside 1..=254")));
        }
        if data.rest_vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(invalid("non-finite rest vertex"));
        }
        for (name, len, want) in [
            ("vertex_part", data.vertex_part.len(), nv),
            ("skin", data.skin.len(), nv),
            ("rest_pose", data.rest_pose.len(), nj),
            ("joint_limits", data.joint_limits.len(), nj),
            ("mirror", data.mirror.len(), k + 1),
        ] {
            if len != want {
                return Err(invalid(format!("{name} has {len} entries, expected {want}")));
            }
        }
        for f in &data.faces {
            if f.iter().any(|&i| i as usize >= nv) {
                return Err(invalid(format!("face {f:?} indexes past {nv} vertices")));
            }
        }
        let mut part_vertices = vec![Vec::new(); k + 1];
        for (i, &p) in data.vertex_part.iter().enumerate() {
            if p == 0 || p as usize > k {
                return Err(invalid(format!("vertex {i} has part {p} outside 1..={k}")));
            }
            part_vertices[p as usize].push(i as u32);
        }
        if let Some(p) = (1..=k).find(|&p| part_vertices[p].is_empty()) {
            return Err(invalid(format!("part {p} owns no vertices")));
        }
        for (a, &b) in data.mirror.iter().enumerate() {
            if b as usize > k || data.mirror[b as usize] as usize != a || (a == 0) != (b == 0) {
                return Err(invalid(format!("mirror map is not an involution at part {a}")));
            }
        }
        for (i, infl) in data.skin.iter().enumerate() {
            if infl.is_empty() || infl.len() > MAX_INFLUENCES {
                return Err(invalid(format!("vertex {i} has {} skin influences", infl.len())));
            }
            let mut sum = 0.0;
            for w in infl {
                if w.joint as usize >= nj || !(w.weight >= 0.0) || !w.weight.is_finite() {
                    return Err(invalid(format!("vertex {i} has an invalid skin influence")));
                }
                sum += w.weight;
            }
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(invalid(format!("vertex {i} skin weights sum to {sum}")));
            }
        }
        for (b, bs) in data.blendshapes.iter().enumerate() {
            if bs.vertex_offsets.len() != nv || bs.joint_offsets.len() != nj {
                return Err(invalid(format!("blendshape {b} has wrong dimensions")));
            }
        }
        if data.rest_pose.iter().any(|w| w.norm() != 0.0) {
            return Err(invalid("rest_pose must be zero: rest vertices are defined at θ₀"));
        }
        let order = topological_order(&data.joints)?;
        let mut rest_joints = vec![Point3::zeros(); nj];
        for &j in &order {
            rest_joints[j] = match data.joints[j].parent {
                None => data.joints[j].offset,
                Some(p) => rest_joints[p] + data.joints[j].offset,
            };
        }
        Ok(Self {
            data,
            order,
            rest_joints,
            part_vertices,
        })
    }

    pub fn data(&self) -> &TemplateData {
        &self.data
    }

    pub fn num_vertices(&self) -> usize {
        self.data.rest_vertices.len()
    }

    pub fn num_joints(&self) -> usize {
        self.data.joints.len()
    }

    pub fn num_parts(&self) -> usize {
        self.data.part_names.len()
    }

    pub fn num_betas(&self) -> usize {
        self.data.blendshapes.len()
    }

    pub fn rest_vertices(&self) -> &[Point3] {
        &self.data.rest_vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.data.faces
    }

    pub fn vertex_part(&self) -> &[PartId] {
        &self.data.vertex_part
    }

    pub fn part_names(&self) -> &[String] {
        &self.data.part_names
    }

    pub fn mirror(&self) -> &[PartId] {
        &self.data.mirror
    }

    pub fn joints(&self) -> &[Joint] {
        &self.data.joints
    }

    pub fn joint_limits(&self) -> &[JointLimit] {
        &self.data.joint_limits
    }

    pub fn rest_pose(&self) -> &[Vector3<f64>] {
        &self.data.rest_pose
    }

    /// Vertex ids per part; entry 0 (background) is empty.
    pub fn part_vertices(&self) -> &[Vec<u32>] {
        &self.part_vertices
    }

    /// Rest joint positions with zero shape.
    pub fn rest_joints(&self) -> &[Point3] {
        &self.rest_joints
    }

    /// Joints in parent-before-child order.
    pub fn joint_order(&self) -> &[usize] {
        &self.order
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }

    pub fn identity_params(&self) -> BodyParams {
        BodyParams {
            theta: self.data.rest_pose.clone(),
            beta: vec![0.0; self.num_betas()],
            translation: Vector3::zeros(),
        }
    }

    pub(crate) fn check_params(&self, params: &BodyParams) -> Result<()> {
        if params.theta.len() != self.num_joints() {
            return Err(Error::DimensionMismatch {
                what: "pose (joints)",
                expected: self.num_joints(),
                got: params.theta.len(),
            });
        }
        if params.beta.len() != self.num_betas() {
            return Err(Error::DimensionMismatch {
                what: "shape coefficients",
                expected: self.num_betas(),
                got: params.beta.len(),
            });
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("body parameters"));
        }
        Ok(())
    }

    /// Forward kinematics and skinning.
    pub fn pose(&self, params: &BodyParams) -> Result<Posed> {
        self.check_params(params)?;
        let d = &self.data;
        let nj = self.num_joints();

        let mut shaped = d.rest_vertices.clone();
        let mut shaped_joints = self.rest_joints.clone();
        for (bs, &b) in d.blendshapes.iter().zip(&params.beta) {
            if b == 0.0 {
                continue;
            }
            for (s, o) in shaped.iter_mut().zip(&bs.vertex_offsets) {
                *s += o * b;
            }
            for (s, o) in shaped_joints.iter_mut().zip(&bs.joint_offsets) {
                *s += o * b;
            }
        }

        let mut rotations = vec![Matrix3::identity(); nj];
        let mut joints = vec![Point3::zeros(); nj];
        for &j in &self.order {
            let local = so3::exp(&params.theta[j]);
            match d.joints[j].parent {
                None => {
                    rotations[j] = local;
                    joints[j] = shaped_joints[j] + params.translation;
                }
                Some(p) => {
                    rotations[j] = rotations[p] * local;
                    joints[j] = joints[p] + rotations[p] * (shaped_joints[j] - shaped_joints[p]);
                }
            }
        }

        let vertices = shaped
            .iter()
            .zip(&d.skin)
            .map(|(s, infl)| {
                infl.iter().fold(Point3::zeros(), |acc, w| {
                    let j = w.joint as usize;
                    acc + (rotations[j] * (s - shaped_joints[j]) + joints[j]) * w.weight
                })
            })
            .collect();

        Ok(Posed {
            vertices,
            joints,
            rotations,
            shaped,
            shaped_joints,
        })
    }

    pub fn pose_mesh(&self, params: &BodyParams) -> Result<Vec<Point3>> {
        Ok(self.pose(params)?.vertices)
    }

    pub fn joints_world(&self, params: &BodyParams) -> Result<Vec<Point3>> {
        Ok(self.pose(params)?.joints)
    }

    /// Unweighted mean of each part's posed vertices; entry `k − 1` is part `k`.
    pub fn part_centroids_of(&self, vertices: &[Point3]) -> Vec<Point3> {
        self.part_vertices[1..]
            .iter()
            .map(|ids| {
                ids.iter().fold(Point3::zeros(), |acc, &i| acc + vertices[i as usize]) / ids.len() as f64
            })
            .collect()
    }

    pub fn model_part_centroids(&self, params: &BodyParams) -> Result<Vec<Point3>> {
        Ok(self.part_centroids_of(&self.pose(params)?.vertices))
    }

    /// Pulls `∂L/∂vertex` back to `∂L/∂(θ, β, t)`.
    ///
    /// A rotation increment of joint `a` rigidly turns its whole subtree about
    /// the joint origin, so its world-frame angular gradient is the torque
    /// `Σ (x − P_a) × g` over the subtree's skinned contributions; the left
    /// Jacobian of the exponential map converts it to axis-angle coordinates.
    pub fn backprop(&self, params: &BodyParams, posed: &Posed, vertex_grad: &[Vector3<f64>]) -> ParamsGrad {
        let d = &self.data;
        let nj = self.num_joints();
        let mut moment = vec![Vector3::zeros(); nj];
        let mut force = vec![Vector3::zeros(); nj];
        let mut beta = vec![0.0; self.num_betas()];
        let need_beta = !beta.is_empty();

        for (i, g) in vertex_grad.iter().enumerate() {
            if g.x == 0.0 && g.y == 0.0 && g.z == 0.0 {
                continue;
            }
            let s = posed.shaped[i];
            let mut local = Vector3::zeros();
            for w in &d.skin[i] {
                let j = w.joint as usize;
                let x = posed.rotations[j] * (s - posed.shaped_joints[j]) + posed.joints[j];
                let wg = g * w.weight;
                moment[j] += x.cross(&wg);
                force[j] += wg;
                if need_beta {
                    local += posed.rotations[j].transpose() * wg;
                }
            }
            if need_beta {
                for (b, bs) in d.blendshapes.iter().enumerate() {
                    beta[b] += local.dot(&bs.vertex_offsets[i]);
                }
            }
        }

        let translation = force.iter().sum();

        if need_beta {
            // Joint-position dependence: shaped joints shift both the
            // skinning pivot and the kinematic chain.
            let mut dp = vec![Vector3::zeros(); nj];
            for (b, bs) in d.blendshapes.iter().enumerate() {
                for &j in &self.order {
                    dp[j] = match d.joints[j].parent {
                        None => bs.joint_offsets[j],
                        Some(p) => dp[p] + posed.rotations[p] * (bs.joint_offsets[j] - bs.joint_offsets[p]),
                    };
                }
                for j in 0..nj {
                    beta[b] += force[j].dot(&dp[j])
                        - (posed.rotations[j].transpose() * force[j]).dot(&bs.joint_offsets[j]);
                }
            }
        }

        let mut sub_moment = moment;
        let mut sub_force = force;
        for &j in self.order.iter().rev() {
            if let Some(p) = d.joints[j].parent {
                let (m, f) = (sub_moment[j], sub_force[j]);
                sub_moment[p] += m;
                sub_force[p] += f;
            }
        }
        let theta = (0..nj)
            .map(|a| {
                let torque = sub_moment[a] - posed.joints[a].cross(&sub_force[a]);
                let parent_rot = match d.joints[a].parent {
                    None => Matrix3::identity(),
                    Some(p) => posed.rotations[p],
                };
                so3::left_jacobian(&params.theta[a]).transpose() * (parent_rot.transpose() * torque)
            })
            .collect();

        ParamsGrad {
            theta,
            beta,
            translation,
        }
    }
}

fn topological_order(joints: &[Joint]) -> Result<Vec<usize>> {
    let n = joints.len();
    let roots: Vec<usize> = (0..n).filter(|&j| joints[j].parent.is_none()).collect();
    if roots.len() != 1 {
        return Err(invalid(format!("joint tree needs exactly one root, found {}", roots.len())));
    }
    let mut children = vec![Vec::new(); n];
    for (j, joint) in joints.iter().enumerate() {
        if let Some(p) = joint.parent {
            if p >= n || p == j {
                return Err(invalid(format!("joint {j} has invalid parent {p}")));
            }
            children[p].push(j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![roots[0]];
    while let Some(j) = stack.pop() {
        order.push(j);
        for &c in children[j].iter().rev() {
            stack.push(c);
        }
    }
    if order.len() != n {
        return Err(invalid("joint tree contains a cycle or disconnected joints"));
    }
    Ok(order)
}

impl BodyParams {
    pub fn num_scalars(&self) -> usize {
        3 * self.theta.len() + self.beta.len() + 3
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|w| w.iter().all(|c| c.is_finite()))
            && self.beta.iter().all(|b| b.is_finite())
            && self.translation.iter().all(|c| c.is_finite())
    }

    /// Flat layout: θ (joint-major), then β, then t.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_scalars());
        for w in &self.theta {
            v.extend_from_slice(w.as_slice());
        }
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(self.translation.as_slice());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let nj = self.theta.len();
        let nb = self.beta.len();
        for (j, w) in self.theta.iter_mut().enumerate() {
            *w = Vector3::new(flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]);
        }
        self.beta.copy_from_slice(&flat[3 * nj..3 * nj + nb]);
        let o = 3 * nj + nb;
        self.translation = Vector3::new(flat[o], flat[o + 1], flat[o + 2]);
    }

    /// Rewrites every joint rotation with angle at most π.
    pub fn canonicalized(&self) -> BodyParams {
        BodyParams {
            theta: self.theta.iter().map(so3::canonicalize).collect(),
            ..self.clone()
        }
    }
}

impl ParamsGrad {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.theta.len() + self.beta.len() + 3);
        for w in &self.theta {
            v.extend_from_slice(w.as_slice());
        }
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(self.translation.as_slice());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Root at the origin with one child 1 m along +x; vertex 0 bound to the
    /// root, vertex 1 to the child.
    fn two_joint() -> RiggedTemplate {
        RiggedTemplate::new(TemplateData {
            rest_vertices: vec![Point3::new(0.0, 0.2, 0.0), Point3::new(1.5, 0.0, 0.0), Point3::new(0.0, 0.0, 0.3)],
            faces: vec![[0, 1, 2]],
            vertex_part: vec![1, 2, 1],
            part_names: vec!["base".into(), "tip".into()],
            mirror: vec![0, 1, 2],
            joints: vec![
                Joint { name: "root".into(), parent: None, offset: Vector3::zeros() },
                Joint { name: "child".into(), parent: Some(0), offset: Vector3::new(1.0, 0.0, 0.0) },
            ],
            skin: vec![
                vec![Influence { joint: 0, weight: 1.0 }],
                vec![Influence { joint: 1, weight: 1.0 }],
                vec![Influence { joint: 0, weight: 0.5 }, Influence { joint: 1, weight: 0.5 }],
            ],
            blendshapes: vec![Blendshape {
                name: "stretch".into(),
                vertex_offsets: vec![Vector3::zeros(), Vector3::new(0.5, 0.0, 0.0), Vector3::zeros()],
                joint_offsets: vec![Vector3::zeros(), Vector3::new(0.5, 0.0, 0.0)],
            }],
            rest_pose: vec![Vector3::zeros(); 2],
            joint_limits: vec![JointLimit { lower: Vector3::repeat(-1.0), upper: Vector3::repeat(1.0) }; 2],
        })
        .unwrap()
    }

    #[test]
    fn child_joint_under_root_quarter_turn() {
        let t = two_joint();
        let mut p = t.identity_params();
        p.theta[0] = Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let j = t.joints_world(&p).unwrap();
        assert!((j[1] - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let v = t.pose_mesh(&p).unwrap();
        assert!((v[1] - Point3::new(0.0, 1.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn child_rotation_moves_only_bound_vertices() {
        let t = two_joint();
        let mut p = t.identity_params();
        p.theta[1] = Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let v = t.pose_mesh(&p).unwrap();
        assert_eq!(v[0], t.rest_vertices()[0]);
        assert!((v[1] - Point3::new(1.0, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = two_joint();
        let mut p = t.identity_params();
        p.beta.push(0.0);
        assert!(matches!(t.pose(&p), Err(Error::DimensionMismatch { .. })));
        let mut p = t.identity_params();
        p.theta.pop();
        assert!(t.joints_world(&p).is_err());
    }

    #[test]
    fn invalid_templates_rejected() {
        let base = two_joint().data().clone();

        let mut d = base.clone();
        d.joints[0].parent = Some(1);
        assert!(RiggedTemplate::new(d).is_err(), "cycle / no root");

        let mut d = base.clone();
        d.skin[0][0].weight = 0.9;
        assert!(RiggedTemplate::new(d).is_err(), "weights not normalized");

        let mut d = base.clone();
        d.vertex_part[1] = 1;
        assert!(RiggedTemplate::new(d).is_err(), "part 2 unowned");

        let mut d = base.clone();
        d.faces.push([0, 1, 7]);
        assert!(RiggedTemplate::new(d).is_err(), "bad face");

        let mut d = base;
        d.rest_pose[1] = Vector3::new(0.1, 0.0, 0.0);
        assert!(RiggedTemplate::new(d).is_err(), "nonzero rest pose");
    }

    #[test]
    fn backprop_matches_finite_differences_on_chain() {
        let t = two_joint();
        let mut p = t.identity_params();
        p.theta[0] = Vector3::new(0.2, -0.1, 0.4);
        p.theta[1] = Vector3::new(-0.3, 0.5, 0.1);
        p.beta[0] = 0.3;
        p.translation = Vector3::new(0.1, 0.2, -0.3);
        let weights = [Vector3::new(1.0, -2.0, 0.5), Vector3::new(0.3, 0.7, -1.1), Vector3::new(-0.4, 0.2, 0.9)];
        let loss = |p: &BodyParams| -> f64 {
            t.pose_mesh(p).unwrap().iter().zip(&weights).map(|(v, w)| v.dot(w)).sum()
        };
        let posed = t.pose(&p).unwrap();
        let g = t.backprop(&p, &posed, &weights).to_flat();
        let x0 = p.to_flat();
        for i in 0..x0.len() {
            let h = 1e-6;
            let mut a = p.clone();
            let mut xa = x0.clone();
            xa[i] += h;
            a.set_flat(&xa);
            let mut b = p.clone();
            let mut xb = x0.clone();
            xb[i] -= h;
            b.set_flat(&xb);
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "coord {i}: fd {fd} vs {}", g[i]);
        }
    }
}
