use nalgebra::Vector3;

use super::Camera;
use crate::error::{Error, Result};
use crate::geom::Point3;

/// Pinhole camera with square pixels and a square image.
#[derive(Debug, Clone)]
pub struct CameraFrame {
    pub position: Point3,
    pub forward: Vector3<f64>,
    pub right: Vector3<f64>,
    pub up: Vector3<f64>,
    pub tan_half: f64,
    pub resolution: usize,
}

const NEAR: f64 = 1e-3;

impl CameraFrame {
    pub fn new(camera: &Camera) -> Result<Self> {
        let position = Vector3::from(camera.position);
        let forward = (Vector3::from(camera.look_at) - position)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("camera look_at equals position".into()))?;
        let world_up = if forward.z.abs() < 0.999 { Vector3::z() } else { Vector3::y() };
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        Ok(Self {
            position,
            forward,
            right,
            up,
            tan_half: (0.5 * camera.fov_deg).to_radians().tan(),
            resolution: camera.resolution,
        })
    }

    /// Continuous pixel coordinates and depth along the optical axis.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64, f64)> {
        let d = p - self.position;
        let z = d.dot(&self.forward);
        if z <= NEAR {
            return None;
        }
        let n = self.resolution as f64;
        let x = d.dot(&self.right) / (z * self.tan_half);
        let y = d.dot(&self.up) / (z * self.tan_half);
        Some((0.5 * (x + 1.0) * n, 0.5 * (1.0 - y) * n, z))
    }

    /// Ray through the center of pixel `(col, row)`, scaled to unit depth.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vector3<f64> {
        let n = self.resolution as f64;
        let x = (2.0 * (col as f64 + 0.5) / n - 1.0) * self.tan_half;
        let y = (1.0 - 2.0 * (row as f64 + 0.5) / n) * self.tan_half;
        self.forward + self.right * x + self.up * y
    }

    /// Lateral size of one pixel at `depth`.
    pub fn footprint(&self, depth: f64) -> f64 {
        2.0 * depth * self.tan_half / self.resolution as f64
    }
}

/// Nearest depth per pixel center over all rasterized triangles.
#[derive(Debug, Clone)]
pub struct DepthBuffer {
    pub camera: CameraFrame,
    depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn new(camera: &CameraFrame) -> Self {
        let n = camera.resolution;
        Self {
            camera: camera.clone(),
            depth: vec![f64::INFINITY; n * n],
        }
    }

    pub fn depth_at(&self, col: usize, row: usize) -> f64 {
        self.depth[row * self.camera.resolution + col]
    }

    /// Writes the exact ray-plane depth of the triangle at every pixel center
    /// it covers. Triangles crossing the near plane are skipped.
    pub fn rasterize(&mut self, tri: [Point3; 3]) {
        let cam = &self.camera;
        let (Some(a), Some(b), Some(c)) = (cam.project(&tri[0]), cam.project(&tri[1]), cam.project(&tri[2])) else {
            return;
        };
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area.abs() < 1e-18 {
            return;
        }
        let normal = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let offset = normal.dot(&(tri[0] - cam.position));
        let n = cam.resolution;
        let lo = |v: f64| (v - 0.5).floor().max(0.0) as usize;
        let hi = |v: f64| ((v - 0.5).ceil().max(-1.0) as i64).min(n as i64 - 1);
        let (x0, x1) = (lo(a.0.min(b.0).min(c.0)), hi(a.0.max(b.0).max(c.0)));
        let (y0, y1) = (lo(a.1.min(b.1).min(c.1)), hi(a.1.max(b.1).max(c.1)));
        if x1 < 0 || y1 < 0 {
            return;
        }
        let edge = |p: (f64, f64, f64), q: (f64, f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        for row in y0..=y1 as usize {
            let y = row as f64 + 0.5;
            for col in x0..=x1 as usize {
                let x = col as f64 + 0.5;
                let (w0, w1, w2) = (edge(b, c, x, y) / area, edge(c, a, x, y) / area, edge(a, b, x, y) / area);
                if w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12 {
                    continue;
                }
                let ray = cam.pixel_ray(col, row);
                let denom = normal.dot(&ray);
                if denom.abs() < 1e-14 * normal.norm() {
                    continue;
                }
                let t = offset / denom;
                let slot = &mut self.depth[row * n + col];
                if t > NEAR && t < *slot {
                    *slot = t;
                }
            }
        }
    }

    /// Visible when inside the image and not behind the buffered surface by
    /// more than half a pixel footprint.
    pub fn visible(&self, p: &Point3) -> bool {
        let Some((x, y, z)) = self.camera.project(p) else {
            return false;
        };
        let n = self.camera.resolution as f64;
        if !(0.0..n).contains(&x) || !(0.0..n).contains(&y) {
            return false;
        }
        z <= self.depth_at(x as usize, y as usize) + 0.5 * self.camera.footprint(z)
    }
}

/// Euclidean distance from a point to a closed triangle.
pub fn point_triangle_distance(p: &Point3, tri: [Point3; 3]) -> f64 {
    let [a, b, c] = tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}
