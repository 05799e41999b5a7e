use super::mesh::{TriangleMesh, Vec3};
use super::voxelize::cell_of_point;
use crate::error::{Error, Result};
use crate::voxelgrid::OccupancyGrid;

/// Depth value of pixels whose ray hits nothing.
pub const NO_HIT: f64 = f64::INFINITY;

/// Virtual depth camera on the -z axis at `distance` from the origin, looking
/// along +z. Image x runs right (+x), image rows run down (-y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub distance: f64,
}

impl Default for PinholeCamera {
    fn default() -> Self {
        Self::new(128, 128, 140.0, 1.8)
    }
}

impl PinholeCamera {
    /// Camera with the principal point at the image center.
    pub fn new(width: usize, height: usize, focal: f64, distance: f64) -> Self {
        Self {
            width,
            height,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            distance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Argument("camera image must be non-empty".into()));
        }
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::Argument(format!("focal length must be positive, got {}", self.focal)));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::Argument(format!(
                "camera distance must be positive, got {}",
                self.distance
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -self.distance)
    }

    /// Unit ray direction through the center of pixel (u, v).
    pub fn ray_dir(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.focal,
            (self.cy - (v as f64 + 0.5)) / self.focal,
            1.0,
        )
        .normalized()
    }

    /// Continuous pixel coordinates of a point in front of the camera.
    fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let zc = p.z + self.distance;
        if zc <= 1e-9 {
            return None;
        }
        Some((
            self.cx + self.focal * p.x / zc - 0.5,
            self.cy - self.focal * p.y / zc - 0.5,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major ray distances; [`NO_HIT`] where nothing was hit.
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![NO_HIT; width * height],
        }
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn hit_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Watertight ray/triangle intersection; returns the ray parameter of a hit in
/// front of the origin. Both triangle orientations are hit.
pub fn intersect_ray_triangle(origin: Vec3, dir: Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let d = dir.to_array();
    let kz = (0..3)
        .max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
        .unwrap_or(2);
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = d[kx] / d[kz];
    let sy = d[ky] / d[kz];
    let sz = 1.0 / d[kz];

    let rel = |p: Vec3| (p - origin).to_array();
    let (a, b, c) = (rel(tri[0]), rel(tri[1]), rel(tri[2]));
    let ax = a[kx] - sx * a[kz];
    let ay = a[ky] - sy * a[kz];
    let bx = b[kx] - sx * b[kz];
    let by = b[ky] - sy * b[kz];
    let cx = c[kx] - sx * c[kz];
    let cy = c[ky] - sy * c[kz];

    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t_scaled = u * (sz * a[kz]) + v * (sz * b[kz]) + w * (sz * c[kz]);
    if (det < 0.0 && t_scaled >= 0.0) || (det > 0.0 && t_scaled <= 0.0) {
        return None;
    }
    Some(t_scaled / det)
}

/// Renders per-pixel distance to the nearest surface of an already-posed mesh.
pub fn render_posed(mesh: &TriangleMesh, camera: &PinholeCamera) -> Result<DepthImage> {
    camera.validate()?;
    if !mesh.is_empty() && mesh.circumradius() >= camera.distance {
        return Err(Error::Argument(format!(
            "camera distance {} must exceed the mesh circumradius {}",
            camera.distance,
            mesh.circumradius()
        )));
    }
    let mut img = DepthImage::empty(camera.width, camera.height);
    let origin = camera.center();
    let (w, h) = (camera.width as i64, camera.height as i64);
    for i in 0..mesh.triangles.len() {
        let tri = mesh.triangle(i);
        // pixel footprint of the projected triangle, padded by one pixel
        let (mut u0, mut u1, mut v0, mut v1) = (0, w - 1, 0, h - 1);
        let proj: Option<Vec<(f64, f64)>> = tri.iter().map(|&p| camera.project(p)).collect();
        if let Some(proj) = proj {
            let (umin, umax) = proj.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
            let (vmin, vmax) = proj.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
            u0 = (umin.floor() as i64 - 1).max(0);
            u1 = (umax.ceil() as i64 + 1).min(w - 1);
            v0 = (vmin.floor() as i64 - 1).max(0);
            v1 = (vmax.ceil() as i64 + 1).min(h - 1);
        }
        for v in v0..=v1 {
            for u in u0..=u1 {
                let dir = camera.ray_dir(u as usize, v as usize);
                if let Some(t) = intersect_ray_triangle(origin, dir, &tri) {
                    let slot = &mut img.depth[v as usize * camera.width + u as usize];
                    if t < *slot {
                        *slot = t;
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Poses a normalized mesh and renders its depth image.
pub fn render_depth(
    mesh: &TriangleMesh,
    pose: &super::ViewPose,
    camera: &PinholeCamera,
) -> Result<DepthImage> {
    render_posed(&pose.apply(mesh), camera)
}

/// Surface point seen by pixel (u, v), if any.
pub fn back_project(depth: &DepthImage, camera: &PinholeCamera, u: usize, v: usize) -> Option<Vec3> {
    let t = depth.at(u, v);
    t.is_finite()
        .then(|| camera.center() + camera.ray_dir(u, v) * t)
}

/// Marks the voxels containing the back-projected surface points of every hit
/// pixel. Points outside [-0.5, 0.5]^3 are discarded.
///
/// The camera observes the posed object in its own frame, so the grid is
/// aligned with `voxelize_surface` of the same pose.
pub fn depth_to_partial_grid(
    depth: &DepthImage,
    camera: &PinholeCamera,
    resolution: usize,
) -> Result<OccupancyGrid> {
    if resolution < 4 {
        return Err(Error::Argument(format!("resolution must be at least 4, got {resolution}")));
    }
    if depth.width != camera.width || depth.height != camera.height {
        return Err(Error::Shape(format!(
            "depth image {}x{} does not match camera {}x{}",
            depth.width, depth.height, camera.width, camera.height
        )));
    }
    let mut grid = OccupancyGrid::cubic(resolution);
    for v in 0..depth.height {
        for u in 0..depth.width {
            if let Some(p) = back_project(depth, camera, u, v) {
                if let Some([x, y, z]) = cell_of_point(p, resolution) {
                    grid.set_occupied(x, y, z, true);
                }
            }
        }
    }
    Ok(grid)
}
