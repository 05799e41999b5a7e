use std::collections::VecDeque;

use super::mesh::{TriangleMesh, Vec3};
use super::pose::ViewPose;
use crate::error::{Error, Result};
use crate::voxelgrid::{GridKind, OccupancyGrid};

/// Triangle sampling pitch in voxel edges.
pub const SAMPLE_PITCH: f64 = 0.4;

/// Coordinates within this distance outside the grid domain are snapped onto it.
const DOMAIN_TOL: f64 = 1e-9;

/// Voxel index along one axis: `floor((c + 0.5) * n)`, with `c = 0.5` mapped
/// to `n - 1`. `None` outside [-0.5, 0.5].
#[inline]
pub fn cell_index(c: f64, n: usize) -> Option<usize> {
    if !(-0.5 - DOMAIN_TOL..=0.5 + DOMAIN_TOL).contains(&c) {
        return None;
    }
    let i = ((c + 0.5) * n as f64).floor();
    Some((i.max(0.0) as usize).min(n - 1))
}

#[inline]
pub fn cell_of_point(p: Vec3, n: usize) -> Option<[usize; 3]> {
    Some([cell_index(p.x, n)?, cell_index(p.y, n)?, cell_index(p.z, n)?])
}

/// Marks every voxel containing a sample of the posed mesh surface.
///
/// Each triangle is sampled on a barycentric lattice whose spacing along every
/// edge is at most [`SAMPLE_PITCH`] voxels, so any point of the triangle lies
/// within `0.4 / sqrt(3)` voxels of a sample. Every voxel that the triangle
/// enters by more than a quarter voxel is therefore marked, and every marked
/// voxel touches the triangle.
pub fn voxelize_surface(mesh: &TriangleMesh, pose: &ViewPose, resolution: usize) -> Result<OccupancyGrid> {
    if resolution == 0 {
        return Err(Error::Argument("resolution must be positive".into()));
    }
    let posed = pose.apply(mesh);
    let mut grid = OccupancyGrid::cubic(resolution);
    let voxel = 1.0 / resolution as f64;
    for i in 0..posed.triangles.len() {
        let [a, b, c] = posed.triangle(i);
        let longest = (b - a).norm().max((c - a).norm()).max((c - b).norm());
        let steps = ((longest / voxel / SAMPLE_PITCH).ceil() as usize).max(1);
        let inv = 1.0 / steps as f64;
        let (ab, ac) = (b - a, c - a);
        for s in 0..=steps {
            for t in 0..=steps - s {
                let p = a + ab * (s as f64 * inv) + ac * (t as f64 * inv);
                if let Some([x, y, z]) = cell_of_point(p, resolution) {
                    grid.set_occupied(x, y, z, true);
                }
            }
        }
    }
    Ok(grid)
}

/// Fills enclosed cavities: everything not reachable from the grid boundary
/// through empty voxels (6-connectivity) becomes occupied.
pub fn fill_solid(surface: &OccupancyGrid) -> Result<OccupancyGrid> {
    if surface.kind() != GridKind::Binary {
        return Err(Error::InvalidKind {
            expected: "binary",
            found: surface.kind().name(),
        });
    }
    let [nx, ny, nz] = surface.dims();
    let occ = surface.mask();
    let mut exterior = vec![false; occ.len()];
    let mut queue = VecDeque::new();
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let border = x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1;
                let i = idx(x, y, z);
                if border && !occ[i] {
                    exterior[i] = true;
                    queue.push_back([x, y, z]);
                }
            }
        }
    }
    while let Some([x, y, z]) = queue.pop_front() {
        let mut visit = |x: usize, y: usize, z: usize| {
            let i = idx(x, y, z);
            if !occ[i] && !exterior[i] {
                exterior[i] = true;
                queue.push_back([x, y, z]);
            }
        };
        if x > 0 {
            visit(x - 1, y, z);
        }
        if x + 1 < nx {
            visit(x + 1, y, z);
        }
        if y > 0 {
            visit(x, y - 1, z);
        }
        if y + 1 < ny {
            visit(x, y + 1, z);
        }
        if z > 0 {
            visit(x, y, z - 1);
        }
        if z + 1 < nz {
            visit(x, y, z + 1);
        }
    }
    let solid: Vec<bool> = exterior.iter().map(|&e| !e).collect();
    OccupancyGrid::from_mask(surface.dims(), &solid)
}
