use std::collections::HashMap;

use super::mesh::{TriangleMesh, Vec3};
use crate::error::Result;
use crate::voxelgrid::{threshold, GridKind, OccupancyGrid};

/// Offsets of the six face neighbours and the corner cycle of each face,
/// wound counter-clockwise seen from outside.
const FACES: [([isize; 3], [[usize; 3]; 4]); 6] = [
    ([-1, 0, 0], [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]),
    ([1, 0, 0], [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]]),
    ([0, -1, 0], [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]]),
    ([0, 1, 0], [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]]),
    ([0, 0, -1], [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]]),
    ([0, 0, 1], [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
];

/// Unit cubes for every occupied voxel, in voxel units, with faces shared by
/// two occupied voxels removed and vertices deduplicated. Probability grids
/// are thresholded strictly above `p`; binary grids are used as they are.
pub fn voxels_to_mesh(grid: &OccupancyGrid, p: f64) -> Result<TriangleMesh> {
    let g = match grid.kind() {
        GridKind::Binary => grid.clone(),
        GridKind::Probability => threshold(grid, p)?,
    };
    let d = g.dims();
    let occ = |x: isize, y: isize, z: isize| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < d[0]
            && (y as usize) < d[1]
            && (z as usize) < d[2]
            && g.occupied(x as usize, y as usize, z as usize)
    };
    let mut index: HashMap<[usize; 3], u32> = HashMap::new();
    let mut mesh = TriangleMesh::default();
    for [x, y, z] in g.occupied_voxels() {
        for (off, corners) in FACES {
            if occ(x as isize + off[0], y as isize + off[1], z as isize + off[2]) {
                continue;
            }
            let ids = corners.map(|c| {
                let key = [x + c[0], y + c[1], z + c[2]];
                *index.entry(key).or_insert_with(|| {
                    mesh.vertices.push(Vec3::new(key[0] as f64, key[1] as f64, key[2] as f64));
                    mesh.vertices.len() as u32 - 1
                })
            });
            mesh.triangles.push([ids[0], ids[1], ids[2]]);
            mesh.triangles.push([ids[0], ids[2], ids[3]]);
        }
    }
    Ok(mesh)
}
