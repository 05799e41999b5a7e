//! Geometry for virtual scanning: meshes, poses, depth rendering,
//! back-projection to partial grids, surface voxelization and voxel export.

mod camera;
mod export;
mod mesh;
mod pose;
mod procedural;
mod voxelize;

pub use camera::{
    back_project, depth_to_partial_grid, intersect_ray_triangle, render_depth, render_posed, DepthImage,
    PinholeCamera, NO_HIT,
};
pub use export::voxels_to_mesh;
pub use mesh::{load_obj, normalize_mesh, parse_obj, save_obj, TriangleMesh, Vec3};
pub use pose::{make_view_poses, rotate, ViewPose};
pub use procedural::{cuboid, make_procedural_mesh, ProceduralKind, ProceduralParams};
pub use voxelize::{cell_index, cell_of_point, fill_solid, voxelize_surface, SAMPLE_PITCH};
