use std::f64::consts::TAU;

use super::mesh::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Object orientation for one virtual scan, in radians.
///
/// The object is rotated about the grid origin by `Rz(yaw) * Ry(pitch) * Rx(roll)`,
/// i.e. roll about the object's own x axis is applied first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ViewPose {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl ViewPose {
    pub const IDENTITY: ViewPose = ViewPose {
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
    };

    /// Wraps each angle into [0, 2π).
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        let wrap = |a: f64| {
            let w = a.rem_euclid(TAU);
            if w >= TAU {
                0.0
            } else {
                w
            }
        };
        Self {
            roll: wrap(roll),
            pitch: wrap(pitch),
            yaw: wrap(yaw),
        }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let (sr, cr) = sin_cos(self.roll);
        let (sp, cp) = sin_cos(self.pitch);
        let (sy, cy) = sin_cos(self.yaw);
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    }

    pub fn apply(&self, mesh: &TriangleMesh) -> TriangleMesh {
        let r = self.rotation();
        mesh.transformed(|v| rotate(&r, v))
    }
}

/// `sin_cos` with exact values at multiples of π/2 so lattice-aligned poses
/// map axis-aligned geometry exactly.
fn sin_cos(a: f64) -> (f64, f64) {
    let q = a / std::f64::consts::FRAC_PI_2;
    if (q - q.round()).abs() < 1e-12 {
        match (q.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        a.sin_cos()
    }
}

pub fn rotate(r: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    Vec3::new(
        r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
        r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
        r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
    )
}

/// Cartesian product of `n` evenly spaced angles over [0, 2π) per axis,
/// ordered roll-major, then pitch, then yaw.
pub fn make_view_poses(n_per_axis: usize) -> Result<Vec<ViewPose>> {
    if n_per_axis < 1 {
        return Err(Error::Argument("views per axis must be at least 1".into()));
    }
    let angle = |k: usize| TAU * k as f64 / n_per_axis as f64;
    let mut poses = Vec::with_capacity(n_per_axis.pow(3));
    for r in 0..n_per_axis {
        for p in 0..n_per_axis {
            for y in 0..n_per_axis {
                poses.push(ViewPose {
                    roll: angle(r),
                    pitch: angle(p),
                    yaw: angle(y),
                });
            }
        }
    }
    Ok(poses)
}
