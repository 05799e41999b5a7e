//! Cuboid-assembly furniture meshes used as a hermetic test corpus.
//!
//! All kinds are built with y up; legs stand on y = 0.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::mesh::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProceduralKind {
    Box,
    Table,
    Chair,
    Stool,
}

impl ProceduralKind {
    pub const ALL: [ProceduralKind; 4] = [
        ProceduralKind::Box,
        ProceduralKind::Table,
        ProceduralKind::Chair,
        ProceduralKind::Stool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProceduralKind::Box => "box",
            ProceduralKind::Table => "table",
            ProceduralKind::Chair => "chair",
            ProceduralKind::Stool => "stool",
        }
    }
}

impl fmt::Display for ProceduralKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProceduralKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProceduralKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown procedural kind {s:?}")))
    }
}

/// Dimensions of a furniture piece. `width` runs along x, `depth` along z.
///
/// For a box only width/depth/height are used. `back_height` applies to chairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProceduralParams {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub slab: f64,
    pub leg: f64,
    pub back_height: f64,
}

impl ProceduralParams {
    pub fn default_for(kind: ProceduralKind) -> Self {
        match kind {
            ProceduralKind::Box => Self {
                width: 1.0,
                depth: 1.0,
                height: 1.0,
                slab: 0.0,
                leg: 0.0,
                back_height: 0.0,
            },
            ProceduralKind::Table => Self {
                width: 1.6,
                depth: 1.0,
                height: 0.9,
                slab: 0.08,
                leg: 0.1,
                back_height: 0.0,
            },
            ProceduralKind::Chair => Self {
                width: 0.8,
                depth: 0.8,
                height: 0.7,
                slab: 0.1,
                leg: 0.1,
                back_height: 0.8,
            },
            ProceduralKind::Stool => Self {
                width: 0.6,
                depth: 0.6,
                height: 0.8,
                slab: 0.1,
                leg: 0.08,
                back_height: 0.0,
            },
        }
    }

    /// Draws a random variation of the defaults, each dimension scaled by a
    /// factor in [0.7, 1.3].
    pub fn sample<R: Rng + ?Sized>(kind: ProceduralKind, rng: &mut R) -> Self {
        let d = Self::default_for(kind);
        let mut j = |v: f64| v * rng.gen_range(0.7..1.3);
        Self {
            width: j(d.width),
            depth: j(d.depth),
            height: j(d.height),
            slab: j(d.slab),
            leg: j(d.leg),
            back_height: j(d.back_height),
        }
    }
}

/// Axis-aligned cuboid: 8 vertices, 12 outward-facing triangles.
pub fn cuboid(lo: Vec3, hi: Vec3) -> TriangleMesh {
    let v = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    // bit order: x = 1, y = 2, z = 4
    let vertices = (0..8u32)
        .map(|i| v(i & 1 != 0, i & 2 != 0, i & 4 != 0))
        .collect();
    let quads: [[u32; 4]; 6] = [
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh {
        vertices,
        triangles,
    }
}

fn check_positive(kind: ProceduralKind, p: &ProceduralParams) -> Result<()> {
    let mut fields = vec![("width", p.width), ("depth", p.depth), ("height", p.height)];
    if kind != ProceduralKind::Box {
        fields.push(("slab", p.slab));
        fields.push(("leg", p.leg));
    }
    if kind == ProceduralKind::Chair {
        fields.push(("back_height", p.back_height));
    }
    for (name, v) in fields {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Argument(format!("{kind} {name} must be positive, got {v}")));
        }
    }
    if kind != ProceduralKind::Box && (2.0 * p.leg >= p.width.min(p.depth) || p.slab >= p.height) {
        return Err(Error::Argument(format!(
            "{kind} legs/slab do not fit inside the footprint"
        )));
    }
    Ok(())
}

fn legs(p: &ProceduralParams, top: f64, out: &mut TriangleMesh) {
    let (w, d, l) = (p.width / 2.0, p.depth / 2.0, p.leg);
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let x0 = if sx < 0.0 { -w } else { w - l };
        let z0 = if sz < 0.0 { -d } else { d - l };
        out.append(&cuboid(Vec3::new(x0, 0.0, z0), Vec3::new(x0 + l, top, z0 + l)));
    }
}

/// Builds a furniture mesh (object units, not normalized).
pub fn make_procedural_mesh(kind: ProceduralKind, params: &ProceduralParams) -> Result<TriangleMesh> {
    check_positive(kind, params)?;
    let p = params;
    let (w, d) = (p.width / 2.0, p.depth / 2.0);
    let mut mesh = TriangleMesh::default();
    match kind {
        ProceduralKind::Box => {
            mesh = cuboid(Vec3::new(-w, 0.0, -d), Vec3::new(w, p.height, d));
        }
        ProceduralKind::Table | ProceduralKind::Stool => {
            let top = p.height - p.slab;
            mesh.append(&cuboid(Vec3::new(-w, top, -d), Vec3::new(w, p.height, d)));
            legs(p, top, &mut mesh);
        }
        ProceduralKind::Chair => {
            let top = p.height - p.slab;
            mesh.append(&cuboid(Vec3::new(-w, top, -d), Vec3::new(w, p.height, d)));
            // backrest on the +z edge of the seat
            mesh.append(&cuboid(
                Vec3::new(-w, p.height, d - p.slab),
                Vec3::new(w, p.height + p.back_height, d),
            ));
            legs(p, top, &mut mesh);
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangle_counts() {
        let count = |k: ProceduralKind| {
            make_procedural_mesh(k, &ProceduralParams::default_for(k))
                .unwrap()
                .triangles
                .len()
        };
        assert_eq!(count(ProceduralKind::Box), 12);
        assert_eq!(count(ProceduralKind::Chair), 72);
        assert_eq!(count(ProceduralKind::Stool), 60);
        assert_eq!(count(ProceduralKind::Table), 60);
    }

    #[test]
    fn unit_box_topology() {
        let p = ProceduralParams {
            width: 1.0,
            depth: 1.0,
            height: 1.0,
            ..ProceduralParams::default_for(ProceduralKind::Box)
        };
        let m = make_procedural_mesh(ProceduralKind::Box, &p).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
    }

    #[test]
    fn cuboid_faces_point_outward() {
        let m = cuboid(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        for i in 0..m.triangles.len() {
            let [a, b, c] = m.triangle(i);
            let n = (b - a).cross(c - a);
            let centroid = (a + b + c) * (1.0 / 3.0);
            assert!(n.dot(centroid) > 0.0, "triangle {i} faces inward");
        }
    }

    #[test]
    fn rejects_non_positive_dimensions() {
        let mut p = ProceduralParams::default_for(ProceduralKind::Chair);
        p.width = 0.0;
        assert!(make_procedural_mesh(ProceduralKind::Chair, &p).is_err());
        let mut p = ProceduralParams::default_for(ProceduralKind::Stool);
        p.leg = -0.1;
        assert!(make_procedural_mesh(ProceduralKind::Stool, &p).is_err());
    }

    #[test]
    fn deterministic_given_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ProceduralParams::sample(ProceduralKind::Chair, &mut rng);
        let a = make_procedural_mesh(ProceduralKind::Chair, &p).unwrap();
        let b = make_procedural_mesh(ProceduralKind::Chair, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kind_names_parse() {
        for k in ProceduralKind::ALL {
            assert_eq!(k.name().parse::<ProceduralKind>().unwrap(), k);
        }
        assert!("sofa".parse::<ProceduralKind>().is_err());
    }
}
