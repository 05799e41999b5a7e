use std::fmt::Write as _;
use std::fs;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        self * (1.0 / self.norm())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn min(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Indexed triangle soup.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::Argument(format!(
                "triangle {t:?} references a vertex beyond {n}"
            )));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Axis-aligned bounds of the referenced vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    /// Largest vertex distance from the origin.
    pub fn circumradius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Drops zero-area triangles.
    pub fn without_degenerate(mut self) -> Self {
        let verts = &self.vertices;
        self.triangles.retain(|t| {
            let [a, b, c] = t.map(|i| verts[i as usize]);
            (b - a).cross(c - a).norm() > 1e-12
        });
        self
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}

/// Centers the mesh's bounding box on the origin and scales its longest edge to 1.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh> {
    if mesh.triangles.is_empty() {
        return Err(Error::EmptyGeometry("mesh has no triangles".into()));
    }
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| Error::EmptyGeometry("mesh has no vertices".into()))?;
    let ext = hi - lo;
    let longest = ext.x.max(ext.y).max(ext.z);
    if !(longest.is_finite() && longest > 0.0) {
        return Err(Error::EmptyGeometry("mesh has zero extent".into()));
    }
    let center = (lo + hi) * 0.5;
    let scale = 1.0 / longest;
    let out = mesh.transformed(|v| (v - center) * scale).without_degenerate();
    if out.triangles.is_empty() {
        return Err(Error::EmptyGeometry("all triangles are degenerate".into()));
    }
    Ok(out)
}

/// Parses the `v`/`f` subset of Wavefront OBJ. Polygons are fan-triangulated;
/// negative (relative) indices and `v/vt/vn` references are accepted.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let err = |line: usize, message: String| Error::MeshParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(line_no, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(line_no, "vertex needs three finite coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for p in parts {
                    let first = p.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|e| err(line_no, format!("bad face index {p:?}: {e}")))?;
                    let n = vertices.len() as i64;
                    let abs = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || abs < 0 || abs >= n {
                        return Err(err(line_no, format!("face index {i} out of range")));
                    }
                    idx.push(abs as u32);
                }
                if idx.len() < 3 {
                    return Err(err(line_no, "face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, mesh.to_obj()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshscan::procedural::cuboid;

    fn approx(a: Vec3, b: Vec3) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn unit_cube_is_a_fixed_point() {
        let cube = cuboid(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5));
        let n = normalize_mesh(&cube).unwrap();
        assert!(n.vertices.iter().zip(&cube.vertices).all(|(a, b)| approx(*a, *b)));
    }

    #[test]
    fn shifted_cube_is_recentered() {
        let cube = cuboid(Vec3::ZERO, Vec3::new(2.0, 2.0, 2.0));
        let n = normalize_mesh(&cube).unwrap();
        let (lo, hi) = n.bounds().unwrap();
        assert!(approx(lo, Vec3::new(-0.5, -0.5, -0.5)));
        assert!(approx(hi, Vec3::new(0.5, 0.5, 0.5)));
    }

    #[test]
    fn longest_edge_becomes_one() {
        let boxm = cuboid(Vec3::ZERO, Vec3::new(2.0, 1.0, 1.0));
        let n = normalize_mesh(&boxm).unwrap();
        let (lo, hi) = n.bounds().unwrap();
        assert_eq!(hi.x - lo.x, 1.0);
        assert!(((hi.y - lo.y) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        assert!(matches!(
            normalize_mesh(&TriangleMesh::default()),
            Err(Error::EmptyGeometry(_))
        ));
    }

    #[test]
    fn obj_fan_triangulation_and_relative_indices() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\nf -4 -3 -2\n";
        let m = parse_obj(text, Path::new("quad.obj")).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }

    #[test]
    fn obj_errors_name_the_line() {
        let e = parse_obj("v 0 0 0\nf 1 2 3\n", Path::new("bad.obj")).unwrap_err();
        assert!(matches!(e, Error::MeshParse { line: 2, .. }));
        let e = parse_obj("v 0 x 0\n", Path::new("bad.obj")).unwrap_err();
        assert!(matches!(e, Error::MeshParse { line: 1, .. }));
    }

    #[test]
    fn obj_round_trip() {
        let cube = cuboid(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0));
        let back = parse_obj(&cube.to_obj(), Path::new("c.obj")).unwrap();
        assert_eq!(back, cube);
    }
}
