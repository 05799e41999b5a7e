//! Occupancy grids, thresholding, and the IoU / cross-entropy metrics.
//!
//! Voxels are linearized z-major with x fastest: `index = x + nx * (y + ny * z)`.

mod io;

pub use io::{load_grid, read_grid, save_grid, write_grid, ENCODING_BITS, ENCODING_F32, MAGIC, VERSION};

use crate::error::{Error, Result};

/// Default probability clamp used before taking logarithms.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-7;

/// Default voxelization threshold for IoU.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    Binary,
    Probability,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Binary => "binary",
            GridKind::Probability => "probability",
        }
    }
}

/// A dense voxel grid of binary occupancy or occupancy probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    dims: [usize; 3],
    values: Vec<f32>,
    kind: GridKind,
}

impl OccupancyGrid {
    pub fn empty(dims: [usize; 3]) -> Self {
        let len = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; len],
            kind: GridKind::Binary,
        }
    }

    pub fn cubic(n: usize) -> Self {
        Self::empty([n, n, n])
    }

    pub fn filled(dims: [usize; 3], value: f32, kind: GridKind) -> Result<Self> {
        Self::from_values(dims, vec![value; dims.iter().product()], kind)
    }

    /// Builds a grid after validating dims, buffer length, and the value domain of `kind`.
    pub fn from_values(dims: [usize; 3], values: Vec<f32>, kind: GridKind) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("grid dims must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if values.len() != len {
            return Err(Error::Shape(format!(
                "buffer holds {} values but dims {:?} need {}",
                values.len(),
                dims,
                len
            )));
        }
        let ok = match kind {
            GridKind::Binary => values.iter().all(|&v| v == 0.0 || v == 1.0),
            GridKind::Probability => values.iter().all(|&v| (0.0..=1.0).contains(&v)),
        };
        if !ok {
            return Err(Error::InvalidValue(format!(
                "values out of domain for a {} grid",
                kind.name()
            )));
        }
        Ok(Self { dims, values, kind })
    }

    /// Builds a binary grid from a boolean mask.
    pub fn from_mask(dims: [usize; 3], mask: &[bool]) -> Result<Self> {
        let values = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::from_values(dims, values, GridKind::Binary)
    }

    /// Reinterprets a binary grid as probabilities 0/1.
    pub fn as_probability(&self) -> Self {
        Self {
            dims: self.dims,
            values: self.values.clone(),
            kind: GridKind::Probability,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.index(x, y, z)]
    }

    /// True for a binary voxel equal to 1. Probability grids report `value > 0.5`.
    #[inline]
    pub fn occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.get(x, y, z) > 0.5
    }

    /// Marks a voxel of a binary grid.
    pub fn set_occupied(&mut self, x: usize, y: usize, z: usize, occupied: bool) {
        debug_assert_eq!(self.kind, GridKind::Binary);
        let i = self.index(x, y, z);
        self.values[i] = if occupied { 1.0 } else { 0.0 };
    }

    pub fn occupied_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.5).count()
    }

    /// Occupied voxel coordinates in linearization order.
    pub fn occupied_voxels(&self) -> Vec<[usize; 3]> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| self.coords(i))
            .collect()
    }

    /// Binary mask (`true` where occupied) for binary grids.
    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.5).collect()
    }

    fn expect_kind(&self, kind: GridKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidKind {
                expected: kind.name(),
                found: self.kind.name(),
            });
        }
        Ok(())
    }

    fn expect_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "grid dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// True if every occupied voxel of `self` is occupied in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| a <= 0.5 || b > 0.5)
    }
}

/// Binarizes a probability grid: a voxel is occupied iff its value is strictly above `p`.
pub fn threshold(grid: &OccupancyGrid, p: f64) -> Result<OccupancyGrid> {
    grid.expect_kind(GridKind::Probability)?;
    let values = grid
        .values
        .iter()
        .map(|&v| if f64::from(v) > p { 1.0 } else { 0.0 })
        .collect();
    Ok(OccupancyGrid {
        dims: grid.dims,
        values,
        kind: GridKind::Binary,
    })
}

/// Intersection over union between a thresholded prediction and a binary target.
///
/// Both sets empty counts as perfect agreement and yields 1.
pub fn iou(pred: &OccupancyGrid, target: &OccupancyGrid, p: f64) -> Result<f64> {
    pred.expect_same_dims(target)?;
    target.expect_kind(GridKind::Binary)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.values.iter().zip(&target.values) {
        let a = f64::from(a) > p;
        let b = b > 0.5;
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean per-voxel negated log-likelihood of `target` under `pred`, with
/// probabilities clamped to `[eps, 1 - eps]`.
pub fn cross_entropy(pred: &OccupancyGrid, target: &OccupancyGrid, eps: f64) -> Result<f64> {
    pred.expect_same_dims(target)?;
    target.expect_kind(GridKind::Binary)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Argument(format!("clamp eps must lie in (0, 0.5), got {eps}")));
    }
    let mut total = 0.0f64;
    for (&q, &y) in pred.values.iter().zip(&target.values) {
        let q = f64::from(q).clamp(eps, 1.0 - eps);
        total -= if y > 0.5 { q.ln() } else { (1.0 - q).ln() };
    }
    Ok(total / pred.len() as f64)
}

/// IoU and CE of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub iou: f64,
    pub ce: f64,
    pub voxel_count: usize,
}

impl MetricReport {
    pub fn compute(pred: &OccupancyGrid, target: &OccupancyGrid, p: f64, eps: f64) -> Result<Self> {
        Ok(Self {
            iou: iou(pred, target, p)?,
            ce: cross_entropy(pred, target, eps)?,
            voxel_count: pred.len(),
        })
    }
}

/// Grows the occupied set by a Chebyshev radius.
pub fn dilate(grid: &OccupancyGrid, radius: usize) -> Result<OccupancyGrid> {
    grid.expect_kind(GridKind::Binary)?;
    if radius == 0 {
        return Ok(grid.clone());
    }
    let [nx, ny, nz] = grid.dims;
    // Separable: a Chebyshev ball is the product of three 1D intervals.
    let mut cur = grid.mask();
    for axis in 0..3 {
        let mut next = vec![false; cur.len()];
        let n = grid.dims[axis];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let c = [x, y, z];
                    let lo = c[axis].saturating_sub(radius);
                    let hi = (c[axis] + radius).min(n - 1);
                    let hit = (lo..=hi).any(|k| {
                        let mut q = c;
                        q[axis] = k;
                        cur[q[0] + nx * (q[1] + ny * q[2])]
                    });
                    next[x + nx * (y + ny * z)] = hit;
                }
            }
        }
        cur = next;
    }
    OccupancyGrid::from_mask(grid.dims, &cur)
}
