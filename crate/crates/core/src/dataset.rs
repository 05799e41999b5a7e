//! Paired partial/complete grid synthesis, the on-disk manifest, and batching.
//!
//! Layout under the output directory:
//!
//! ```text
//! <out>/manifest.txt
//! <out>/<category>/<model_id>/<view_index>.partial.vxg
//! <out>/<category>/<model_id>/<view_index>.full.vxg
//! ```
//!
//! The manifest is tab-separated text. Header lines are `key<TAB>value`
//! (`format`, `resolution`, `split`, `config_digest`, `records`), followed by
//! the column line and one record per pair:
//! `category, model_id, view_index, roll, pitch, yaw, partial, full`,
//! with paths relative to the manifest directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::meshscan::{
    depth_to_partial_grid, fill_solid, load_obj, make_view_poses, normalize_mesh, render_depth, voxelize_surface,
    PinholeCamera, TriangleMesh, ViewPose,
};
use crate::nnarch::grids_to_tensor;
use crate::voxelgrid::{dilate, load_grid, save_grid, OccupancyGrid};

pub const MANIFEST_NAME: &str = "manifest.txt";
const MANIFEST_FORMAT: &str = "recgan-manifest-1";
const COLUMNS: &str = "category\tmodel_id\tview_index\troll\tpitch\tyaw\tpartial\tfull";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Argument(format!("unknown split '{s}' (expected train or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub resolution: usize,
    pub n_per_axis: usize,
    pub camera: PinholeCamera,
    /// Fill enclosed interiors of the ground truth.
    pub solid: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            resolution: 16,
            n_per_axis: 5,
            camera: PinholeCamera::default(),
            solid: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 {
            return Err(Error::Argument(format!("resolution must be at least 4, got {}", self.resolution)));
        }
        if self.n_per_axis < 1 {
            return Err(Error::Argument("views per axis must be at least 1".into()));
        }
        self.camera.validate()
    }

    /// SHA-256 of the canonical text form of the configuration and split.
    pub fn digest(&self, split: Split) -> String {
        let c = &self.camera;
        let text = format!(
            "resolution={};n_per_axis={};camera={},{},{},{},{},{};solid={};split={split}",
            self.resolution, self.n_per_axis, c.width, c.height, c.focal, c.cx, c.cy, c.distance, self.solid
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Where a model's geometry comes from.
#[derive(Debug, Clone)]
pub enum MeshInput {
    File(PathBuf),
    Mesh(TriangleMesh),
}

#[derive(Debug, Clone)]
pub struct MeshSource {
    pub category: String,
    pub model_id: String,
    pub input: MeshInput,
}

impl MeshSource {
    fn load(&self) -> Result<TriangleMesh> {
        let mesh = match &self.input {
            MeshInput::File(p) => load_obj(p)?,
            MeshInput::Mesh(m) => m.clone(),
        };
        normalize_mesh(&mesh)
    }
}

/// Finds `.obj` files: `<dir>/<category>/<model>.obj`, or `<dir>/<model>.obj`
/// (category `uncategorized`). Sorted by category then model id.
pub fn discover_meshes(dir: &Path) -> Result<Vec<MeshSource>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("mesh directory {} does not exist", dir.display())));
    }
    let mut out = Vec::new();
    let mut push_objs = |category: &str, d: &Path| -> Result<()> {
        for entry in fs::read_dir(d).map_err(|e| Error::io(d, e))? {
            let path = entry.map_err(|e| Error::io(d, e))?.path();
            let is_obj = path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("obj"));
            if path.is_file() && is_obj == Some(true) {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
                out.push(MeshSource {
                    category: category.to_string(),
                    model_id: stem,
                    input: MeshInput::File(path),
                });
            }
        }
        Ok(())
    };
    push_objs("uncategorized", dir)?;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            let cat = path.file_name().and_then(|s| s.to_str()).unwrap_or("uncategorized").to_string();
            push_objs(&cat, &path)?;
        }
    }
    out.sort_by(|a, b| (&a.category, &a.model_id).cmp(&(&b.category, &b.model_id)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub category: String,
    pub model_id: String,
    pub view_index: usize,
    pub pose: ViewPose,
    /// Relative to the manifest directory.
    pub partial_path: PathBuf,
    pub full_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub resolution: usize,
    pub split: Split,
    pub config_digest: String,
    pub records: Vec<SamplePair>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn categories(&self) -> Vec<String> {
        let mut c: Vec<String> = self.records.iter().map(|r| r.category.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Records restricted to `categories`, keeping order.
    pub fn filter_categories(&self, categories: &[String]) -> Manifest {
        let mut m = self.clone();
        m.records.retain(|r| categories.contains(&r.category));
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "format\t{MANIFEST_FORMAT}\nresolution\t{}\nsplit\t{}\nconfig_digest\t{}\nrecords\t{}\n{COLUMNS}\n",
            self.resolution,
            self.split,
            self.config_digest,
            self.records.len()
        );
        for r in &self.records {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.category,
                r.model_id,
                r.view_index,
                r.pose.roll,
                r.pose.pitch,
                r.pose.yaw,
                path_text(&r.partial_path),
                path_text(&r.full_path)
            ));
        }
        s
    }

    pub fn parse(text: &str, root: &Path) -> Result<Manifest> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<String> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::Dataset(format!("manifest truncated before '{key}'")))?;
            match line.split_once('\t') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(Error::Dataset(format!("manifest line {}: expected '{key}' header", i + 1))),
            }
        };
        let format = header("format")?;
        if format != MANIFEST_FORMAT {
            return Err(Error::Dataset(format!("unsupported manifest format '{format}'")));
        }
        let bad = |what: &str, v: &str| Error::Dataset(format!("manifest: invalid {what} '{v}'"));
        let res_text = header("resolution")?;
        let resolution: usize = res_text.parse().map_err(|_| bad("resolution", &res_text))?;
        let split: Split = header("split")?.parse()?;
        let config_digest = header("config_digest")?;
        let count_text = header("records")?;
        let count: usize = count_text.parse().map_err(|_| bad("record count", &count_text))?;
        match lines.next() {
            Some((_, l)) if l == COLUMNS => {}
            _ => return Err(Error::Dataset("manifest: missing column line".into())),
        }
        let mut records = Vec::with_capacity(count);
        let mut keys = HashSet::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(Error::Dataset(format!("manifest line {}: expected 8 fields, found {}", i + 1, f.len())));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Dataset(format!("manifest line {}: bad {what} '{s}'", i + 1)))
            };
            let view_index: usize = f[2]
                .parse()
                .map_err(|_| Error::Dataset(format!("manifest line {}: bad view index '{}'", i + 1, f[2])))?;
            if !keys.insert((f[1].to_string(), view_index)) {
                return Err(Error::Dataset(format!(
                    "manifest line {}: duplicate record for model {} view {view_index}",
                    i + 1,
                    f[1]
                )));
            }
            records.push(SamplePair {
                category: f[0].to_string(),
                model_id: f[1].to_string(),
                view_index,
                pose: ViewPose {
                    roll: num(f[3], "roll")?,
                    pitch: num(f[4], "pitch")?,
                    yaw: num(f[5], "yaw")?,
                },
                partial_path: PathBuf::from(f[6]),
                full_path: PathBuf::from(f[7]),
            });
        }
        if records.len() != count {
            return Err(Error::Dataset(format!(
                "manifest declares {count} records but contains {}",
                records.len()
            )));
        }
        Ok(Manifest {
            resolution,
            split,
            config_digest,
            records,
            root: root.to_path_buf(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Reads `path`, or `path/manifest.txt` when `path` is a directory.
    pub fn read(path: &Path) -> Result<Manifest> {
        let file = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&text, &root)
    }

    /// SHA-256 of the manifest text.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn partial_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.records[i].partial_path)
    }

    pub fn full_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.records[i].full_path)
    }
}

fn path_text(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Result of a synthesis run.
#[derive(Debug, Clone)]
pub struct SynthReport {
    pub manifest: Manifest,
    /// `(model_id, message)` for models that were skipped.
    pub failures: Vec<(String, String)>,
    /// Partial voxels outside the dilated ground truth, summed over all pairs.
    pub containment_violations: usize,
    pub partial_voxels: usize,
}

/// Grids for one (mesh, pose) pair.
pub fn synthesize_pair(mesh: &TriangleMesh, pose: &ViewPose, config: &SynthConfig) -> Result<(OccupancyGrid, OccupancyGrid)> {
    let surface = voxelize_surface(mesh, pose, config.resolution)?;
    let full = if config.solid { fill_solid(&surface)? } else { surface };
    let depth = render_depth(mesh, pose, &config.camera)?;
    let partial = depth_to_partial_grid(&depth, &config.camera, config.resolution)?;
    Ok((partial, full))
}

/// Number of partial voxels outside `dilate(full, 1)`.
pub fn containment_violations(partial: &OccupancyGrid, full: &OccupancyGrid) -> Result<usize> {
    let d = dilate(full, 1)?;
    Ok(partial.mask().iter().zip(d.mask()).filter(|(p, f)| **p && !*f).count())
}

/// Scans every mesh from `n_per_axis^3` poses and writes the paired grids and
/// the manifest under `out_dir`.
///
/// Models that fail to load or scan are logged and skipped; the run fails only
/// if no model succeeds.
pub fn synthesize_dataset(meshes: &[MeshSource], split: Split, config: &SynthConfig, out_dir: &Path) -> Result<SynthReport> {
    config.validate()?;
    if meshes.is_empty() {
        return Err(Error::Dataset("no meshes to synthesize".into()));
    }
    let mut ids = HashSet::new();
    for m in meshes {
        if !ids.insert(&m.model_id) {
            return Err(Error::Dataset(format!("duplicate model id '{}'", m.model_id)));
        }
        for part in [&m.category, &m.model_id] {
            if part.is_empty() || part.contains(['/', '\\', '\t', '\n']) || part == "." || part == ".." {
                return Err(Error::Dataset(format!("invalid category or model id '{part}'")));
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let poses = make_view_poses(config.n_per_axis)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let (mut violations, mut partial_voxels) = (0, 0);
    for source in meshes {
        let result = (|| -> Result<(Vec<SamplePair>, usize, usize)> {
            let mesh = source.load()?;
            let rel_dir = PathBuf::from(&source.category).join(&source.model_id);
            let dir = out_dir.join(&rel_dir);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut recs = Vec::with_capacity(poses.len());
            let (mut bad, mut total) = (0, 0);
            for (view_index, pose) in poses.iter().enumerate() {
                let (partial, full) = synthesize_pair(&mesh, pose, config)?;
                let v = containment_violations(&partial, &full)?;
                if v > 0 {
                    log::warn!("{} view {view_index}: {v} partial voxels outside the dilated ground truth", source.model_id);
                }
                bad += v;
                total += partial.occupied_count();
                let partial_rel = rel_dir.join(format!("{view_index}.partial.vxg"));
                let full_rel = rel_dir.join(format!("{view_index}.full.vxg"));
                save_grid(&partial, out_dir.join(&partial_rel))?;
                save_grid(&full, out_dir.join(&full_rel))?;
                recs.push(SamplePair {
                    category: source.category.clone(),
                    model_id: source.model_id.clone(),
                    view_index,
                    pose: *pose,
                    partial_path: partial_rel,
                    full_path: full_rel,
                });
            }
            Ok((recs, bad, total))
        })();
        match result {
            Ok((recs, bad, total)) => {
                records.extend(recs);
                violations += bad;
                partial_voxels += total;
            }
            Err(e) => {
                log::warn!("skipping model {}: {e}", source.model_id);
                failures.push((source.model_id.clone(), e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!(
            "all {} models failed; first error: {}",
            meshes.len(),
            failures.first().map(|f| f.1.as_str()).unwrap_or("unknown")
        )));
    }
    let manifest = Manifest {
        resolution: config.resolution,
        split,
        config_digest: config.digest(split),
        records,
        root: out_dir.to_path_buf(),
    };
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(SynthReport {
        manifest,
        failures,
        containment_violations: violations,
        partial_voxels,
    })
}

/// Aligned partial and complete grids for a set of record indices.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub partial: Vec<OccupancyGrid>,
    pub full: Vec<OccupancyGrid>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.partial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partial.is_empty()
    }

    /// `[b, 1, n, n, n]` tensors of the partial and complete grids.
    pub fn tensors(&self) -> Result<(Tensor, Tensor)> {
        let p: Vec<&OccupancyGrid> = self.partial.iter().collect();
        let f: Vec<&OccupancyGrid> = self.full.iter().collect();
        Ok((grids_to_tensor(&p)?, grids_to_tensor(&f)?))
    }
}

fn load_checked(path: &Path, manifest: &Manifest, i: usize) -> Result<OccupancyGrid> {
    let r = &manifest.records[i];
    let g = load_grid(path).map_err(|e| {
        Error::Dataset(format!("record {i} ({} view {}): {e}", r.model_id, r.view_index))
    })?;
    let n = manifest.resolution;
    if g.dims() != [n, n, n] {
        return Err(Error::Dataset(format!(
            "record {i} ({} view {}): grid {} has dims {:?}, manifest resolution is {n}",
            r.model_id,
            r.view_index,
            path.display(),
            g.dims()
        )));
    }
    Ok(g)
}

/// Loads the pairs at `indices`, in order (duplicates allowed).
pub fn load_batch(manifest: &Manifest, indices: &[usize]) -> Result<Batch> {
    let mut batch = Batch {
        indices: indices.to_vec(),
        ..Batch::default()
    };
    for &i in indices {
        if i >= manifest.len() {
            return Err(Error::Argument(format!("record index {i} out of range ({} records)", manifest.len())));
        }
        batch.partial.push(load_checked(&manifest.partial_path(i), manifest, i)?);
        batch.full.push(load_checked(&manifest.full_path(i), manifest, i)?);
    }
    Ok(batch)
}

/// Seeded permutation of the record indices.
pub fn shuffled_epoch(manifest: &Manifest, seed: u64) -> Vec<usize> {
    permutation(manifest.len(), seed)
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// All grids of a manifest held in memory.
#[derive(Debug, Clone)]
pub struct InMemoryDataset {
    pub manifest: Manifest,
    pub partial: Vec<OccupancyGrid>,
    pub full: Vec<OccupancyGrid>,
}

impl InMemoryDataset {
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let all: Vec<usize> = (0..manifest.len()).collect();
        let b = load_batch(manifest, &all)?;
        Ok(Self {
            manifest: manifest.clone(),
            partial: b.partial,
            full: b.full,
        })
    }

    pub fn len(&self) -> usize {
        self.partial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partial.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let mut b = Batch {
            indices: indices.to_vec(),
            ..Batch::default()
        };
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Argument(format!("record index {i} out of range ({} records)", self.len())));
            }
            b.partial.push(self.partial[i].clone());
            b.full.push(self.full[i].clone());
        }
        Ok(b)
    }
}
