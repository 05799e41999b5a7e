//! Evaluation of predictors on manifests and the per-/multi-/cross-category
//! experiment driver.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::{load_batch, InMemoryDataset, Manifest, MANIFEST_NAME};
use crate::error::{Error, Result};
use crate::nnarch::{Generator, ModelSpec};
use crate::train::{TrainSpec, Trainer};
use crate::voxelgrid::{MetricReport, OccupancyGrid, DEFAULT_CLAMP_EPS};

/// Reference IoU values of the full-scale model, carried in reports.
pub const REFERENCE_IOU: [(&str, f64); 3] = [("chair", 0.661), ("stool", 0.501), ("toilet", 0.569)];

/// Anything that maps a partial grid to occupancy probabilities.
pub trait Predictor {
    fn name(&self) -> String;
    /// Identifier of the weights, if any.
    fn digest(&self) -> String {
        "none".into()
    }
    /// Resolution the predictor requires, if fixed.
    fn resolution(&self) -> Option<usize> {
        None
    }
    /// `full` is available for oracle predictors; real models must ignore it.
    fn predict(&self, partial: &[&OccupancyGrid], full: &[&OccupancyGrid]) -> Result<Vec<OccupancyGrid>>;
}

pub struct GeneratorPredictor {
    pub generator: Generator,
    pub digest: String,
    pub batch: usize,
}

impl GeneratorPredictor {
    pub fn new(generator: Generator) -> Self {
        let digest = generator.params().digest();
        Self {
            generator,
            digest,
            batch: 8,
        }
    }
}

impl Predictor for GeneratorPredictor {
    fn name(&self) -> String {
        "generator".into()
    }

    fn digest(&self) -> String {
        self.digest.clone()
    }

    fn resolution(&self) -> Option<usize> {
        Some(self.generator.spec().resolution)
    }

    fn predict(&self, partial: &[&OccupancyGrid], _full: &[&OccupancyGrid]) -> Result<Vec<OccupancyGrid>> {
        self.generator.predict(partial, self.batch)
    }
}

/// Returns the ground truth: the perfect-predictor bound.
pub struct IdentityOracle;

impl Predictor for IdentityOracle {
    fn name(&self) -> String {
        "identity-oracle".into()
    }

    fn predict(&self, _partial: &[&OccupancyGrid], full: &[&OccupancyGrid]) -> Result<Vec<OccupancyGrid>> {
        Ok(full.iter().map(|g| g.as_probability()).collect())
    }
}

/// Returns the partial view unchanged: the floor baseline.
pub struct CopyInput;

impl Predictor for CopyInput {
    fn name(&self) -> String {
        "copy-input".into()
    }

    fn predict(&self, partial: &[&OccupancyGrid], _full: &[&OccupancyGrid]) -> Result<Vec<OccupancyGrid>> {
        Ok(partial.iter().map(|g| g.as_probability()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category: String,
    pub n_samples: usize,
    pub mean_iou: f64,
    pub mean_ce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub predictor: String,
    /// Sorted by category name.
    pub categories: Vec<CategoryReport>,
    /// Uniform mean over all pairs.
    pub overall: CategoryReport,
    pub threshold: f64,
    pub checkpoint_digest: String,
}

pub const REPORT_COLUMNS: &str = "category,n_samples,mean_iou,mean_ce,threshold,checkpoint_digest";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_COLUMNS}\n");
        for r in self.categories.iter().chain(std::iter::once(&self.overall)) {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.category, r.n_samples, r.mean_iou, r.mean_ce, self.threshold, self.checkpoint_digest
            ));
        }
        s
    }

    pub fn category(&self, name: &str) -> Option<&CategoryReport> {
        self.categories.iter().find(|c| c.category == name)
    }
}

/// Per-pair metrics in manifest order.
pub fn evaluate_pairs(predictor: &dyn Predictor, manifest: &Manifest, threshold: f64) -> Result<Vec<MetricReport>> {
    if let Some(n) = predictor.resolution() {
        if n != manifest.resolution {
            return Err(Error::Spec(format!(
                "predictor resolution {n} does not match manifest resolution {}",
                manifest.resolution
            )));
        }
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Argument(format!("threshold must lie in [0, 1), got {threshold}")));
    }
    let mut out = Vec::with_capacity(manifest.len());
    let all: Vec<usize> = (0..manifest.len()).collect();
    for chunk in all.chunks(32) {
        let b = load_batch(manifest, chunk)?;
        let p: Vec<&OccupancyGrid> = b.partial.iter().collect();
        let f: Vec<&OccupancyGrid> = b.full.iter().collect();
        let preds = predictor.predict(&p, &f)?;
        for (pred, full) in preds.iter().zip(&b.full) {
            out.push(MetricReport::compute(pred, full, threshold, DEFAULT_CLAMP_EPS)?);
        }
    }
    Ok(out)
}

/// Mean IoU and CE per category and overall, averaged uniformly over pairs.
pub fn evaluate(predictor: &dyn Predictor, manifest: &Manifest, threshold: f64) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty manifest".into()));
    }
    let metrics = evaluate_pairs(predictor, manifest, threshold)?;
    let mut groups: BTreeMap<&str, Vec<&MetricReport>> = BTreeMap::new();
    for (r, m) in manifest.records.iter().zip(&metrics) {
        groups.entry(&r.category).or_default().push(m);
    }
    let summarize = |name: &str, ms: &[&MetricReport]| CategoryReport {
        category: name.to_string(),
        n_samples: ms.len(),
        mean_iou: ms.iter().map(|m| m.iou).sum::<f64>() / ms.len() as f64,
        mean_ce: ms.iter().map(|m| m.ce).sum::<f64>() / ms.len() as f64,
    };
    let categories = groups.iter().map(|(k, v)| summarize(k, v)).collect();
    let all: Vec<&MetricReport> = metrics.iter().collect();
    Ok(EvalReport {
        predictor: predictor.name(),
        categories,
        overall: summarize("all", &all),
        threshold,
        checkpoint_digest: predictor.digest(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    PerCategory,
    MultiCategory,
    Cross,
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerCategory => "per_category",
            Self::MultiCategory => "multi_category",
            Self::Cross => "cross",
        })
    }
}

impl FromStr for ExperimentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_category" => Ok(Self::PerCategory),
            "multi_category" => Ok(Self::MultiCategory),
            "cross" => Ok(Self::Cross),
            _ => Err(Error::Argument(format!(
                "unknown experiment mode '{s}' (expected per_category, multi_category or cross)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub train_categories: Vec<String>,
    pub test_categories: Vec<String>,
    /// Directory holding the training manifest.
    pub train_data: PathBuf,
    /// Directory holding the test manifest.
    pub test_data: PathBuf,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub threshold: f64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_categories.is_empty() || self.test_categories.is_empty() {
            return Err(Error::Argument("train and test category lists must be non-empty".into()));
        }
        let same = {
            let mut a = self.train_categories.clone();
            let mut b = self.test_categories.clone();
            a.sort();
            b.sort();
            a == b
        };
        match self.mode {
            ExperimentMode::PerCategory if !(same && self.train_categories.len() == 1) => Err(Error::Argument(
                "per-category mode needs the same single category for training and testing".into(),
            )),
            ExperimentMode::MultiCategory if !same => Err(Error::Argument(
                "multi-category mode needs identical train and test category lists".into(),
            )),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the JSON form of the configuration, excluding paths.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            mode: ExperimentMode,
            train_categories: &'a [String],
            test_categories: &'a [String],
            model: &'a ModelSpec,
            train: &'a TrainSpec,
            threshold: f64,
        }
        let key = Key {
            mode: self.mode,
            train_categories: &self.train_categories,
            test_categories: &self.test_categories,
            model: &self.model,
            train: &self.train,
            threshold: self.threshold,
        };
        let json = serde_json::to_vec(&key).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Files and numbers produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub baseline: EvalReport,
    pub report_csv: PathBuf,
    pub report_md: PathBuf,
    pub checkpoint: PathBuf,
}

/// Opens the manifest in `dir` (or the file `dir`), keeping only `categories`
/// unless the list is empty. Missing data yields an error naming the synth command.
pub fn open_dataset(dir: &Path, split: &str, categories: &[String]) -> Result<Manifest> {
    let file = if dir.is_dir() { dir.join(MANIFEST_NAME) } else { dir.to_path_buf() };
    if !file.is_file() {
        return Err(Error::Dataset(format!(
            "no {split} dataset at {}; create it with `recgan synth --meshes <mesh-dir> --out {} --split {split} --res <N>`",
            file.display(),
            dir.display()
        )));
    }
    let m = Manifest::read(&file)?;
    let present = m.categories();
    for c in categories {
        if !present.contains(c) {
            return Err(Error::Dataset(format!(
                "{split} dataset at {} has no '{c}' samples (found: {}); synthesize it with \
                 `recgan synth --meshes <mesh-dir> --out {} --split {split}` using meshes under <mesh-dir>/{c}/",
                dir.display(),
                present.join(", "),
                dir.display()
            )));
        }
    }
    if categories.is_empty() {
        return Ok(m);
    }
    Ok(m.filter_categories(categories))
}

/// SHA-256 of `text` as lowercase hex.
pub fn digest_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Markdown summary: a title, `key: value` provenance lines, the metric table
/// (with copy-input IoU when `baseline` is given) and the reference constants.
pub fn render_report(
    title: &str,
    provenance: &[(String, String)],
    report: &EvalReport,
    baseline: Option<&EvalReport>,
) -> String {
    let mut s = format!("# {title}\n\n");
    for (k, v) in provenance {
        s.push_str(&format!("- {k}: {v}\n"));
    }
    s.push_str(&format!("- threshold: {}\n", report.threshold));
    s.push_str(&format!("- checkpoint digest: {}\n", report.checkpoint_digest));
    s.push_str("\n| category | n | IoU | CE |");
    if baseline.is_some() {
        s.push_str(" copy-input IoU |");
    }
    s.push_str("\n|---|---|---|---|");
    if baseline.is_some() {
        s.push_str("---|");
    }
    s.push('\n');
    for r in report.categories.iter().chain(std::iter::once(&report.overall)) {
        s.push_str(&format!("| {} | {} | {:.4} | {:.4} |", r.category, r.n_samples, r.mean_iou, r.mean_ce));
        if let Some(b) = baseline {
            let base = if r.category == "all" { Some(&b.overall) } else { b.category(&r.category) };
            s.push_str(&format!(" {} |", base.map(|c| format!("{:.4}", c.mean_iou)).unwrap_or_else(|| "-".into())));
        }
        s.push('\n');
    }
    s.push_str("\nReference IoU at 64^3 with the full training corpus: ");
    let refs: Vec<String> = REFERENCE_IOU.iter().map(|(c, v)| format!("{c} {v}")).collect();
    s.push_str(&refs.join(", "));
    s.push_str(".\n");
    s
}

/// Experiment summary with category overlap, seeds, digests and manifest hashes.
pub fn render_markdown(
    config: &ExperimentConfig,
    report: &EvalReport,
    baseline: Option<&EvalReport>,
    manifest_hashes: &[(String, String)],
) -> String {
    let overlap: Vec<&str> = config
        .test_categories
        .iter()
        .filter(|c| config.train_categories.contains(c))
        .map(String::as_str)
        .collect();
    let overlap_text = if overlap.is_empty() {
        "none (disjoint)".to_string()
    } else {
        overlap.join(", ")
    };
    let w = config.train.effective_weights();
    let mut p = vec![
        ("mode".to_string(), config.mode.to_string()),
        ("train categories".into(), config.train_categories.join(", ")),
        ("test categories".into(), config.test_categories.join(", ")),
        ("train/test category overlap".into(), overlap_text),
        ("resolution".into(), config.model.resolution.to_string()),
        ("config digest".into(), config.digest()),
        (
            "seeds".into(),
            format!("model {}, training {}", config.model.seed, config.train.seed),
        ),
        (
            "loss weights".into(),
            format!("alpha {}, beta {}, lambda {}, interpolant {}", w.alpha, w.beta, w.lambda, w.gp_interpolant),
        ),
    ];
    for (name, hash) in manifest_hashes {
        p.push((format!("{name} manifest sha256"), hash.clone()));
    }
    render_report("Shape completion experiment", &p, report, baseline)
}

/// Writes `report.csv` and `report.md` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport, markdown: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    let md = dir.join("report.md");
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    fs::write(&md, markdown).map_err(|e| Error::io(&md, e))?;
    Ok((csv, md))
}

/// Trains on the configured categories, evaluates on the test categories and
/// writes the reports under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let train_m = open_dataset(&config.train_data, "train", &config.train_categories)?;
    let test_m = open_dataset(&config.test_data, "test", &config.test_categories)?;
    for m in [&train_m, &test_m] {
        if m.resolution != config.model.resolution {
            return Err(Error::Spec(format!(
                "dataset resolution {} does not match model resolution {}",
                m.resolution, config.model.resolution
            )));
        }
    }
    let data = InMemoryDataset::load(&train_m)?;
    let mut trainer = Trainer::new(&config.model, config.train.clone())?;
    let train_dir = config.out_dir.join("train");
    trainer.run(&data, Some(&train_dir))?;
    let checkpoint = train_dir.join("final.rgck");

    let predictor = GeneratorPredictor::new(trainer.generator().clone());
    let report = evaluate(&predictor, &test_m, config.threshold)?;
    let baseline = evaluate(&CopyInput, &test_m, config.threshold)?;
    let hashes = vec![
        ("train".to_string(), train_m.content_hash()),
        ("test".to_string(), test_m.content_hash()),
    ];
    let md = render_markdown(config, &report, Some(&baseline), &hashes);
    let (report_csv, report_md) = write_report(&config.out_dir, &report, &md)?;
    let base_csv = config.out_dir.join("baseline.csv");
    fs::write(&base_csv, baseline.to_csv()).map_err(|e| Error::io(&base_csv, e))?;
    Ok(ExperimentOutcome {
        report,
        baseline,
        report_csv,
        report_md,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_dataset, MeshInput, MeshSource, Split, SynthConfig};
    use crate::meshscan::{make_procedural_mesh, PinholeCamera, ProceduralKind, ProceduralParams};
    use crate::nnarch::build_generator;
    use tempfile::tempdir;

    fn corpus(dir: &Path, kinds: &[ProceduralKind], per_kind: usize, split: Split) -> Manifest {
        let meshes: Vec<MeshSource> = kinds
            .iter()
            .flat_map(|&k| {
                (0..per_kind).map(move |i| {
                    let mut p = ProceduralParams::default_for(k);
                    p.height *= 1.0 + 0.05 * i as f64;
                    MeshSource {
                        category: k.name().into(),
                        model_id: format!("{}_{i}", k.name()),
                        input: MeshInput::Mesh(make_procedural_mesh(k, &p).unwrap()),
                    }
                })
            })
            .collect();
        let cfg = SynthConfig {
            resolution: 16,
            n_per_axis: 2,
            camera: PinholeCamera::new(48, 48, 52.0, 1.8),
            solid: false,
        };
        synthesize_dataset(&meshes, split, &cfg, dir).unwrap().manifest
    }

    #[test]
    fn oracle_and_baseline_bounds() {
        let dir = tempdir().unwrap();
        let m = corpus(dir.path(), &[ProceduralKind::Chair, ProceduralKind::Stool], 2, Split::Test);
        let perfect = evaluate(&IdentityOracle, &m, 0.5).unwrap();
        for c in perfect.categories.iter().chain(std::iter::once(&perfect.overall)) {
            assert_eq!(c.mean_iou, 1.0);
            assert!(c.mean_ce < 1e-6);
        }
        assert_eq!(perfect.categories.len(), 2);
        assert_eq!(perfect.overall.n_samples, 32);
        let base = evaluate(&CopyInput, &m, 0.5).unwrap();
        assert!(base.overall.mean_iou < 1.0 && base.overall.mean_iou > 0.0);
        assert!(base.overall.mean_ce > 0.0);
    }

    #[test]
    fn reports_are_reproducible_and_checked() {
        let dir = tempdir().unwrap();
        let m = corpus(dir.path(), &[ProceduralKind::Chair], 1, Split::Test);
        let g = build_generator(&ModelSpec::toy(0), 0).unwrap();
        let p = GeneratorPredictor::new(g);
        let a = evaluate(&p, &m, 0.5).unwrap();
        let b = evaluate(&p, &m, 0.5).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.overall.mean_iou >= 0.0 && a.overall.mean_iou <= 1.0 && a.overall.mean_ce >= 0.0);
        let csv = a.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_COLUMNS);
        assert!(lines[2].starts_with("all,8,"));
        let g32 = build_generator(&ModelSpec::for_resolution(32, 2, 0).unwrap(), 0).unwrap();
        assert!(matches!(evaluate(&GeneratorPredictor::new(g32), &m, 0.5), Err(Error::Spec(_))));
    }

    #[test]
    fn missing_dataset_names_the_synth_command() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            mode: ExperimentMode::PerCategory,
            train_categories: vec!["chair".into()],
            test_categories: vec!["chair".into()],
            train_data: dir.path().join("nope"),
            test_data: dir.path().join("nope"),
            model: ModelSpec::toy(0),
            train: TrainSpec::default(),
            threshold: 0.5,
            out_dir: dir.path().join("out"),
        };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("recgan synth"), "{err}");
    }

    #[test]
    fn mode_validation() {
        let base = ExperimentConfig {
            mode: ExperimentMode::PerCategory,
            train_categories: vec!["chair".into()],
            test_categories: vec!["stool".into()],
            train_data: PathBuf::new(),
            test_data: PathBuf::new(),
            model: ModelSpec::toy(0),
            train: TrainSpec::default(),
            threshold: 0.5,
            out_dir: PathBuf::new(),
        };
        assert!(base.validate().is_err());
        let cross = ExperimentConfig {
            mode: ExperimentMode::Cross,
            ..base.clone()
        };
        assert!(cross.validate().is_ok());
        let multi = ExperimentConfig {
            mode: ExperimentMode::MultiCategory,
            train_categories: vec!["chair".into(), "stool".into()],
            test_categories: vec!["stool".into(), "chair".into()],
            ..base
        };
        assert!(multi.validate().is_ok());
    }

    #[test]
    fn small_experiment_end_to_end() {
        let dir = tempdir().unwrap();
        corpus(&dir.path().join("train"), &[ProceduralKind::Stool, ProceduralKind::Chair], 1, Split::Train);
        corpus(&dir.path().join("test"), &[ProceduralKind::Chair, ProceduralKind::Table], 1, Split::Test);
        let train = TrainSpec {
            max_steps: Some(2),
            epochs: 1,
            ..TrainSpec::default()
        };
        let cfg = ExperimentConfig {
            mode: ExperimentMode::Cross,
            train_categories: vec!["stool".into()],
            test_categories: vec!["chair".into(), "table".into()],
            train_data: dir.path().join("train"),
            test_data: dir.path().join("test"),
            model: ModelSpec::toy(3),
            train,
            threshold: 0.5,
            out_dir: dir.path().join("exp"),
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.report.categories.len(), 2);
        let md = fs::read_to_string(&out.report_md).unwrap();
        assert!(md.contains("none (disjoint)"));
        assert!(md.contains("chair 0.661"));
        assert!(md.contains(&cfg.digest()));
        assert!(out.checkpoint.exists());
        assert!(fs::read_to_string(&out.report_csv).unwrap().starts_with(REPORT_COLUMNS));
    }
}
