use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recgan::dataset::{discover_meshes, synthesize_dataset, InMemoryDataset};
use recgan::evalharness::{
    digest_text, evaluate, open_dataset, render_report, run_experiment, write_report, CopyInput, ExperimentConfig,
    GeneratorPredictor, IdentityOracle, Predictor,
};
use recgan::meshscan::{make_procedural_mesh, save_obj, voxels_to_mesh, ProceduralKind, ProceduralParams};
use recgan::train::{load_checkpoint, Trainer};
use recgan::voxelgrid::{load_grid, save_grid, threshold};

use crate::config::RunConfig;
use crate::Failure;

type Outcome = Result<(), Failure>;

fn print_config(command: &str, c: &RunConfig) {
    println!("# recgan {command}: resolved configuration");
    print!("{}", c.render());
    println!("# end configuration");
}

fn announce_seed(c: &mut RunConfig) -> u64 {
    let (seed, drawn) = c.ensure_seed();
    if drawn {
        println!("seed={seed} (drawn; pass --seed {seed} to reproduce this run)");
    }
    seed
}

fn write_config(c: &RunConfig, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let p = dir.join("config.txt");
    fs::write(&p, c.render()).with_context(|| format!("cannot write {}", p.display()))
}

pub fn synth(c: &RunConfig, meshes: &Path, out: &Path) -> Outcome {
    print_config("synth", c);
    let cfg = c.synth_config();
    cfg.validate()?;
    let sources = discover_meshes(meshes)?;
    if sources.is_empty() {
        return Err(anyhow!("no .obj meshes found under {}", meshes.display()).into());
    }
    let report = synthesize_dataset(&sources, c.split(), &cfg, out)?;
    for (id, err) in &report.failures {
        log::warn!("skipped {id}: {err}");
    }
    if report.manifest.is_empty() {
        return Err(anyhow!("every mesh under {} failed to synthesize", meshes.display()).into());
    }
    println!(
        "wrote {} pairs from {} meshes ({} failed) to {}",
        report.manifest.len(),
        sources.len(),
        report.failures.len(),
        out.display()
    );
    println!(
        "partial voxels outside the dilated ground truth: {} of {}",
        report.containment_violations, report.partial_voxels
    );
    println!("manifest sha256: {}", report.manifest.content_hash());
    Ok(())
}

pub fn train(c: &mut RunConfig, data: &Path, out: &Path, resume: Option<&Path>) -> Outcome {
    let manifest = open_dataset(data, "train", &[])?;
    if !c.is_set("resolution") {
        c.set("resolution", &manifest.resolution.to_string())?;
    }
    announce_seed(c);
    print_config("train", c);
    let model = c.model_spec()?;
    let mut trainer = match resume {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            ckpt.check_spec(&model)?;
            let mut t = Trainer::from_checkpoint(ckpt)?;
            if c.is_set("epochs") {
                t.spec_mut().epochs = c.train_spec()?.epochs;
            }
            if c.is_set("max_steps") {
                t.spec_mut().max_steps = c.train_spec()?.max_steps;
            }
            println!("resuming from {} at step {}", p.display(), t.step_count());
            t
        }
        None => Trainer::new(&model, c.train_spec()?)?,
    };
    let s = trainer.spec().clone();
    let w = s.effective_weights();
    println!(
        "run header: alpha={} beta={} lambda={} batch_size={} lr={}/{} epochs={} max_steps={} ae_only={} pairs={}",
        w.alpha,
        w.beta,
        w.lambda,
        s.batch_size,
        s.lr_first_epoch,
        s.lr_later,
        s.epochs,
        s.max_steps.map(|m| m.to_string()).unwrap_or_else(|| "none".into()),
        s.ae_only,
        manifest.len()
    );
    write_config(c, out)?;
    let data = InMemoryDataset::load(&manifest)?;
    trainer.run(&data, Some(out))?;
    let model_path = out.join("model.rgck");
    trainer.export_inference(&model_path)?;
    if let Some(r) = trainer.log().records.last() {
        println!(
            "finished step {} epoch {}: l_d {} l_ae {:.6} l_gan_g {:.6} l_g {:.6}",
            r.step,
            r.epoch,
            r.l_d.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            r.l_ae,
            r.l_gan_g,
            r.l_g
        );
    }
    println!(
        "log {}; checkpoint {}; inference model {}",
        out.join("train_log.csv").display(),
        out.join("final.rgck").display(),
        model_path.display()
    );
    println!("generator digest: {}", trainer.generator().params().digest());
    Ok(())
}

pub enum PredictorChoice {
    Checkpoint(PathBuf),
    Identity,
    CopyInput,
}

pub fn eval(c: &RunConfig, choice: PredictorChoice, data: &Path, out: &Path) -> Outcome {
    print_config("eval", c);
    let manifest = open_dataset(data, "test", &[])?;
    let predictor: Box<dyn Predictor> = match choice {
        PredictorChoice::Checkpoint(p) => Box::new(GeneratorPredictor::new(load_checkpoint(&p)?.generator)),
        PredictorChoice::Identity => Box::new(IdentityOracle),
        PredictorChoice::CopyInput => Box::new(CopyInput),
    };
    let report = evaluate(predictor.as_ref(), &manifest, c.threshold())?;
    let baseline = evaluate(&CopyInput, &manifest, c.threshold())?;
    let provenance = vec![
        ("predictor".to_string(), predictor.name()),
        ("resolution".into(), manifest.resolution.to_string()),
        ("config digest".into(), digest_text(&c.render())),
        ("manifest sha256".into(), manifest.content_hash()),
        ("dataset config digest".into(), manifest.config_digest.clone()),
    ];
    let md = render_report("Evaluation", &provenance, &report, Some(&baseline));
    let (csv, md_path) = write_report(out, &report, &md)?;
    print!("{}", report.to_csv());
    println!("wrote {} and {}", csv.display(), md_path.display());
    Ok(())
}

pub fn complete(c: &RunConfig, checkpoint: &Path, input: &Path, out: &Path, binarize: Option<f64>) -> Outcome {
    print_config("complete", c);
    if let Some(p) = binarize {
        if !(0.0..1.0).contains(&p) {
            return Err(Failure::Usage(format!("--binarize must lie in [0, 1), got {p}")));
        }
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let grid = load_grid(input)?;
    let n = ckpt.model_spec().resolution;
    if grid.dims() != [n; 3] {
        return Err(recgan::Error::Spec(format!(
            "input grid {:?} does not match the model resolution {n}",
            grid.dims()
        ))
        .into());
    }
    let pred = ckpt.generator.predict(&[&grid], 1)?.remove(0);
    let result = match binarize {
        Some(p) => threshold(&pred, p)?,
        None => pred,
    };
    save_grid(&result, out)?;
    println!(
        "wrote {} ({:?}, {} voxels above 0.5)",
        out.display(),
        result.dims(),
        result.occupied_count()
    );
    Ok(())
}

pub fn export_mesh(c: &RunConfig, input: &Path, out: &Path) -> Outcome {
    print_config("export-mesh", c);
    let grid = load_grid(input)?;
    let mesh = voxels_to_mesh(&grid, c.threshold())?;
    save_obj(&mesh, out)?;
    println!(
        "wrote {}: {} vertices, {} triangles",
        out.display(),
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    Ok(())
}

pub fn make_meshes(c: &mut RunConfig, out: &Path, count: usize, kinds: &str) -> Outcome {
    let seed = announce_seed(c);
    print_config("make-meshes", c);
    let kinds: Vec<ProceduralKind> = kinds
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ProceduralKind>().map_err(|e| Failure::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    if kinds.is_empty() || count == 0 {
        return Err(Failure::Usage("need at least one kind and a positive --count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for kind in &kinds {
        let dir = out.join(kind.name());
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for i in 0..count {
            let params = ProceduralParams::sample(*kind, &mut rng);
            let mesh = make_procedural_mesh(*kind, &params)?;
            save_obj(&mesh, dir.join(format!("{}_{i:03}.obj", kind.name())))?;
        }
    }
    println!("wrote {} meshes under {}", count * kinds.len(), out.display());
    Ok(())
}

pub fn experiment(c: &mut RunConfig, train_data: &Path, test_data: &Path, out: &Path) -> Outcome {
    if !c.is_set("resolution") {
        if let Ok(m) = open_dataset(train_data, "train", &[]) {
            c.set("resolution", &m.resolution.to_string())?;
        }
    }
    announce_seed(c);
    print_config("experiment", c);
    let config = ExperimentConfig {
        mode: c.mode(),
        train_categories: c.categories("train_categories"),
        test_categories: c.categories("test_categories"),
        train_data: train_data.to_path_buf(),
        test_data: test_data.to_path_buf(),
        model: c.model_spec()?,
        train: c.train_spec()?,
        threshold: c.threshold(),
        out_dir: out.to_path_buf(),
    };
    if let Err(e) = config.validate() {
        return Err(Failure::Usage(e.to_string()));
    }
    write_config(c, out)?;
    let outcome = run_experiment(&config)?;
    print!("{}", outcome.report.to_csv());
    println!(
        "copy-input baseline mean IoU: {:.4}",
        outcome.baseline.overall.mean_iou
    );
    println!(
        "wrote {} and {}",
        outcome.report_csv.display(),
        outcome.report_md.display()
    );
    if !outcome.checkpoint.is_file() {
        return Err(anyhow!("training finished without writing {}", outcome.checkpoint.display()).into());
    }
    Ok(())
}
