use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use recgan::dataset::Manifest;
use recgan::voxelgrid::{iou, load_grid, save_grid, GridKind, OccupancyGrid};
use tempfile::tempdir;

const FAST_CAMERA: [&str; 6] = [
    "--set",
    "camera_width=48",
    "--set",
    "camera_height=48",
    "--set",
    "camera_focal=52",
];

fn recgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = recgan(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn make_meshes(dir: &Path, count: usize, kinds: &str) {
    ok(&["make-meshes", "--out", p(dir), "--count", &count.to_string(), "--kinds", kinds, "--seed", "5"]);
}

fn synth(meshes: &Path, out: &Path, views: usize) -> String {
    let mut args = vec![
        "synth",
        "--meshes",
        p(meshes),
        "--out",
        p(out),
        "--res",
        "16",
    ];
    let v = views.to_string();
    args.extend(["--views-per-axis", &v]);
    args.extend(FAST_CAMERA);
    ok(&args)
}

fn config_value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} not printed"))
        .to_string()
}

#[test]
fn synth_pair_count_follows_views_per_axis() {
    let dir = tempdir().unwrap();
    make_meshes(&dir.path().join("m"), 1, "box,table,chair,stool");
    let out = synth(&dir.path().join("m"), &dir.path().join("d"), 2);
    assert!(out.contains("wrote 32 pairs from 4 meshes"), "{out}");
    assert_eq!(config_value(&out, "views_per_axis"), "2");
    let m = Manifest::read(&dir.path().join("d")).unwrap();
    assert_eq!(m.len(), 32);
    assert_eq!(m.categories().len(), 4);
}

#[test]
fn error_exit_codes() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("no_such_meshes");
    let out = recgan(&["synth", "--meshes", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(p(&missing)));

    let out = recgan(&["synth", "--meshes", "x", "--out", "y", "--set", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key 'nonsense'"));

    assert_eq!(recgan(&["train", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(recgan(&["eval", "--data", "d"]).status.code(), Some(2));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "alpha = 0.5\nlearning_rate = 3\n").unwrap();
    let out = recgan(&["export-mesh", "--input", "a", "--out", "b", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));

    let out = recgan(&[
        "experiment",
        "--train-data",
        p(&dir.path().join("none")),
        "--test-data",
        p(&dir.path().join("none")),
        "--out",
        p(&dir.path().join("exp")),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("recgan synth"));
}

#[test]
fn config_precedence_is_flag_then_file_then_default() {
    let dir = tempdir().unwrap();
    let grid = dir.path().join("g.vxg");
    save_grid(&OccupancyGrid::cubic(2), &grid).unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "threshold = 0.3\nbeta = 0.2\n").unwrap();
    let obj = dir.path().join("g.obj");
    let base = ["export-mesh", "--input", p(&grid), "--out", p(&obj)];

    let out = ok(&base);
    assert_eq!(config_value(&out, "threshold"), "0.5");
    let out = ok(&[&base[..], &["--config", p(&cfg)]].concat());
    assert_eq!(config_value(&out, "threshold"), "0.3");
    assert_eq!(config_value(&out, "beta"), "0.2");
    let out = ok(&[&base[..], &["--config", p(&cfg), "--set", "beta=0.4", "--threshold", "0.7"]].concat());
    assert_eq!(config_value(&out, "threshold"), "0.7");
    assert_eq!(config_value(&out, "beta"), "0.4");
}

#[test]
fn keys_lists_every_key() {
    let out = ok(&["keys"]);
    for k in ["alpha", "beta", "lambda", "batch_size", "seed", "threshold", "gp_interpolant"] {
        assert!(out.lines().any(|l| l.starts_with(k)), "{k}");
    }
}

#[test]
fn train_header_seed_and_determinism() {
    let dir = tempdir().unwrap();
    make_meshes(&dir.path().join("m"), 1, "chair,stool");
    synth(&dir.path().join("m"), &dir.path().join("d"), 2);
    let data = dir.path().join("d");
    let train = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "train",
            "--data",
            p(&data),
            "--out",
            p(out),
            "--max-steps",
            "10",
            "--batch-size",
            "2",
            "--epochs",
            "2",
        ];
        args.extend_from_slice(extra);
        ok(&args)
    };

    let a = dir.path().join("a");
    let out = train(&a, &["--seed", "17"]);
    assert!(out.contains("run header: alpha=0.85 beta=0.05 lambda=10 batch_size=2"), "{out}");
    assert_eq!(config_value(&out, "resolution"), "16");
    let b = dir.path().join("b");
    train(&b, &["--seed", "17"]);
    let strip = |dir: &Path| -> Vec<String> {
        fs::read_to_string(dir.join("train_log.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .take(10)
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&a).len(), 10);
    assert_eq!(strip(&a), strip(&b));
    for f in ["final.rgck", "model.rgck", "config.txt", "checkpoint_epoch1.rgck"] {
        assert!(a.join(f).is_file(), "{f}");
    }

    let out = train(&dir.path().join("c"), &["--ae-only"]);
    assert!(out.contains("run header: alpha=0.85 beta=1 lambda=10"), "{out}");
    assert!(out.contains("(drawn; pass --seed"), "{out}");
    let log = fs::read_to_string(dir.path().join("c/train_log.csv")).unwrap();
    let first = log.lines().nth(1).unwrap();
    assert_eq!(first.split(',').nth(2), Some(""));

    let out = recgan(&["train", "--data", p(&data), "--out", p(&dir.path().join("e")), "--res", "32"]);
    assert_eq!(out.status.code(), Some(1));

    let resumed = ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("r")),
        "--resume",
        p(&a.join("final.rgck")),
        "--max-steps",
        "12",
        "--epochs",
        "2",
    ]);
    assert!(resumed.contains("resuming from"), "{resumed}");
    assert!(resumed.contains("finished step 12"), "{resumed}");
}

#[test]
fn eval_complete_and_export_agree() {
    let dir = tempdir().unwrap();
    make_meshes(&dir.path().join("m"), 1, "box,table,chair,stool");
    synth(&dir.path().join("m"), &dir.path().join("d"), 1);
    let data = dir.path().join("d");
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&run),
        "--max-steps",
        "3",
        "--batch-size",
        "2",
        "--seed",
        "3",
    ]);

    let o = dir.path().join("o");
    ok(&["eval", "--oracle", "identity", "--data", p(&data), "--out", p(&o)]);
    let oracle = fs::read_to_string(o.join("report.csv")).unwrap();
    for row in oracle.lines().skip(1) {
        assert_eq!(row.split(',').nth(2), Some("1"), "{row}");
    }

    let model = run.join("model.rgck");
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    ok(&["eval", "--checkpoint", p(&model), "--data", p(&data), "--out", p(&r1)]);
    ok(&["eval", "--checkpoint", p(&model), "--data", p(&data), "--out", p(&r2)]);
    for f in ["report.csv", "report.md"] {
        assert_eq!(fs::read(r1.join(f)).unwrap(), fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let md = fs::read_to_string(r1.join("report.md")).unwrap();
    assert!(md.contains("chair 0.661") && md.contains("threshold: 0.5"));

    let csv = fs::read_to_string(r1.join("report.csv")).unwrap();
    let manifest = Manifest::read(&data).unwrap();
    for (i, rec) in manifest.records.iter().enumerate() {
        let out = dir.path().join(format!("pred{i}.vxg"));
        ok(&["complete", "--checkpoint", p(&model), "--input", p(&manifest.partial_path(i)), "--out", p(&out)]);
        let pred = load_grid(&out).unwrap();
        assert_eq!(pred.dims(), [16; 3]);
        assert_eq!(pred.kind(), GridKind::Probability);
        let manual = iou(&pred, &load_grid(manifest.full_path(i)).unwrap(), 0.5).unwrap();
        let row = csv.lines().find(|l| l.starts_with(&format!("{},", rec.category))).unwrap();
        let reported: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((manual - reported).abs() < 1e-12, "{manual} vs {reported}");
    }

    let bin = dir.path().join("bin.vxg");
    ok(&[
        "complete",
        "--checkpoint",
        p(&model),
        "--input",
        p(&manifest.partial_path(0)),
        "--out",
        p(&bin),
        "--binarize",
        "0.5",
    ]);
    assert_eq!(load_grid(&bin).unwrap().kind(), GridKind::Binary);
    let out = recgan(&["complete", "--checkpoint", p(&model), "--input", p(&bin), "--out", p(&bin), "--binarize", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let obj = dir.path().join("pred.obj");
    let out = ok(&["export-mesh", "--input", p(&bin), "--out", p(&obj)]);
    assert!(out.contains("triangles"));
}

#[test]
fn completion_beats_copy_input_after_overfitting() {
    let dir = tempdir().unwrap();
    make_meshes(&dir.path().join("m"), 8, "chair");
    synth(&dir.path().join("m"), &dir.path().join("d"), 1);
    let data = dir.path().join("d");
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&run),
        "--ae-only",
        "--epochs",
        "150",
        "--set",
        "lr_later=0.0005",
        "--seed",
        "1",
    ]);
    let manifest = Manifest::read(&data).unwrap();
    let out = dir.path().join("pred.vxg");
    ok(&[
        "complete",
        "--checkpoint",
        p(&run.join("model.rgck")),
        "--input",
        p(&manifest.partial_path(0)),
        "--out",
        p(&out),
    ]);
    let full = load_grid(manifest.full_path(0)).unwrap();
    let partial = load_grid(manifest.partial_path(0)).unwrap();
    let model_iou = iou(&load_grid(&out).unwrap(), &full, 0.5).unwrap();
    let copy_iou = iou(&partial.as_probability(), &full, 0.5).unwrap();
    assert!(model_iou >= copy_iou, "{model_iou} < {copy_iou}");
}

#[test]
fn export_mesh_culls_shared_faces() {
    let dir = tempdir().unwrap();
    let count = |cells: &[[usize; 3]]| {
        let mut g = OccupancyGrid::cubic(3);
        for &[x, y, z] in cells {
            g.set_occupied(x, y, z, true);
        }
        let input = dir.path().join("g.vxg");
        let obj = dir.path().join("g.obj");
        save_grid(&g, &input).unwrap();
        ok(&["export-mesh", "--input", p(&input), "--out", p(&obj)]);
        let text = fs::read_to_string(&obj).unwrap();
        (
            text.lines().filter(|l| l.starts_with("v ")).count(),
            text.lines().filter(|l| l.starts_with("f ")).count(),
        )
    };
    assert_eq!(count(&[[1, 1, 1]]), (8, 12));
    assert_eq!(count(&[[0, 0, 0], [1, 0, 0]]).1, 20);
    assert_eq!(count(&[]), (0, 0));
}
