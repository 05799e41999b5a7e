#![allow(dead_code)]

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recgan::dataset::{synthesize_dataset, InMemoryDataset, Manifest, MeshInput, MeshSource, Split, SynthConfig};
use recgan::meshscan::{make_procedural_mesh, PinholeCamera, ProceduralKind, ProceduralParams};

/// Small camera that keeps synthesis fast in tests.
pub fn fast_camera() -> PinholeCamera {
    PinholeCamera::new(48, 48, 52.0, 1.8)
}

/// `count` randomized procedural meshes of one kind.
pub fn meshes(kind: ProceduralKind, count: usize, seed: u64) -> Vec<MeshSource> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| MeshSource {
            category: kind.name().into(),
            model_id: format!("{}_{seed}_{i:03}", kind.name()),
            input: MeshInput::Mesh(make_procedural_mesh(kind, &ProceduralParams::sample(kind, &mut rng)).unwrap()),
        })
        .collect()
}

/// Mixed-kind meshes cycling through every procedural kind.
pub fn mixed_meshes(count: usize, seed: u64) -> Vec<MeshSource> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let k = ProceduralKind::ALL[i % ProceduralKind::ALL.len()];
            MeshSource {
                category: k.name().into(),
                model_id: format!("m{seed}_{i:03}"),
                input: MeshInput::Mesh(make_procedural_mesh(k, &ProceduralParams::sample(k, &mut rng)).unwrap()),
            }
        })
        .collect()
}

pub fn synth(meshes: &[MeshSource], dir: &Path, resolution: usize, n_per_axis: usize, split: Split) -> Manifest {
    let cfg = SynthConfig {
        resolution,
        n_per_axis,
        camera: fast_camera(),
        solid: false,
    };
    synthesize_dataset(meshes, split, &cfg, dir).unwrap().manifest
}

/// `count` single-view pairs at 16^3, loaded into memory.
pub fn tiny_dataset(dir: &Path, count: usize) -> InMemoryDataset {
    let m = synth(&mixed_meshes(count, 3), dir, 16, 1, Split::Train);
    InMemoryDataset::load(&m).unwrap()
}
