use super::*;
use crate::autodiff::grad;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

fn random_binary(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::constant(shape, (0..n).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect())
}

#[test]
fn full_scale_plan_matches_schedule() {
    let spec = ModelSpec::full_scale(0);
    spec.validate().unwrap();
    let plan = generator_plan(&spec, 1).unwrap();
    let enc: Vec<(usize, usize)> = plan[..5].iter().map(|l| (l.output[2], l.output[1])).collect();
    assert_eq!(enc, vec![(32, 64), (16, 128), (8, 256), (4, 512), (2, 512)]);
    assert_eq!(spec.flatten_len(), 4096);
    assert_eq!(plan[5].input, vec![1, 4096]);
    assert_eq!(plan[5].output, vec![1, 2048]);
    assert_eq!(plan[6].output, vec![1, 4096]);
    let last = plan.last().unwrap();
    assert_eq!(last.output, vec![1, 1, 64, 64, 64]);
    let dplan = discriminator_plan(&spec, 1).unwrap();
    assert_eq!(dplan[0].input, vec![1, 2, 64, 64, 64]);
    let out = &dplan.last().unwrap().output;
    assert_eq!(out[1] * out[2] * out[3] * out[4], 4096);
    assert_eq!(spec.latent_len(), 4096);
}

#[test]
fn toy_plan_matches_schedule() {
    let spec = ModelSpec::toy(0);
    assert_eq!((spec.resolution, spec.levels, spec.base_channels), (16, 3, 8));
    let plan = generator_plan(&spec, 2).unwrap();
    let enc: Vec<(usize, usize)> = plan[..3].iter().map(|l| (l.output[2], l.output[1])).collect();
    assert_eq!(enc, vec![(8, 8), (4, 16), (2, 32)]);
    assert_eq!(spec.flatten_len(), 256);
    assert_eq!(spec.latent_len(), 256);
}

#[test]
fn decoder_channels_double_with_skips() {
    let spec = ModelSpec::full_scale(0);
    assert_eq!(
        decoder_channels(&spec),
        vec![(1024, 512), (1024, 512), (1024, 256), (512, 128), (256, 1)]
    );
    let plain = ModelSpec {
        skip_connections: false,
        ..spec
    };
    assert_eq!(
        decoder_channels(&plain),
        vec![(512, 512), (512, 512), (512, 256), (256, 128), (128, 1)]
    );
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = ModelSpec::toy(0);
    spec.resolution = 32;
    assert!(matches!(build_generator(&spec, 0), Err(Error::Spec(_))));
    assert!(matches!(build_discriminator(&spec, 0), Err(Error::Spec(_))));
    assert!(ModelSpec::for_resolution(24, 8, 0).is_err());
    spec = ModelSpec::toy(0);
    spec.base_channels = 0;
    assert!(spec.validate().is_err());
}

#[test]
fn generator_output_shape_and_range() {
    let spec = ModelSpec::toy(3);
    let gen = build_generator(&spec, 3).unwrap();
    let x = random_binary(&[2, 1, 16, 16, 16], 1);
    let y = no_grad(|| gen.forward(&x)).unwrap();
    assert_eq!(y.shape(), &[2, 1, 16, 16, 16]);
    assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    let bad = random_binary(&[1, 1, 8, 8, 8], 1);
    assert!(matches!(gen.forward(&bad), Err(Error::Shape(_))));
}

#[test]
fn generator_forward_at_32() {
    let spec = ModelSpec::for_resolution(32, 2, 0).unwrap();
    let gen = build_generator(&spec, 0).unwrap();
    let y = no_grad(|| gen.forward(&random_binary(&[1, 1, 32, 32, 32], 4))).unwrap();
    assert_eq!(y.shape(), &[1, 1, 32, 32, 32]);
    let d = build_discriminator(&spec, 0).unwrap();
    let x = random_binary(&[1, 1, 32, 32, 32], 5);
    let l = no_grad(|| d.forward(&x, &y)).unwrap();
    assert_eq!(l.shape(), &[1, spec.latent_len()]);
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let gen = build_generator(&ModelSpec::toy(5), 5).unwrap();
    let one = random_binary(&[1, 1, 16, 16, 16], 9);
    let mut both = one.to_vec();
    both.extend(one.to_vec());
    let y = no_grad(|| gen.forward(&Tensor::constant(&[2, 1, 16, 16, 16], both))).unwrap();
    let (a, b) = y.data().split_at(4096);
    assert_eq!(a, b);
    let again = no_grad(|| gen.forward(&one)).unwrap();
    assert_eq!(again.data(), a);
}

#[test]
fn zero_input_golden_digest() {
    let gen = build_generator(&ModelSpec::toy(2024), 2024).unwrap();
    let y = no_grad(|| gen.forward(&Tensor::zeros(&[1, 1, 16, 16, 16]))).unwrap();
    let bytes: Vec<u8> = y.data().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    let digest = hex::encode(Sha256::digest(&bytes));
    let again = no_grad(|| gen.forward(&Tensor::zeros(&[1, 1, 16, 16, 16]))).unwrap();
    assert_eq!(y.data(), again.data());
    assert_eq!(digest, GOLDEN_ZERO_DIGEST, "zero-input output digest changed");
}

const GOLDEN_ZERO_DIGEST: &str = "66e39e41bccc0a57ae90a77b426f4075e81ba877b0653c3aabe0a9e00762769c";
const GOLDEN_PATTERN_DIGEST: &str = "df1a984009da6cc71e71b26c1a5214797675eea9af294ed9fac4ed986ad8bdd9";

#[test]
fn patterned_input_golden_digest() {
    let gen = build_generator(&ModelSpec::toy(2024), 2024).unwrap();
    let data = (0..4096).map(|i| ((i % 16 + i / 16 % 16 + i / 256) % 3 == 0) as u8 as f64).collect();
    let y = no_grad(|| gen.forward(&Tensor::constant(&[1, 1, 16, 16, 16], data))).unwrap();
    let bytes: Vec<u8> = y.data().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    assert_eq!(hex::encode(Sha256::digest(&bytes)), GOLDEN_PATTERN_DIGEST);
}

#[test]
fn seeds_control_initialization() {
    let spec = ModelSpec::toy(0);
    let a = build_generator(&spec, 1).unwrap();
    let b = build_generator(&spec, 1).unwrap();
    let c = build_generator(&spec, 2).unwrap();
    assert_eq!(a.params().digest(), b.params().digest());
    assert_ne!(a.params().digest(), c.params().digest());
    let d = build_discriminator(&spec, 1).unwrap();
    assert_ne!(a.params().digest(), d.params().digest());
    assert!(a.params().names().iter().filter(|n| n.ends_with("bias")).all(|n| {
        let i = a.params().names().iter().position(|m| m == n).unwrap();
        a.params().get(i).data().iter().all(|&v| v == 0.0)
    }));
}

#[test]
fn critic_is_asymmetric_and_deterministic() {
    let spec = ModelSpec::toy(7);
    let d = build_discriminator(&spec, 7).unwrap();
    let x = random_binary(&[1, 1, 16, 16, 16], 1);
    let y = random_binary(&[1, 1, 16, 16, 16], 2);
    let a = no_grad(|| d.forward(&x, &y)).unwrap();
    let b = no_grad(|| d.forward(&y, &x)).unwrap();
    assert_eq!(a.shape(), &[1, 256]);
    assert_ne!(a.data(), b.data());
    assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));

    let xx = Tensor::constant(&[2, 1, 16, 16, 16], [x.to_vec(), x.to_vec()].concat());
    let yy = Tensor::constant(&[2, 1, 16, 16, 16], [y.to_vec(), y.to_vec()].concat());
    let l = no_grad(|| d.forward(&xx, &yy)).unwrap();
    assert_eq!(&l.data()[..256], &l.data()[256..]);
    assert!(d.forward(&x, &xx).is_err());
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn critic_input_gradient_matches_finite_differences() {
    let spec = ModelSpec::toy(11);
    let d = build_discriminator(&spec, 11).unwrap();
    let x = random_binary(&[1, 1, 16, 16, 16], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let yv: Vec<f64> = (0..4096).map(|_| rng.gen_range(0.05..0.95)).collect();
    let y = Tensor::variable(&[1, 1, 16, 16, 16], yv.clone());
    let g = grad(&d.forward(&x, &y).unwrap().mean(), &[&y], false).unwrap().remove(0);
    let f = |v: &[f64]| no_grad(|| d.forward(&x, &Tensor::constant(&[1, 1, 16, 16, 16], v.to_vec())).unwrap().mean().item());
    let h = 1e-5;
    let mut checked = 0;
    for i in (0..4096).step_by(97) {
        let mut p = yv.clone();
        p[i] += h;
        let mut m = yv.clone();
        m[i] -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        if fd.abs() < 1e-9 && g.data()[i].abs() < 1e-9 {
            continue;
        }
        assert!(rel_err(fd, g.data()[i]) < 1e-4, "voxel {i}: fd {fd} analytic {}", g.data()[i]);
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn generator_parameter_gradients_match_finite_differences() {
    let spec = ModelSpec::for_resolution(8, 2, 0).unwrap();
    let mut gen = build_generator(&spec, 21).unwrap();
    let x = random_binary(&[2, 1, 8, 8, 8], 6);
    let target = random_binary(&[2, 1, 8, 8, 8], 7);
    let loss = |g: &Generator| g.forward(&x).unwrap().sub(&target).square().mean();
    let out = loss(&gen);
    let grads = grad(&out, &gen.params().refs(), false).unwrap();
    let h = 1e-6;
    for (k, gk) in grads.iter().enumerate() {
        let base = gen.params().get(k).to_vec();
        for i in [0, base.len() / 2, base.len() - 1] {
            let mut p = base.clone();
            p[i] += h;
            gen.params_mut().set(k, p).unwrap();
            let lp = no_grad(|| loss(&gen).item());
            let mut m = base.clone();
            m[i] -= h;
            gen.params_mut().set(k, m).unwrap();
            let lm = no_grad(|| loss(&gen).item());
            gen.params_mut().set(k, base.clone()).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let an = gk.data()[i];
            assert!(
                (fd - an).abs() < 1e-4 * fd.abs().max(an.abs()).max(1e-6),
                "{} [{i}]: fd {fd} analytic {an}",
                gen.params().names()[k]
            );
        }
    }
}

#[test]
fn ablation_removes_skip_inputs() {
    let mut spec = ModelSpec::toy(0);
    spec.skip_connections = false;
    let gen = build_generator(&spec, 0).unwrap();
    let y = no_grad(|| gen.forward(&random_binary(&[1, 1, 16, 16, 16], 2))).unwrap();
    assert_eq!(y.shape(), &[1, 1, 16, 16, 16]);
    let with = build_generator(&ModelSpec::toy(0), 0).unwrap();
    assert!(gen.params().numel() < with.params().numel());
}

#[test]
fn from_params_checks_layout() {
    let spec = ModelSpec::toy(0);
    let gen = build_generator(&spec, 0).unwrap();
    assert!(Generator::from_params(spec.clone(), gen.params().clone()).is_ok());
    let other = ModelSpec { skip_connections: false, ..spec };
    assert!(Generator::from_params(other, gen.params().clone()).is_err());
}

#[test]
fn grid_tensor_round_trip() {
    let mut g = OccupancyGrid::cubic(4);
    g.set_occupied(1, 2, 3, true);
    let t = grids_to_tensor(&[&g, &g]).unwrap();
    assert_eq!(t.shape(), &[2, 1, 4, 4, 4]);
    let back = tensor_to_grids(&t).unwrap();
    assert_eq!(back[1].mask(), g.mask());
}
