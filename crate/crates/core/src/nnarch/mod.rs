//! Generator (3D encoder, fully connected bottleneck, up-convolution decoder
//! with skip connections) and conditional latent-vector critic.

mod params;
mod spec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{no_grad, ConvGeom, Tensor};
use crate::error::{Error, Result};
use crate::voxelgrid::{GridKind, OccupancyGrid};

pub use params::ParamSet;
pub(crate) use spec::decoder_channels;
pub use spec::{discriminator_plan, generator_plan, LayerShape, ModelSpec};

/// Negative slope of the encoder activations.
pub const LEAKY_SLOPE: f64 = 0.2;
const KERNEL: usize = 4;
const TAPS: usize = KERNEL * KERNEL * KERNEL;

const GENERATOR_STREAM: u64 = 1;
const DISCRIMINATOR_STREAM: u64 = 2;

fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Checks a `[b, 1, n, n, n]` (or `[b, n, n, n]`) batch and returns it in 5-D form.
fn as_volume_batch(x: &Tensor, n: usize, what: &str) -> Result<Tensor> {
    let s = x.shape();
    let ok5 = s.len() == 5 && s[1] == 1 && s[2..] == [n, n, n];
    let ok4 = s.len() == 4 && s[1..] == [n, n, n];
    if !(ok5 || ok4) || s[0] == 0 {
        return Err(Error::Shape(format!(
            "{what}: expected a non-empty batch of {n}^3 single-channel grids, got shape {s:?}"
        )));
    }
    Ok(if ok4 { x.reshape(&[s[0], 1, n, n, n]) } else { x.clone() })
}

/// Stacks grids into a `[b, 1, n, n, n]` constant tensor.
pub fn grids_to_tensor(grids: &[&OccupancyGrid]) -> Result<Tensor> {
    let first = grids.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let [nx, ny, nz] = first.dims();
    if nx != ny || ny != nz {
        return Err(Error::Shape(format!("grids must be cubic, got {:?}", first.dims())));
    }
    let mut data = Vec::with_capacity(grids.len() * first.len());
    for g in grids {
        if g.dims() != first.dims() {
            return Err(Error::Shape(format!("mixed grid dims {:?} and {:?}", first.dims(), g.dims())));
        }
        data.extend(g.values().iter().map(|&v| v as f64));
    }
    Ok(Tensor::constant(&[grids.len(), 1, nx, nx, nx], data))
}

/// Splits a `[b, 1, n, n, n]` probability tensor into grids.
pub fn tensor_to_grids(t: &Tensor) -> Result<Vec<OccupancyGrid>> {
    let s = t.shape();
    if s.len() != 5 || s[1] != 1 {
        return Err(Error::Shape(format!("expected [b, 1, n, n, n], got {s:?}")));
    }
    let vol = s[2] * s[3] * s[4];
    t.data()
        .chunks(vol)
        .map(|c| {
            OccupancyGrid::from_values([s[4], s[3], s[2]], c.iter().map(|&v| v as f32).collect(), GridKind::Probability)
        })
        .collect()
}

/// Maps a partial-view grid to per-voxel occupancy probabilities.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: ModelSpec,
    params: ParamSet,
}

/// Builds a generator with weights drawn from `seed`.
pub fn build_generator(spec: &ModelSpec, seed: u64) -> Result<Generator> {
    spec.validate()?;
    let mut spec = spec.clone();
    spec.seed = seed;
    let mut rng = init_rng(seed, GENERATOR_STREAM);
    let mut params = ParamSet::new();
    let mut cin = 1;
    for i in 0..spec.levels {
        let c = spec.channels(i);
        params.push_weight(format!("enc{i}.weight"), &[c, cin, KERNEL, KERNEL, KERNEL], cin * TAPS, &mut rng);
        params.push_zeros(format!("enc{i}.bias"), &[c]);
        cin = c;
    }
    let (f, h) = (spec.flatten_len(), spec.fc_latent);
    params.push_weight("fc1.weight".into(), &[f, h], f, &mut rng);
    params.push_zeros("fc1.bias".into(), &[h]);
    params.push_weight("fc2.weight".into(), &[h, f], h, &mut rng);
    params.push_zeros("fc2.bias".into(), &[f]);
    for (j, (cin, cout)) in decoder_channels(&spec).into_iter().enumerate() {
        // transposed-conv weights are stored in the adjoint convolution's layout
        params.push_weight(
            format!("dec{j}.weight"),
            &[cin, cout, KERNEL, KERNEL, KERNEL],
            cin * TAPS / 8,
            &mut rng,
        );
        params.push_zeros(format!("dec{j}.bias"), &[cout]);
    }
    Ok(Generator { spec, params })
}

impl Generator {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Rebuilds a generator from stored parameters, checking names and shapes.
    pub fn from_params(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        let reference = build_generator(&spec, spec.seed)?;
        check_layout(reference.params(), &params)?;
        Ok(Self { spec, params })
    }

    /// Forward pass on a `[b, 1, n, n, n]` batch; returns probabilities of the same shape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.spec.resolution;
        let l = self.spec.levels;
        let x = as_volume_batch(x, n, "generator input")?;
        let b = x.shape()[0];
        let p = &self.params;

        let mut h = x;
        let mut pre_pool = Vec::with_capacity(l);
        for i in 0..l {
            let g = ConvGeom::same(KERNEL, 1, n >> i);
            let e = h.conv3d(p.get(2 * i), g).add_bias(p.get(2 * i + 1)).leaky_relu(LEAKY_SLOPE);
            h = e.max_pool2();
            pre_pool.push(e);
        }
        let pooled = h;

        let f = self.spec.flatten_len();
        let fc = 2 * l;
        let z = pooled
            .reshape(&[b, f])
            .matmul(p.get(fc))
            .add_bias(p.get(fc + 1))
            .relu()
            .matmul(p.get(fc + 2))
            .add_bias(p.get(fc + 3))
            .relu();
        let bs = self.spec.bottleneck_size();
        let mut h = z.reshape(&[b, self.spec.channels(l - 1), bs, bs, bs]);

        for j in 0..l {
            if self.spec.skip_connections {
                let skip = if j == 0 { &pooled } else { &pre_pool[l - j] };
                h = h.concat_ch(skip);
            }
            let g = ConvGeom::same(KERNEL, 2, bs << (j + 1));
            let k = fc + 4 + 2 * j;
            let u = h.conv3d_transpose(p.get(k), g).add_bias(p.get(k + 1));
            h = if j + 1 == l { u.sigmoid() } else { u.relu() };
        }
        Ok(h)
    }

    /// Inference on grids, `batch` at a time, without recording gradients.
    pub fn predict(&self, inputs: &[&OccupancyGrid], batch: usize) -> Result<Vec<OccupancyGrid>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(batch.max(1)) {
            let x = grids_to_tensor(chunk)?;
            let y = no_grad(|| self.forward(&x))?;
            out.extend(tensor_to_grids(&y)?);
        }
        Ok(out)
    }
}

/// Conditional critic mapping (condition, candidate) pairs to latent vectors in (0, 1).
#[derive(Debug, Clone)]
pub struct Discriminator {
    spec: ModelSpec,
    params: ParamSet,
}

/// Builds a critic with weights drawn from `seed`.
pub fn build_discriminator(spec: &ModelSpec, seed: u64) -> Result<Discriminator> {
    spec.validate()?;
    let mut spec = spec.clone();
    spec.seed = seed;
    let mut rng = init_rng(seed, DISCRIMINATOR_STREAM);
    let mut params = ParamSet::new();
    let mut cin = 2;
    for i in 0..spec.levels {
        let c = spec.channels(i);
        params.push_weight(format!("conv{i}.weight"), &[c, cin, KERNEL, KERNEL, KERNEL], cin * TAPS, &mut rng);
        params.push_zeros(format!("conv{i}.bias"), &[c]);
        cin = c;
    }
    Ok(Discriminator { spec, params })
}

impl Discriminator {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn from_params(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        let reference = build_discriminator(&spec, spec.seed)?;
        check_layout(reference.params(), &params)?;
        Ok(Self { spec, params })
    }

    /// Latent vectors `[b, latent_len]` for a batch of condition/candidate pairs.
    pub fn forward(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        let n = self.spec.resolution;
        let c = as_volume_batch(condition, n, "critic condition")?;
        let y = as_volume_batch(candidate, n, "critic candidate")?;
        if c.shape()[0] != y.shape()[0] {
            return Err(Error::Shape(format!(
                "critic batch mismatch: {} conditions, {} candidates",
                c.shape()[0],
                y.shape()[0]
            )));
        }
        let b = c.shape()[0];
        let l = self.spec.levels;
        let mut h = c.concat_ch(&y);
        for i in 0..l {
            let g = ConvGeom::same(KERNEL, 2, n >> i);
            let a = h.conv3d(self.params.get(2 * i), g).add_bias(self.params.get(2 * i + 1));
            h = if i + 1 == l { a.sigmoid() } else { a.relu() };
        }
        Ok(h.reshape(&[b, self.spec.latent_len()]))
    }
}

fn check_layout(reference: &ParamSet, got: &ParamSet) -> Result<()> {
    if reference.len() != got.len() {
        return Err(Error::Spec(format!(
            "expected {} parameter tensors, found {}",
            reference.len(),
            got.len()
        )));
    }
    for ((rn, rt), (gn, gt)) in reference
        .names()
        .iter()
        .zip(reference.tensors())
        .zip(got.names().iter().zip(got.tensors()))
    {
        if rn != gn || rt.shape() != gt.shape() {
            return Err(Error::Spec(format!(
                "parameter mismatch: expected {rn} {:?}, found {gn} {:?}",
                rt.shape(),
                gt.shape()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
