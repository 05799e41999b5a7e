//! Checkpoint container.
//!
//! ```text
//! "RGCK" | version: u32 LE | header length: u64 LE | JSON header | f64 LE payload
//! ```
//!
//! The header lists every tensor (name and shape) in payload order, plus the
//! model spec, training state and a `kind` of `training` or `inference`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainSpec;
use crate::error::{Error, Result};
use crate::nnarch::{Discriminator, Generator, ModelSpec, ParamSet};
use crate::optim::Adam;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Training,
    Inference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: CheckpointKind,
    model: ModelSpec,
    train: Option<TrainSpec>,
    step: u64,
    epoch: u64,
    batch_in_epoch: u64,
    gen_adam_t: u64,
    disc_adam_t: u64,
    tensors: Vec<TensorEntry>,
}

/// Optimizer and schedule state needed to resume training.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub train: TrainSpec,
    pub discriminator: Discriminator,
    pub gen_adam: Adam,
    pub disc_adam: Adam,
    pub step: u64,
    pub epoch: u64,
    pub batch_in_epoch: u64,
}

/// Decoded checkpoint: always a generator, plus training state for `Training` files.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub generator: Generator,
    pub training: Option<TrainingState>,
}

impl Checkpoint {
    pub fn model_spec(&self) -> &ModelSpec {
        self.generator.spec()
    }

    /// Refuses checkpoints whose architecture differs from `expected`.
    pub fn check_spec(&self, expected: &ModelSpec) -> Result<()> {
        let got = self.model_spec();
        if got.resolution != expected.resolution {
            return Err(Error::Spec(format!(
                "checkpoint resolution {} does not match requested {}",
                got.resolution, expected.resolution
            )));
        }
        let mut a = got.clone();
        let mut b = expected.clone();
        a.seed = 0;
        b.seed = 0;
        if a != b {
            return Err(Error::Spec(format!("checkpoint architecture {got:?} does not match {expected:?}")));
        }
        Ok(())
    }

    /// SHA-256 of the generator parameters.
    pub fn generator_digest(&self) -> String {
        self.generator.params().digest()
    }
}

struct Writer {
    entries: Vec<TensorEntry>,
    payload: Vec<u8>,
}

impl Writer {
    fn add(&mut self, name: String, shape: &[usize], data: &[f64]) {
        self.entries.push(TensorEntry {
            name,
            shape: shape.to_vec(),
        });
        for v in data {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn add_params(&mut self, prefix: &str, p: &ParamSet) {
        for (n, t) in p.names().iter().zip(p.tensors()) {
            self.add(format!("{prefix}.{n}"), t.shape(), t.data());
        }
    }

    fn add_adam(&mut self, prefix: &str, p: &ParamSet, a: &Adam) {
        for (i, (n, t)) in p.names().iter().zip(p.tensors()).enumerate() {
            self.add(format!("{prefix}.m.{n}"), t.shape(), &a.m[i]);
            self.add(format!("{prefix}.v.{n}"), t.shape(), &a.v[i]);
        }
    }
}

fn encode(header: &Header, payload: &[u8]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Checkpoint(format!("header encoding failed: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Serializes a full training state.
pub fn encode_training(generator: &Generator, state: &TrainingState) -> Result<Vec<u8>> {
    let mut w = Writer {
        entries: Vec::new(),
        payload: Vec::new(),
    };
    w.add_params("generator", generator.params());
    w.add_params("discriminator", state.discriminator.params());
    w.add_adam("adam.generator", generator.params(), &state.gen_adam);
    w.add_adam("adam.discriminator", state.discriminator.params(), &state.disc_adam);
    let header = Header {
        kind: CheckpointKind::Training,
        model: generator.spec().clone(),
        train: Some(state.train.clone()),
        step: state.step,
        epoch: state.epoch,
        batch_in_epoch: state.batch_in_epoch,
        gen_adam_t: state.gen_adam.t,
        disc_adam_t: state.disc_adam.t,
        tensors: w.entries,
    };
    encode(&header, &w.payload)
}

/// Serializes only the generator weights.
pub fn encode_inference(generator: &Generator) -> Result<Vec<u8>> {
    let mut w = Writer {
        entries: Vec::new(),
        payload: Vec::new(),
    };
    w.add_params("generator", generator.params());
    let header = Header {
        kind: CheckpointKind::Inference,
        model: generator.spec().clone(),
        train: None,
        step: 0,
        epoch: 0,
        batch_in_epoch: 0,
        gen_adam_t: 0,
        disc_adam_t: 0,
        tensors: w.entries,
    };
    encode(&header, &w.payload)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let fail = |m: String| Error::Checkpoint(m);
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!(
            "unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(fail("truncated header".into()));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| fail(format!("malformed header: {e}")))?;
    header.model.validate()?;
    let payload = &body[hlen..];
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(fail(format!(
            "payload holds {} bytes, header describes {}",
            payload.len(),
            total * 8
        )));
    }

    let mut tensors = header.tensors.iter();
    let mut offset = 0usize;
    let mut take = |prefix: &str, reference: &ParamSet| -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (name, t) in reference.names().iter().zip(reference.tensors()) {
            let e = tensors
                .next()
                .ok_or_else(|| fail(format!("missing tensor {prefix}.{name}")))?;
            let expected = format!("{prefix}.{name}");
            if e.name != expected || e.shape != t.shape() {
                return Err(Error::Spec(format!(
                    "checkpoint tensor {} {:?} does not match expected {expected} {:?}",
                    e.name,
                    e.shape,
                    t.shape()
                )));
            }
            let n: usize = e.shape.iter().product();
            let data = payload[offset * 8..(offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset += n;
            out.push(name.clone(), &e.shape, data);
        }
        Ok(out)
    };

    let spec = header.model.clone();
    let gen_ref = crate::nnarch::build_generator(&spec, spec.seed)?;
    let gen_params = take("generator", gen_ref.params())?;
    let generator = Generator::from_params(spec.clone(), gen_params)?;
    if header.kind == CheckpointKind::Inference {
        return Ok(Checkpoint {
            kind: header.kind,
            generator,
            training: None,
        });
    }
    let train = header.train.clone().ok_or_else(|| fail("training checkpoint without train spec".into()))?;
    let disc_ref = crate::nnarch::build_discriminator(&spec, spec.seed)?;
    let disc_params = take("discriminator", disc_ref.params())?;
    let discriminator = Discriminator::from_params(disc_ref.spec().clone(), disc_params)?;
    let mut adam_of = |prefix: &str, params: &ParamSet, t: u64| -> Result<Adam> {
        let mut a = Adam::new(train.adam, params);
        a.t = t;
        for i in 0..params.len() {
            let single = |p: &ParamSet| {
                let mut s = ParamSet::new();
                s.push(p.names()[i].clone(), p.get(i).shape(), p.get(i).to_vec());
                s
            };
            let m = take(&format!("{prefix}.m"), &single(params))?;
            let v = take(&format!("{prefix}.v"), &single(params))?;
            a.m[i] = m.get(0).to_vec();
            a.v[i] = v.get(0).to_vec();
        }
        Ok(a)
    };
    let gen_adam = adam_of("adam.generator", generator.params(), header.gen_adam_t)?;
    let disc_adam = adam_of("adam.discriminator", discriminator.params(), header.disc_adam_t)?;
    Ok(Checkpoint {
        kind: header.kind,
        generator,
        training: Some(TrainingState {
            train,
            discriminator,
            gen_adam,
            disc_adam,
            step: header.step,
            epoch: header.epoch,
            batch_in_epoch: header.batch_in_epoch,
        }),
    })
}

pub fn save_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// SHA-256 of a checkpoint file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
