//! Alternating critic/generator optimization, logging and checkpoints.

mod checkpoint;
mod log;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{grad, no_grad, Tensor};
use crate::dataset::{permutation, Batch, InMemoryDataset};
use crate::error::{Error, Result};
use crate::losses::{self, gradient_penalty_grads, GpInterpolant, LossWeights, PenaltyMode};
use crate::nnarch::{build_discriminator, build_generator, Discriminator, Generator, ModelSpec};
use crate::optim::{Adam, AdamConfig};

pub use checkpoint::{
    decode_checkpoint, encode_inference, encode_training, file_digest, load_checkpoint, Checkpoint, CheckpointKind,
    TrainingState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use log::{append_log, LogRecord, TrainLog, LOG_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning rate during the first epoch.
    pub lr_first_epoch: f64,
    /// Learning rate for every later epoch.
    pub lr_later: f64,
    pub epochs: u64,
    /// Stop after this many generator steps, if set.
    pub max_steps: Option<u64>,
    pub weights: LossWeights,
    pub seed: u64,
    /// Checkpoint every this many epochs (0 disables periodic checkpoints).
    pub checkpoint_every: u64,
    pub penalty_mode: PenaltyMode,
    /// Reconstruction loss only: `beta` is forced to 1 and the critic is not trained.
    pub ae_only: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 8,
            adam: AdamConfig::default(),
            lr_first_epoch: 5e-4,
            lr_later: 1e-4,
            epochs: 1,
            max_steps: None,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 1,
            penalty_mode: PenaltyMode::Exact,
            ae_only: false,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be at least 1".into()));
        }
        for (name, v) in [("lr_first_epoch", self.lr_first_epoch), ("lr_later", self.lr_later)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps.is_nan() || a.eps <= 0.0 {
            return Err(Error::Argument("Adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        self.effective_weights().validate()
    }

    /// Loss weights with `beta = 1` in reconstruction-only mode.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.ae_only {
            w.beta = 1.0;
        }
        w
    }

    /// Learning rate for a 0-based epoch index.
    pub fn lr_for_epoch(&self, epoch: u64) -> f64 {
        if epoch == 0 {
            self.lr_first_epoch
        } else {
            self.lr_later
        }
    }

    /// Whether the critic is updated at all.
    pub fn trains_critic(&self) -> bool {
        self.effective_weights().beta < 1.0
    }
}

/// Which network a step updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    D,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStep {
    pub l_d: f64,
    pub gp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorStep {
    pub l_ae: f64,
    pub l_gan_g: f64,
    pub l_g: f64,
}

/// Training state for one generator/critic pair.
#[derive(Debug)]
pub struct Trainer {
    spec: TrainSpec,
    generator: Generator,
    discriminator: Discriminator,
    gen_adam: Adam,
    disc_adam: Adam,
    step: u64,
    epoch: u64,
    batch_in_epoch: u64,
    log: TrainLog,
    phases: Vec<Phase>,
    started: Instant,
}

impl Trainer {
    /// Fresh networks initialized from `train.seed`.
    pub fn new(model: &ModelSpec, train: TrainSpec) -> Result<Self> {
        train.validate()?;
        let generator = build_generator(model, train.seed)?;
        let discriminator = build_discriminator(model, train.seed)?;
        Ok(Self::from_parts(train, generator, discriminator))
    }

    fn from_parts(train: TrainSpec, generator: Generator, discriminator: Discriminator) -> Self {
        let gen_adam = Adam::new(train.adam, generator.params());
        let disc_adam = Adam::new(train.adam, discriminator.params());
        Self {
            spec: train,
            generator,
            discriminator,
            gen_adam,
            disc_adam,
            step: 0,
            epoch: 0,
            batch_in_epoch: 0,
            log: TrainLog::default(),
            phases: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Resumes from a training checkpoint.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let state = ckpt
            .training
            .ok_or_else(|| Error::Checkpoint("inference-only checkpoint cannot resume training".into()))?;
        let mut t = Self::from_parts(state.train, ckpt.generator, state.discriminator);
        t.gen_adam = state.gen_adam;
        t.disc_adam = state.disc_adam;
        t.step = state.step;
        t.epoch = state.epoch;
        t.batch_in_epoch = state.batch_in_epoch;
        Ok(t)
    }

    pub fn spec(&self) -> &TrainSpec {
        &self.spec
    }

    pub fn spec_mut(&mut self) -> &mut TrainSpec {
        &mut self.spec
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn phase_trace(&self) -> &[Phase] {
        &self.phases
    }

    pub fn current_lr(&self) -> f64 {
        self.spec.lr_for_epoch(self.epoch)
    }

    fn non_finite(&self, batch: &Batch, l_d: f64, l_g: f64) -> Error {
        Error::NonFinite {
            step: self.step,
            epoch: self.epoch,
            l_d,
            l_g,
            batch: batch.indices.clone(),
        }
    }

    /// One critic update on `batch`; the generator is left untouched.
    pub fn train_step_d(&mut self, batch: &Batch) -> Result<CriticStep> {
        let (x, _) = batch.tensors()?;
        let fake = no_grad(|| self.generator.forward(&x))?;
        self.train_step_d_with(batch, &fake)
    }

    /// Critic update against an explicit fake completion of `batch.partial`.
    pub fn train_step_d_with(&mut self, batch: &Batch, fake: &Tensor) -> Result<CriticStep> {
        let (x, y) = batch.tensors()?;
        if fake.shape() != y.shape() {
            return Err(Error::Shape(format!(
                "fake batch {:?} does not match real batch {:?}",
                fake.shape(),
                y.shape()
            )));
        }
        let fake = fake.detach();
        let w = self.spec.effective_weights();
        let d = &self.discriminator;
        let real_l = d.forward(&x, &y)?;
        let fake_l = d.forward(&x, &fake)?;
        let params = d.params().refs();
        let (a, b) = match w.gp_interpolant {
            GpInterpolant::RealFake => (&y, &fake),
            GpInterpolant::InputFake => (&x, &fake),
        };
        let eps = losses::draw_epsilons(self.spec.seed, self.step, batch.len());

        let (l_d, gp, grads) = if w.lambda == 0.0 {
            let l = losses::l_gan_d(&real_l, &fake_l, &Tensor::scalar(0.0), 0.0)?;
            let g = grad(&l, &params, false)?;
            (l.item(), 0.0, g.iter().map(Tensor::to_vec).collect::<Vec<_>>())
        } else {
            match self.spec.penalty_mode {
                PenaltyMode::Exact => {
                    let gp = losses::gradient_penalty(d, &x, a, b, &eps)?;
                    let l = losses::l_gan_d(&real_l, &fake_l, &gp, w.lambda)?;
                    let g = grad(&l, &params, false)?;
                    (l.item(), gp.item(), g.iter().map(Tensor::to_vec).collect())
                }
                mode => {
                    let pg = gradient_penalty_grads(d, &x, a, b, &eps, mode)?;
                    let base = losses::l_gan_d(&real_l, &fake_l, &Tensor::scalar(0.0), 0.0)?;
                    let g = grad(&base, &params, false)?;
                    let grads = g
                        .iter()
                        .zip(&pg.grads)
                        .map(|(gb, gp)| gb.data().iter().zip(gp).map(|(u, v)| u + w.lambda * v).collect())
                        .collect();
                    (base.item() + w.lambda * pg.value, pg.value, grads)
                }
            }
        };
        if !l_d.is_finite() || grads.iter().flatten().any(|v: &f64| !v.is_finite()) {
            return Err(self.non_finite(batch, l_d, f64::NAN));
        }
        let lr = self.current_lr();
        self.disc_adam.step(self.discriminator.params_mut(), &grads, lr)?;
        self.phases.push(Phase::D);
        Ok(CriticStep { l_d, gp })
    }

    /// One generator update on `batch`; the critic is left untouched.
    pub fn train_step_g(&mut self, batch: &Batch) -> Result<GeneratorStep> {
        let (x, y) = batch.tensors()?;
        let w = self.spec.effective_weights();
        let out = self.generator.forward(&x)?;
        let l_ae = losses::l_ae(&out, &y, w.alpha)?;
        let l_gan_g = if w.beta < 1.0 {
            losses::l_gan_g(&self.discriminator.forward(&x, &out)?)?
        } else {
            Tensor::scalar(0.0)
        };
        let l_g = losses::l_g(&l_ae, &l_gan_g, w.beta);
        let stats = GeneratorStep {
            l_ae: l_ae.item(),
            l_gan_g: l_gan_g.item(),
            l_g: l_g.item(),
        };
        let grads: Vec<Vec<f64>> = grad(&l_g, &self.generator.params().refs(), false)?
            .iter()
            .map(Tensor::to_vec)
            .collect();
        if !stats.l_g.is_finite() || grads.iter().flatten().any(|v| !v.is_finite()) {
            return Err(self.non_finite(batch, f64::NAN, stats.l_g));
        }
        let lr = self.current_lr();
        self.gen_adam.step(self.generator.params_mut(), &grads, lr)?;
        self.phases.push(Phase::G);
        Ok(stats)
    }

    /// Critic step (unless reconstruction-only) then generator step, logged.
    pub fn train_batch(&mut self, batch: &Batch) -> Result<LogRecord> {
        let lr = self.current_lr();
        let d = if self.spec.trains_critic() {
            Some(self.train_step_d(batch)?)
        } else {
            None
        };
        let g = self.train_step_g(batch).map_err(|e| match e {
            Error::NonFinite {
                step, epoch, l_g, batch, ..
            } => Error::NonFinite {
                step,
                epoch,
                l_d: d.map(|d| d.l_d).unwrap_or(f64::NAN),
                l_g,
                batch,
            },
            other => other,
        })?;
        self.step += 1;
        let rec = LogRecord {
            step: self.step,
            epoch: self.epoch + 1,
            l_d: d.map(|d| d.l_d),
            l_ae: g.l_ae,
            l_gan_g: g.l_gan_g,
            l_g: g.l_g,
            lr,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.log.push(rec.clone());
        Ok(rec)
    }

    /// Batches of one epoch in visiting order.
    pub fn epoch_batches(&self, n: usize, epoch: u64) -> Vec<Vec<usize>> {
        let perm = permutation(n, self.spec.seed.wrapping_add(epoch));
        perm.chunks(self.spec.batch_size).map(<[usize]>::to_vec).collect()
    }

    fn finished(&self) -> bool {
        self.epoch >= self.spec.epochs || self.spec.max_steps.is_some_and(|m| self.step >= m)
    }

    /// Trains until `epochs` or `max_steps` is reached.
    ///
    /// With `out_dir`, appends every record to `train_log.csv`, writes
    /// `checkpoint_epoch<k>.rgck` at the configured cadence and `final.rgck` at the end.
    pub fn run(&mut self, data: &InMemoryDataset, out_dir: Option<&Path>) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        let n = self.generator.spec().resolution;
        if data.manifest.resolution != n {
            return Err(Error::Spec(format!(
                "dataset resolution {} does not match model resolution {n}",
                data.manifest.resolution
            )));
        }
        let log_path = out_dir.map(|d| d.join("train_log.csv"));
        if let Some(d) = out_dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        while !self.finished() {
            let batches = self.epoch_batches(data.len(), self.epoch);
            while (self.batch_in_epoch as usize) < batches.len() {
                if self.spec.max_steps.is_some_and(|m| self.step >= m) {
                    break;
                }
                let batch = data.batch(&batches[self.batch_in_epoch as usize])?;
                let rec = self.train_batch(&batch)?;
                self.batch_in_epoch += 1;
                if let Some(p) = &log_path {
                    append_log(p, std::slice::from_ref(&rec))?;
                }
                ::log::debug!(
                    "step {} epoch {} l_d {:?} l_ae {:.5} l_g {:.5}",
                    rec.step,
                    rec.epoch,
                    rec.l_d,
                    rec.l_ae,
                    rec.l_g
                );
            }
            if (self.batch_in_epoch as usize) < batches.len() {
                break;
            }
            self.epoch += 1;
            self.batch_in_epoch = 0;
            if let Some(r) = self.log.records.last() {
                ::log::info!(
                    "epoch {} finished at step {}: l_d {:?} l_ae {:.5} l_g {:.5}",
                    self.epoch,
                    r.step,
                    r.l_d,
                    r.l_ae,
                    r.l_g
                );
            }
            if let Some(d) = out_dir {
                if self.spec.checkpoint_every > 0 && self.epoch.is_multiple_of(self.spec.checkpoint_every) {
                    self.save_checkpoint(&d.join(format!("checkpoint_epoch{}.rgck", self.epoch)))?;
                }
            }
        }
        if let Some(d) = out_dir {
            self.save_checkpoint(&d.join("final.rgck"))?;
        }
        Ok(())
    }

    pub fn training_state(&self) -> TrainingState {
        TrainingState {
            train: self.spec.clone(),
            discriminator: self.discriminator.clone(),
            gen_adam: self.gen_adam.clone(),
            disc_adam: self.disc_adam.clone(),
            step: self.step,
            epoch: self.epoch,
            batch_in_epoch: self.batch_in_epoch,
        }
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        encode_training(&self.generator, &self.training_state())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint::save_bytes(path, &self.checkpoint_bytes()?)
    }

    /// Writes a generator-only file for inference.
    pub fn export_inference(&self, path: &Path) -> Result<()> {
        checkpoint::save_bytes(path, &encode_inference(&self.generator)?)
    }
}

/// Writes a generator-only file derived from a training checkpoint.
pub fn export_inference(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    checkpoint::save_bytes(path, &encode_inference(&ckpt.generator)?)
}

/// Default location of the log inside a run directory.
pub fn log_path(run_dir: &Path) -> PathBuf {
    run_dir.join("train_log.csv")
}
