//! Reconstruction, adversarial and gradient-penalty objectives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad, no_grad, Tensor};
use crate::error::{Error, Result};
use crate::nnarch::Discriminator;
use crate::voxelgrid::DEFAULT_CLAMP_EPS;

/// Endpoints of the gradient-penalty interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpInterpolant {
    /// Between the ground truth and the generated grid.
    #[default]
    RealFake,
    /// Between the partial-view input and the generated grid.
    InputFake,
}

impl fmt::Display for GpInterpolant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RealFake => "real_fake",
            Self::InputFake => "input_fake",
        })
    }
}

impl FromStr for GpInterpolant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_fake" => Ok(Self::RealFake),
            "input_fake" => Ok(Self::InputFake),
            _ => Err(Error::Argument(format!(
                "unknown interpolant '{s}' (expected real_fake or input_fake)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the occupied-voxel term in the reconstruction loss.
    pub alpha: f64,
    /// Share of the reconstruction loss in the generator objective.
    pub beta: f64,
    /// Gradient-penalty coefficient.
    pub lambda: f64,
    pub gp_interpolant: GpInterpolant,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            beta: 0.05,
            lambda: 10.0,
            gp_interpolant: GpInterpolant::RealFake,
        }
    }
}

impl LossWeights {
    /// `alpha` in (0, 1), `beta` in [0, 1], `lambda >= 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Argument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Argument(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_nonempty(t: &Tensor, what: &str) -> Result<()> {
    if t.numel() == 0 || t.shape().first() == Some(&0) {
        return Err(Error::Shape(format!("{what}: empty batch")));
    }
    Ok(())
}

/// Weighted cross-entropy: mean of `-a*y*ln(p) - (1-a)*(1-y)*ln(1-p)` with
/// `p` clamped into `[eps, 1 - eps]`.
pub fn l_ae(pred: &Tensor, target: &Tensor, alpha: f64) -> Result<Tensor> {
    check_same(pred, target, "l_ae")?;
    check_nonempty(pred, "l_ae")?;
    let eps = DEFAULT_CLAMP_EPS;
    let p = pred.clamp(eps, 1.0 - eps);
    let y = target.detach();
    let not_y = Tensor::constant(y.shape(), y.data().iter().map(|v| 1.0 - v).collect());
    let pos = y.mul(&p.log()).scale(alpha);
    let neg = not_y.mul(&p.neg().add_scalar(1.0).log()).scale(1.0 - alpha);
    Ok(pos.add(&neg).mean().neg())
}

/// Generator adversarial loss: negated mean latent response to fakes.
pub fn l_gan_g(fake_latents: &Tensor) -> Result<Tensor> {
    check_nonempty(fake_latents, "l_gan_g")?;
    Ok(fake_latents.mean().neg())
}

/// Critic loss `mean(fake) - mean(real) + lambda * gp`.
pub fn l_gan_d(real_latents: &Tensor, fake_latents: &Tensor, gp: &Tensor, lambda: f64) -> Result<Tensor> {
    check_nonempty(real_latents, "l_gan_d")?;
    check_nonempty(fake_latents, "l_gan_d")?;
    if real_latents.shape()[0] != fake_latents.shape()[0] {
        return Err(Error::Shape(format!(
            "l_gan_d: {} real vs {} fake samples",
            real_latents.shape()[0],
            fake_latents.shape()[0]
        )));
    }
    Ok(fake_latents.mean().sub(&real_latents.mean()).add(&gp.reshape(&[1]).scale(lambda)))
}

/// Joint generator objective `beta * l_ae + (1 - beta) * l_gan_g`.
pub fn l_g(l_ae: &Tensor, l_gan_g: &Tensor, beta: f64) -> Tensor {
    l_ae.reshape(&[1]).scale(beta).add(&l_gan_g.reshape(&[1]).scale(1.0 - beta))
}

/// A conditional critic usable in the gradient penalty.
pub trait Critic {
    /// Latent responses `[b, len]` for a batch of pairs.
    fn latent(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor>;
    fn parameters(&self) -> Vec<&Tensor>;
    /// Whether gradients of input gradients can be formed.
    fn supports_double_backward(&self) -> bool {
        true
    }
}

impl Critic for Discriminator {
    fn latent(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        self.forward(condition, candidate)
    }

    fn parameters(&self) -> Vec<&Tensor> {
        self.params().refs()
    }
}

/// Critic whose latent is the single value `<w, candidate>`.
#[derive(Debug, Clone)]
pub struct LinearCritic {
    pub weights: Tensor,
    pub double_backward: bool,
}

impl LinearCritic {
    pub fn new(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self {
            weights: Tensor::variable(&[n, 1], weights),
            double_backward: true,
        }
    }
}

impl Critic for LinearCritic {
    fn latent(&self, _condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        let b = candidate.shape()[0];
        let v = candidate.numel() / b.max(1);
        if v != self.weights.numel() {
            return Err(Error::Shape(format!(
                "linear critic expects {} values per sample, got {v}",
                self.weights.numel()
            )));
        }
        Ok(candidate.reshape(&[b, v]).matmul(&self.weights))
    }

    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weights]
    }

    fn supports_double_backward(&self) -> bool {
        self.double_backward
    }
}

/// One uniform `[0, 1)` draw per sample, keyed on `(seed, step)`.
pub fn draw_epsilons(seed: u64, step: u64, batch: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    (0..batch).map(|_| rng.gen::<f64>()).collect()
}

/// Per-sample `eps * a + (1 - eps) * b`, detached from both endpoints.
pub fn interpolate(a: &Tensor, b: &Tensor, epsilons: &[f64]) -> Result<Tensor> {
    check_same(a, b, "interpolate")?;
    let n = a.shape()[0];
    if epsilons.len() != n {
        return Err(Error::Shape(format!("{} epsilon draws for {n} samples", epsilons.len())));
    }
    let v = a.numel() / n.max(1);
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .enumerate()
        .map(|(i, (x, y))| {
            let e = epsilons[i / v];
            e * x + (1.0 - e) * y
        })
        .collect();
    Ok(Tensor::constant(a.shape(), data))
}

/// Per-sample input gradients of `sum_b mean(latent_b)`, with optional graph.
fn input_gradients(critic: &dyn Critic, condition: &Tensor, y_hat: &Tensor, create_graph: bool) -> Result<Tensor> {
    let y = Tensor::variable(y_hat.shape(), y_hat.to_vec());
    let score = critic.latent(condition, &y)?.mean_inner().sum();
    Ok(grad(&score, &[&y], create_graph)?.remove(0))
}

/// Gradient penalty `mean_b (|g_b| - 1)^2` at the interpolants between
/// `endpoint_a` and `endpoint_b`, where `g_b` is the gradient of sample `b`'s
/// mean latent with respect to its candidate.
///
/// The result is differentiable with respect to the critic parameters.
pub fn gradient_penalty(
    critic: &dyn Critic,
    condition: &Tensor,
    endpoint_a: &Tensor,
    endpoint_b: &Tensor,
    epsilons: &[f64],
) -> Result<Tensor> {
    if !critic.supports_double_backward() {
        return Err(Error::Capability(
            "gradient penalty training needs a critic with second-order gradients; use the finite-difference mode"
                .into(),
        ));
    }
    check_same(condition, endpoint_a, "gradient_penalty")?;
    let y_hat = interpolate(endpoint_a, endpoint_b, epsilons)?;
    let g = input_gradients(critic, condition, &y_hat, true)?;
    let norms = g.square().sum_inner().add_scalar(NORM_EPS).sqrt();
    Ok(norms.add_scalar(-1.0).square().mean())
}

/// Added under the square root so the norm stays differentiable at zero.
pub const NORM_EPS: f64 = 1e-12;

/// How parameter gradients of the penalty are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Double backward through the critic.
    #[default]
    Exact,
    /// Central difference of parameter gradients along the penalty direction
    /// in input space, with step `h`. Needs only first-order gradients.
    FiniteDifference { h: f64 },
}


/// Penalty value and its gradient with respect to each critic parameter.
#[derive(Debug, Clone)]
pub struct PenaltyGradients {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

pub fn gradient_penalty_grads(
    critic: &dyn Critic,
    condition: &Tensor,
    endpoint_a: &Tensor,
    endpoint_b: &Tensor,
    epsilons: &[f64],
    mode: PenaltyMode,
) -> Result<PenaltyGradients> {
    match mode {
        PenaltyMode::Exact => {
            let gp = gradient_penalty(critic, condition, endpoint_a, endpoint_b, epsilons)?;
            let grads = grad(&gp, &critic.parameters(), false)?;
            Ok(PenaltyGradients {
                value: gp.item(),
                grads: grads.iter().map(Tensor::to_vec).collect(),
            })
        }
        PenaltyMode::FiniteDifference { h } => {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Argument(format!("finite-difference step must be positive, got {h}")));
            }
            check_same(condition, endpoint_a, "gradient_penalty")?;
            let y_hat = interpolate(endpoint_a, endpoint_b, epsilons)?;
            let g = input_gradients(critic, condition, &y_hat, false)?;
            let b = y_hat.shape()[0];
            let v = y_hat.numel() / b;
            let mut value = 0.0;
            // u_b = d gp / d g_b = 2 (|g_b| - 1) g_b / (|g_b| B)
            let mut u = vec![0.0; y_hat.numel()];
            for s in 0..b {
                let gs = &g.data()[s * v..(s + 1) * v];
                let norm = (gs.iter().map(|x| x * x).sum::<f64>() + NORM_EPS).sqrt();
                value += (norm - 1.0).powi(2) / b as f64;
                let c = 2.0 * (norm - 1.0) / (norm * b as f64);
                for (ui, gi) in u[s * v..(s + 1) * v].iter_mut().zip(gs) {
                    *ui = c * gi;
                }
            }
            let shifted = |sign: f64| -> Result<Vec<Vec<f64>>> {
                let data = y_hat.data().iter().zip(&u).map(|(y, d)| y + sign * h * d).collect();
                let point = Tensor::constant(y_hat.shape(), data);
                let score = critic.latent(condition, &point)?.mean_inner().sum();
                Ok(grad(&score, &critic.parameters(), false)?.iter().map(Tensor::to_vec).collect())
            };
            let plus = shifted(1.0)?;
            let minus = shifted(-1.0)?;
            let grads = plus
                .iter()
                .zip(&minus)
                .map(|(p, m)| p.iter().zip(m).map(|(a, c)| (a - c) / (2.0 * h)).collect())
                .collect();
            Ok(PenaltyGradients { value, grads })
        }
    }
}

/// Scalar value of a loss evaluated without recording gradients.
pub fn value_of(f: impl FnOnce() -> Result<Tensor>) -> Result<f64> {
    Ok(no_grad(f)?.item())
}
