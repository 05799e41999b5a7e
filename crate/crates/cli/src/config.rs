//! Flat `key=value` run configuration.
//!
//! Values are layered: built-in defaults, then a config file, then
//! `--set KEY=VALUE` overrides, then dedicated command-line flags. Every key is
//! listed in [`KEYS`]; anything else is rejected.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use recgan::dataset::{Split, SynthConfig};
use recgan::evalharness::ExperimentMode;
use recgan::losses::{GpInterpolant, LossWeights, PenaltyMode};
use recgan::meshscan::PinholeCamera;
use recgan::nnarch::ModelSpec;
use recgan::optim::AdamConfig;
use recgan::train::TrainSpec;

/// Key, default value and description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "none", "master seed for initialization, shuffling and penalty draws; drawn and printed when absent"),
    ("resolution", "16", "grid edge N (power of two); follows the dataset when not set"),
    ("views_per_axis", "5", "poses per rotation axis during synthesis (K^3 views per mesh)"),
    ("solid", "false", "fill enclosed interiors of synthesized ground truth"),
    ("split", "train", "dataset split tag written by synth (train or test)"),
    ("camera_width", "128", "depth image width in pixels"),
    ("camera_height", "128", "depth image height in pixels"),
    ("camera_focal", "140", "focal length in pixels"),
    ("camera_distance", "1.8", "camera distance from the object center"),
    ("base_channels", "8", "encoder channels at the first level"),
    ("channel_cap", "512", "upper bound on channels per level"),
    ("fc_latent", "auto", "width of the first fully connected layer (auto = half the flattened bottleneck)"),
    ("skip_connections", "true", "concatenate encoder features onto the decoder"),
    ("batch_size", "8", "pairs per optimization step"),
    ("lr_first_epoch", "0.0005", "learning rate during the first epoch"),
    ("lr_later", "0.0001", "learning rate after the first epoch"),
    ("adam_beta1", "0.9", "Adam first-moment decay"),
    ("adam_beta2", "0.999", "Adam second-moment decay"),
    ("adam_eps", "1e-8", "Adam denominator epsilon"),
    ("epochs", "1", "passes over the training manifest"),
    ("max_steps", "none", "stop after this many generator steps"),
    ("alpha", "0.85", "false-negative weight of the reconstruction loss"),
    ("beta", "0.05", "weight of the reconstruction loss in the generator objective"),
    ("lambda", "10", "gradient penalty coefficient"),
    ("gp_interpolant", "real_fake", "penalty interpolation endpoints (real_fake or input_fake)"),
    ("penalty_mode", "exact", "penalty gradients: exact (double backward) or finite_difference"),
    ("fd_step", "0.0001", "input-space step for the finite_difference penalty mode"),
    ("checkpoint_every", "1", "checkpoint cadence in epochs (0 disables periodic checkpoints)"),
    ("ae_only", "false", "reconstruction loss only; forces beta to 1 and skips the critic"),
    ("threshold", "0.5", "occupancy threshold p for IoU"),
    ("mode", "per_category", "experiment mode: per_category, multi_category or cross"),
    ("train_categories", "chair", "comma-separated training categories"),
    ("test_categories", "chair", "comma-separated test categories"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// Resolved configuration in [`KEYS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: Vec<String>,
    explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(_, v, _)| v.to_string()).collect(),
            explicit: BTreeSet::new(),
        }
    }
}

fn slot(key: &str) -> Result<(usize, &'static str)> {
    KEYS.iter()
        .position(|(k, _, _)| *k == key)
        .map(|i| (i, KEYS[i].0))
        .ok_or_else(|| ConfigError(format!("unknown configuration key '{key}' (run `recgan keys` for the list)")))
}

impl RunConfig {
    /// Sets `key`, validating the value's type immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (i, k) = slot(key)?;
        let previous = std::mem::replace(&mut self.values[i], value.trim().to_string());
        if let Err(e) = self.check(k) {
            self.values[i] = previous;
            return Err(e);
        }
        self.explicit.insert(k);
        Ok(())
    }

    /// Parses `KEY=VALUE`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("expected KEY=VALUE, got '{pair}'")))?;
        self.set(k.trim(), v)
    }

    /// Applies a config file: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| ConfigError(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> &str {
        let (i, _) = slot(key).expect("known key");
        &self.values[i]
    }

    /// Whether a file, override or flag provided the key.
    pub fn is_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Every key as `key=value`, loadable again with [`RunConfig::apply_text`].
    pub fn render(&self) -> String {
        KEYS.iter()
            .zip(&self.values)
            .map(|((k, _, _), v)| format!("{k}={v}\n"))
            .collect()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        v.parse::<T>()
            .map_err(|e| ConfigError(format!("invalid value '{v}' for {key}: {e}")))
    }

    fn optional<T: FromStr>(&self, key: &str, sentinel: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.get(key) == sentinel {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn check(&self, key: &str) -> Result<()> {
        match key {
            "seed" | "max_steps" => self.optional::<u64>(key, "none").map(drop),
            "fc_latent" => self.optional::<usize>(key, "auto").map(drop),
            "resolution" | "views_per_axis" | "camera_width" | "camera_height" | "base_channels" | "channel_cap"
            | "batch_size" => self.parse::<usize>(key).map(drop),
            "epochs" | "checkpoint_every" => self.parse::<u64>(key).map(drop),
            "solid" | "skip_connections" | "ae_only" => self.parse::<bool>(key).map(drop),
            "split" => self.parse::<Split>(key).map(drop),
            "gp_interpolant" => self.parse::<GpInterpolant>(key).map(drop),
            "mode" => self.parse::<ExperimentMode>(key).map(drop),
            "penalty_mode" => match self.get(key) {
                "exact" | "finite_difference" => Ok(()),
                v => Err(ConfigError(format!(
                    "invalid value '{v}' for penalty_mode (expected exact or finite_difference)"
                ))),
            },
            "train_categories" | "test_categories" => {
                if self.categories(key).is_empty() {
                    Err(ConfigError(format!("{key} must name at least one category")))
                } else {
                    Ok(())
                }
            }
            _ => self.parse::<f64>(key).map(drop),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.optional("seed", "none").expect("checked on set")
    }

    /// Returns the seed, drawing and recording a fresh one when absent.
    pub fn ensure_seed(&mut self) -> (u64, bool) {
        match self.seed() {
            Some(s) => (s, false),
            None => {
                let s: u64 = rand::random::<u64>() >> 11;
                self.set("seed", &s.to_string()).expect("valid seed");
                (s, true)
            }
        }
    }

    pub fn resolution(&self) -> usize {
        self.parse("resolution").expect("checked on set")
    }

    pub fn threshold(&self) -> f64 {
        self.parse("threshold").expect("checked on set")
    }

    pub fn categories(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn mode(&self) -> ExperimentMode {
        self.parse("mode").expect("checked on set")
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            resolution: self.resolution(),
            n_per_axis: self.parse("views_per_axis").expect("checked on set"),
            camera: PinholeCamera::new(
                self.parse("camera_width").expect("checked on set"),
                self.parse("camera_height").expect("checked on set"),
                self.parse("camera_focal").expect("checked on set"),
                self.parse("camera_distance").expect("checked on set"),
            ),
            solid: self.parse("solid").expect("checked on set"),
        }
    }

    pub fn split(&self) -> Split {
        self.parse("split").expect("checked on set")
    }

    pub fn model_spec(&self) -> recgan::Result<ModelSpec> {
        let seed = self.seed().unwrap_or(0);
        let mut spec = ModelSpec::for_resolution(
            self.resolution(),
            self.parse("base_channels").expect("checked on set"),
            seed,
        )?;
        spec.channel_cap = self.parse("channel_cap").expect("checked on set");
        spec.skip_connections = self.parse("skip_connections").expect("checked on set");
        spec.fc_latent = match self.optional::<usize>("fc_latent", "auto").expect("checked on set") {
            Some(w) => w,
            None => (spec.flatten_len() / 2).max(1),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_spec(&self) -> recgan::Result<TrainSpec> {
        let f = |k: &str| -> f64 { self.parse(k).expect("checked on set") };
        let penalty_mode = match self.get("penalty_mode") {
            "exact" => PenaltyMode::Exact,
            _ => PenaltyMode::FiniteDifference { h: f("fd_step") },
        };
        let spec = TrainSpec {
            batch_size: self.parse("batch_size").expect("checked on set"),
            adam: AdamConfig {
                beta1: f("adam_beta1"),
                beta2: f("adam_beta2"),
                eps: f("adam_eps"),
            },
            lr_first_epoch: f("lr_first_epoch"),
            lr_later: f("lr_later"),
            epochs: self.parse("epochs").expect("checked on set"),
            max_steps: self.optional("max_steps", "none").expect("checked on set"),
            weights: LossWeights {
                alpha: f("alpha"),
                beta: f("beta"),
                lambda: f("lambda"),
                gp_interpolant: self.parse("gp_interpolant").expect("checked on set"),
            },
            seed: self.seed().unwrap_or(0),
            checkpoint_every: self.parse("checkpoint_every").expect("checked on set"),
            penalty_mode,
            ae_only: self.parse("ae_only").expect("checked on set"),
        };
        spec.validate()?;
        Ok(spec)
    }
}
