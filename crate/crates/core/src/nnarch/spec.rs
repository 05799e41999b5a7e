use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters shared by the generator and the critic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Grid edge `N`; must equal `2^(levels + 1)`.
    pub resolution: usize,
    pub levels: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    /// Width of the first fully connected layer.
    pub fc_latent: usize,
    pub seed: u64,
    /// Concatenate encoder features onto decoder inputs.
    pub skip_connections: bool,
}

impl ModelSpec {
    /// The 64³ configuration: 5 levels, 64 base channels capped at 512, 2048-wide FC.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            resolution: 64,
            levels: 5,
            base_channels: 64,
            channel_cap: 512,
            fc_latent: 2048,
            seed,
            skip_connections: true,
        }
    }

    /// A spec for resolution `n` with the given base width; the FC width is
    /// half the flattened bottleneck.
    pub fn for_resolution(n: usize, base_channels: usize, seed: u64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Spec(format!("resolution {n} is not a power of two >= 4")));
        }
        let levels = n.trailing_zeros() as usize - 1;
        let mut spec = Self {
            resolution: n,
            levels,
            base_channels,
            channel_cap: 512,
            fc_latent: 0,
            seed,
            skip_connections: true,
        };
        spec.fc_latent = (spec.flatten_len() / 2).max(1);
        spec.validate()?;
        Ok(spec)
    }

    /// The 16³ desk-scale spec: 3 levels, base 8, FC width 128.
    pub fn toy(seed: u64) -> Self {
        Self::for_resolution(16, 8, seed).expect("toy spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Spec("levels must be at least 1".into()));
        }
        if self.levels >= 30 || self.resolution != 1usize << (self.levels + 1) {
            return Err(Error::Spec(format!(
                "resolution {} must equal 2^(levels+1) with levels = {}",
                self.resolution, self.levels
            )));
        }
        if self.base_channels == 0 || self.channel_cap == 0 || self.fc_latent == 0 {
            return Err(Error::Spec("channel counts and FC width must be positive".into()));
        }
        Ok(())
    }

    /// Channel count at level `i`: `min(base * 2^i, cap)`.
    pub fn channels(&self, i: usize) -> usize {
        self.base_channels
            .checked_shl(i as u32)
            .filter(|&c| c >> i == self.base_channels)
            .unwrap_or(usize::MAX)
            .min(self.channel_cap)
    }

    /// Spatial edge after all pooling stages (always 2).
    pub fn bottleneck_size(&self) -> usize {
        self.resolution >> self.levels
    }

    /// Flattened bottleneck length, which is also the critic latent length.
    pub fn flatten_len(&self) -> usize {
        self.bottleneck_size().pow(3) * self.channels(self.levels - 1)
    }

    pub fn latent_len(&self) -> usize {
        self.flatten_len()
    }
}

/// One layer of a shape plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub params: usize,
}

fn cube(b: usize, c: usize, n: usize) -> Vec<usize> {
    vec![b, c, n, n, n]
}

/// Static tensor shapes of every generator layer for batch size `b`.
pub fn generator_plan(spec: &ModelSpec, b: usize) -> Result<Vec<LayerShape>> {
    spec.validate()?;
    let (n, l) = (spec.resolution, spec.levels);
    let mut plan = Vec::new();
    let mut cin = 1;
    for i in 0..l {
        let size = n >> i;
        let c = spec.channels(i);
        plan.push(LayerShape {
            name: format!("enc{i}"),
            input: cube(b, cin, size),
            output: cube(b, c, size / 2),
            params: c * cin * 64 + c,
        });
        cin = c;
    }
    let (f, h) = (spec.flatten_len(), spec.fc_latent);
    plan.push(LayerShape {
        name: "fc1".into(),
        input: vec![b, f],
        output: vec![b, h],
        params: f * h + h,
    });
    plan.push(LayerShape {
        name: "fc2".into(),
        input: vec![b, h],
        output: vec![b, f],
        params: h * f + f,
    });
    for (j, (cin, cout)) in decoder_channels(spec).into_iter().enumerate() {
        let size = spec.bottleneck_size() << j;
        plan.push(LayerShape {
            name: format!("dec{j}"),
            input: cube(b, cin, size),
            output: cube(b, cout, size * 2),
            params: cin * cout * 64 + cout,
        });
    }
    Ok(plan)
}

/// Static tensor shapes of every critic layer for batch size `b`.
pub fn discriminator_plan(spec: &ModelSpec, b: usize) -> Result<Vec<LayerShape>> {
    spec.validate()?;
    let mut plan = Vec::new();
    let mut cin = 2;
    for i in 0..spec.levels {
        let size = spec.resolution >> i;
        let c = spec.channels(i);
        plan.push(LayerShape {
            name: format!("conv{i}"),
            input: cube(b, cin, size),
            output: cube(b, c, size / 2),
            params: c * cin * 64 + c,
        });
        cin = c;
    }
    Ok(plan)
}

/// `(input, output)` channels of each decoder block, including skip concatenation.
pub(crate) fn decoder_channels(spec: &ModelSpec) -> Vec<(usize, usize)> {
    let l = spec.levels;
    let mult = if spec.skip_connections { 2 } else { 1 };
    (0..l)
        .map(|j| {
            let cin = if j == 0 { spec.channels(l - 1) } else { spec.channels(l - j) };
            let cout = if j + 1 == l { 1 } else { spec.channels(l - 1 - j) };
            (cin * mult, cout)
        })
        .collect()
}
