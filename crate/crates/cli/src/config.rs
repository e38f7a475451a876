//! Run configuration: TOML with documented keys and key-path diagnostics.
//!
//! ```toml
//! n_rounds = 1000000
//! q = 0.1
//! delta = 0.01
//! bound = "hs"
//! epsilon_h = 7.888609052210118e-31
//! preset = "paper-like"
//!
//! [noise]            # optional overrides of the preset
//! p_depolarize = 0.003
//!
//! [seeds]
//! master = "run-1"
//! device = "device-1"        # defaults to the master seed
//! extractor = "extractor-1"  # defaults to the master seed
//!
//! [extract]
//! assumed_rate = 0.0062      # optional, uncertified bits per round
//! threshold = 0.01
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use ctxrand::bounds::{BoundKind, DEFAULT_EPSILON_H};
use ctxrand::protocol::ProtocolConfig;
use ctxrand::qutrit::{Geometry, NoiseModel};
use ctxrand::stattests::DEFAULT_THRESHOLD;
use serde::{Deserialize, Serialize};

/// Device presets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Noiseless qutrit with exact pentagram axes.
    Ideal,
    /// Rotation table with calibrated depolarisation and 1.3% dark readout error.
    #[default]
    PaperLike,
}

impl Preset {
    pub fn geometry(self) -> Geometry {
        match self {
            Preset::Ideal => Geometry::Pentagram,
            Preset::PaperLike => Geometry::Table,
        }
    }

    pub fn noise(self) -> NoiseModel {
        match self {
            Preset::Ideal => NoiseModel::NOISELESS,
            Preset::PaperLike => NoiseModel::PAPER_LIKE,
        }
    }
}

/// Per-field overrides applied on top of the preset's noise model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_depolarize: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_dark_flip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_bright_flip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dephase_12: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_jitter_sd: Option<f64>,
}

impl NoiseOverrides {
    fn apply(&self, base: NoiseModel) -> NoiseModel {
        NoiseModel {
            p_depolarize: self.p_depolarize.unwrap_or(base.p_depolarize),
            p_dark_flip: self.p_dark_flip.unwrap_or(base.p_dark_flip),
            p_bright_flip: self.p_bright_flip.unwrap_or(base.p_bright_flip),
            dephase_12: self.dephase_12.unwrap_or(base.dephase_12),
            angle_jitter_sd: self.angle_jitter_sd.unwrap_or(base.angle_jitter_sd),
        }
    }

    fn full(n: NoiseModel) -> Self {
        NoiseOverrides {
            p_depolarize: Some(n.p_depolarize),
            p_dark_flip: Some(n.p_dark_flip),
            p_bright_flip: Some(n.p_bright_flip),
            dephase_12: Some(n.dephase_12),
            angle_jitter_sd: Some(n.angle_jitter_sd),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "default_master_seed")]
    pub master: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    /// Seeds the Toeplitz matrix. In production this must come from a
    /// source independent of the device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<String>,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            master: default_master_seed(),
            device: None,
            extractor: None,
        }
    }
}

impl Seeds {
    pub fn device(&self) -> &str {
        self.device.as_deref().unwrap_or(&self.master)
    }

    pub fn extractor(&self) -> &str {
        self.extractor.as_deref().unwrap_or(&self.master)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSection {
    /// Bits per round credited to the extractor instead of the certified
    /// rate. Recorded in the manifest as uncertified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumed_rate: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            assumed_rate: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_n_rounds")]
    pub n_rounds: u64,
    /// Spot-check probability, in `(0, 1]`.
    #[serde(default = "default_q")]
    pub q: f64,
    /// Smoothing parameter of the min-entropy bound.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub bound: BoundKind,
    #[serde(default = "default_epsilon_h")]
    pub epsilon_h: f64,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub noise: NoiseOverrides,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub extract: ExtractSection,
}

fn default_n_rounds() -> u64 {
    1_000_000
}

fn default_q() -> f64 {
    0.1
}

fn default_delta() -> f64 {
    1e-2
}

fn default_epsilon_h() -> f64 {
    DEFAULT_EPSILON_H
}

fn default_master_seed() -> String {
    "ctxrand".to_string()
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n_rounds: default_n_rounds(),
            q: default_q(),
            delta: default_delta(),
            bound: BoundKind::default(),
            epsilon_h: default_epsilon_h(),
            preset: Preset::default(),
            noise: NoiseOverrides::default(),
            seeds: Seeds::default(),
            extract: ExtractSection::default(),
        }
    }
}

impl Config {
    /// Parse and validate. Errors name the offending key.
    pub fn from_toml(text: &str) -> Result<Config> {
        let de = toml::Deserializer::new(text);
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config key `{path}`: {}", e.into_inner().message().trim())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Config::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            bail!("config key `n_rounds`: must be at least 1");
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            bail!("config key `q`: {} is not in the open-closed interval (0, 1]", self.q);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("config key `delta`: {} is not in (0, 1)", self.delta);
        }
        if !(self.epsilon_h > 0.0 && self.epsilon_h < 1.0) {
            bail!("config key `epsilon_h`: {} is not in (0, 1)", self.epsilon_h);
        }
        if let Some(r) = self.extract.assumed_rate {
            if !(r > 0.0 && r <= 2.0) {
                bail!("config key `extract.assumed_rate`: {r} is not in (0, 2] bits per round");
            }
        }
        if !(self.extract.threshold > 0.0 && self.extract.threshold < 1.0) {
            bail!(
                "config key `extract.threshold`: {} is not in (0, 1)",
                self.extract.threshold
            );
        }
        self.noise_model().validate().context("config table `noise`")?;
        Ok(())
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise.apply(self.preset.noise())
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig::new(self.n_rounds, self.q, self.seeds.master.as_bytes())
    }

    /// The configuration with every noise parameter spelled out.
    pub fn resolved(&self) -> Config {
        Config {
            noise: NoiseOverrides::full(self.noise_model()),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
