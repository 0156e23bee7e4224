//! Versioned experiment configuration.

use std::path::{Path, PathBuf};

use georeid_core::embed::{ProbeConfig, TrainConfig};
use georeid_core::synthor::{DatasetSpec, ModeTag, COLOR_NOISE_SD};
use serde::{Deserialize, Serialize};

use crate::error::RunError;

pub const CONFIG_VERSION: u32 = 1;

/// Which descriptor feeds the embedding network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Geometric,
    Appearance,
}

impl Arm {
    pub const ALL: [Arm; 2] = [Arm::Geometric, Arm::Appearance];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Geometric => "geometric",
            Arm::Appearance => "appearance",
        }
    }

    pub fn index(self) -> u64 {
        match self {
            Arm::Geometric => 0,
            Arm::Appearance => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "geometric" => Some(Arm::Geometric),
            "appearance" => Some(Arm::Appearance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub n_identities: usize,
    pub n_surgeries: usize,
    pub seqs_per_surgery: usize,
    pub n_frames: usize,
    pub fps: f64,
    pub noise_sd_m: f64,
    pub modes: Vec<ModeTag>,
}

impl SyntheticSource {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_identities: self.n_identities,
            n_surgeries: self.n_surgeries,
            seqs_per_surgery: self.seqs_per_surgery,
            n_frames: self.n_frames,
            fps: self.fps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSource {
    /// Manifest JSON; relative paths resolve against the config file.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic(SyntheticSource),
    Manifest(ManifestSource),
}

/// Train on one mode's training surgeries, test on another mode's test
/// surgeries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transfer {
    pub train: String,
    pub test: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub enabled: bool,
    /// Mode audited; defaults to "confounded" when present, else the first.
    pub mode: Option<String>,
    /// Number of sequences attributed (taken in sequence_id order).
    pub sequences: usize,
    pub tau: f64,
    pub probe: ProbeConfig,
    /// Standard-deviation floor of the probe's input standardization.
    pub probe_sd_floor: f64,
    /// Overlay images written per arm.
    pub overlays: usize,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mode: None,
            sequences: 24,
            tau: georeid_core::embed::descriptor::SOFT_TAU,
            probe: ProbeConfig::default(),
            probe_sd_floor: 0.05,
            overlays: 4,
        }
    }
}

fn default_resolution() -> [usize; 2] {
    [64, 64]
}

fn default_k() -> usize {
    4
}

fn default_arms() -> Vec<Arm> {
    Arm::ALL.to_vec()
}

fn default_depth_dumps() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub v: u32,
    pub seed: u64,
    pub dataset: DatasetSource,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub transfer: Vec<Transfer>,
    #[serde(default)]
    pub saliency: SaliencyConfig,
    /// Sequences whose first-frame depth image is dumped as PGM.
    #[serde(default = "default_depth_dumps")]
    pub depth_dumps: usize,
    /// Default output directory, relative to the working directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.v != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.v));
        }
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.resolution.iter().any(|&r| r < georeid_core::render::MIN_SIDE) {
            return bad(format!("resolution {:?} is below 8x8", self.resolution));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            if s.modes.is_empty() {
                return bad("synthetic dataset needs at least one mode".into());
            }
            if !(s.noise_sd_m >= 0.0 && s.noise_sd_m.is_finite()) {
                return bad("noise_sd_m must be non-negative".into());
            }
        }
        if !(self.saliency.probe_sd_floor > 0.0 && self.saliency.probe_sd_floor.is_finite()) {
            return bad("saliency.probe_sd_floor must be positive".into());
        }
        if self.saliency.enabled && self.saliency.sequences == 0 {
            return bad("saliency.sequences must be at least 1".into());
        }
        self.train
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.resolution[0], self.resolution[1])
    }

    /// Restrict to the arms selected on the command line.
    pub fn with_arms(mut self, arms: Option<Vec<Arm>>) -> Self {
        if let Some(a) = arms {
            self.arms = a;
        }
        self
    }
}

/// Generator settings that are toolkit choices rather than measured facts;
/// they are copied into every summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorSettings {
    pub position_noise_sd_m: f64,
    pub color_noise_sd: f64,
    pub scrub_color: [f64; 3],
    pub points_per_frame: usize,
}

impl GeneratorSettings {
    pub fn of(s: &SyntheticSource) -> Self {
        Self {
            position_noise_sd_m: s.noise_sd_m,
            color_noise_sd: COLOR_NOISE_SD,
            scrub_color: georeid_core::synthor::SCRUB_COLOR,
            points_per_frame: georeid_core::synthor::POINTS_PER_FRAME,
        }
    }
}
