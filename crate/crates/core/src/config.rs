//! Run configuration: every tunable of a simulate / train / infer / evaluate
//! run in one TOML document. Unknown keys are rejected.

use crate::catalog::{ClassSpec, SourceCatalog};
use crate::decoder::DecoderConfig;
use crate::embedding::{PromptTemplate, StubProviderConfig};
use crate::features::{FeatureConfig, FOA_FEATURE_CHANNELS};
use crate::metrics::MetricsConfig;
use crate::nn::{AdamConfig, NetworkConfig};
use crate::pit::LossConfig;
use crate::scene::{SceneConfig, LABEL_HOP_S};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scaling of the amplitude channels before they enter the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeScale {
    Linear,
    /// `ln(1 + a)`.
    #[default]
    Log1p,
}

/// Encoding of the phase-difference channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseEncoding {
    /// The wrapped angle itself.
    Angle,
    /// `cos` of the angle; continuous across the +-pi wrap.
    #[default]
    Cosine,
    /// `cos` and `sin` of the angle as separate channels.
    CosSin,
}

impl PhaseEncoding {
    pub fn channels(self) -> usize {
        match self {
            PhaseEncoding::Angle | PhaseEncoding::Cosine => 3,
            PhaseEncoding::CosSin => 6,
        }
    }
}

/// How waveforms become network inputs: STFT features are average-pooled
/// over frequency, cut into `seg_frames` windows every `shift_frames`, and
/// zero-padded to `input_frames`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub amplitude: AmplitudeScale,
    pub phase: PhaseEncoding,
    pub freq_pool: usize,
    pub seg_frames: usize,
    pub shift_frames: usize,
    pub input_frames: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            amplitude: AmplitudeScale::Log1p,
            phase: PhaseEncoding::Cosine,
            freq_pool: 4,
            seg_frames: 127,
            shift_frames: 120,
            input_frames: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    /// Used when `classes` is empty: log-spaced bands.
    pub n_classes: usize,
    pub classes: Vec<ClassSpec>,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            n_classes: 13,
            classes: Vec::new(),
        }
    }
}

impl CatalogConfig {
    pub fn build(&self) -> Result<SourceCatalog, crate::catalog::CatalogError> {
        if self.classes.is_empty() {
            SourceCatalog::log_spaced(self.n_classes)
        } else {
            SourceCatalog::new(self.classes.clone())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Stub,
    /// Precomputed embeddings from a key/vector table.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub stub: StubProviderConfig,
    pub table: Option<PathBuf>,
    pub template: PromptTemplate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub iterations: u64,
    pub batch_size: usize,
    /// Validation loss, log row and checkpoint every this many iterations.
    pub val_interval: u64,
    /// Fixed validation segments drawn from the validation scenes.
    pub val_segments: usize,
    /// Extra randomly rotated copies of each training scene.
    pub rotated_copies: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch_size: 8,
            val_interval: 500,
            val_segments: 64,
            rotated_copies: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_scenes: usize,
    /// Scenes after the first `n_scenes - n_val_scenes` are used for validation.
    pub n_val_scenes: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_scenes: 10,
            n_val_scenes: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub support: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream; see [`RunConfig::stream_seed`].
    pub seed: u64,
    pub features: FeatureConfig,
    pub frontend: FrontendConfig,
    pub catalog: CatalogConfig,
    pub scene: SceneConfig,
    pub provider: ProviderConfig,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub training: TrainingConfig,
    pub decoder: DecoderConfig,
    pub metrics: MetricsConfig,
    pub simulate: SimulateConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            features: FeatureConfig::default(),
            frontend: FrontendConfig::default(),
            catalog: CatalogConfig::default(),
            scene: SceneConfig::default(),
            provider: ProviderConfig::default(),
            network: NetworkConfig::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            training: TrainingConfig::default(),
            decoder: DecoderConfig::default(),
            metrics: MetricsConfig::default(),
            simulate: SimulateConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Feature frames per 100 ms label frame.
    pub fn frames_per_label(&self) -> usize {
        (LABEL_HOP_S * self.features.sample_rate as f64 / self.features.hop as f64).round() as usize
    }

    /// Network input channels: four amplitudes plus the phase channels.
    pub fn frontend_channels(&self) -> usize {
        FOA_FEATURE_CHANNELS - 3 + self.frontend.phase.channels()
    }

    /// Frequency bins after frontend pooling.
    pub fn frontend_bins(&self) -> usize {
        self.features.n_bins() / self.frontend.freq_pool.max(1)
    }

    /// Seed of the named random stream `name` (e.g. "scene", "init",
    /// "batch") at `index`, derived from the root seed.
    pub fn stream_seed(&self, name: &str, index: u64) -> u64 {
        stream_seed(self.seed, name, index)
    }

    /// Checks everything and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs: Vec<String> = Vec::new();
        let mut push = |r: Result<(), String>| {
            if let Err(e) = r {
                errs.push(e);
            }
        };
        push(self.features.validate().map_err(|e| e.to_string()));
        push(self.scene.validate().map_err(|e| e.to_string()));
        push(self.network.validate().map_err(|e| e.to_string()));
        push(self.loss.validate().map_err(|e| e.to_string()));
        push(self.optimizer.schedule.validate().map_err(|e| e.to_string()));
        push(self.decoder.validate().map_err(|e| e.to_string()));
        push(self.metrics.validate());
        push(self.catalog.build().map(|_| ()).map_err(|e| e.to_string()));
        let fr = &self.frontend;
        if fr.freq_pool == 0 || fr.seg_frames == 0 || fr.shift_frames == 0 {
            push(Err("frontend freq_pool, seg_frames and shift_frames must be positive".into()));
        }
        if fr.input_frames < fr.seg_frames {
            push(Err(format!(
                "frontend input_frames {} shorter than seg_frames {}",
                fr.input_frames, fr.seg_frames
            )));
        }
        if self.network.out_frames(fr.input_frames).is_err() {
            push(Err(format!(
                "input_frames {} not divisible by the network time pooling {}",
                fr.input_frames,
                self.network.time_pooling()
            )));
        }
        let fpl = self.frames_per_label();
        let exact = LABEL_HOP_S * self.features.sample_rate as f64 / self.features.hop as f64;
        if fpl == 0 || (exact - fpl as f64).abs() > 1e-9 {
            push(Err(format!("label hop of 100 ms is not a whole number of feature frames ({exact})")));
        } else if fr.shift_frames % fpl != 0 {
            push(Err(format!(
                "shift_frames {} is not a whole number of label frames ({fpl} feature frames each)",
                fr.shift_frames
            )));
        }
        if self.network.in_channels != self.frontend_channels() {
            push(Err(format!(
                "network.in_channels is {}, the frontend produces {}",
                self.network.in_channels,
                self.frontend_channels()
            )));
        }
        if fr.freq_pool > 0 && self.network.n_bins != self.frontend_bins() {
            push(Err(format!(
                "network.n_bins is {}, frontend produces {}",
                self.network.n_bins,
                self.frontend_bins()
            )));
        }
        if self.provider.kind == ProviderKind::Stub && self.provider.stub.dim != self.network.embed_dim {
            push(Err(format!(
                "provider dimension {} differs from network.embed_dim {}",
                self.provider.stub.dim, self.network.embed_dim
            )));
        }
        if self.provider.kind == ProviderKind::File && self.provider.table.is_none() {
            push(Err("provider kind \"file\" needs provider.table".into()));
        }
        if self.scene.max_polyphony > self.network.n_tracks {
            push(Err(format!(
                "scene.max_polyphony {} exceeds network.n_tracks {}",
                self.scene.max_polyphony, self.network.n_tracks
            )));
        }
        let t = &self.training;
        if t.batch_size == 0 || t.val_interval == 0 {
            push(Err("training batch_size and val_interval must be positive".into()));
        }
        if self.simulate.n_val_scenes > self.simulate.n_scenes {
            push(Err("simulate.n_val_scenes exceeds simulate.n_scenes".into()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

pub fn stream_seed(root: u64, name: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(name.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
