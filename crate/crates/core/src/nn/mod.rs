//! Two-branch track-wise network: a shared-input convolutional stack with
//! cross-stitch units, self-attention over time, and per-branch heads that
//! emit track embeddings and ACCDOA vectors. Forward and backward passes
//! are written by hand; training uses Adam.

mod checkpoint;
mod layers;
mod model;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use model::{EmbedAccdoaNet, Tape};
pub use optim::{Adam, AdamConfig, ScheduleConfig};
pub use train::{train_step, TrainExample};

use crate::scalar::Scalar;
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::pit::TrackFrames as TrackFrameOutput;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called without a cached forward pass")]
    MissingCache,
    #[error("training diverged at iteration {iteration}: loss {loss} ({detail})")]
    Divergence { iteration: u64, loss: f64, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] crate::pit::PitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlockConfig {
    pub channels: usize,
    pub freq_pool: usize,
    pub time_pool: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub in_channels: usize,
    pub n_bins: usize,
    /// Average pooling over frequency applied to the raw features.
    pub input_freq_pool: usize,
    pub conv_blocks: Vec<ConvBlockConfig>,
    pub hidden: usize,
    pub attention_blocks: usize,
    pub attention_heads: usize,
    pub n_tracks: usize,
    pub embed_dim: usize,
    pub cross_stitch: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let block = |channels, freq_pool| ConvBlockConfig {
            channels,
            freq_pool,
            time_pool: 2,
        };
        Self {
            // sized for the default frontend: 257 STFT bins pooled by 4 before the network
            in_channels: crate::features::FOA_FEATURE_CHANNELS,
            n_bins: 64,
            input_freq_pool: 1,
            conv_blocks: vec![block(16, 4), block(32, 2), block(64, 2)],
            hidden: 64,
            attention_blocks: 1,
            attention_heads: 2,
            n_tracks: 3,
            embed_dim: crate::embedding::DEFAULT_EMBED_DIM,
            cross_stitch: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.in_channels == 0 || self.n_bins == 0 {
            return bad("input channels and bins must be positive".into());
        }
        if self.n_tracks == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return bad("n_tracks, embed_dim and hidden must be at least 1".into());
        }
        if self.conv_blocks.is_empty() {
            return bad("need at least one convolution block".into());
        }
        if self.input_freq_pool == 0 || self.conv_blocks.iter().any(|b| b.channels == 0 || b.freq_pool == 0 || b.time_pool == 0) {
            return bad("pooling factors and channel widths must be positive".into());
        }
        if self.attention_heads == 0 || self.hidden % self.attention_heads != 0 {
            return bad(format!("hidden width {} is not divisible by {} heads", self.hidden, self.attention_heads));
        }
        if self.out_bins() == 0 {
            return bad(format!("{} bins vanish under the configured frequency pooling", self.n_bins));
        }
        Ok(())
    }

    /// Product of the per-block time pooling factors.
    pub fn time_pooling(&self) -> usize {
        self.conv_blocks.iter().map(|b| b.time_pool).product()
    }

    /// Frequency bins left after the convolutional stack.
    pub fn out_bins(&self) -> usize {
        self.conv_blocks
            .iter()
            .fold(self.n_bins / self.input_freq_pool.max(1), |f, b| f / b.freq_pool.max(1))
    }

    pub fn out_channels(&self) -> usize {
        self.conv_blocks.last().map_or(0, |b| b.channels)
    }

    /// Model frames produced for `frames` input frames.
    pub fn out_frames(&self, frames: usize) -> Result<usize, NetError> {
        let p = self.time_pooling();
        if frames == 0 || frames % p != 0 {
            return Err(NetError::Shape(format!(
                "{frames} input frames are not a positive multiple of the time pooling {p}"
            )));
        }
        Ok(frames / p)
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<ArrayD<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, name: String, value: ArrayD<T>) -> usize {
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[ArrayD<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ArrayD<T>] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<T>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.iter().map(|v| ArrayD::zeros(v.raw_dim())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| v.fill(T::zero()));
    }

    pub fn n_elements(&self) -> usize {
        self.values.iter().map(ArrayD::len).sum()
    }

    pub fn scale(&mut self, s: T) {
        self.values.iter_mut().for_each(|v| v.mapv_inplace(|x| x * s));
    }

    pub fn l2_norm(&self) -> T {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(|v| v.mapv(|x| U::of(x.as_f64()))).collect(),
        }
    }
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}
