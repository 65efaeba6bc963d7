//! Zero- and few-shot sound event localization and detection with
//! track-wise embedding and ACCDOA outputs.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the common instantiations.

pub mod audio;
pub mod catalog;
pub mod config;
pub mod decoder;
pub mod embedding;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod pit;
pub mod records;
pub mod scalar;
pub mod scene;
pub mod spatial;

pub type AccdoaVectorF32 = spatial::AccdoaVector<f32>;
pub type AccdoaVectorF64 = spatial::AccdoaVector<f64>;
pub type CartesianDoaF32 = spatial::CartesianDoa<f32>;
pub type CartesianDoaF64 = spatial::CartesianDoa<f64>;
pub type EmbeddingVectorF32 = embedding::EmbeddingVector<f32>;
pub type EmbeddingVectorF64 = embedding::EmbeddingVector<f64>;
pub type SupportSetF32 = embedding::SupportSet<f32>;
pub type SupportSetF64 = embedding::SupportSet<f64>;
pub type FeatureTensorF32 = features::FeatureTensor<f32>;
pub type FeatureTensorF64 = features::FeatureTensor<f64>;
pub type MultichannelWaveF32 = features::MultichannelWave<f32>;
pub type MultichannelWaveF64 = features::MultichannelWave<f64>;
pub type TrackFramesF32 = pit::TrackFrames<f32>;
pub type TrackFramesF64 = pit::TrackFrames<f64>;
pub type EmbedAccdoaNetF32 = nn::EmbedAccdoaNet<f32>;
pub type EmbedAccdoaNetF64 = nn::EmbedAccdoaNet<f64>;
pub type AdamF32 = nn::Adam<f32>;
pub type AdamF64 = nn::Adam<f64>;
