//! End-to-end plumbing: waveform to network input, training data, the
//! training loop, and scene-level inference.

mod dataset;
mod frontend;
mod inference;
mod shots;
mod training;

pub use dataset::{Dataset, SceneRecord};
pub use frontend::Frontend;
pub use inference::{decode_scene, detection_records, infer_records, run_network, SceneOutputs, SegmentOutput};
pub use shots::{synthetic_shots, SyntheticShots, SHOT_S};
pub use training::{train, validation_loss, TrainLogRow};

use crate::config::{ProviderKind, RunConfig};
use crate::decoder::DecoderError;
use crate::embedding::{EmbeddingError, EmbeddingProvider, FileProvider, StubProvider};
use crate::features::FeatureError;
use crate::nn::{NetError, NetworkConfig};
use crate::scalar::Scalar;
use crate::scene::SceneError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error("incompatible inputs: {0}")]
    Compatibility(String),
    #[error("{0}")]
    Other(String),
}

/// Embedding provider selected by the run config.
pub fn build_provider<T: Scalar>(run: &RunConfig) -> Result<Box<dyn EmbeddingProvider<T>>, PipelineError> {
    let provider: Box<dyn EmbeddingProvider<T>> = match run.provider.kind {
        ProviderKind::Stub => {
            let catalog = run
                .catalog
                .build()
                .map_err(|e| PipelineError::Other(e.to_string()))?;
            Box::new(StubProvider::new(catalog, run.provider.stub.clone())?)
        }
        ProviderKind::File => {
            let path = run
                .provider
                .table
                .as_ref()
                .ok_or_else(|| PipelineError::Other("file provider needs provider.table".into()))?;
            Box::new(FileProvider::<T>::open(path)?)
        }
    };
    if provider.dim() != run.network.embed_dim {
        return Err(PipelineError::Compatibility(format!(
            "provider embeddings are {}-d, network expects {}",
            provider.dim(),
            run.network.embed_dim
        )));
    }
    Ok(provider)
}

/// Checks that a network accepts what the frontend of `run` produces.
pub fn check_network(run: &RunConfig, net: &NetworkConfig) -> Result<(), PipelineError> {
    let want = (run.frontend_channels(), run.frontend_bins(), run.network.time_pooling());
    let got = (net.in_channels, net.n_bins, net.time_pooling());
    if want != got {
        return Err(PipelineError::Compatibility(format!(
            "network takes {} channels x {} bins at time pooling {}, config produces {} x {} at {}",
            got.0, got.1, got.2, want.0, want.1, want.2
        )));
    }
    Ok(())
}
