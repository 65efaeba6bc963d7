//! Language-audio embedding space: the embedding vector type, support sets,
//! the provider interface standing in for the text/audio encoders, and the
//! zero-shot (text) and few-shot (audio prototype) support builders.

mod stub;
mod support;
mod table;

pub use stub::{stub_text_embed, StubProvider, StubProviderConfig, SILENT_PROMPT};
pub use support::{
    build_support_few, build_support_zero, prototype, PromptTemplate, SupportFile, SupportProvenance,
};
pub use table::{read_embedding_table, write_embedding_table, EmbeddingTable, FileProvider};

use crate::scalar::Scalar;
use ndarray::{Array1, ArrayView1};
use thiserror::Error;

/// Default embedding width of the joint text/audio space.
pub const DEFAULT_EMBED_DIM: usize = 512;

/// Tolerance on the unit-norm invariant.
pub const UNIT_NORM_TOL: f64 = 1e-4;

/// Guard used in every norm division.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("class id {class_id} out of range for {n_classes} classes")]
    Range { class_id: usize, n_classes: usize },
    #[error("no embedding for key {0:?}")]
    UnknownKey(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("provider failure: {0}")]
    Provider(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector<T>(pub Array1<T>);

impl<T: Scalar> EmbeddingVector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self(Array1::zeros(dim))
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Self(Array1::from(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn view(&self) -> ArrayView1<'_, T> {
        self.0.view()
    }

    pub fn norm(&self) -> T {
        norm(self.0.view())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == T::zero())
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - T::one()).abs() <= T::of(UNIT_NORM_TOL)
    }

    /// Unit-length copy; `None` when the norm is below [`NORM_EPS`].
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > T::of(NORM_EPS)).then(|| Self(self.0.mapv(|v| v / n)))
    }

    pub fn cosine(&self, other: &Self) -> T {
        cosine(self.view(), other.view())
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector(self.0.mapv(|v| U::of(v.as_f64())))
    }
}

pub fn norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.dot(&v).sqrt()
}

/// Cosine similarity with norms floored at [`NORM_EPS`]; a zero vector on
/// either side gives 0.
pub fn cosine<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    let eps = T::of(NORM_EPS);
    a.dot(&b) / (norm(a).max(eps) * norm(b).max(eps))
}

/// A mono clip handed to an audio encoder. `key` identifies the clip for
/// providers that serve precomputed embeddings.
#[derive(Clone, Copy, Debug)]
pub struct AudioClip<'a, T> {
    pub key: Option<&'a str>,
    pub samples: &'a [T],
    pub sample_rate: u32,
}

impl<'a, T> AudioClip<'a, T> {
    pub fn new(samples: &'a [T], sample_rate: u32) -> Self {
        Self {
            key: None,
            samples,
            sample_rate,
        }
    }

    pub fn keyed(key: &'a str, samples: &'a [T], sample_rate: u32) -> Self {
        Self {
            key: Some(key),
            samples,
            sample_rate,
        }
    }
}

/// Text and audio encoders mapping into one joint space. Implementations
/// must be deterministic and return unit-norm vectors.
pub trait EmbeddingProvider<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;
    fn text_embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbeddingError>;
    fn audio_embed(&self, clip: &AudioClip<'_, T>) -> Result<EmbeddingVector<T>, EmbeddingError>;
}

/// Per-class support embeddings plus the background-noise embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportSet<T> {
    class_names: Vec<String>,
    class_embeddings: Vec<EmbeddingVector<T>>,
    noise_embedding: EmbeddingVector<T>,
}

impl<T: Scalar> SupportSet<T> {
    pub fn new(
        class_names: Vec<String>,
        class_embeddings: Vec<EmbeddingVector<T>>,
        noise_embedding: EmbeddingVector<T>,
    ) -> Result<Self, EmbeddingError> {
        if class_names.is_empty() {
            return Err(EmbeddingError::InvalidInput("support set needs at least one class".into()));
        }
        if class_names.len() != class_embeddings.len() {
            return Err(EmbeddingError::InvalidInput(format!(
                "{} class names but {} embeddings",
                class_names.len(),
                class_embeddings.len()
            )));
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return Err(EmbeddingError::InvalidInput(format!("duplicate class name {name:?}")));
            }
        }
        let dim = noise_embedding.dim();
        for (name, e) in class_names
            .iter()
            .map(String::as_str)
            .zip(&class_embeddings)
            .chain(std::iter::once(("noise", &noise_embedding)))
        {
            if e.dim() != dim {
                return Err(EmbeddingError::Dimension {
                    expected: dim,
                    got: e.dim(),
                });
            }
            if !e.is_unit() {
                return Err(EmbeddingError::InvalidInput(format!(
                    "support embedding for {name:?} is not unit norm ({})",
                    e.norm()
                )));
            }
        }
        Ok(Self {
            class_names,
            class_embeddings,
            noise_embedding,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.noise_embedding.dim()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_embeddings(&self) -> &[EmbeddingVector<T>] {
        &self.class_embeddings
    }

    pub fn noise_embedding(&self) -> &EmbeddingVector<T> {
        &self.noise_embedding
    }

    pub fn cast<U: Scalar>(&self) -> SupportSet<U> {
        SupportSet {
            class_names: self.class_names.clone(),
            class_embeddings: self.class_embeddings.iter().map(EmbeddingVector::cast).collect(),
            noise_embedding: self.noise_embedding.cast(),
        }
    }
}
