use super::{
    AudioClip, EmbeddingError, EmbeddingProvider, EmbeddingVector, SupportSet, SILENT_PROMPT,
};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Prompt text built from a class name; `{}` is replaced by the name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(pub String);

impl Default for PromptTemplate {
    fn default() -> Self {
        Self("{}".into())
    }
}

impl PromptTemplate {
    pub fn apply(&self, class_name: &str) -> String {
        if self.0.contains("{}") {
            self.0.replace("{}", class_name)
        } else {
            format!("{}{}", self.0, class_name)
        }
    }
}

/// Zero-shot support: one text embedding per class prompt and the embedding
/// of `"silent"` for background noise.
pub fn build_support_zero<T: Scalar>(
    class_names: &[String],
    provider: &dyn EmbeddingProvider<T>,
    template: &PromptTemplate,
) -> Result<SupportSet<T>, EmbeddingError> {
    if class_names.is_empty() {
        return Err(EmbeddingError::InvalidInput("no class names".into()));
    }
    let embeddings = class_names
        .iter()
        .map(|c| provider.text_embed(&template.apply(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let noise = provider.text_embed(SILENT_PROMPT)?;
    SupportSet::new(class_names.to_vec(), embeddings, noise)
}

/// Normalized mean of `embeddings`.
pub fn prototype<T: Scalar>(
    embeddings: &[EmbeddingVector<T>],
) -> Result<EmbeddingVector<T>, EmbeddingError> {
    let first = embeddings
        .first()
        .ok_or_else(|| EmbeddingError::InvalidInput("prototype of zero shots".into()))?;
    let mut acc = first.0.clone();
    for e in &embeddings[1..] {
        if e.dim() != acc.len() {
            return Err(EmbeddingError::Dimension {
                expected: acc.len(),
                got: e.dim(),
            });
        }
        acc += &e.0;
    }
    acc.mapv_inplace(|v| v / T::of(embeddings.len() as f64));
    EmbeddingVector(acc)
        .normalized()
        .ok_or_else(|| EmbeddingError::InvalidInput("shot embeddings cancel to zero".into()))
}

/// Few-shot support: per-class prototypes of the shots' audio embeddings and
/// a prototype of background-only clips for the noise embedding.
pub fn build_support_few<T: Scalar>(
    class_names: &[String],
    class_shots: &[Vec<AudioClip<'_, T>>],
    background: &[AudioClip<'_, T>],
    provider: &dyn EmbeddingProvider<T>,
) -> Result<SupportSet<T>, EmbeddingError> {
    if class_names.is_empty() || class_names.len() != class_shots.len() {
        return Err(EmbeddingError::InvalidInput(format!(
            "{} class names for {} shot lists",
            class_names.len(),
            class_shots.len()
        )));
    }
    let empty: Vec<&str> = class_names
        .iter()
        .zip(class_shots)
        .filter(|(_, s)| s.is_empty())
        .map(|(n, _)| n.as_str())
        .collect();
    if !empty.is_empty() {
        return Err(EmbeddingError::InvalidInput(format!(
            "no shots for class(es): {}",
            empty.join(", ")
        )));
    }
    if background.is_empty() {
        return Err(EmbeddingError::InvalidInput("no background clips for the noise embedding".into()));
    }
    let embed_all = |clips: &[AudioClip<'_, T>]| {
        clips
            .iter()
            .map(|c| provider.audio_embed(c))
            .collect::<Result<Vec<_>, _>>()
    };
    let protos = class_shots
        .iter()
        .map(|shots| prototype(&embed_all(shots)?))
        .collect::<Result<Vec<_>, _>>()?;
    let noise = prototype(&embed_all(background)?)?;
    SupportSet::new(class_names.to_vec(), protos, noise)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportProvenance {
    /// `zero` or `few`.
    pub mode: String,
    /// Shots per class; 0 in zero-shot mode.
    pub shots: usize,
    pub seed: u64,
    pub provider: String,
    #[serde(default)]
    pub template: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportEntry {
    name: String,
    embedding: Vec<f64>,
}

/// On-disk support set (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportFile {
    pub version: u32,
    pub dim: usize,
    pub provenance: SupportProvenance,
    classes: Vec<SupportEntry>,
    noise: Vec<f64>,
}

impl SupportFile {
    pub const VERSION: u32 = 1;

    pub fn from_support<T: Scalar>(support: &SupportSet<T>, provenance: SupportProvenance) -> Self {
        let to_vec = |e: &EmbeddingVector<T>| e.0.iter().map(|v| v.as_f64()).collect();
        Self {
            version: Self::VERSION,
            dim: support.dim(),
            provenance,
            classes: support
                .class_names()
                .iter()
                .zip(support.class_embeddings())
                .map(|(n, e)| SupportEntry {
                    name: n.clone(),
                    embedding: to_vec(e),
                })
                .collect(),
            noise: to_vec(support.noise_embedding()),
        }
    }

    pub fn to_support<T: Scalar>(&self) -> Result<SupportSet<T>, EmbeddingError> {
        if self.version != Self::VERSION {
            return Err(EmbeddingError::InvalidInput(format!(
                "unsupported support file version {}",
                self.version
            )));
        }
        let conv = |v: &[f64]| -> Result<EmbeddingVector<T>, EmbeddingError> {
            if v.len() != self.dim {
                return Err(EmbeddingError::Dimension {
                    expected: self.dim,
                    got: v.len(),
                });
            }
            Ok(EmbeddingVector::from_vec(v.iter().map(|&x| T::of(x)).collect()))
        };
        SupportSet::new(
            self.classes.iter().map(|c| c.name.clone()).collect(),
            self.classes
                .iter()
                .map(|c| conv(&c.embedding))
                .collect::<Result<_, _>>()?,
            conv(&self.noise)?,
        )
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| EmbeddingError::InvalidInput(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| EmbeddingError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}
