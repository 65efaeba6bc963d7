//! Turns track outputs into (class, DOA) detections: dual-threshold activity
//! gating, nearest-support class assignment with background rejection, and
//! the single-source override from a clip-level audio embedding.

use crate::embedding::{cosine, EmbeddingVector, SupportSet};
use crate::pit::TrackFrames;
use crate::scalar::Scalar;
use crate::spatial::{decode_accdoa, AccdoaVector, CartesianDoa};
use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoderError {
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// Threshold for the most active track.
    pub sigma_a: f64,
    /// Threshold for every other track.
    pub sigma_b: f64,
    pub use_noise_rejection: bool,
    pub use_clap_combination: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            sigma_a: 0.2,
            sigma_b: 0.8,
            use_noise_rejection: true,
            use_clap_combination: false,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecoderError> {
        if !(0.0 <= self.sigma_a && self.sigma_a <= self.sigma_b && self.sigma_b <= 1.0) {
            return Err(DecoderError::Config(format!(
                "need 0 <= sigma_a <= sigma_b <= 1, got {} / {}",
                self.sigma_a, self.sigma_b
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassAssignment {
    Class(usize),
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection<T> {
    pub label_frame: usize,
    pub class_id: usize,
    pub doa: CartesianDoa<T>,
    pub activity: T,
    pub track: usize,
}

/// Tracks passing the dual threshold: the most active track (lowest index on
/// ties) against `sigma_a`, all others against `sigma_b`.
pub fn gate_tracks<T: Scalar>(activities: &[T], cfg: &DecoderConfig) -> Vec<usize> {
    let Some(top) = activities
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, T)>, (i, &a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((i, a)),
        })
        .map(|(i, _)| i)
    else {
        return Vec::new();
    };
    let (sa, sb) = (T::of(cfg.sigma_a), T::of(cfg.sigma_b));
    activities
        .iter()
        .enumerate()
        .filter(|&(i, &a)| if i == top { a >= sa } else { a >= sb })
        .map(|(i, _)| i)
        .collect()
}

fn argmax_class<T: Scalar>(query: ArrayView1<'_, T>, support: &SupportSet<T>) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (c, e) in support.class_embeddings().iter().enumerate() {
        let s = cosine(query, e.view());
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

/// Most similar support class; the noise embedding wins only when strictly
/// more similar than every class. A zero query is noise.
pub fn assign_class<T: Scalar>(
    embedding: ArrayView1<'_, T>,
    support: &SupportSet<T>,
    use_noise: bool,
) -> (ClassAssignment, T) {
    if embedding.iter().all(|&v| v == T::zero()) {
        return (ClassAssignment::Noise, T::zero());
    }
    let (c, s) = argmax_class(embedding, support);
    if use_noise {
        let n = cosine(embedding, support.noise_embedding().view());
        if n > s {
            return (ClassAssignment::Noise, n);
        }
    }
    (ClassAssignment::Class(c), s)
}

fn check_dims<T: Scalar>(out: &TrackFrames<T>, support: &SupportSet<T>) -> Result<(), DecoderError> {
    out.check().map_err(|e| DecoderError::Shape(e.to_string()))?;
    if out.dim() != support.dim() {
        return Err(DecoderError::Shape(format!(
            "model embeddings are {}-d, support set is {}-d",
            out.dim(),
            support.dim()
        )));
    }
    Ok(())
}

/// Detections for model frame `t` of `out`, stamped with `label_frame`.
pub fn decode_frame<T: Scalar>(
    out: &TrackFrames<T>,
    t: usize,
    label_frame: usize,
    support: &SupportSet<T>,
    cfg: &DecoderConfig,
) -> Result<Vec<Detection<T>>, DecoderError> {
    check_dims(out, support)?;
    if t >= out.n_frames() {
        return Err(DecoderError::Shape(format!("frame {t} of {}", out.n_frames())));
    }
    let decoded: Vec<(T, Option<CartesianDoa<T>>)> = (0..out.n_tracks())
        .map(|n| {
            decode_accdoa(&AccdoaVector::new(
                out.accdoa[[0, n, t]],
                out.accdoa[[1, n, t]],
                out.accdoa[[2, n, t]],
            ))
        })
        .collect();
    let activities: Vec<T> = decoded.iter().map(|d| d.0).collect();
    let mut dets: Vec<Detection<T>> = Vec::new();
    for n in gate_tracks(&activities, cfg) {
        let (activity, doa) = decoded[n];
        let Some(doa) = doa else { continue };
        let emb = out.embeddings.slice(ndarray::s![.., n, t]);
        let ClassAssignment::Class(class_id) = assign_class(emb, support, cfg.use_noise_rejection).0 else {
            continue;
        };
        match dets.iter_mut().find(|d| d.class_id == class_id) {
            Some(d) if activity > d.activity => {
                *d = Detection {
                    label_frame,
                    class_id,
                    doa,
                    activity,
                    track: n,
                }
            }
            Some(_) => {}
            None => dets.push(Detection {
                label_frame,
                class_id,
                doa,
                activity,
                track: n,
            }),
        }
    }
    Ok(dets)
}

/// Relabels frames holding exactly one detection with the class nearest to
/// the clip-level embedding. Frames with zero or several detections, and all
/// DOAs and activities, are left as they are.
pub fn apply_clap_override<T: Scalar>(frames: &mut [Vec<Detection<T>>], clip_embedding: &EmbeddingVector<T>, support: &SupportSet<T>) {
    let (c, _) = argmax_class(clip_embedding.view(), support);
    for f in frames.iter_mut() {
        if let [only] = f.as_mut_slice() {
            only.class_id = c;
        }
    }
}

/// Model frame nearest to the centre of label frame `label_frame`, for a
/// segment starting at feature frame `seg_start` with `hop` feature frames
/// per model frame and `frames_per_label` feature frames per label frame.
pub fn model_frame_for_label(label_frame: usize, seg_start: usize, hop: usize, frames_per_label: usize, t_out: usize) -> usize {
    let centre2 = (2 * label_frame + 1) * frames_per_label;
    let rel2 = centre2.saturating_sub(2 * seg_start);
    (rel2 / (2 * hop)).min(t_out.saturating_sub(1))
}

/// Label frame containing the centre of model frame `k`.
pub fn label_frame_for_model(k: usize, seg_start: usize, hop: usize, frames_per_label: usize) -> usize {
    (2 * seg_start + (2 * k + 1) * hop) / (2 * frames_per_label)
}

/// Decodes one segment's outputs onto the label frames `label_frames`
/// (absolute indices), mapping each to its nearest model frame. With the
/// override enabled `clip_embedding` is required.
#[allow(clippy::too_many_arguments)]
pub fn decode_segment<T: Scalar>(
    out: &TrackFrames<T>,
    seg_start: usize,
    hop: usize,
    frames_per_label: usize,
    label_frames: std::ops::Range<usize>,
    support: &SupportSet<T>,
    clip_embedding: Option<&EmbeddingVector<T>>,
    cfg: &DecoderConfig,
) -> Result<Vec<Vec<Detection<T>>>, DecoderError> {
    cfg.validate()?;
    let clip = match (cfg.use_clap_combination, clip_embedding) {
        (true, None) => {
            return Err(DecoderError::Config(
                "the clip-embedding override is enabled but no clip embedding was given".into(),
            ))
        }
        (true, Some(e)) => Some(e),
        (false, _) => None,
    };
    let mut frames = label_frames
        .map(|l| {
            let k = model_frame_for_label(l, seg_start, hop, frames_per_label, out.n_frames());
            decode_frame(out, k, l, support, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(e) = clip {
        if e.dim() != support.dim() {
            return Err(DecoderError::Shape(format!(
                "clip embedding is {}-d, support set is {}-d",
                e.dim(),
                support.dim()
            )));
        }
        apply_clap_override(&mut frames, e, support);
    }
    Ok(frames)
}
