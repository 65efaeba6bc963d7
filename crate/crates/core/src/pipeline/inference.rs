use super::{Frontend, PipelineError};
use crate::decoder::{decode_segment, DecoderConfig, Detection};
use crate::embedding::{AudioClip, EmbeddingProvider, EmbeddingVector, SupportSet};
use crate::features::MultichannelWave;
use crate::nn::EmbedAccdoaNet;
use crate::pit::TrackFrames;
use crate::records::AnnotationRecord;
use crate::scalar::Scalar;
use crate::scene::label_frame_count;
use crate::spatial::{wrap_azimuth, SphericalDirection};
use std::ops::Range;

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOutput<T> {
    /// First feature frame of the segment.
    pub start: usize,
    pub output: TrackFrames<T>,
    /// Label frames this segment is decoded onto.
    pub label_frames: Range<usize>,
    /// Clip-level embedding of the segment's first channel, when requested.
    pub clip_embedding: Option<EmbeddingVector<T>>,
}

/// Network outputs of a whole recording, ready for decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOutputs<T> {
    pub segments: Vec<SegmentOutput<T>>,
    pub n_label_frames: usize,
    pub model_hop: usize,
    pub frames_per_label: usize,
}

/// Runs the network over every segment of `wave`. With `clip_provider` each
/// segment also gets the audio embedding of its first-channel samples.
pub fn run_network<T: Scalar>(
    net: &EmbedAccdoaNet<T>,
    frontend: &Frontend,
    wave: &MultichannelWave<T>,
    clip_provider: Option<&dyn EmbeddingProvider<T>>,
) -> Result<SceneOutputs<T>, PipelineError> {
    let features = frontend.analyze(wave)?;
    let n_label_frames = label_frame_count(wave.len() as f64 / wave.sample_rate as f64);
    let starts = frontend.segment_starts(features.n_frames());
    let seg_samples = frontend.features.samples_for_frames(frontend.config.seg_frames);
    let mut segments = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let output = net.forward(&frontend.window(&features, start))?;
        let clip_embedding = match clip_provider {
            None => None,
            Some(p) => {
                let lo = (start * frontend.features.hop).min(wave.len());
                let hi = (lo + seg_samples).min(wave.len());
                let samples: Vec<T> = wave.channel(0).slice(ndarray::s![lo..hi]).to_vec();
                let key = format!("segment_{i}");
                Some(p.audio_embed(&AudioClip::keyed(&key, &samples, wave.sample_rate))?)
            }
        };
        segments.push(SegmentOutput {
            start,
            output,
            label_frames: frontend.owned_label_frames(i, starts.len(), n_label_frames),
            clip_embedding,
        });
    }
    Ok(SceneOutputs {
        segments,
        n_label_frames,
        model_hop: frontend.model_hop,
        frames_per_label: frontend.frames_per_label,
    })
}

/// Detections per label frame of the whole recording.
pub fn decode_scene<T: Scalar>(
    outputs: &SceneOutputs<T>,
    support: &SupportSet<T>,
    cfg: &DecoderConfig,
) -> Result<Vec<Vec<Detection<T>>>, PipelineError> {
    let mut frames = Vec::with_capacity(outputs.n_label_frames);
    for seg in &outputs.segments {
        if seg.output.dim() != support.dim() {
            return Err(PipelineError::Compatibility(format!(
                "network embeddings are {}-d, support set is {}-d",
                seg.output.dim(),
                support.dim()
            )));
        }
        frames.extend(decode_segment(
            &seg.output,
            seg.start,
            outputs.model_hop,
            outputs.frames_per_label,
            seg.label_frames.clone(),
            support,
            seg.clip_embedding.as_ref(),
            cfg,
        )?);
    }
    Ok(frames)
}

/// One record per detection. A class is detected at most once per frame,
/// so every prediction carries source id 0.
pub fn detection_records<T: Scalar>(frames: &[Vec<Detection<T>>]) -> Vec<AnnotationRecord> {
    frames
        .iter()
        .flatten()
        .filter_map(|d| {
            let dir = SphericalDirection::from_cartesian(&d.doa.cast::<f64>())?;
            Some(AnnotationRecord {
                frame: d.label_frame,
                class_id: d.class_id,
                source_id: 0,
                azimuth: wrap_azimuth(dir.azimuth),
                elevation: dir.elevation.clamp(-90.0, 90.0),
            })
        })
        .collect()
}

/// Network, decoding and record conversion in one call.
pub fn infer_records<T: Scalar>(
    net: &EmbedAccdoaNet<T>,
    frontend: &Frontend,
    wave: &MultichannelWave<T>,
    support: &SupportSet<T>,
    cfg: &DecoderConfig,
    clip_provider: Option<&dyn EmbeddingProvider<T>>,
) -> Result<Vec<AnnotationRecord>, PipelineError> {
    if cfg.use_clap_combination && clip_provider.is_none() {
        return Err(PipelineError::Other("the clip-embedding override needs an embedding provider".into()));
    }
    let outputs = run_network(net, frontend, wave, if cfg.use_clap_combination { clip_provider } else { None })?;
    Ok(detection_records(&decode_scene(&outputs, support, cfg)?))
}
