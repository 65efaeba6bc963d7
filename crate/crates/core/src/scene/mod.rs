//! Labeled synthetic FOA scenes: direct-path spatialization of clean events,
//! additive mixing with ambient noise, oracle per-track targets and the
//! sixteen discrete FOA rotations used for augmentation.

mod generator;
mod mix;
mod oracle;
mod rotation;
mod source;

pub use generator::{Scene, SceneConfig, SceneGenerator};
pub use mix::{mix_scene, spatialize};
pub use oracle::{assign_tracks, event_key, oracle_targets, OracleTargets};
pub use rotation::{rotate_foa, FoaRotation};
pub use source::EventSource;

use crate::embedding::EmbeddingError;
use crate::spatial::{CartesianDoa, SphericalDirection};
use thiserror::Error;

/// Annotation frame length in seconds.
pub const LABEL_HOP_S: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("range error: {0}")]
    Range(String),
    #[error("label frame {frame} has {count} simultaneous events, cap is {cap}")]
    Polyphony { frame: usize, count: usize, cap: usize },
    #[error("label frame {frame} has {active} active events but only {n_tracks} tracks")]
    Capacity { frame: usize, active: usize, n_tracks: usize },
    #[error("unknown FOA rotation id {0} (valid: 0..16)")]
    InvalidRotation(u8),
    #[error("invalid scene configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventSpec {
    pub class_id: usize,
    /// Seconds.
    pub onset: f64,
    /// Seconds, exclusive.
    pub offset: f64,
    pub direction: SphericalDirection<f64>,
    pub source: EventSource,
    /// Linear amplitude applied to the unit-RMS source.
    pub gain: f64,
}

impl EventSpec {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn onset_sample(&self, sample_rate: u32) -> usize {
        (self.onset * sample_rate as f64).round().max(0.0) as usize
    }

    pub fn len_samples(&self, sample_rate: u32) -> usize {
        let end = (self.offset * sample_rate as f64).round().max(0.0) as usize;
        end.saturating_sub(self.onset_sample(sample_rate))
    }

    /// Whether the event overlaps label frame `l`.
    pub fn in_label_frame(&self, l: usize) -> bool {
        let start = l as f64 * LABEL_HOP_S;
        let end = start + LABEL_HOP_S;
        self.onset < end - TIME_EPS && self.offset > start + TIME_EPS
    }

    pub fn validate(&self, scene_len: f64) -> Result<(), SceneError> {
        if !(self.onset >= 0.0 && self.onset < self.offset && self.offset <= scene_len + TIME_EPS) {
            return Err(SceneError::Range(format!(
                "event [{}, {}) s does not fit a {} s scene",
                self.onset, self.offset, scene_len
            )));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(SceneError::Range(format!("event gain {} must be positive", self.gain)));
        }
        Ok(())
    }
}

/// One active event in one label frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameLabel {
    pub class_id: usize,
    pub event_index: usize,
    pub azimuth: f64,
    pub elevation: f64,
}

impl FrameLabel {
    pub fn doa(&self) -> CartesianDoa<f64> {
        SphericalDirection::new(self.azimuth, self.elevation).to_cartesian()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneAnnotation {
    /// Seconds.
    pub duration: f64,
    pub events: Vec<EventSpec>,
    /// Indexed by 100 ms label frame.
    pub frame_labels: Vec<Vec<FrameLabel>>,
}

/// Number of 100 ms label frames covering `duration` seconds.
pub fn label_frame_count(duration: f64) -> usize {
    ((duration / LABEL_HOP_S) - TIME_EPS).ceil().max(0.0) as usize
}

impl SceneAnnotation {
    pub fn from_events(events: Vec<EventSpec>, duration: f64) -> Self {
        let n_frames = label_frame_count(duration);
        let mut frame_labels = vec![Vec::new(); n_frames];
        for (j, e) in events.iter().enumerate() {
            let first = (e.onset / LABEL_HOP_S).floor().max(0.0) as usize;
            for (l, labels) in frame_labels.iter_mut().enumerate().skip(first) {
                if e.offset <= l as f64 * LABEL_HOP_S + TIME_EPS {
                    break;
                }
                if !e.in_label_frame(l) {
                    continue;
                }
                labels.push(FrameLabel {
                    class_id: e.class_id,
                    event_index: j,
                    azimuth: e.direction.azimuth,
                    elevation: e.direction.elevation,
                });
            }
        }
        Self {
            duration,
            events,
            frame_labels,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frame_labels.len()
    }

    pub fn max_polyphony(&self) -> usize {
        self.frame_labels.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn check_polyphony(&self, cap: usize) -> Result<(), SceneError> {
        match self
            .frame_labels
            .iter()
            .enumerate()
            .find(|(_, l)| l.len() > cap)
        {
            Some((frame, l)) => Err(SceneError::Polyphony {
                frame,
                count: l.len(),
                cap,
            }),
            None => Ok(()),
        }
    }

    /// Active label frames per class.
    pub fn active_frames_per_class(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for labels in &self.frame_labels {
            for l in labels {
                if l.class_id < n_classes {
                    counts[l.class_id] += 1;
                }
            }
        }
        counts
    }
}
