use super::{SceneAnnotation, SceneError};
use crate::embedding::{AudioClip, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;
use crate::spatial::{AccdoaVector, CartesianDoa, SphericalDirection};
use ndarray::Array3;

/// Track slot of every event in every label frame: `result[frame][track]`.
///
/// An event takes the lowest free track when it first appears and keeps it
/// for as long as it stays active.
pub fn assign_tracks(
    annotation: &SceneAnnotation,
    n_tracks: usize,
) -> Result<Vec<Vec<Option<usize>>>, SceneError> {
    let mut current: Vec<Option<usize>> = vec![None; n_tracks];
    let mut out = Vec::with_capacity(annotation.n_frames());
    for (frame, labels) in annotation.frame_labels.iter().enumerate() {
        if labels.len() > n_tracks {
            return Err(SceneError::Capacity {
                frame,
                active: labels.len(),
                n_tracks,
            });
        }
        for slot in current.iter_mut() {
            if let Some(j) = *slot {
                if !labels.iter().any(|l| l.event_index == j) {
                    *slot = None;
                }
            }
        }
        let mut newcomers: Vec<usize> = labels
            .iter()
            .map(|l| l.event_index)
            .filter(|j| !current.contains(&Some(*j)))
            .collect();
        newcomers.sort_by(|&a, &b| {
            let (ea, eb) = (&annotation.events[a], &annotation.events[b]);
            ea.onset.total_cmp(&eb.onset).then(a.cmp(&b))
        });
        for j in newcomers {
            let slot = current
                .iter_mut()
                .find(|s| s.is_none())
                .expect("label count checked against track count");
            *slot = Some(j);
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Per-track training targets at label-frame resolution. Stored sparsely: a
/// track/frame either refers to an event (unit embedding, unit ACCDOA) or is
/// inactive (both zero).
#[derive(Clone, Debug, PartialEq)]
pub struct OracleTargets<T> {
    n_tracks: usize,
    dim: usize,
    track_events: Vec<Vec<Option<usize>>>,
    event_embeddings: Vec<EmbeddingVector<T>>,
    event_doas: Vec<CartesianDoa<T>>,
    event_classes: Vec<usize>,
}

impl<T: Scalar> OracleTargets<T> {
    /// Builds targets from precomputed per-event embeddings (e.g. a sidecar
    /// table), one per entry of `annotation.events`.
    pub fn from_event_embeddings(
        annotation: &SceneAnnotation,
        event_embeddings: Vec<EmbeddingVector<T>>,
        n_tracks: usize,
        dim: usize,
    ) -> Result<Self, SceneError> {
        if event_embeddings.len() != annotation.events.len() {
            return Err(SceneError::Config(format!(
                "{} event embeddings for {} events",
                event_embeddings.len(),
                annotation.events.len()
            )));
        }
        for e in &event_embeddings {
            if e.dim() != dim {
                return Err(crate::embedding::EmbeddingError::Dimension {
                    expected: dim,
                    got: e.dim(),
                }
                .into());
            }
        }
        let track_events = assign_tracks(annotation, n_tracks)?;
        let event_doas = annotation
            .events
            .iter()
            .map(|e| {
                SphericalDirection::new(T::of(e.direction.azimuth), T::of(e.direction.elevation)).to_cartesian()
            })
            .collect();
        Ok(Self {
            n_tracks,
            dim,
            track_events,
            event_embeddings,
            event_doas,
            event_classes: annotation.events.iter().map(|e| e.class_id).collect(),
        })
    }

    pub fn n_tracks(&self) -> usize {
        self.n_tracks
    }

    pub fn n_frames(&self) -> usize {
        self.track_events.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Event occupying `track` at label `frame`; `None` when inactive or
    /// past the end of the scene.
    pub fn event_at(&self, frame: usize, track: usize) -> Option<usize> {
        self.track_events.get(frame).and_then(|f| f[track])
    }

    pub fn embedding_at(&self, frame: usize, track: usize) -> Option<&EmbeddingVector<T>> {
        self.event_at(frame, track).map(|j| &self.event_embeddings[j])
    }

    pub fn accdoa_at(&self, frame: usize, track: usize) -> AccdoaVector<T> {
        match self.event_at(frame, track) {
            Some(j) => {
                let d = self.event_doas[j];
                AccdoaVector::new(d.x, d.y, d.z)
            }
            None => AccdoaVector::zero(),
        }
    }

    pub fn event_embeddings(&self) -> &[EmbeddingVector<T>] {
        &self.event_embeddings
    }

    /// Dense embedding targets, shape (D, N, frames).
    pub fn dense_embeddings(&self) -> Array3<T> {
        let mut out = Array3::zeros((self.dim, self.n_tracks, self.n_frames()));
        for t in 0..self.n_frames() {
            for n in 0..self.n_tracks {
                if let Some(e) = self.embedding_at(t, n) {
                    for (d, &v) in e.0.iter().enumerate() {
                        out[[d, n, t]] = v;
                    }
                }
            }
        }
        out
    }

    /// Dense ACCDOA targets, shape (3, N, frames).
    pub fn dense_accdoa(&self) -> Array3<T> {
        let mut out = Array3::zeros((3, self.n_tracks, self.n_frames()));
        for t in 0..self.n_frames() {
            for n in 0..self.n_tracks {
                let p = self.accdoa_at(t, n).to_array();
                for (k, v) in p.into_iter().enumerate() {
                    out[[k, n, t]] = v;
                }
            }
        }
        out
    }

    pub fn active_frames_per_class(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for frame in &self.track_events {
            for j in frame.iter().flatten() {
                let c = self.event_classes[*j];
                if c < n_classes {
                    counts[c] += 1;
                }
            }
        }
        counts
    }
}

/// Oracle targets whose embeddings come from the provider's audio encoder
/// applied to each clean event's full-length first (W) channel.
pub fn oracle_targets<T: Scalar>(
    annotation: &SceneAnnotation,
    provider: &dyn EmbeddingProvider<T>,
    n_tracks: usize,
    sample_rate: u32,
) -> Result<OracleTargets<T>, SceneError> {
    let embeddings = annotation
        .events
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let len = e.len_samples(sample_rate);
            let w: Vec<T> = e
                .source
                .render(len, sample_rate)
                .into_iter()
                .map(|s| T::of(s * e.gain))
                .collect();
            let key = event_key(j);
            provider.audio_embed(&AudioClip::keyed(&key, &w, sample_rate))
        })
        .collect::<Result<Vec<_>, _>>()?;
    OracleTargets::from_event_embeddings(annotation, embeddings, n_tracks, provider.dim())
}

/// Key of event `j` in a scene's oracle-embedding sidecar table.
pub fn event_key(j: usize) -> String {
    format!("event_{j}")
}
