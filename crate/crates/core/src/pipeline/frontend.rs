use crate::config::{AmplitudeScale, FrontendConfig, PhaseEncoding, RunConfig};
use crate::decoder::label_frame_for_model;
use crate::features::{extract_features, pool_bins, segment_count, FeatureConfig, FeatureError, FeatureTensor, MultichannelWave};
use crate::pit::TrackFrames;
use crate::scalar::Scalar;
use crate::scene::OracleTargets;
use ndarray::s;
use std::ops::Range;

/// Waveform to network-input conversion and the frame bookkeeping between
/// feature, model and label frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Frontend {
    pub features: FeatureConfig,
    pub config: FrontendConfig,
    /// Feature frames per label frame.
    pub frames_per_label: usize,
    /// Feature frames per model output frame.
    pub model_hop: usize,
}

impl Frontend {
    /// Expects a validated config.
    pub fn new(run: &RunConfig) -> Self {
        Self {
            features: run.features.clone(),
            config: run.frontend,
            frames_per_label: run.frames_per_label(),
            model_hop: run.network.time_pooling(),
        }
    }

    pub fn model_frames(&self) -> usize {
        self.config.input_frames / self.model_hop
    }

    /// Pooled features of a whole recording.
    pub fn analyze<T: Scalar>(&self, wave: &MultichannelWave<T>) -> Result<FeatureTensor<T>, FeatureError> {
        let mut raw = extract_features(wave, &self.features)?;
        if self.config.amplitude == AmplitudeScale::Log1p {
            raw.values.slice_mut(s![..4, .., ..]).mapv_inplace(|a| a.ln_1p());
        }
        let raw = match self.config.phase {
            PhaseEncoding::Angle => raw,
            PhaseEncoding::Cosine => {
                raw.values.slice_mut(s![4.., .., ..]).mapv_inplace(|a| a.cos());
                raw
            }
            PhaseEncoding::CosSin => {
                let (_, f, t) = raw.values.dim();
                let mut v = ndarray::Array3::zeros((10, f, t));
                v.slice_mut(s![..4, .., ..]).assign(&raw.values.slice(s![..4, .., ..]));
                v.slice_mut(s![4..7, .., ..]).assign(&raw.values.slice(s![4.., .., ..]).mapv(|a| a.cos()));
                v.slice_mut(s![7.., .., ..]).assign(&raw.values.slice(s![4.., .., ..]).mapv(|a| a.sin()));
                FeatureTensor { values: v }
            }
        };
        // pooling after the nonlinear maps, so they act on single bins
        Ok(pool_bins(&raw, self.config.freq_pool))
    }

    pub fn segment_starts(&self, n_frames: usize) -> Vec<usize> {
        let n = segment_count(n_frames, self.config.seg_frames, self.config.shift_frames);
        (0..n).map(|i| i * self.config.shift_frames).collect()
    }

    /// Network input for the segment starting at `start`: `seg_frames` frames
    /// (zero past the end of the recording) padded to `input_frames`.
    pub fn window<T: Scalar>(&self, features: &FeatureTensor<T>, start: usize) -> FeatureTensor<T> {
        let (m, f, t) = features.values.dim();
        let mut out = ndarray::Array3::zeros((m, f, self.config.input_frames));
        if start < t {
            let end = (start + self.config.seg_frames).min(t);
            out.slice_mut(s![.., .., ..end - start])
                .assign(&features.values.slice(s![.., .., start..end]));
        }
        FeatureTensor { values: out }
    }

    /// Label frames decoded from segment `i` of `n_segments`: each segment
    /// owns the label frames of its shift, the last one everything after.
    pub fn owned_label_frames(&self, i: usize, n_segments: usize, n_label_frames: usize) -> Range<usize> {
        let per = self.config.shift_frames / self.frames_per_label;
        let lo = (i * per).min(n_label_frames);
        let hi = if i + 1 == n_segments { n_label_frames } else { ((i + 1) * per).min(n_label_frames) };
        lo..hi
    }

    /// Targets at model-frame resolution for the window starting at feature
    /// frame `start`: each model frame takes the label frame holding its centre.
    pub fn window_targets<T: Scalar>(&self, oracle: &OracleTargets<T>, start: usize) -> TrackFrames<T> {
        let t_out = self.model_frames();
        let (d, n) = (oracle.dim(), oracle.n_tracks());
        let mut out = TrackFrames::zeros(d, n, t_out);
        for k in 0..t_out {
            // frames past the segment length are padding
            if k * self.model_hop >= self.config.seg_frames {
                break;
            }
            let l = label_frame_for_model(k, start, self.model_hop, self.frames_per_label);
            if l >= oracle.n_frames() {
                continue;
            }
            for track in 0..n {
                if let Some(e) = oracle.embedding_at(l, track) {
                    out.embeddings.slice_mut(s![.., track, k]).assign(&e.0);
                }
                let a = oracle.accdoa_at(l, track).to_array();
                for (c, v) in a.into_iter().enumerate() {
                    out.accdoa[[c, track, k]] = v;
                }
            }
        }
        out
    }
}
