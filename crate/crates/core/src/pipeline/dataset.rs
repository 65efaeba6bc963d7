use super::{Frontend, PipelineError};
use crate::features::{FeatureTensor, MultichannelWave};
use crate::nn::TrainExample;
use crate::scalar::Scalar;
use crate::scene::{rotate_foa, FoaRotation, OracleTargets, SceneAnnotation};
use rand::Rng;

/// Cached features and targets of one scene.
#[derive(Clone, Debug)]
pub struct SceneRecord<T> {
    pub features: FeatureTensor<T>,
    pub targets: OracleTargets<T>,
}

/// Training scenes from which fixed-length windows are cut.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    frontend: Frontend,
    scenes: Vec<SceneRecord<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(frontend: Frontend) -> Self {
        Self {
            frontend,
            scenes: Vec::new(),
        }
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scenes(&self) -> &[SceneRecord<T>] {
        &self.scenes
    }

    pub fn push(&mut self, wave: &MultichannelWave<T>, targets: OracleTargets<T>) -> Result<(), PipelineError> {
        let features = self.frontend.analyze(wave)?;
        self.scenes.push(SceneRecord { features, targets });
        Ok(())
    }

    /// Adds the scene rotated by `rot`. Oracle embeddings come from the
    /// clean W channel, which rotations leave unchanged.
    pub fn push_rotated(
        &mut self,
        wave: &MultichannelWave<T>,
        annotation: &SceneAnnotation,
        targets: &OracleTargets<T>,
        rot: FoaRotation,
    ) -> Result<(), PipelineError> {
        let (w, a) = rotate_foa(wave, annotation, rot)?;
        let t = OracleTargets::from_event_embeddings(&a, targets.event_embeddings().to_vec(), targets.n_tracks(), targets.dim())?;
        self.push(&w, t)
    }

    pub fn example(&self, scene: usize, start: usize) -> TrainExample<T> {
        let s = &self.scenes[scene];
        TrainExample {
            features: self.frontend.window(&s.features, start),
            targets: self.frontend.window_targets(&s.targets, start),
        }
    }

    /// A window at a uniformly random scene and start frame.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> TrainExample<T> {
        let scene = rng.random_range(0..self.scenes.len());
        let frames = self.scenes[scene].features.n_frames();
        let last = frames.saturating_sub(self.frontend.config.seg_frames);
        let start = rng.random_range(0..=last);
        self.example(scene, start)
    }

    /// The regular segments of every scene, thinned evenly to at most `max`.
    pub fn regular_examples(&self, max: usize) -> Vec<TrainExample<T>> {
        let all: Vec<(usize, usize)> = self
            .scenes
            .iter()
            .enumerate()
            .flat_map(|(i, s)| self.frontend.segment_starts(s.features.n_frames()).into_iter().map(move |st| (i, st)))
            .collect();
        if all.is_empty() || max == 0 {
            return Vec::new();
        }
        let step = all.len().div_ceil(max);
        all.iter().step_by(step).map(|&(i, st)| self.example(i, st)).collect()
    }
}
