use super::PipelineError;
use crate::config::RunConfig;
use crate::scalar::Scalar;
use crate::scene::EventSource;

/// Length of a synthesized shot, seconds.
pub const SHOT_S: f64 = 1.0;

/// Rendered support clips: `K` shots per class and `max(K, 1)` background clips.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticShots<T> {
    pub class_shots: Vec<Vec<Vec<T>>>,
    pub background: Vec<Vec<T>>,
    pub sample_rate: u32,
}

/// Band-noise shots of catalog classes (the same sources scenes are made
/// of) and broadband noise clips for the background prototype.
pub fn synthetic_shots<T: Scalar>(run: &RunConfig, class_names: &[String], k: usize) -> Result<SyntheticShots<T>, PipelineError> {
    let catalog = run.catalog.build().map_err(|e| PipelineError::Other(e.to_string()))?;
    let sr = run.features.sample_rate;
    let len = (SHOT_S * sr as f64).round() as usize;
    let render = |src: EventSource| -> Vec<T> { src.render(len, sr).into_iter().map(T::of).collect() };
    let mut class_shots = Vec::with_capacity(class_names.len());
    for name in class_names {
        let band = catalog
            .index_of(name)
            .and_then(|c| catalog.get(c))
            .ok_or_else(|| PipelineError::Other(format!("cannot synthesize shots for {name:?}: not a catalog class")))?;
        class_shots.push(
            (0..k as u64)
                .map(|i| {
                    render(EventSource::BandNoise {
                        low_hz: band.low_hz,
                        high_hz: band.high_hz,
                        seed: run.stream_seed(&format!("support/{name}"), i),
                    })
                })
                .collect(),
        );
    }
    let background = (0..k.max(1) as u64)
        .map(|i| {
            render(EventSource::BandNoise {
                low_hz: 0.0,
                high_hz: sr as f64 / 2.0,
                seed: run.stream_seed("support/background", i),
            })
        })
        .collect();
    Ok(SyntheticShots {
        class_shots,
        background,
        sample_rate: sr,
    })
}
