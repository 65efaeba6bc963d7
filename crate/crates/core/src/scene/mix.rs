use super::{EventSpec, SceneAnnotation, SceneError};
use crate::features::MultichannelWave;
use crate::scalar::Scalar;
use crate::spatial::foa_gains;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn scene_samples(scene_len: f64, sample_rate: u32) -> usize {
    (scene_len * sample_rate as f64).round() as usize
}

/// Adds the direct-path FOA image of `event` into `out` (shape 4 x samples).
fn add_event(out: &mut Array2<f64>, event: &EventSpec, sample_rate: u32) {
    let gains = foa_gains(&event.direction);
    let start = event.onset_sample(sample_rate);
    let len = event.len_samples(sample_rate).min(out.ncols().saturating_sub(start));
    let src = event.source.render(len, sample_rate);
    for (c, g) in gains.iter().enumerate() {
        let gain = g * event.gain;
        let mut row = out.row_mut(c);
        for (i, s) in src.iter().enumerate() {
            row[start + i] += gain * s;
        }
    }
}

/// Four-channel FOA rendering of a single event in a silent scene.
pub fn spatialize<T: Scalar>(
    event: &EventSpec,
    scene_len: f64,
    sample_rate: u32,
) -> Result<MultichannelWave<T>, SceneError> {
    event.validate(scene_len)?;
    let mut out = Array2::zeros((4, scene_samples(scene_len, sample_rate)));
    add_event(&mut out, event, sample_rate);
    Ok(MultichannelWave {
        samples: out.mapv(T::of),
        sample_rate,
    })
}

/// Sum of the spatialized events plus independent Gaussian noise of RMS
/// `noise_level` on every channel.
pub fn mix_scene<T: Scalar>(
    events: Vec<EventSpec>,
    scene_len: f64,
    sample_rate: u32,
    noise_level: f64,
    seed: u64,
    max_polyphony: usize,
) -> Result<(MultichannelWave<T>, SceneAnnotation), SceneError> {
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(SceneError::Config(format!("noise level {noise_level}")));
    }
    for e in &events {
        e.validate(scene_len)?;
    }
    let annotation = SceneAnnotation::from_events(events, scene_len);
    annotation.check_polyphony(max_polyphony)?;
    let mut out = Array2::zeros((4, scene_samples(scene_len, sample_rate)));
    for e in &annotation.events {
        add_event(&mut out, e, sample_rate);
    }
    if noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_level).expect("finite positive std");
        out.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    Ok((
        MultichannelWave {
            samples: out.mapv(T::of),
            sample_rate,
        },
        annotation,
    ))
}
