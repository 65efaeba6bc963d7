//! Multichannel RIFF WAV input and output.

use crate::features::MultichannelWave;
use crate::scalar::Scalar;
use ndarray::Array2;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: {source}")]
    Wav { path: String, source: hound::Error },
    #[error("{path}: unsupported sample format {bits}-bit {format}")]
    Format { path: String, bits: u16, format: String },
}

/// Reads 16/24/32-bit integer or 32-bit float WAV; integers are scaled to
/// [-1, 1).
pub fn read_wav<T: Scalar>(path: &Path) -> Result<MultichannelWave<T>, AudioError> {
    let p = path.display().to_string();
    let wrap = |source| AudioError::Wav { path: p.clone(), source };
    let mut reader = hound::WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    let ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wrap)?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wrap)?
        }
        (f, bits) => {
            return Err(AudioError::Format {
                path: p,
                bits,
                format: format!("{f:?}").to_lowercase(),
            })
        }
    };
    let len = interleaved.len() / ch.max(1);
    let samples = Array2::from_shape_fn((ch, len), |(c, n)| T::of(interleaved[n * ch + c]));
    Ok(MultichannelWave {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes 32-bit float WAV.
pub fn write_wav<T: Scalar>(path: &Path, wave: &MultichannelWave<T>) -> Result<(), AudioError> {
    let p = path.display().to_string();
    let wrap = |source| AudioError::Wav { path: p.clone(), source };
    let spec = hound::WavSpec {
        channels: wave.n_channels() as u16,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for n in 0..wave.len() {
        for c in 0..wave.n_channels() {
            w.write_sample(wave.samples[[c, n]].as_f64() as f32).map_err(wrap)?;
        }
    }
    w.finalize().map_err(wrap)
}
