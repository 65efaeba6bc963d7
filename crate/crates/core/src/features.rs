//! STFT front end: multichannel amplitude spectrograms plus inter-channel
//! phase differences against the omnidirectional W channel, cut into
//! fixed-length overlapping segments.

use crate::scalar::Scalar;
use ndarray::{s, Array2, Array3, ArrayView1, Axis};
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("input of {len} samples is shorter than one frame of {frame_len}")]
    EmptyInput { len: usize, frame_len: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("format error: {0}")]
    Format(String),
}

/// Magnitudes below this on the reference channel make the phase difference 0.
pub const IPD_REFERENCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients<T: Scalar>(self, n: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); n],
            Window::Hann => (0..n)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    T::of(0.5 - 0.5 * phase.cos())
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Analysis frame length in samples (20 ms at 24 kHz).
    pub frame_len: usize,
    /// Frame hop in samples (10 ms at 24 kHz).
    pub hop: usize,
    /// FFT length; frames are zero-padded from `frame_len`.
    pub fft_size: usize,
    pub window: Window,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24_000,
            frame_len: 480,
            hop: 240,
            fft_size: 512,
            window: Window::Hann,
        }
    }
}

impl FeatureConfig {
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.hop == 0 || self.frame_len < self.hop {
            return Err(FeatureError::InvalidConfig(format!(
                "need frame_len >= hop > 0, got frame_len {} hop {}",
                self.frame_len, self.hop
            )));
        }
        if self.fft_size < self.frame_len {
            return Err(FeatureError::InvalidConfig(format!(
                "fft_size {} shorter than frame_len {}",
                self.fft_size, self.frame_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(FeatureError::InvalidConfig("sample_rate is 0".into()));
        }
        Ok(())
    }

    /// Number of STFT frames produced for `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    /// Samples needed to produce exactly `frames` STFT frames.
    pub fn samples_for_frames(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }
}

/// Channel-major multichannel waveform.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelWave<T> {
    /// Shape (channels, samples).
    pub samples: Array2<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> MultichannelWave<T> {
    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels, len)),
            sample_rate,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, T> {
        self.samples.row(c)
    }

    pub fn rms(&self, c: usize) -> T {
        let row = self.samples.row(c);
        if row.is_empty() {
            return T::zero();
        }
        (row.iter().map(|&v| v * v).sum::<T>() / T::of(row.len() as f64)).sqrt()
    }

    /// Copies samples `[start, start + len)`, zero-filling past the end.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let mut out = Array2::zeros((self.n_channels(), len));
        if start < self.len() {
            let end = (start + len).min(self.len());
            out.slice_mut(s![.., ..end - start])
                .assign(&self.samples.slice(s![.., start..end]));
        }
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    pub fn cast<U: Scalar>(&self) -> MultichannelWave<U> {
        MultichannelWave {
            samples: self.samples.mapv(|v| U::of(v.as_f64())),
            sample_rate: self.sample_rate,
        }
    }
}

/// Model input features indexed (channel, frequency bin, frame).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor<T> {
    pub values: Array3<T>,
}

impl<T: Scalar> FeatureTensor<T> {
    pub fn n_channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_bins(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[2]
    }

    /// Zero-pads (or truncates) the time axis to `frames`.
    pub fn with_frames(&self, frames: usize) -> Self {
        let (m, f, t) = self.values.dim();
        let mut out = Array3::zeros((m, f, frames));
        let keep = t.min(frames);
        out.slice_mut(s![.., .., ..keep])
            .assign(&self.values.slice(s![.., .., ..keep]));
        Self { values: out }
    }
}

/// Averages groups of `factor` adjacent frequency bins; trailing bins that
/// do not fill a group are dropped.
pub fn pool_bins<T: Scalar>(features: &FeatureTensor<T>, factor: usize) -> FeatureTensor<T> {
    assert!(factor >= 1, "pooling factor must be at least 1");
    let (m, f, t) = features.values.dim();
    let out_f = f / factor;
    let inv = T::one() / T::of(factor as f64);
    let mut out = Array3::zeros((m, out_f, t));
    for c in 0..m {
        for g in 0..out_f {
            let mut row = out.slice_mut(s![c, g, ..]);
            for b in g * factor..(g + 1) * factor {
                row.zip_mut_with(&features.values.slice(s![c, b, ..]), |o, &v| *o += v);
            }
            row.mapv_inplace(|v| v * inv);
        }
    }
    FeatureTensor { values: out }
}

/// Short-time Fourier transform of one channel. Output shape is
/// (fft_size / 2 + 1, frames).
pub fn stft<T: Scalar>(
    wave: ArrayView1<'_, T>,
    cfg: &FeatureConfig,
) -> Result<Array2<Complex<T>>, FeatureError> {
    cfg.validate()?;
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let window = cfg.window.coefficients::<T>(cfg.frame_len);
    stft_with(wave, cfg, fft.as_ref(), &window)
}

fn stft_with<T: Scalar>(
    wave: ArrayView1<'_, T>,
    cfg: &FeatureConfig,
    fft: &dyn rustfft::Fft<T>,
    window: &[T],
) -> Result<Array2<Complex<T>>, FeatureError> {
    let frames = cfg.n_frames(wave.len());
    if frames == 0 {
        return Err(FeatureError::EmptyInput {
            len: wave.len(),
            frame_len: cfg.frame_len,
        });
    }
    let bins = cfg.n_bins();
    let mut out = Array2::zeros((bins, frames));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.fft_size];
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < cfg.frame_len {
                Complex::new(wave[start + i] * window[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            };
        }
        fft.process(&mut buf);
        for f in 0..bins {
            out[[f, t]] = buf[f];
        }
    }
    Ok(out)
}

/// Number of feature channels produced for FOA input: 4 amplitudes + 3 IPDs.
pub const FOA_FEATURE_CHANNELS: usize = 7;

/// Amplitude spectrograms of W, Y, Z, X followed by the wrapped phase
/// differences of Y, Z and X relative to W.
pub fn extract_features<T: Scalar>(
    wave: &MultichannelWave<T>,
    cfg: &FeatureConfig,
) -> Result<FeatureTensor<T>, FeatureError> {
    if wave.n_channels() != 4 {
        return Err(FeatureError::Format(format!(
            "expected 4 FOA channels, got {}",
            wave.n_channels()
        )));
    }
    if wave.sample_rate != cfg.sample_rate {
        return Err(FeatureError::Format(format!(
            "expected {} Hz audio, got {} Hz",
            cfg.sample_rate, wave.sample_rate
        )));
    }
    cfg.validate()?;
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let window = cfg.window.coefficients::<T>(cfg.frame_len);
    let specs = (0..4)
        .map(|c| stft_with(wave.channel(c), cfg, fft.as_ref(), &window))
        .collect::<Result<Vec<_>, _>>()?;
    let (bins, frames) = specs[0].dim();
    let mut values = Array3::zeros((FOA_FEATURE_CHANNELS, bins, frames));
    for (c, spec) in specs.iter().enumerate() {
        values
            .index_axis_mut(Axis(0), c)
            .assign(&spec.mapv(|z| z.norm()));
    }
    let floor = T::of(IPD_REFERENCE_FLOOR);
    let reference = &specs[0];
    for c in 1..4 {
        let mut ipd = values.index_axis_mut(Axis(0), 3 + c);
        for ((out, &z), &w) in ipd.iter_mut().zip(specs[c].iter()).zip(reference.iter()) {
            *out = if w.norm() < floor {
                T::zero()
            } else {
                wrapped_phase(z * w.conj())
            };
        }
    }
    Ok(FeatureTensor { values })
}

/// Phase angle in (-pi, pi]; zero for the zero phasor.
fn wrapped_phase<T: Scalar>(z: Complex<T>) -> T {
    if z.re == T::zero() && z.im == T::zero() {
        return T::zero();
    }
    let a = z.im.atan2(z.re);
    if a <= -T::PI() {
        a + T::PI() + T::PI()
    } else {
        a
    }
}

/// Number of segments `segment` produces for `frames` input frames.
pub fn segment_count(frames: usize, seg_frames: usize, shift_frames: usize) -> usize {
    if frames <= seg_frames {
        1
    } else {
        (frames - seg_frames).div_ceil(shift_frames.max(1)) + 1
    }
}

/// Cuts features into overlapping windows of `seg_frames`; the last window is
/// zero-padded.
pub fn segment<T: Scalar>(
    features: &FeatureTensor<T>,
    seg_frames: usize,
    shift_frames: usize,
) -> Vec<FeatureTensor<T>> {
    assert!(seg_frames >= 1, "seg_frames must be at least 1");
    let (m, f, t) = features.values.dim();
    let count = segment_count(t, seg_frames, shift_frames);
    (0..count)
        .map(|i| {
            let start = i * shift_frames.max(1);
            let mut out = Array3::zeros((m, f, seg_frames));
            if start < t {
                let end = (start + seg_frames).min(t);
                out.slice_mut(s![.., .., ..end - start])
                    .assign(&features.values.slice(s![.., .., start..end]));
            }
            FeatureTensor { values: out }
        })
        .collect()
}
