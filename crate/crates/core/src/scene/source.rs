use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use std::sync::Arc;

/// Fade-in/out length applied to synthetic sources, seconds.
const FADE_S: f64 = 0.01;

/// Mono signal of an event before spatialization.
#[derive(Clone, Debug, PartialEq)]
pub enum EventSource {
    /// Gaussian noise band-limited to `[low_hz, high_hz]`.
    BandNoise { low_hz: f64, high_hz: f64, seed: u64 },
    Tone { freq_hz: f64 },
    /// Recorded samples at the scene rate, used as is (truncated or padded).
    Samples(Arc<Vec<f64>>),
}

impl EventSource {
    /// `len` samples; synthetic sources have unit RMS and short fades.
    pub fn render(&self, len: usize, sample_rate: u32) -> Vec<f64> {
        if len == 0 {
            return Vec::new();
        }
        let fs = sample_rate as f64;
        let mut out = match self {
            EventSource::Samples(s) => {
                let mut v = s.iter().copied().take(len).collect::<Vec<_>>();
                v.resize(len, 0.0);
                return v;
            }
            EventSource::Tone { freq_hz } => (0..len)
                .map(|n| std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * freq_hz * n as f64 / fs).sin())
                .collect::<Vec<_>>(),
            EventSource::BandNoise { low_hz, high_hz, seed } => band_noise(*low_hz, *high_hz, *seed, len, fs),
        };
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms > 0.0 {
            out.iter_mut().for_each(|v| *v /= rms);
        }
        let fade = ((FADE_S * fs) as usize).min(len / 2);
        for i in 0..fade {
            let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / fade as f64).cos();
            out[i] *= g;
            out[len - 1 - i] *= g;
        }
        out
    }
}

fn band_noise(low_hz: f64, high_hz: f64, seed: u64, len: usize, fs: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let bin = k.min(len - k);
        let f = bin as f64 * fs / len as f64;
        if f < low_hz || f > high_hz {
            *z = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}
