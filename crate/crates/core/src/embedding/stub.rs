//! Deterministic stand-in for a pretrained language-audio model.
//!
//! Text embeddings are Gaussian draws seeded by a hash of the text. Audio
//! embeddings analyse the clip's spectrum against the [`SourceCatalog`]
//! bands: a clip dominated by one class band maps to that class's anchor plus
//! a clip-specific perturbation, anything else maps to the `"silent"` anchor.

use super::{AudioClip, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::catalog::SourceCatalog;
use crate::scalar::Scalar;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

/// Text used for the background-noise support in zero-shot mode.
pub const SILENT_PROMPT: &str = "silent";

fn hash_seed(domain: &str, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update([0u8]);
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn gaussian(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= super::NORM_EPS {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

fn to_embedding<T: Scalar>(v: &[f64]) -> EmbeddingVector<T> {
    EmbeddingVector::from_vec(v.iter().map(|&x| T::of(x)).collect())
}

/// Unit vector from a Gaussian draw seeded by `(class_name, seed)`.
pub fn stub_text_embed<T: Scalar>(
    class_name: &str,
    seed: u64,
    dim: usize,
) -> Result<EmbeddingVector<T>, EmbeddingError> {
    Ok(to_embedding(&raw_text(class_name, seed, dim)?))
}

fn raw_text(text: &str, seed: u64, dim: usize) -> Result<Vec<f64>, EmbeddingError> {
    if text.is_empty() {
        return Err(EmbeddingError::InvalidInput("empty text".into()));
    }
    if dim == 0 {
        return Err(EmbeddingError::InvalidInput("embedding dimension is 0".into()));
    }
    let mut v = gaussian(hash_seed("text", &[text.as_bytes(), &seed.to_le_bytes()]), dim);
    normalize(&mut v);
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StubProviderConfig {
    pub dim: usize,
    pub seed: u64,
    /// Scale of the clip-specific perturbation added to class anchors.
    pub audio_noise_level: f64,
    /// Gram-Schmidt the class anchors and the silent anchor.
    pub orthogonalize: bool,
    /// Band-to-floor power ratio a class band must exceed to be detected.
    pub min_band_snr: f64,
}

impl Default for StubProviderConfig {
    fn default() -> Self {
        Self {
            dim: super::DEFAULT_EMBED_DIM,
            seed: 0,
            audio_noise_level: 0.1,
            orthogonalize: false,
            min_band_snr: 4.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StubProvider {
    cfg: StubProviderConfig,
    catalog: SourceCatalog,
    anchors: Vec<Vec<f64>>,
    silent: Vec<f64>,
}

impl StubProvider {
    pub fn new(catalog: SourceCatalog, cfg: StubProviderConfig) -> Result<Self, EmbeddingError> {
        let mut anchors = catalog
            .names()
            .iter()
            .map(|n| raw_text(n, cfg.seed, cfg.dim))
            .collect::<Result<Vec<_>, _>>()?;
        let mut silent = raw_text(SILENT_PROMPT, cfg.seed, cfg.dim)?;
        if cfg.orthogonalize {
            if anchors.len() + 1 > cfg.dim {
                return Err(EmbeddingError::InvalidInput(format!(
                    "cannot orthogonalize {} anchors in {} dimensions",
                    anchors.len() + 1,
                    cfg.dim
                )));
            }
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(anchors.len() + 1);
            for v in anchors.iter_mut().chain(std::iter::once(&mut silent)) {
                for b in &basis {
                    let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
                if !normalize(v) {
                    return Err(EmbeddingError::InvalidInput("degenerate anchor set".into()));
                }
                basis.push(v.clone());
            }
        }
        Ok(Self {
            cfg,
            catalog,
            anchors,
            silent,
        })
    }

    pub fn config(&self) -> &StubProviderConfig {
        &self.cfg
    }

    pub fn catalog(&self) -> &SourceCatalog {
        &self.catalog
    }

    pub fn anchor<T: Scalar>(&self, class_id: usize) -> Result<EmbeddingVector<T>, EmbeddingError> {
        self.anchors
            .get(class_id)
            .map(|a| to_embedding(a))
            .ok_or(EmbeddingError::Range {
                class_id,
                n_classes: self.anchors.len(),
            })
    }

    pub fn silent_anchor<T: Scalar>(&self) -> EmbeddingVector<T> {
        to_embedding(&self.silent)
    }

    /// `normalize(anchor(class_id) + noise_level * g)` where `g` is a Gaussian
    /// draw seeded by `variation_seed` with per-component standard deviation
    /// `1 / sqrt(dim)` (expected norm 1).
    pub fn stub_audio_embed<T: Scalar>(
        &self,
        class_id: usize,
        variation_seed: u64,
        noise_level: f64,
    ) -> Result<EmbeddingVector<T>, EmbeddingError> {
        let anchor = self.anchors.get(class_id).ok_or(EmbeddingError::Range {
            class_id,
            n_classes: self.anchors.len(),
        })?;
        self.perturbed(anchor, variation_seed, noise_level)
    }

    fn perturbed<T: Scalar>(
        &self,
        anchor: &[f64],
        variation_seed: u64,
        noise_level: f64,
    ) -> Result<EmbeddingVector<T>, EmbeddingError> {
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(EmbeddingError::InvalidInput(format!("noise level {noise_level}")));
        }
        let mut v = anchor.to_vec();
        if noise_level > 0.0 {
            let scale = noise_level / (self.cfg.dim as f64).sqrt();
            let g = gaussian(
                hash_seed("audio-variation", &[&variation_seed.to_le_bytes(), &self.cfg.seed.to_le_bytes()]),
                self.cfg.dim,
            );
            v.iter_mut().zip(&g).for_each(|(x, n)| *x += scale * n);
        }
        if !normalize(&mut v) {
            return Err(EmbeddingError::Provider("perturbed embedding collapsed to zero".into()));
        }
        Ok(to_embedding(&v))
    }

    /// Which catalog class dominates the clip, if any.
    pub fn detect_class<T: Scalar>(&self, samples: &[T], sample_rate: u32) -> Option<usize> {
        let psd = welch_psd(samples);
        if psd.is_empty() {
            return None;
        }
        let n_bins = psd.len();
        let hz_per_bin = sample_rate as f64 / (2.0 * (n_bins - 1) as f64);
        let mut sorted = psd.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let floor = sorted[n_bins / 2].max(f64::MIN_POSITIVE);
        let mut best: Option<(usize, f64)> = None;
        for (c, spec) in self.catalog.classes().iter().enumerate() {
            let lo = ((spec.low_hz / hz_per_bin).ceil() as usize).min(n_bins - 1);
            let hi = ((spec.high_hz / hz_per_bin).floor() as usize).min(n_bins - 1);
            if hi < lo {
                continue;
            }
            let mean = psd[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            let snr = mean / floor;
            if best.is_none_or(|(_, s)| snr > s) {
                best = Some((c, snr));
            }
        }
        best.filter(|&(_, snr)| snr >= self.cfg.min_band_snr).map(|(c, _)| c)
    }
}

const WELCH_BLOCK: usize = 2048;

/// Averaged Hann-windowed power spectrum, `WELCH_BLOCK / 2 + 1` bins.
/// Empty when the clip has no energy.
fn welch_psd<T: Scalar>(samples: &[T]) -> Vec<f64> {
    if samples.is_empty() || samples.iter().all(|&v| v == T::zero()) {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(WELCH_BLOCK);
    let window: Vec<f64> = crate::features::Window::Hann.coefficients(WELCH_BLOCK);
    let hop = WELCH_BLOCK / 2;
    let mut psd = vec![0.0; WELCH_BLOCK / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); WELCH_BLOCK];
    let mut start = 0;
    loop {
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = samples.get(start + i).map_or(0.0, |s| s.as_f64());
            *slot = Complex::new(v * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, z) in psd.iter_mut().zip(&buf) {
            *p += z.norm_sqr();
        }
        start += hop;
        if start + WELCH_BLOCK > samples.len() {
            break;
        }
    }
    psd
}

fn clip_seed<T: Scalar>(samples: &[T]) -> u64 {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        bytes.extend_from_slice(&s.as_f64().to_bits().to_le_bytes());
    }
    hash_seed("clip", &[&bytes])
}

impl<T: Scalar> EmbeddingProvider<T> for StubProvider {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn text_embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbeddingError> {
        if let Some(c) = self.catalog.index_of(text) {
            return Ok(to_embedding(&self.anchors[c]));
        }
        if text == SILENT_PROMPT {
            return Ok(to_embedding(&self.silent));
        }
        stub_text_embed(text, self.cfg.seed, self.cfg.dim)
    }

    fn audio_embed(&self, clip: &AudioClip<'_, T>) -> Result<EmbeddingVector<T>, EmbeddingError> {
        let seed = clip_seed(clip.samples);
        match self.detect_class(clip.samples, clip.sample_rate) {
            Some(c) => self.stub_audio_embed(c, seed, self.cfg.audio_noise_level),
            None => self.perturbed(&self.silent, seed, self.cfg.audio_noise_level),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provider(orthogonalize: bool) -> StubProvider {
        StubProvider::new(
            SourceCatalog::log_spaced(4).unwrap(),
            StubProviderConfig {
                orthogonalize,
                ..StubProviderConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn text_embedding_is_deterministic_and_unit() {
        let a: EmbeddingVector<f64> = stub_text_embed("dog bark", 7, 512).unwrap();
        let b: EmbeddingVector<f64> = stub_text_embed("dog bark", 7, 512).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let c: EmbeddingVector<f64> = stub_text_embed("dog bark", 8, 512).unwrap();
        assert_ne!(a, c);
        assert!(stub_text_embed::<f64>("", 7, 512).is_err());
    }

    #[test]
    fn distinct_names_are_nearly_orthogonal() {
        // 1000 random pairs; the 99th percentile of |cos| must stay under 0.5.
        let mut cos: Vec<f64> = (0..1000)
            .map(|i| {
                let a: EmbeddingVector<f64> = stub_text_embed(&format!("name-{i}-a"), 1, 512).unwrap();
                let b: EmbeddingVector<f64> = stub_text_embed(&format!("name-{i}-b"), 1, 512).unwrap();
                a.cosine(&b).abs()
            })
            .collect();
        cos.sort_by(|a, b| a.total_cmp(b));
        assert!(cos[989] < 0.5, "p99 {}", cos[989]);
    }

    #[test]
    fn audio_embed_noise_free_is_anchor() {
        let p = provider(false);
        let e: EmbeddingVector<f64> = p.stub_audio_embed(2, 99, 0.0).unwrap();
        assert_eq!(e, p.anchor::<f64>(2).unwrap());
        assert!(matches!(
            p.stub_audio_embed::<f64>(4, 0, 0.1),
            Err(EmbeddingError::Range { .. })
        ));
    }

    #[test]
    fn perturbed_audio_embeddings_stay_near_anchor() {
        let p = provider(false);
        let a0 = p.anchor::<f64>(0).unwrap();
        let a1 = p.anchor::<f64>(1).unwrap();
        let mut close = 0;
        let mut own_nearest = 0;
        for seed in 0..1000u64 {
            let class = (seed % 2) as usize;
            let e: EmbeddingVector<f64> = p.stub_audio_embed(class, seed, 0.1).unwrap();
            let own = if class == 0 { &a0 } else { &a1 };
            let other = if class == 0 { &a1 } else { &a0 };
            if e.cosine(own) > 0.9 {
                close += 1;
            }
            if e.cosine(own) > e.cosine(other) {
                own_nearest += 1;
            }
        }
        assert!(close >= 990, "{close}");
        assert!(own_nearest >= 990, "{own_nearest}");
    }

    #[test]
    fn orthogonalized_anchors() {
        let p = provider(true);
        let mut all: Vec<EmbeddingVector<f64>> = (0..4).map(|c| p.anchor(c).unwrap()).collect();
        all.push(p.silent_anchor());
        for i in 0..all.len() {
            assert!((all[i].norm() - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(all[i].cosine(&all[j]).abs() < 1e-12);
            }
        }
        let via_text: EmbeddingVector<f64> = p.text_embed("clapping").unwrap();
        assert_eq!(via_text, all[2]);
    }

    fn band_noise(low: f64, high: f64, len: usize, seed: u64) -> Vec<f64> {
        // sum of random-phase sinusoids inside the band
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let comps: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let f = low + (high - low) * (i as f64 + 0.5) / n as f64;
                let ph: f64 = StandardNormal.sample(&mut rng);
                (f, ph)
            })
            .collect();
        (0..len)
            .map(|t| {
                comps
                    .iter()
                    .map(|(f, ph)| (2.0 * std::f64::consts::PI * f * t as f64 / 24_000.0 + ph).sin())
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn audio_embed_detects_band_and_silence() {
        let p = provider(true);
        for c in 0..4 {
            let spec = p.catalog().get(c).unwrap().clone();
            let wave = band_noise(spec.low_hz * 1.05, spec.high_hz * 0.95, 24_000, c as u64);
            assert_eq!(p.detect_class(&wave, 24_000), Some(c));
            let e: EmbeddingVector<f64> = p.audio_embed(&AudioClip::new(&wave, 24_000)).unwrap();
            assert!(e.cosine(&p.anchor(c).unwrap()) > 0.9);
            assert!((e.norm() - 1.0).abs() < 1e-9);
        }
        let silence = vec![0.0f64; 24_000];
        assert_eq!(p.detect_class(&silence, 24_000), None);
        let e: EmbeddingVector<f64> = p.audio_embed(&AudioClip::new(&silence, 24_000)).unwrap();
        assert!(e.cosine(&p.silent_anchor()) > 0.9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let white: Vec<f64> = (0..24_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert_eq!(p.detect_class(&white, 24_000), None);
    }

    #[test]
    fn audio_embed_is_deterministic() {
        let p = provider(false);
        let wave = band_noise(700.0, 1000.0, 12_000, 3);
        let a: EmbeddingVector<f32> = p.audio_embed(&AudioClip::new(&wave.iter().map(|&v| v as f32).collect::<Vec<_>>(), 24_000)).unwrap();
        let b: EmbeddingVector<f32> = p.audio_embed(&AudioClip::new(&wave.iter().map(|&v| v as f32).collect::<Vec<_>>(), 24_000)).unwrap();
        assert_eq!(a, b);
    }
}
