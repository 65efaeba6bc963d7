use super::{mix_scene, EventSource, EventSpec, SceneAnnotation, SceneError, LABEL_HOP_S};
use crate::catalog::SourceCatalog;
use crate::features::MultichannelWave;
use crate::scalar::Scalar;
use crate::spatial::SphericalDirection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub duration_s: f64,
    pub max_polyphony: usize,
    /// RMS of the ambient noise on every channel.
    pub noise_level: f64,
    pub min_event_s: f64,
    pub max_event_s: f64,
    pub min_gap_s: f64,
    pub max_gap_s: f64,
    pub min_gain: f64,
    pub max_gain: f64,
    pub min_elevation: f64,
    pub max_elevation: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            max_polyphony: 2,
            noise_level: 0.01,
            min_event_s: 1.0,
            max_event_s: 4.0,
            min_gap_s: 0.5,
            max_gap_s: 3.0,
            min_gain: 0.5,
            max_gain: 1.0,
            min_elevation: -45.0,
            max_elevation: 45.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::Config(msg.to_string()));
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if self.max_polyphony == 0 {
            return bad("max_polyphony must be at least 1");
        }
        if !(self.min_event_s >= LABEL_HOP_S && self.max_event_s >= self.min_event_s) {
            return bad("need 0.1 <= min_event_s <= max_event_s");
        }
        if !(self.min_gap_s >= 0.0 && self.max_gap_s >= self.min_gap_s) {
            return bad("need 0 <= min_gap_s <= max_gap_s");
        }
        if !(self.min_gain > 0.0 && self.max_gain >= self.min_gain) {
            return bad("need 0 < min_gain <= max_gain");
        }
        if !(-90.0..=90.0).contains(&self.min_elevation)
            || !(-90.0..=90.0).contains(&self.max_elevation)
            || self.min_elevation > self.max_elevation
        {
            return bad("elevation range must lie in [-90, 90]");
        }
        if !(self.noise_level >= 0.0) {
            return bad("noise_level must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scene<T> {
    pub wave: MultichannelWave<T>,
    pub annotation: SceneAnnotation,
}

/// Random scenes built lane by lane: each of `max_polyphony` lanes holds a
/// sequence of non-overlapping events, so polyphony never exceeds the cap.
/// Onsets and offsets sit on the 100 ms label grid, and events that overlap
/// in time never share a class.
#[derive(Clone, Debug)]
pub struct SceneGenerator {
    pub config: SceneConfig,
    pub catalog: SourceCatalog,
    pub sample_rate: u32,
}

fn quantize(t: f64) -> f64 {
    (t / LABEL_HOP_S).round() * LABEL_HOP_S
}

impl SceneGenerator {
    pub fn new(config: SceneConfig, catalog: SourceCatalog, sample_rate: u32) -> Result<Self, SceneError> {
        config.validate()?;
        Ok(Self {
            config,
            catalog,
            sample_rate,
        })
    }

    /// Event list for one scene; deterministic in `seed`.
    pub fn sample_events(&self, seed: u64) -> Vec<EventSpec> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events: Vec<EventSpec> = Vec::new();
        for _lane in 0..cfg.max_polyphony {
            let mut t = quantize(rng.random_range(0.0..=cfg.max_gap_s));
            loop {
                let dur = quantize(rng.random_range(cfg.min_event_s..=cfg.max_event_s)).max(LABEL_HOP_S);
                let onset = t;
                let offset = (onset + dur).min(quantize(cfg.duration_s));
                if offset - onset < cfg.min_event_s.min(dur) - 1e-9 || onset >= cfg.duration_s {
                    break;
                }
                let busy: Vec<usize> = events
                    .iter()
                    .filter(|e| e.onset < offset && onset < e.offset)
                    .map(|e| e.class_id)
                    .collect();
                let free: Vec<usize> = (0..self.catalog.len()).filter(|c| !busy.contains(c)).collect();
                // draw every random quantity regardless of outcome so lanes stay reproducible
                let pick = rng.random_range(0..self.catalog.len().max(1));
                let az: f64 = rng.random_range(-180.0..180.0);
                let el: f64 = rng.random_range(cfg.min_elevation..=cfg.max_elevation);
                let gain: f64 = rng.random_range(cfg.min_gain..=cfg.max_gain);
                let src_seed: u64 = rng.random();
                if !free.is_empty() {
                    let class_id = free[pick % free.len()];
                    let band = self.catalog.get(class_id).expect("class in catalog");
                    events.push(EventSpec {
                        class_id,
                        onset,
                        offset,
                        direction: SphericalDirection::new(az, el),
                        source: EventSource::BandNoise {
                            low_hz: band.low_hz,
                            high_hz: band.high_hz,
                            seed: src_seed,
                        },
                        gain,
                    });
                }
                t = quantize(offset + rng.random_range(cfg.min_gap_s..=cfg.max_gap_s));
            }
        }
        events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.class_id.cmp(&b.class_id)));
        events
    }

    pub fn generate<T: Scalar>(&self, seed: u64) -> Result<Scene<T>, SceneError> {
        let events = self.sample_events(seed);
        let (wave, annotation) = mix_scene(
            events,
            self.config.duration_s,
            self.sample_rate,
            self.config.noise_level,
            seed ^ 0x9e37_79b9_7f4a_7c15,
            self.config.max_polyphony,
        )?;
        Ok(Scene { wave, annotation })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator(poly: usize) -> SceneGenerator {
        SceneGenerator::new(
            SceneConfig {
                duration_s: 20.0,
                max_polyphony: poly,
                ..SceneConfig::default()
            },
            SourceCatalog::log_spaced(4).unwrap(),
            8_000,
        )
        .unwrap()
    }

    #[test]
    fn events_respect_caps_and_grid() {
        for seed in 0..20 {
            let g = generator(2);
            let events = g.sample_events(seed);
            assert!(!events.is_empty());
            let ann = SceneAnnotation::from_events(events.clone(), 20.0);
            assert!(ann.max_polyphony() <= 2);
            for e in &events {
                assert!(e.validate(20.0).is_ok());
                let q = (e.onset / LABEL_HOP_S).round() * LABEL_HOP_S;
                assert!((q - e.onset).abs() < 1e-9);
                for o in &events {
                    if !std::ptr::eq(e, o) && e.onset < o.offset && o.onset < e.offset {
                        assert_ne!(e.class_id, o.class_id);
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = generator(2);
        let a = g.generate::<f32>(11).unwrap();
        let b = g.generate::<f32>(11).unwrap();
        assert_eq!(a.wave, b.wave);
        assert_eq!(a.annotation, b.annotation);
        let c = g.generate::<f32>(12).unwrap();
        assert_ne!(a.annotation, c.annotation);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SceneConfig::default();
        cfg.max_polyphony = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SceneConfig::default();
        cfg.max_elevation = 100.0;
        assert!(cfg.validate().is_err());
    }
}
