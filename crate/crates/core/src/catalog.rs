//! Synthetic sound classes. Each class owns a disjoint frequency band; its
//! sources are band-limited noise bursts in that band, so a spectral
//! analysis of a clip can tell which class produced it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("catalog needs at least one class")]
    Empty,
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
    #[error("class {name:?} has an invalid band [{low_hz}, {high_hz}] Hz")]
    InvalidBand { name: String, low_hz: f64, high_hz: f64 },
    #[error("bands of {0:?} and {1:?} overlap")]
    Overlap(String, String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceCatalog {
    classes: Vec<ClassSpec>,
}

const DEFAULT_NAMES: [&str; 13] = [
    "femaleSpeech",
    "maleSpeech",
    "clapping",
    "telephone",
    "laughter",
    "domesticSounds",
    "footsteps",
    "doorCupboard",
    "music",
    "musicInstrument",
    "waterTap",
    "bell",
    "knock",
];

impl SourceCatalog {
    pub fn new(classes: Vec<ClassSpec>) -> Result<Self, CatalogError> {
        if classes.is_empty() {
            return Err(CatalogError::Empty);
        }
        for (i, c) in classes.iter().enumerate() {
            if !(c.low_hz > 0.0 && c.high_hz > c.low_hz && c.high_hz.is_finite()) {
                return Err(CatalogError::InvalidBand {
                    name: c.name.clone(),
                    low_hz: c.low_hz,
                    high_hz: c.high_hz,
                });
            }
            for other in &classes[..i] {
                if other.name == c.name {
                    return Err(CatalogError::DuplicateName(c.name.clone()));
                }
                if c.low_hz < other.high_hz && other.low_hz < c.high_hz {
                    return Err(CatalogError::Overlap(other.name.clone(), c.name.clone()));
                }
            }
        }
        Ok(Self { classes })
    }

    /// `n` classes with log-spaced bands between 200 Hz and 10 kHz separated
    /// by guard gaps of the same log width as the bands. Names cycle through a
    /// fixed list of everyday sound labels.
    pub fn log_spaced(n: usize) -> Result<Self, CatalogError> {
        if n == 0 {
            return Err(CatalogError::Empty);
        }
        let (lo, hi) = (200.0f64, 10_000.0f64);
        let steps = (2 * n - 1) as f64;
        let edge = |i: usize| lo * (hi / lo).powf(i as f64 / steps);
        let classes = (0..n)
            .map(|c| {
                let name = if c < DEFAULT_NAMES.len() {
                    DEFAULT_NAMES[c].to_string()
                } else {
                    format!("class{c}")
                };
                ClassSpec {
                    name,
                    low_hz: edge(2 * c),
                    high_hz: edge(2 * c + 1),
                }
            })
            .collect();
        Self::new(classes)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, class_id: usize) -> Option<&ClassSpec> {
        self.classes.get(class_id)
    }

    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spaced_bands_are_disjoint() {
        let cat = SourceCatalog::log_spaced(4).unwrap();
        assert_eq!(cat.len(), 4);
        assert!((cat.get(0).unwrap().low_hz - 200.0).abs() < 1e-9);
        assert!((cat.get(3).unwrap().high_hz - 10_000.0).abs() < 1e-6);
        for w in cat.classes().windows(2) {
            assert!(w[0].high_hz < w[1].low_hz);
        }
    }

    #[test]
    fn rejects_overlap_and_duplicates() {
        let spec = |n: &str, l, h| ClassSpec {
            name: n.into(),
            low_hz: l,
            high_hz: h,
        };
        assert!(matches!(
            SourceCatalog::new(vec![spec("a", 100.0, 300.0), spec("b", 200.0, 400.0)]),
            Err(CatalogError::Overlap(..))
        ));
        assert!(matches!(
            SourceCatalog::new(vec![spec("a", 100.0, 300.0), spec("a", 400.0, 500.0)]),
            Err(CatalogError::DuplicateName(_))
        ));
        assert!(SourceCatalog::new(vec![]).is_err());
    }
}
