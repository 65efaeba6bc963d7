//! Precomputed embedding tables: one `<key>\t<v1 v2 ... vD>` record per line.

use super::{AudioClip, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    keys: Vec<String>,
    vectors: Vec<EmbeddingVector<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            keys: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn insert(&mut self, key: &str, v: EmbeddingVector<T>) -> Result<(), EmbeddingError> {
        validate_key(key)?;
        if v.dim() != self.dim {
            return Err(EmbeddingError::Dimension {
                expected: self.dim,
                got: v.dim(),
            });
        }
        if self.index.contains_key(key) {
            return Err(EmbeddingError::InvalidInput(format!("duplicate key {key:?}")));
        }
        self.index.insert(key.to_string(), self.keys.len());
        self.keys.push(key.to_string());
        self.vectors.push(v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector<T>> {
        self.index.get(key).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector<T>)> {
        self.keys.iter().map(String::as_str).zip(&self.vectors)
    }

    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut table: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (key, rest) = line.split_once('\t').ok_or_else(|| EmbeddingError::Parse {
                line: line_no,
                msg: "missing TAB between key and values".into(),
            })?;
            let values = rest
                .split_ascii_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map(T::of).map_err(|e| EmbeddingError::Parse {
                        line: line_no,
                        msg: format!("bad value {tok:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    msg: "no values".into(),
                });
            }
            let t = table.get_or_insert_with(|| Self::new(values.len()));
            t.insert(key, EmbeddingVector::from_vec(values))
                .map_err(|e| EmbeddingError::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
        }
        table.ok_or_else(|| EmbeddingError::Parse {
            line: 0,
            msg: "empty embedding table".into(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, v) in self.iter() {
            out.push_str(key);
            out.push('\t');
            for (j, x) in v.0.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{x}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }
}

fn validate_key(key: &str) -> Result<(), EmbeddingError> {
    if key.is_empty() || key.contains(['\t', '\n', '\r']) {
        return Err(EmbeddingError::InvalidInput(format!("invalid key {key:?}")));
    }
    Ok(())
}

pub fn read_embedding_table<T: Scalar>(path: &Path) -> Result<EmbeddingTable<T>, EmbeddingError> {
    EmbeddingTable::parse(&std::fs::read_to_string(path)?)
}

pub fn write_embedding_table<T: Scalar>(
    path: &Path,
    table: &EmbeddingTable<T>,
) -> Result<(), EmbeddingError> {
    std::fs::write(path, table.to_text())?;
    Ok(())
}

/// Serves embeddings from a table: text by exact text key, audio by clip key.
/// Non-zero entries are returned renormalized to unit length.
#[derive(Clone, Debug)]
pub struct FileProvider<T> {
    table: EmbeddingTable<T>,
}

impl<T: Scalar> FileProvider<T> {
    pub fn new(table: EmbeddingTable<T>) -> Self {
        Self { table }
    }

    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        Ok(Self::new(read_embedding_table(path)?))
    }

    fn lookup(&self, key: &str) -> Result<EmbeddingVector<T>, EmbeddingError> {
        let v = self
            .table
            .get(key)
            .ok_or_else(|| EmbeddingError::UnknownKey(key.to_string()))?;
        v.normalized()
            .ok_or_else(|| EmbeddingError::Provider(format!("embedding for {key:?} is zero")))
    }
}

impl<T: Scalar> EmbeddingProvider<T> for FileProvider<T> {
    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn text_embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbeddingError> {
        self.lookup(text)
    }

    fn audio_embed(&self, clip: &AudioClip<'_, T>) -> Result<EmbeddingVector<T>, EmbeddingError> {
        let key = clip
            .key
            .ok_or_else(|| EmbeddingError::InvalidInput("file provider needs a clip key".into()))?;
        self.lookup(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_lookup() {
        let t = EmbeddingTable::<f64>::parse("a\t1 0 0\nb/c.wav\t0 0.6 0.8\n").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("b/c.wav").unwrap().0.to_vec(), vec![0.0, 0.6, 0.8]);
        let p = FileProvider::new(t);
        let e = p.text_embed("a").unwrap();
        assert_eq!(e.0.to_vec(), vec![1.0, 0.0, 0.0]);
        let samples = [0.0f64; 4];
        assert!(p.audio_embed(&AudioClip::keyed("b/c.wav", &samples, 24_000)).is_ok());
        assert!(matches!(
            p.audio_embed(&AudioClip::keyed("zzz", &samples, 24_000)),
            Err(EmbeddingError::UnknownKey(_))
        ));
        assert!(p.audio_embed(&AudioClip::new(&samples, 24_000)).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = EmbeddingTable::<f64>::parse("a\t1 0\na\t0 1\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 2, .. }), "{err}");
        let err = EmbeddingTable::<f64>::parse("a\t1 0\nb\t0 1 2\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 2, .. }));
        let err = EmbeddingTable::<f64>::parse("a 1 0\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 1, .. }));
        let err = EmbeddingTable::<f64>::parse("a\t1 x\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(values in proptest::collection::vec(-1.0e3f32..1.0e3, 1..16)) {
            let mut t = EmbeddingTable::<f32>::new(values.len());
            t.insert("k", EmbeddingVector::from_vec(values.clone())).unwrap();
            let back = EmbeddingTable::<f32>::parse(&t.to_text()).unwrap();
            prop_assert_eq!(back.get("k").unwrap().0.to_vec(), values);
        }
    }
}
