//! Frame-level annotation rows in the `frame,class,source,azimuth,elevation`
//! CSV layout shared by references and predictions.

use crate::scene::{EventSource, EventSpec, SceneAnnotation, LABEL_HOP_S};
use crate::spatial::SphericalDirection;
use std::collections::BTreeMap;
use crate::spatial::wrap_azimuth;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    /// 100 ms label-frame index.
    pub frame: usize,
    #[serde(rename = "class")]
    pub class_id: usize,
    #[serde(rename = "source")]
    pub source_id: usize,
    /// Degrees, [-180, 180).
    pub azimuth: f64,
    /// Degrees, [-90, 90].
    pub elevation: f64,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(-180.0..180.0).contains(&self.azimuth) {
            return Err(format!("azimuth {} outside [-180, 180)", self.azimuth));
        }
        if !(-90.0..=90.0).contains(&self.elevation) {
            return Err(format!("elevation {} outside [-90, 90]", self.elevation));
        }
        Ok(())
    }
}

/// Reference rows of a scene: one per active event per label frame, with
/// the event index as source id.
pub fn annotation_records(annotation: &SceneAnnotation) -> Vec<AnnotationRecord> {
    annotation
        .frame_labels
        .iter()
        .enumerate()
        .flat_map(|(frame, labels)| {
            labels.iter().map(move |l| AnnotationRecord {
                frame,
                class_id: l.class_id,
                source_id: l.event_index,
                azimuth: wrap_azimuth(l.azimuth),
                elevation: l.elevation,
            })
        })
        .collect()
}

/// Rebuilds a scene annotation from reference rows. Every contiguous run of
/// frames of one `(class, source)` pair becomes one event, with the direction
/// of its first row and no renderable audio. Also returns the source id of
/// each event.
pub fn annotation_from_records(records: &[AnnotationRecord], duration: f64) -> (SceneAnnotation, Vec<usize>) {
    let mut runs: BTreeMap<(usize, usize), Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        runs.entry((r.source_id, r.class_id)).or_default().push(r);
    }
    let mut events = Vec::new();
    for ((source, class_id), mut rows) in runs {
        rows.sort_by_key(|r| r.frame);
        rows.dedup_by_key(|r| r.frame);
        let mut i = 0;
        while i < rows.len() {
            let mut j = i;
            while j + 1 < rows.len() && rows[j + 1].frame == rows[j].frame + 1 {
                j += 1;
            }
            let spec = EventSpec {
                class_id,
                onset: rows[i].frame as f64 * LABEL_HOP_S,
                offset: (rows[j].frame + 1) as f64 * LABEL_HOP_S,
                direction: SphericalDirection::new(rows[i].azimuth, rows[i].elevation),
                source: EventSource::Samples(Default::default()),
                gain: 1.0,
            };
            events.push((source, spec));
            i = j + 1;
        }
    }
    // onset order with source id as tie break, as the generator numbers events
    events.sort_by(|a, b| a.1.onset.total_cmp(&b.1.onset).then(a.0.cmp(&b.0)));
    let sources = events.iter().map(|e| e.0).collect();
    let annotation = SceneAnnotation::from_events(events.into_iter().map(|e| e.1).collect(), duration);
    (annotation, sources)
}

pub fn write_records<W: Write>(w: W, records: &[AnnotationRecord]) -> Result<(), RecordError> {
    let mut wr = csv::Writer::from_writer(w);
    // header is written explicitly so that an empty file still carries it
    wr.write_record(["frame", "class", "source", "azimuth", "elevation"])
        .map_err(csv_io)?;
    for r in records {
        // round first so that values just below 180 cannot print as 180
        let mut az = (r.azimuth * 1e4).round() / 1e4;
        if az >= 180.0 {
            az -= 360.0;
        }
        wr.write_record([
            r.frame.to_string(),
            r.class_id.to_string(),
            r.source_id.to_string(),
            format!("{az:.4}"),
            format!("{:.4}", r.elevation),
        ])
        .map_err(csv_io)?;
    }
    wr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> RecordError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => RecordError::Io(e),
        other => RecordError::Parse {
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<AnnotationRecord>, RecordError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers().map_err(|e| RecordError::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["frame", "class", "source", "azimuth", "elevation"] {
        return Err(RecordError::Parse {
            line: 1,
            msg: format!("expected header frame,class,source,azimuth,elevation, got {:?}", headers),
        });
    }
    let mut out = Vec::new();
    for row in rd.deserialize::<AnnotationRecord>() {
        let rec = row.map_err(|e| RecordError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                k => format!("{k:?}"),
            },
        })?;
        // rows are one per line, header on line 1
        rec.validate().map_err(|msg| RecordError::Parse {
            line: out.len() as u64 + 2,
            msg,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[AnnotationRecord]) -> Result<(), RecordError> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn load_records(path: &Path) -> Result<Vec<AnnotationRecord>, RecordError> {
    read_records(std::fs::File::open(path)?)
}
