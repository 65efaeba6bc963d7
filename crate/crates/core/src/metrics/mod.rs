//! Segment-based, location-dependent SELD scoring.
//!
//! Frames are grouped into fixed-length segments. Inside a segment each
//! `(class, source)` pair becomes one event whose direction is the
//! renormalised mean of its frame directions. References and predictions
//! of the same class are paired by minimum total angular distance, and all
//! counts go into one global accumulator (micro-averaging).

pub mod assignment;

use crate::records::AnnotationRecord;
use crate::spatial::{angular_distance_unchecked, CartesianDoa, SphericalDirection};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

pub use assignment::{brute_force, hungarian, min_cost_matching};

/// Localisation error reported when no reference/prediction pair exists.
pub const NO_PAIR_LE_DEG: f64 = 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// A pair counts as a true positive when its distance is at most this.
    pub threshold_deg: f64,
    /// Label frames per evaluation segment (10 x 100 ms = 1 s).
    pub frames_per_segment: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold_deg: 20.0,
            frames_per_segment: 10,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.frames_per_segment == 0 {
            return Err("frames_per_segment must be positive".into());
        }
        if !(self.threshold_deg >= 0.0 && self.threshold_deg <= 180.0) {
            return Err(format!("threshold_deg {} outside [0, 180]", self.threshold_deg));
        }
        Ok(())
    }
}

/// Directions per label frame and class, each tagged with a source id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledFrameSet {
    frames: BTreeMap<usize, BTreeMap<usize, Vec<(usize, CartesianDoa<f64>)>>>,
}

impl LabeledFrameSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one labelled direction; the direction is normalised and a zero
    /// vector is ignored.
    pub fn insert(&mut self, frame: usize, class_id: usize, source_id: usize, doa: CartesianDoa<f64>) {
        if let Some(u) = doa.normalized() {
            self.frames
                .entry(frame)
                .or_default()
                .entry(class_id)
                .or_default()
                .push((source_id, u));
        }
    }

    pub fn from_records(records: &[AnnotationRecord]) -> Self {
        let mut set = Self::new();
        for r in records {
            let doa = SphericalDirection::new(r.azimuth, r.elevation).to_cartesian();
            set.insert(r.frame, r.class_id, r.source_id, doa);
        }
        set
    }

    /// One past the last frame holding a label, 0 when empty.
    pub fn n_frames(&self) -> usize {
        self.frames.keys().next_back().map_or(0, |f| f + 1)
    }

    pub fn len(&self) -> usize {
        self.frames.values().flat_map(|c| c.values()).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, frame: usize) -> Option<&BTreeMap<usize, Vec<(usize, CartesianDoa<f64>)>>> {
        self.frames.get(&frame)
    }

    /// Number of labels in `frame` over all classes.
    pub fn polyphony(&self, frame: usize) -> usize {
        self.frame(frame).map_or(0, |c| c.values().map(Vec::len).sum())
    }

    /// Copy with every direction mapped through `f`.
    pub fn map_doas(&self, f: impl Fn(&CartesianDoa<f64>) -> CartesianDoa<f64>) -> Self {
        let mut out = Self::new();
        for (&frame, classes) in &self.frames {
            for (&class, doas) in classes {
                for &(src, d) in doas {
                    out.insert(frame, class, src, f(&d));
                }
            }
        }
        out
    }

    /// Segment-level events per class: one per `(class, source)` active in
    /// any frame of `segment`, at the renormalised mean direction.
    pub fn segment_events(&self, segment: usize, frames_per_segment: usize) -> BTreeMap<usize, Vec<CartesianDoa<f64>>> {
        let lo = segment * frames_per_segment;
        let mut sums: BTreeMap<(usize, usize), ([f64; 3], CartesianDoa<f64>)> = BTreeMap::new();
        for (_, classes) in self.frames.range(lo..lo + frames_per_segment) {
            for (&class, doas) in classes {
                for &(src, d) in doas {
                    let e = sums.entry((class, src)).or_insert(([0.0; 3], d));
                    e.0[0] += d.x;
                    e.0[1] += d.y;
                    e.0[2] += d.z;
                }
            }
        }
        let mut out: BTreeMap<usize, Vec<CartesianDoa<f64>>> = BTreeMap::new();
        for ((class, _), (s, first)) in sums {
            // directions that cancel exactly fall back to the first frame
            let mean = CartesianDoa::new(s[0], s[1], s[2]).normalized().unwrap_or(first);
            out.entry(class).or_default().push(mean);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMatch {
    /// `(ref index, pred index, distance in degrees)`, sorted by ref index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_refs: Vec<usize>,
    pub unmatched_preds: Vec<usize>,
}

/// Minimum-total-distance one-to-one pairing of same-class directions.
pub fn match_class_segment(refs: &[CartesianDoa<f64>], preds: &[CartesianDoa<f64>]) -> ClassMatch {
    let cost: Vec<Vec<f64>> = refs
        .iter()
        .map(|r| preds.iter().map(|p| angular_distance_unchecked(r, p)).collect())
        .collect();
    let matched = if preds.is_empty() { Vec::new() } else { min_cost_matching(&cost) };
    let pairs: Vec<_> = matched.iter().map(|&(i, j)| (i, j, cost[i][j])).collect();
    let unmatched_refs = (0..refs.len()).filter(|i| !matched.iter().any(|m| m.0 == *i)).collect();
    let unmatched_preds = (0..preds.len()).filter(|j| !matched.iter().any(|m| m.1 == *j)).collect();
    ClassMatch {
        pairs,
        unmatched_refs,
        unmatched_preds,
    }
}

/// Additive accumulators; merging is associative and commutative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub subs: u64,
    pub dels: u64,
    pub ins: u64,
    /// Reference events.
    pub n_ref: u64,
    /// Predicted events.
    pub n_pred: u64,
    /// Paired reference/prediction events and their summed distance.
    pub n_pairs: u64,
    pub le_sum: f64,
}

impl Add for SegmentCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            subs: self.subs + o.subs,
            dels: self.dels + o.dels,
            ins: self.ins + o.ins,
            n_ref: self.n_ref + o.n_ref,
            n_pred: self.n_pred + o.n_pred,
            n_pairs: self.n_pairs + o.n_pairs,
            le_sum: self.le_sum + o.le_sum,
        }
    }
}

impl AddAssign for SegmentCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for SegmentCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Counts of one segment from its per-class reference and prediction events.
pub fn accumulate_segment(
    refs: &BTreeMap<usize, Vec<CartesianDoa<f64>>>,
    preds: &BTreeMap<usize, Vec<CartesianDoa<f64>>>,
    threshold_deg: f64,
) -> SegmentCounts {
    let mut c = SegmentCounts::default();
    let empty = Vec::new();
    let classes: std::collections::BTreeSet<usize> = refs.keys().chain(preds.keys()).copied().collect();
    for class in classes {
        let r = refs.get(&class).unwrap_or(&empty);
        let p = preds.get(&class).unwrap_or(&empty);
        let m = match_class_segment(r, p);
        for &(_, _, d) in &m.pairs {
            if d <= threshold_deg {
                c.tp += 1;
            } else {
                c.fp += 1;
                c.fn_ += 1;
            }
            c.le_sum += d;
        }
        c.fp += m.unmatched_preds.len() as u64;
        c.fn_ += m.unmatched_refs.len() as u64;
        c.n_pairs += m.pairs.len() as u64;
        c.n_ref += r.len() as u64;
        c.n_pred += p.len() as u64;
    }
    c.subs = c.fn_.min(c.fp);
    c.dels = c.fn_.saturating_sub(c.fp);
    c.ins = c.fp.saturating_sub(c.fn_);
    c
}

/// Counts of every segment covering either set, in segment order.
pub fn segment_counts(refs: &LabeledFrameSet, preds: &LabeledFrameSet, cfg: &MetricsConfig) -> Vec<SegmentCounts> {
    let n_frames = refs.n_frames().max(preds.n_frames());
    let n_seg = n_frames.div_ceil(cfg.frames_per_segment);
    (0..n_seg)
        .map(|s| {
            accumulate_segment(
                &refs.segment_events(s, cfg.frames_per_segment),
                &preds.segment_events(s, cfg.frames_per_segment),
                cfg.threshold_deg,
            )
        })
        .collect()
}

/// Aggregated SELD error: mean of ER, 1 - F, LE / 180 and 1 - LR.
pub fn seld_error(er20: f64, f20: f64, le_cd: f64, lr_cd: f64) -> f64 {
    (er20 + (1.0 - f20) + le_cd / 180.0 + (1.0 - lr_cd)) / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub er20: f64,
    pub f20: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
    pub e_seld: f64,
    pub counts: SegmentCounts,
}

impl MetricsReport {
    /// Conventions for empty denominators: F is 1 with nothing to detect
    /// and nothing detected; LE is 180 without pairs unless both sides are
    /// empty (then 0); LR is 1 without references.
    pub fn from_counts(c: SegmentCounts) -> Self {
        let er20 = (c.subs + c.dels + c.ins) as f64 / c.n_ref.max(1) as f64;
        let denom = 2 * c.tp + c.fp + c.fn_;
        let f20 = if denom == 0 { 1.0 } else { 2.0 * c.tp as f64 / denom as f64 };
        let vacuous = c.n_ref == 0 && c.n_pred == 0;
        let le_cd = if c.n_pairs > 0 {
            c.le_sum / c.n_pairs as f64
        } else if vacuous {
            0.0
        } else {
            NO_PAIR_LE_DEG
        };
        let lr_cd = if c.n_ref == 0 { 1.0 } else { c.n_pairs as f64 / c.n_ref as f64 };
        Self {
            er20,
            f20,
            le_cd,
            lr_cd,
            e_seld: seld_error(er20, f20, le_cd, lr_cd),
            counts: c,
        }
    }

    pub fn to_text(&self) -> String {
        let c = &self.counts;
        let mut s = String::new();
        let _ = writeln!(s, "SELD metrics (micro-averaged over classes and 1 s segments)");
        for (k, v) in [
            ("ER_20", format!("{:.4}", self.er20)),
            ("F_20", format!("{:.4}", self.f20)),
            ("LE_CD", format!("{:.2} deg", self.le_cd)),
            ("LR_CD", format!("{:.4}", self.lr_cd)),
            ("E_SELD", format!("{:.4}", self.e_seld)),
        ] {
            let _ = writeln!(s, "  {k:<8}{v:>12}");
        }
        let _ = writeln!(
            s,
            "  counts  TP={} FP={} FN={} S={} D={} I={} N={} pairs={}",
            c.tp, c.fp, c.fn_, c.subs, c.dels, c.ins, c.n_ref, c.n_pairs
        );
        s
    }

    /// `key=value` lines, one per metric and counter.
    pub fn to_key_values(&self) -> String {
        let c = &self.counts;
        let mut s = String::from("averaging=micro\n");
        for (k, v) in [
            ("er20", self.er20),
            ("f20", self.f20),
            ("le_cd", self.le_cd),
            ("lr_cd", self.lr_cd),
            ("e_seld", self.e_seld),
            ("le_sum", c.le_sum),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        for (k, v) in [
            ("tp", c.tp),
            ("fp", c.fp),
            ("fn", c.fn_),
            ("s", c.subs),
            ("d", c.dels),
            ("i", c.ins),
            ("n_ref", c.n_ref),
            ("n_pred", c.n_pred),
            ("n_pairs", c.n_pairs),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

pub fn evaluate(refs: &LabeledFrameSet, preds: &LabeledFrameSet, cfg: &MetricsConfig) -> MetricsReport {
    MetricsReport::from_counts(segment_counts(refs, preds, cfg).into_iter().sum())
}

pub fn evaluate_records(refs: &[AnnotationRecord], preds: &[AnnotationRecord], cfg: &MetricsConfig) -> MetricsReport {
    evaluate(&LabeledFrameSet::from_records(refs), &LabeledFrameSet::from_records(preds), cfg)
}
