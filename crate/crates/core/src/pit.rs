//! Frame-level permutation-invariant training loss over output tracks.

use crate::embedding::NORM_EPS;
use crate::scalar::Scalar;
use ndarray::{Array3, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PitError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub beta_embed: f64,
    pub beta_accdoa: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta_embed: 0.6,
            beta_accdoa: 0.4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), PitError> {
        if self.beta_embed >= 0.0 && self.beta_accdoa >= 0.0 {
            Ok(())
        } else {
            Err(PitError::Config(format!(
                "loss weights must be non-negative, got {} / {}",
                self.beta_embed, self.beta_accdoa
            )))
        }
    }
}

/// Per-track outputs or targets over a run of frames: embeddings (D, N, T)
/// and ACCDOA vectors (3, N, T).
#[derive(Clone, Debug, PartialEq)]
pub struct TrackFrames<T> {
    pub embeddings: Array3<T>,
    pub accdoa: Array3<T>,
}

impl<T: Scalar> TrackFrames<T> {
    pub fn zeros(dim: usize, n_tracks: usize, n_frames: usize) -> Self {
        Self {
            embeddings: Array3::zeros((dim, n_tracks, n_frames)),
            accdoa: Array3::zeros((3, n_tracks, n_frames)),
        }
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim().0
    }

    pub fn n_tracks(&self) -> usize {
        self.embeddings.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.embeddings.dim().2
    }

    pub fn check(&self) -> Result<(), PitError> {
        let (_, n, t) = self.embeddings.dim();
        if self.accdoa.dim() != (3, n, t) {
            return Err(PitError::Shape(format!(
                "accdoa {:?} does not match embeddings {:?}",
                self.accdoa.dim(),
                self.embeddings.dim()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings.iter().chain(self.accdoa.iter()).all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: T) {
        self.embeddings.mapv_inplace(|v| v * s);
        self.accdoa.mapv_inplace(|v| v * s);
    }

    pub fn cast<U: Scalar>(&self) -> TrackFrames<U> {
        TrackFrames {
            embeddings: self.embeddings.mapv(|v| U::of(v.as_f64())),
            accdoa: self.accdoa.mapv(|v| U::of(v.as_f64())),
        }
    }
}

/// 1 - cosine(oracle, predicted); 0 for an inactive (zero) oracle.
pub fn embed_term<T: Scalar>(oracle: ArrayView1<'_, T>, predicted: ArrayView1<'_, T>) -> T {
    if oracle.iter().all(|&v| v == T::zero()) {
        return T::zero();
    }
    T::one() - crate::embedding::cosine(oracle, predicted)
}

fn embed_term_grad<T: Scalar>(
    oracle: ArrayView1<'_, T>,
    predicted: ArrayView1<'_, T>,
    scale: T,
    mut out: ArrayViewMut1<'_, T>,
) {
    if oracle.iter().all(|&v| v == T::zero()) {
        return;
    }
    let eps = T::of(NORM_EPS);
    let na = crate::embedding::norm(oracle).max(eps);
    let nb = crate::embedding::norm(predicted);
    if nb > eps {
        let dot = oracle.dot(&predicted);
        let c1 = scale / (na * nb);
        let c2 = scale * dot / (na * nb * nb * nb);
        for ((o, &a), &b) in out.iter_mut().zip(oracle.iter()).zip(predicted.iter()) {
            *o -= c1 * a - c2 * b;
        }
    } else {
        let c = scale / (na * eps);
        for (o, &a) in out.iter_mut().zip(oracle.iter()) {
            *o -= c * a;
        }
    }
}

/// Mean squared error over the three ACCDOA components.
pub fn accdoa_term<T: Scalar>(oracle: [T; 3], predicted: [T; 3]) -> T {
    let s: T = (0..3).map(|k| (predicted[k] - oracle[k]) * (predicted[k] - oracle[k])).sum();
    s / T::of(3.0)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

fn check_shapes<T: Scalar>(oracle: &TrackFrames<T>, predicted: &TrackFrames<T>) -> Result<(), PitError> {
    oracle.check()?;
    predicted.check()?;
    if oracle.embeddings.dim() != predicted.embeddings.dim() {
        return Err(PitError::Shape(format!(
            "oracle {:?} vs prediction {:?}",
            oracle.embeddings.dim(),
            predicted.embeddings.dim()
        )));
    }
    if oracle.n_tracks() == 0 || oracle.n_frames() == 0 {
        return Err(PitError::Shape("need at least one track and one frame".into()));
    }
    Ok(())
}

/// `cost[n][m]`: weighted loss of prediction track `n` against oracle track `m`.
fn pair_costs<T: Scalar>(oracle: &TrackFrames<T>, predicted: &TrackFrames<T>, t: usize, cfg: &LossConfig) -> Vec<Vec<T>> {
    let n_tracks = oracle.n_tracks();
    let (be, ba) = (T::of(cfg.beta_embed), T::of(cfg.beta_accdoa));
    let oe = oracle.embeddings.index_axis(Axis(2), t);
    let pe = predicted.embeddings.index_axis(Axis(2), t);
    (0..n_tracks)
        .map(|n| {
            (0..n_tracks)
                .map(|m| {
                    let e = if be == T::zero() {
                        T::zero()
                    } else {
                        embed_term(oe.column(m), pe.column(n))
                    };
                    let a = accdoa_term(
                        [oracle.accdoa[[0, m, t]], oracle.accdoa[[1, m, t]], oracle.accdoa[[2, m, t]]],
                        [predicted.accdoa[[0, n, t]], predicted.accdoa[[1, n, t]], predicted.accdoa[[2, n, t]]],
                    );
                    be * e + ba * a
                })
                .collect()
        })
        .collect()
}

/// Frame-averaged PIT loss plus, per frame, the winning assignment
/// (`perm[n]` is the oracle track matched to prediction track `n`).
pub fn pit_loss<T: Scalar>(
    oracle: &TrackFrames<T>,
    predicted: &TrackFrames<T>,
    cfg: &LossConfig,
) -> Result<(T, Vec<Vec<usize>>), PitError> {
    check_shapes(oracle, predicted)?;
    cfg.validate()?;
    let n_tracks = oracle.n_tracks();
    let perms = permutations(n_tracks);
    let inv_n = T::one() / T::of(n_tracks as f64);
    let mut total = T::zero();
    let mut best_perms = Vec::with_capacity(oracle.n_frames());
    for t in 0..oracle.n_frames() {
        let cost = pair_costs(oracle, predicted, t, cfg);
        let mut best = (T::infinity(), 0);
        for (i, p) in perms.iter().enumerate() {
            let c: T = p.iter().enumerate().map(|(n, &m)| cost[n][m]).sum::<T>() * inv_n;
            // strict comparison keeps the lowest lexicographic permutation on ties
            if c < best.0 {
                best = (c, i);
            }
        }
        total += best.0;
        best_perms.push(perms[best.1].clone());
    }
    Ok((total / T::of(oracle.n_frames() as f64), best_perms))
}

/// Loss, winning permutations and the gradient of the loss with respect to
/// the predictions, routed through each frame's winning permutation.
pub fn pit_loss_grad<T: Scalar>(
    oracle: &TrackFrames<T>,
    predicted: &TrackFrames<T>,
    cfg: &LossConfig,
) -> Result<(T, Vec<Vec<usize>>, TrackFrames<T>), PitError> {
    let (loss, perms) = pit_loss(oracle, predicted, cfg)?;
    let (d, n_tracks, n_frames) = predicted.embeddings.dim();
    let mut grad = TrackFrames::zeros(d, n_tracks, n_frames);
    let w = T::one() / T::of((n_tracks * n_frames) as f64);
    let (be, ba) = (T::of(cfg.beta_embed) * w, T::of(cfg.beta_accdoa) * w);
    for (t, perm) in perms.iter().enumerate() {
        for (n, &m) in perm.iter().enumerate() {
            if be != T::zero() {
                embed_term_grad(
                    oracle.embeddings.slice(ndarray::s![.., m, t]),
                    predicted.embeddings.slice(ndarray::s![.., n, t]),
                    be,
                    grad.embeddings.slice_mut(ndarray::s![.., n, t]),
                );
            }
            for k in 0..3 {
                grad.accdoa[[k, n, t]] =
                    ba * T::of(2.0 / 3.0) * (predicted.accdoa[[k, n, t]] - oracle.accdoa[[k, m, t]]);
            }
        }
    }
    Ok((loss, perms, grad))
}
