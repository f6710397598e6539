//! Linear scoring of boundary pairs and max-margin training signals.
//!
//! A pair `(y1, y2)` with `y1 < y2` scores `s1[y1] + s2[y2]`, where `s1` and
//! `s2` are per-frame projections of the feature matrix. Because both the
//! score and the boundary cost separate per boundary, exact argmax (plain or
//! cost-augmented) is a single left-to-right scan with a running prefix
//! maximum over onset candidates.
//!
//! Ties resolve to the lexicographically smallest `(y1, y2)`.

use crate::error::{Result, SegError};
use crate::losses::{boundary_cost, cd_loss};
use crate::numeric::{dot, Matrix};
use crate::rnn::PhiMatrix;

/// Onset/offset frame indices, 0-based, strictly ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimingPair {
    pub onset: usize,
    pub offset: usize,
}

impl TimingPair {
    pub fn new(onset: usize, offset: usize) -> Result<Self> {
        if onset >= offset {
            return Err(SegError::InvalidInput(format!(
                "onset {onset} must precede offset {offset}"
            )));
        }
        Ok(Self { onset, offset })
    }

    /// Checks the pair fits a sequence of `frames` frames.
    pub fn check_within(&self, frames: usize) -> Result<()> {
        if self.onset >= self.offset || self.offset >= frames {
            return Err(SegError::InvalidInput(format!(
                "pair ({}, {}) invalid for {frames} frames",
                self.onset, self.offset
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// One vector scores both boundaries.
    Shared,
    /// Separate onset and offset vectors.
    PerBoundary,
}

impl WeightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightMode::Shared => "shared",
            WeightMode::PerBoundary => "per-boundary",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(WeightMode::Shared),
            "per-boundary" | "per_boundary" => Ok(WeightMode::PerBoundary),
            other => Err(SegError::Config(format!("unknown weight mode `{other}`"))),
        }
    }

    /// Parameter group names holding the onset and offset vectors.
    pub fn group_names(&self) -> (&'static str, &'static str) {
        match self {
            WeightMode::Shared => ("w.shared", "w.shared"),
            WeightMode::PerBoundary => ("w.onset", "w.offset"),
        }
    }
}

/// Borrowed structured weight vectors.
#[derive(Debug, Clone, Copy)]
pub struct StructuredWeights<'a> {
    pub mode: WeightMode,
    pub onset: &'a [f64],
    pub offset: &'a [f64],
}

impl<'a> StructuredWeights<'a> {
    pub fn shared(w: &'a [f64]) -> Self {
        Self {
            mode: WeightMode::Shared,
            onset: w,
            offset: w,
        }
    }

    pub fn per_boundary(onset: &'a [f64], offset: &'a [f64]) -> Self {
        Self {
            mode: WeightMode::PerBoundary,
            onset,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.onset.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryScores {
    pub onset: Vec<f64>,
    pub offset: Vec<f64>,
}

impl BoundaryScores {
    pub fn new(onset: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if onset.len() != offset.len() {
            return Err(SegError::Shape(format!(
                "onset scores have {} frames, offset scores {}",
                onset.len(),
                offset.len()
            )));
        }
        Ok(Self { onset, offset })
    }

    pub fn frames(&self) -> usize {
        self.onset.len()
    }

    pub fn pair_score(&self, y: TimingPair) -> f64 {
        self.onset[y.onset] + self.offset[y.offset]
    }
}

pub fn score_frames(phi: &PhiMatrix, weights: &StructuredWeights<'_>) -> Result<BoundaryScores> {
    if weights.onset.len() != phi.cols() || weights.offset.len() != phi.cols() {
        return Err(SegError::Shape(format!(
            "weights of length {}/{} cannot score {} feature columns",
            weights.onset.len(),
            weights.offset.len(),
            phi.cols()
        )));
    }
    let onset: Vec<f64> = (0..phi.rows()).map(|t| dot(weights.onset, phi.row(t))).collect();
    let offset = match weights.mode {
        WeightMode::Shared => onset.clone(),
        WeightMode::PerBoundary => (0..phi.rows()).map(|t| dot(weights.offset, phi.row(t))).collect(),
    };
    Ok(BoundaryScores { onset, offset })
}

fn scan_best_pair(a1: &[f64], a2: &[f64]) -> Result<(TimingPair, f64)> {
    let t_len = a1.len();
    if t_len < 2 || a2.len() != t_len {
        return Err(SegError::InvalidInput(format!(
            "decoding needs at least 2 frames (got {t_len})"
        )));
    }
    let mut prefix_idx = 0usize;
    let mut best = TimingPair { onset: 0, offset: 1 };
    let mut best_score = a1[0] + a2[1];
    for y2 in 2..t_len {
        // a1 prefix maximum over [0, y2), earliest index on ties
        if a1[y2 - 1] > a1[prefix_idx] {
            prefix_idx = y2 - 1;
        }
        let s = a1[prefix_idx] + a2[y2];
        if s > best_score || (s == best_score && prefix_idx < best.onset) {
            best_score = s;
            best = TimingPair {
                onset: prefix_idx,
                offset: y2,
            };
        }
    }
    if !best_score.is_finite() {
        return Err(SegError::NonFinite("boundary scores".into()));
    }
    Ok((best, best_score))
}

/// `argmax_{y1<y2} s1[y1] + s2[y2]` in O(T).
pub fn decode(scores: &BoundaryScores) -> Result<(TimingPair, f64)> {
    scan_best_pair(&scores.onset, &scores.offset)
}

/// Per-frame scores plus the separable boundary cost against `y_ref`.
fn augmented(scores: &BoundaryScores, y_ref: TimingPair, tau: usize) -> (Vec<f64>, Vec<f64>) {
    let a1 = scores
        .onset
        .iter()
        .enumerate()
        .map(|(t, s)| s + boundary_cost(y_ref.onset, t, tau))
        .collect();
    let a2 = scores
        .offset
        .iter()
        .enumerate()
        .map(|(t, s)| s + boundary_cost(y_ref.offset, t, tau))
        .collect();
    (a1, a2)
}

/// `argmax_{y1<y2} s1[y1] + s2[y2] + cost(y_ref, y)` in O(T). The returned
/// score is `(s1[y1] + c1) + (s2[y2] + c2)`.
pub fn decode_loss_augmented(
    scores: &BoundaryScores,
    y_ref: TimingPair,
    tau: usize,
) -> Result<(TimingPair, f64)> {
    y_ref.check_within(scores.frames())?;
    let (a1, a2) = augmented(scores, y_ref, tau);
    scan_best_pair(&a1, &a2)
}

/// Exhaustive O(T^2) search with the same objective and tie-breaking as
/// [`decode`] / [`decode_loss_augmented`].
pub fn brute_force_decode(
    scores: &BoundaryScores,
    cost: Option<(TimingPair, usize)>,
) -> Result<(TimingPair, f64)> {
    let t_len = scores.frames();
    if t_len < 2 {
        return Err(SegError::InvalidInput(format!(
            "decoding needs at least 2 frames (got {t_len})"
        )));
    }
    if let Some((y_ref, _)) = cost {
        y_ref.check_within(t_len)?;
    }
    let mut best: Option<(TimingPair, f64)> = None;
    for y1 in 0..t_len {
        for y2 in y1 + 1..t_len {
            let s = match cost {
                None => scores.onset[y1] + scores.offset[y2],
                Some((r, tau)) => {
                    (scores.onset[y1] + boundary_cost(r.onset, y1, tau))
                        + (scores.offset[y2] + boundary_cost(r.offset, y2, tau))
                }
            };
            // strict improvement keeps the first (smallest) pair among ties
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((TimingPair { onset: y1, offset: y2 }, s));
            }
        }
    }
    Ok(best.expect("at least one pair"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeOutcome {
    pub loss: f64,
    /// Loss-augmented argmax used for the subgradient.
    pub y_hat: TimingPair,
}

/// Structural hinge loss `max_y [cost(y_ref, y) + score(y)] - score(y_ref)`.
pub fn hinge_loss(
    phi: &PhiMatrix,
    weights: &StructuredWeights<'_>,
    y_ref: TimingPair,
    tau: usize,
) -> Result<HingeOutcome> {
    let scores = score_frames(phi, weights)?;
    hinge_from_scores(&scores, y_ref, tau)
}

pub fn hinge_from_scores(scores: &BoundaryScores, y_ref: TimingPair, tau: usize) -> Result<HingeOutcome> {
    let (y_hat, augmented_score) = decode_loss_augmented(scores, y_ref, tau)?;
    let loss = if y_hat == y_ref {
        0.0
    } else {
        augmented_score - scores.pair_score(y_ref)
    };
    debug_assert!(loss >= 0.0);
    debug_assert!(
        (loss - (cd_loss(y_ref, y_hat, tau) + scores.pair_score(y_hat) - scores.pair_score(y_ref))).abs()
            <= 1e-9 * (1.0 + loss.abs())
    );
    Ok(HingeOutcome { loss, y_hat })
}

/// Gradients of the hinge loss for a fixed loss-augmented argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeGradients {
    /// Gradient for the onset vector (the shared vector in shared mode).
    pub d_onset: Vec<f64>,
    /// Gradient for the offset vector; empty in shared mode.
    pub d_offset: Vec<f64>,
    pub d_phi: Matrix,
}

pub fn hinge_gradients(
    phi: &PhiMatrix,
    weights: &StructuredWeights<'_>,
    y_ref: TimingPair,
    y_hat: TimingPair,
) -> Result<HingeGradients> {
    let t_len = phi.rows();
    let f = phi.cols();
    y_ref.check_within(t_len)?;
    y_hat.check_within(t_len)?;
    if weights.onset.len() != f || weights.offset.len() != f {
        return Err(SegError::Shape("weights do not match feature columns".into()));
    }
    let mut d_onset = vec![0.0; f];
    let mut d_offset = vec![0.0; f];
    let mut d_phi = Matrix::zeros(t_len, f);
    if y_hat != y_ref {
        for k in 0..f {
            d_onset[k] = phi.get(y_hat.onset, k) - phi.get(y_ref.onset, k);
            d_offset[k] = phi.get(y_hat.offset, k) - phi.get(y_ref.offset, k);
        }
        let mut add = |row: usize, w: &[f64], sign: f64| {
            for (d, wv) in d_phi.row_mut(row).iter_mut().zip(w) {
                *d += sign * wv;
            }
        };
        add(y_ref.onset, weights.onset, -1.0);
        add(y_ref.offset, weights.offset, -1.0);
        add(y_hat.onset, weights.onset, 1.0);
        add(y_hat.offset, weights.offset, 1.0);
    }
    if weights.mode == WeightMode::Shared {
        d_onset.iter_mut().zip(&d_offset).for_each(|(a, b)| *a += b);
        d_offset.clear();
    }
    Ok(HingeGradients {
        d_onset,
        d_offset,
        d_phi,
    })
}
