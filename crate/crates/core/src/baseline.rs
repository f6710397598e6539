//! Frame-wise voice-activity baseline: per-frame posteriors from a recurrent
//! classifier, moving-average smoothing, and maximum-likelihood interval
//! extraction.

use crate::decoder::TimingPair;
use crate::error::{Result, SegError};
use crate::model::{ModelKind, SegmenterModel};
use crate::numeric::{dot, Matrix, ParamStore};
use crate::rnn::{FeatureSequence, PhiMatrix};

pub const OUTPUT_WEIGHT: &str = "out.w";
pub const OUTPUT_BIAS: &str = "out.b";

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FramePosterior {
    p_voice: Vec<f64>,
}

impl FramePosterior {
    pub fn new(p_voice: Vec<f64>) -> Result<Self> {
        if let Some((t, p)) = p_voice
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(SegError::InvalidInput(format!(
                "frame {t} has probability {p}"
            )));
        }
        Ok(Self { p_voice })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p_voice
    }

    pub fn len(&self) -> usize {
        self.p_voice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_voice.is_empty()
    }
}

/// How a pair is read off the posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    /// Maximum-likelihood interval over the (smoothed) probabilities.
    Probabilities,
    /// Same rule applied to hard `p > 0.5` decisions.
    Binarized,
}

impl PairSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairSource::Probabilities => "probabilities",
            PairSource::Binarized => "binarized",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "probabilities" => Ok(PairSource::Probabilities),
            "binarized" => Ok(PairSource::Binarized),
            other => Err(SegError::Config(format!("unknown pair source `{other}`"))),
        }
    }
}

/// Voice labels: frames in `[onset, offset]` are 1, the rest 0.
pub fn frame_labels(pair: TimingPair, frames: usize) -> Vec<u8> {
    (0..frames)
        .map(|t| u8::from(t >= pair.onset && t <= pair.offset))
        .collect()
}

/// `T x 2` logits `[silence, voice]` from the output layer.
pub fn frame_logits(phi: &PhiMatrix, params: &ParamStore) -> Result<Matrix> {
    let w = params.require(OUTPUT_WEIGHT)?;
    let b = params.require(OUTPUT_BIAS)?;
    let f = phi.cols();
    if w.len() != 2 * f || b.len() != 2 {
        return Err(SegError::Shape(format!(
            "output layer does not match {f} feature columns"
        )));
    }
    let mut logits = Matrix::zeros(phi.rows(), 2);
    for t in 0..phi.rows() {
        let row = phi.row(t);
        let out = logits.row_mut(t);
        out[0] = dot(&w[..f], row) + b[0];
        out[1] = dot(&w[f..], row) + b[1];
    }
    Ok(logits)
}

fn voice_probabilities(logits: &Matrix) -> Vec<f64> {
    (0..logits.rows())
        .map(|t| {
            let r = logits.row(t);
            // softmax over two classes
            crate::numeric::sigmoid(r[1] - r[0])
        })
        .collect()
}

/// Per-frame voice posteriors. `seq` is raw; the model's normalization is applied.
pub fn classify_frames(seq: &FeatureSequence, model: &SegmenterModel) -> Result<FramePosterior> {
    if !matches!(model.kind(), ModelKind::Baseline(_)) {
        return Err(SegError::ModelKind {
            expected: "baseline".into(),
            found: model.kind().to_string(),
        });
    }
    let normalized = model.normalize(seq)?;
    let phi = model.features(&normalized, false, 0)?.0;
    let logits = frame_logits(&phi, model.params())?;
    FramePosterior::new(voice_probabilities(&logits))
}

/// Centered moving average; the window shrinks at the edges.
pub fn smooth_posteriors(post: &FramePosterior, window: usize) -> Result<FramePosterior> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(SegError::Config(format!(
            "smoothing window must be a positive odd integer, got {window}"
        )));
    }
    let p = post.as_slice();
    let half = window / 2;
    let t_len = p.len();
    let mut prefix = vec![0.0; t_len + 1];
    for (t, v) in p.iter().enumerate() {
        prefix[t + 1] = prefix[t] + v;
    }
    let out = (0..t_len)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(t_len - 1);
            if lo == hi {
                return p[t];
            }
            let n = (hi - lo + 1) as f64;
            ((prefix[hi + 1] - prefix[lo]) / n).clamp(0.0, 1.0)
        })
        .collect();
    FramePosterior::new(out)
}

fn best_interval(d: &[f64]) -> Result<TimingPair> {
    let t_len = d.len();
    if t_len < 2 {
        return Err(SegError::InvalidInput(format!(
            "pair extraction needs at least 2 frames (got {t_len})"
        )));
    }
    // interval [y1, y2] scores prefix[y2 + 1] - prefix[y1]
    let mut prefix = vec![0.0; t_len + 1];
    for (t, v) in d.iter().enumerate() {
        prefix[t + 1] = prefix[t] + v;
    }
    let mut min_idx = 0usize;
    let mut best = TimingPair { onset: 0, offset: 1 };
    let mut best_score = prefix[2] - prefix[0];
    for y2 in 2..t_len {
        if prefix[y2 - 1] < prefix[min_idx] {
            min_idx = y2 - 1;
        }
        let s = prefix[y2 + 1] - prefix[min_idx];
        if s > best_score {
            best_score = s;
            best = TimingPair {
                onset: min_idx,
                offset: y2,
            };
        }
    }
    Ok(best)
}

/// Pair `(y1, y2)` maximizing
/// `sum_{t in [y1,y2]} log p[t] + sum_{t outside} log(1 - p[t])`.
pub fn extract_pair(post: &FramePosterior) -> Result<TimingPair> {
    let d: Vec<f64> = post
        .as_slice()
        .iter()
        .map(|&p| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            p.ln() - (1.0 - p).ln()
        })
        .collect();
    best_interval(&d)
}

/// [`extract_pair`] on hard decisions: each frame contributes +1 if
/// `p > 0.5`, else -1 (the clamped log-odds up to a common scale).
pub fn extract_pair_binarized(post: &FramePosterior) -> Result<TimingPair> {
    let d: Vec<f64> = post
        .as_slice()
        .iter()
        .map(|&p| if p > 0.5 { 1.0 } else { -1.0 })
        .collect();
    best_interval(&d)
}

pub fn posterior_to_pair(post: &FramePosterior, window: usize, source: PairSource) -> Result<TimingPair> {
    let smoothed = smooth_posteriors(post, window)?;
    match source {
        PairSource::Probabilities => extract_pair(&smoothed),
        PairSource::Binarized => extract_pair_binarized(&smoothed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(p: &[f64]) -> FramePosterior {
        FramePosterior::new(p.to_vec()).unwrap()
    }

    #[test]
    fn labels_cover_inclusive_interval() {
        let l = frame_labels(TimingPair::new(1, 3).unwrap(), 6);
        assert_eq!(l, vec![0, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn window_one_is_identity() {
        let p = post(&[0.1, 0.7, 0.3, 0.9]);
        assert_eq!(smooth_posteriors(&p, 1).unwrap(), p);
    }

    #[test]
    fn constant_input_is_unchanged() {
        let p = post(&[0.4; 9]);
        let s = smooth_posteriors(&p, 5).unwrap();
        assert!(s.as_slice().iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn impulse_spreads_over_window() {
        let p = post(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let s = smooth_posteriors(&p, 3).unwrap();
        let third = 1.0 / 3.0;
        let expect = [0.0, 0.0, third, third, third, 0.0, 0.0];
        for (a, b) in s.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn edges_truncate_window() {
        let p = post(&[1.0, 0.0, 0.0, 0.0]);
        let s = smooth_posteriors(&p, 3).unwrap();
        assert!((s.as_slice()[0] - 0.5).abs() < 1e-15);
        assert!((s.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn even_or_zero_window_is_rejected() {
        let p = post(&[0.5; 4]);
        assert!(smooth_posteriors(&p, 0).is_err());
        assert!(smooth_posteriors(&p, 4).is_err());
    }

    #[test]
    fn simple_bump() {
        assert_eq!(
            extract_pair(&post(&[0.1, 0.9, 0.9, 0.1])).unwrap(),
            TimingPair::new(1, 2).unwrap()
        );
    }

    #[test]
    fn uniform_half_breaks_ties_to_first_pair() {
        assert_eq!(extract_pair(&post(&[0.5; 10])).unwrap(), TimingPair::new(0, 1).unwrap());
        assert_eq!(
            extract_pair_binarized(&post(&[0.5; 10])).unwrap(),
            TimingPair::new(0, 1).unwrap()
        );
    }

    #[test]
    fn binarized_path_reads_hard_decisions() {
        let p = post(&[0.2, 0.6, 0.99, 0.51, 0.3, 0.8, 0.1]);
        // +1 at 1,2,3,5: [1,5] has 4 - 1 = 3, [1,3] has 3
        assert_eq!(extract_pair_binarized(&p).unwrap(), TimingPair::new(1, 3).unwrap());
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        assert!(FramePosterior::new(vec![0.2, 1.5]).is_err());
        assert!(extract_pair(&post(&[0.3])).is_err());
    }
}
