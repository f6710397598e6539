//! Task costs: the tolerance-insensitive boundary cost and the frame-wise
//! two-class NLL used by the baseline.

use crate::decoder::TimingPair;
use crate::error::{Result, SegError};
use crate::numeric::Matrix;

/// Onset and offset terms of the boundary cost, reported separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdBreakdown {
    pub onset: f64,
    pub offset: f64,
}

impl CdBreakdown {
    pub fn total(&self) -> f64 {
        self.onset + self.offset
    }
}

/// `[|e| - tau]_+` for a single boundary error `e`.
#[inline]
pub fn boundary_cost(reference: usize, predicted: usize, tau: usize) -> f64 {
    reference.abs_diff(predicted).saturating_sub(tau) as f64
}

/// Combined Duration cost `[|y1-y1'| - tau]_+ + [|y2-y2'| - tau]_+`.
pub fn cd_loss(y: TimingPair, y_pred: TimingPair, tau: usize) -> f64 {
    cd_breakdown(y, y_pred, tau).total()
}

pub fn cd_breakdown(y: TimingPair, y_pred: TimingPair, tau: usize) -> CdBreakdown {
    CdBreakdown {
        onset: boundary_cost(y.onset, y_pred.onset, tau),
        offset: boundary_cost(y.offset, y_pred.offset, tau),
    }
}

/// Mean per-frame `-log softmax(logits[t])[label[t]]` over a `T x 2` logit
/// matrix, with its gradient `(softmax - onehot) / T`.
pub fn frame_nll(logits: &Matrix, labels: &[u8]) -> Result<(f64, Matrix)> {
    if logits.cols() != 2 || logits.rows() != labels.len() || labels.is_empty() {
        return Err(SegError::Shape(format!(
            "frame NLL expects T x 2 logits and T labels; got {}x{} and {}",
            logits.rows(),
            logits.cols(),
            labels.len()
        )));
    }
    if !logits.is_finite() {
        return Err(SegError::NonFinite("frame logits".into()));
    }
    let t_len = logits.rows();
    let inv_t = 1.0 / t_len as f64;
    let mut grad = Matrix::zeros(t_len, 2);
    let mut total = 0.0;
    for (t, &label) in labels.iter().enumerate() {
        if label > 1 {
            return Err(SegError::InvalidInput(format!("frame {t} has label {label}")));
        }
        let row = logits.row(t);
        let m = row[0].max(row[1]);
        let e0 = (row[0] - m).exp();
        let e1 = (row[1] - m).exp();
        let log_z = m + (e0 + e1).ln();
        total += log_z - row[label as usize];
        let g = grad.row_mut(t);
        g[0] = e0 / (e0 + e1) * inv_t;
        g[1] = e1 / (e0 + e1) * inv_t;
        g[label as usize] -= inv_t;
    }
    Ok((total * inv_t, grad))
}
