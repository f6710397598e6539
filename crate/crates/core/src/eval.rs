//! Boundary-error reports, tolerance tables and side-by-side comparison.

use std::fmt::Write as _;
use std::path::Path;

use crate::decoder::TimingPair;
use crate::error::{Result, SegError};
use crate::features::segf::looks_like_features;
use crate::features::{read_features, read_wav, Example, MfccConfig, MfccExtractor};
use crate::losses::cd_breakdown;
use crate::model::SegmenterModel;

/// Tolerances in milliseconds used when none are given.
pub const DEFAULT_TOLERANCES_MS: [f64; 6] = [2.0, 5.0, 10.0, 15.0, 25.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceRow {
    pub t_ms: f64,
    pub onset: f64,
    pub offset: f64,
    /// Both boundaries within `t_ms`.
    pub both: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub items: usize,
    /// Sorted source ids of the evaluated items.
    pub item_ids: Vec<String>,
    pub mean_onset: f64,
    pub mean_offset: f64,
    pub mean_cd: f64,
    pub mean_onset_ms: f64,
    pub mean_offset_ms: f64,
    pub mean_cd_ms: f64,
    pub tolerances: Vec<ToleranceRow>,
}

struct ItemError<'a> {
    id: &'a str,
    onset: usize,
    offset: usize,
    period_ms: f64,
}

/// Scores already-predicted pairs. `items` are `(source_id, reference,
/// prediction, frame_period_ms)`.
pub fn report_from_predictions(
    model_id: &str,
    items: &[(&str, TimingPair, TimingPair, f64)],
    tolerances_ms: &[f64],
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(SegError::InvalidInput("cannot evaluate an empty split".into()));
    }
    if tolerances_ms.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(SegError::Config("tolerances must be finite and >= 0".into()));
    }
    let mut errs: Vec<ItemError<'_>> = items
        .iter()
        .map(|&(id, r, p, period_ms)| {
            let b = cd_breakdown(r, p, 0);
            ItemError {
                id,
                onset: b.onset as usize,
                offset: b.offset as usize,
                period_ms,
            }
        })
        .collect();
    // fixed summation order keeps the report independent of input order
    errs.sort_by(|a, b| {
        a.id.cmp(b.id)
            .then(a.onset.cmp(&b.onset))
            .then(a.offset.cmp(&b.offset))
            .then(a.period_ms.total_cmp(&b.period_ms))
    });
    let n = errs.len() as f64;
    let mean = |f: &dyn Fn(&ItemError<'_>) -> f64| errs.iter().map(f).sum::<f64>() / n;
    let mean_onset = mean(&|e| e.onset as f64);
    let mean_offset = mean(&|e| e.offset as f64);
    let mean_onset_ms = mean(&|e| e.onset as f64 * e.period_ms);
    let mean_offset_ms = mean(&|e| e.offset as f64 * e.period_ms);
    let mut sorted_tol = tolerances_ms.to_vec();
    sorted_tol.sort_by(f64::total_cmp);
    let tolerances = sorted_tol
        .into_iter()
        .map(|t| {
            let within = |frames: usize, period: f64| frames as f64 * period <= t;
            let count = |f: &dyn Fn(&ItemError<'_>) -> bool| errs.iter().filter(|e| f(e)).count() as f64 / n;
            ToleranceRow {
                t_ms: t,
                onset: count(&|e| within(e.onset, e.period_ms)),
                offset: count(&|e| within(e.offset, e.period_ms)),
                both: count(&|e| within(e.onset, e.period_ms) && within(e.offset, e.period_ms)),
            }
        })
        .collect();
    Ok(EvalReport {
        model_id: model_id.to_string(),
        items: errs.len(),
        item_ids: errs.iter().map(|e| e.id.to_string()).collect(),
        mean_onset,
        mean_offset,
        mean_cd: mean_onset + mean_offset,
        mean_onset_ms,
        mean_offset_ms,
        mean_cd_ms: mean_onset_ms + mean_offset_ms,
        tolerances,
    })
}

/// Runs inference on every example (raw features) and scores the result.
pub fn evaluate(model: &SegmenterModel, model_id: &str, examples: &[Example], tolerances_ms: &[f64]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(SegError::InvalidInput("cannot evaluate an empty split".into()));
    }
    let preds = examples
        .iter()
        .map(|ex| model.predict(&ex.seq))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<_> = examples
        .iter()
        .zip(&preds)
        .map(|(ex, &p)| (ex.seq.source_id.as_str(), ex.pair, p, ex.seq.frame_period_ms))
        .collect();
    report_from_predictions(model_id, &items, tolerances_ms)
}

fn tolerance_label(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("t<={t:.0}ms")
    } else {
        format!("t<={t}ms")
    }
}

/// Side-by-side table of several reports over the same items.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub columns: Vec<String>,
    /// Onset, Offset, CD rows in frames.
    pub loss_rows: Vec<(String, Vec<f64>)>,
    /// Proportion rows, labelled `both|onset|offset t<=Xms`.
    pub tolerance_rows: Vec<(String, Vec<f64>)>,
}

pub fn compare(reports: &[EvalReport]) -> Result<Comparison> {
    let first = reports
        .first()
        .ok_or_else(|| SegError::InvalidInput("nothing to compare".into()))?;
    for r in &reports[1..] {
        if r.item_ids != first.item_ids {
            return Err(SegError::InvalidInput(format!(
                "reports `{}` and `{}` cover different items",
                first.model_id, r.model_id
            )));
        }
        let t_a: Vec<f64> = first.tolerances.iter().map(|t| t.t_ms).collect();
        let t_b: Vec<f64> = r.tolerances.iter().map(|t| t.t_ms).collect();
        if t_a != t_b {
            return Err(SegError::InvalidInput(format!(
                "reports `{}` and `{}` use different tolerances",
                first.model_id, r.model_id
            )));
        }
    }
    let col = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let loss_rows = vec![
        ("Onset".to_string(), col(&|r| r.mean_onset)),
        ("Offset".to_string(), col(&|r| r.mean_offset)),
        ("CD".to_string(), col(&|r| r.mean_cd)),
    ];
    let mut tolerance_rows = Vec::new();
    for (which, pick) in [
        ("both", (|t: &ToleranceRow| t.both) as fn(&ToleranceRow) -> f64),
        ("onset", |t| t.onset),
        ("offset", |t| t.offset),
    ] {
        for (i, t) in first.tolerances.iter().enumerate() {
            tolerance_rows.push((
                format!("{which} {}", tolerance_label(t.t_ms)),
                col(&|r| pick(&r.tolerances[i])),
            ));
        }
    }
    Ok(Comparison {
        columns: reports.iter().map(|r| r.model_id.clone()).collect(),
        loss_rows,
        tolerance_rows,
    })
}

impl Comparison {
    /// Aligned plain text: a loss table in frames, then a tolerance table.
    pub fn to_text(&self) -> String {
        let label_w = self
            .loss_rows
            .iter()
            .chain(&self.tolerance_rows)
            .map(|(l, _)| l.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let col_w = self.columns.iter().map(|c| c.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let table = |out: &mut String, title: &str, rows: &[(String, Vec<f64>)]| {
            let _ = write!(out, "{title:<label_w$}");
            for c in &self.columns {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
            for (label, vals) in rows {
                let _ = write!(out, "{label:<label_w$}");
                for v in vals {
                    let _ = write!(out, "  {v:>col_w$.4}");
                }
                out.push('\n');
            }
        };
        table(&mut out, "loss (frames)", &self.loss_rows);
        out.push('\n');
        table(&mut out, "tolerance", &self.tolerance_rows);
        out
    }

    /// Header row then one row per metric, floats to 4 decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (label, vals) in self.loss_rows.iter().chain(&self.tolerance_rows) {
            out.push_str(label);
            for v in vals {
                let _ = write!(out, "\t{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segmentation {
    pub pair: TimingPair,
    pub onset_ms: f64,
    pub offset_ms: f64,
}

/// Segments a feature file or 16-bit WAV file.
pub fn segment(model: &SegmenterModel, path: &Path, mfcc: &MfccConfig) -> Result<Segmentation> {
    let seq = if looks_like_features(path) {
        read_features(path)?
    } else {
        let wave = read_wav(path)?;
        MfccExtractor::new(mfcc, wave.sample_rate_hz)?.extract(&wave, &path.display().to_string())?
    };
    let pair = model.predict(&seq)?;
    Ok(Segmentation {
        pair,
        onset_ms: pair.onset as f64 * seq.frame_period_ms,
        offset_ms: pair.offset as f64 * seq.frame_period_ms,
    })
}
