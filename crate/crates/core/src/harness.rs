//! Trains the four frame-classifier baselines and the structured segmenter on
//! one corpus and tabulates their test-set errors.

use crate::error::Result;
use crate::eval::{compare, evaluate, Comparison, EvalReport};
use crate::features::Example;
use crate::model::{BaselineArch, SegmenterModel};
use crate::trainer::{train, train_baseline, TrainConfig, TrainHistory};

/// Column label of the structured segmenter.
pub const STRUCTURED_LABEL: &str = "STRUCTURED";

/// Configuration used for the comparison table: training defaults.
pub fn comparison_config() -> TrainConfig {
    TrainConfig::default()
}

pub struct ComparisonRun {
    pub models: Vec<(String, SegmenterModel, TrainHistory)>,
    pub reports: Vec<EvalReport>,
    pub table: Comparison,
}

/// `progress` is called with each model label before it is trained.
pub fn run_comparison(
    train_set: &[Example],
    dev_set: &[Example],
    test_set: &[Example],
    cfg: &TrainConfig,
    tolerances_ms: &[f64],
    progress: &mut dyn FnMut(&str),
) -> Result<ComparisonRun> {
    run_comparison_with(train_set, dev_set, test_set, cfg, tolerances_ms, None, progress)
}

/// As [`run_comparison`], but reuses an already trained structured model
/// when one is supplied.
pub fn run_comparison_with(
    train_set: &[Example],
    dev_set: &[Example],
    test_set: &[Example],
    cfg: &TrainConfig,
    tolerances_ms: &[f64],
    structured: Option<(SegmenterModel, TrainHistory)>,
    progress: &mut dyn FnMut(&str),
) -> Result<ComparisonRun> {
    let mut models = Vec::new();
    for arch in BaselineArch::ALL {
        progress(arch.as_str());
        let (m, h) = train_baseline(train_set, dev_set, cfg, arch)?;
        models.push((arch.as_str().to_string(), m, h));
    }
    let (m, h) = match structured {
        Some(pair) => pair,
        None => {
            progress(STRUCTURED_LABEL);
            train(train_set, dev_set, cfg)?
        }
    };
    models.push((STRUCTURED_LABEL.to_string(), m, h));
    let reports = models
        .iter()
        .map(|(name, m, _)| evaluate(m, name, test_set, tolerances_ms))
        .collect::<Result<Vec<_>>>()?;
    let table = compare(&reports)?;
    Ok(ComparisonRun { models, reports, table })
}
