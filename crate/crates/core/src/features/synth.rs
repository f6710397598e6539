//! Synthetic labelled corpora with one embedded event per utterance.
//!
//! Background frames are i.i.d. `Normal(0, sigma^2)` per dimension. A fixed,
//! seed-chosen subset of dimensions is shifted by `+delta` on every frame of
//! the event interval `[y1, y2]`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::decoder::TimingPair;
use crate::error::{Result, SegError};
use crate::numeric::Matrix;
use crate::rnn::FeatureSequence;

use super::manifest::{DatasetManifest, Example, ManifestRecord, Split};
use super::segf::write_features;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub dim: usize,
    pub sigma: f64,
    pub delta: f64,
    /// Minimum `y2 - y1`.
    pub min_dur: usize,
    /// Number of shifted dimensions; `None` means half of `dim`, rounded up.
    pub active_dims: Option<usize>,
    /// Perturb each recorded boundary by a uniform -1/0/+1 frame.
    pub jitter: bool,
    pub frame_period_ms: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 600,
            n_dev: 100,
            n_test: 100,
            t_min: 50,
            t_max: 100,
            dim: 13,
            sigma: 1.0,
            delta: 3.0,
            min_dur: 10,
            active_dims: None,
            jitter: false,
            frame_period_ms: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn n_active(&self) -> usize {
        self.active_dims.unwrap_or(self.dim.div_ceil(2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.t_min < 2 || self.t_min > self.t_max {
            return Err(SegError::Config(format!(
                "need dim >= 1 and 2 <= t_min <= t_max (dim {}, T in [{}, {}])",
                self.dim, self.t_min, self.t_max
            )));
        }
        if self.min_dur == 0 || self.min_dur >= self.t_min {
            return Err(SegError::Config(format!(
                "minimum event duration {} infeasible for utterances of {} frames",
                self.min_dur, self.t_min
            )));
        }
        if self.n_active() == 0 || self.n_active() > self.dim {
            return Err(SegError::Config(format!(
                "{} active dims out of {}",
                self.n_active(),
                self.dim
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.delta.is_finite()) {
            return Err(SegError::Config("sigma must be >= 0 and delta finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    /// Dimensions carrying the event shift.
    pub active_dims: Vec<usize>,
}

impl SynthCorpus {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Samples `(y1, y2)`: `y1` uniform on `[0, T-1-min_dur]`, then `y2` uniform
/// on `[y1+min_dur, T-1]`.
fn sample_pair(rng: &mut ChaCha8Rng, frames: usize, min_dur: usize) -> (usize, usize) {
    let y1 = rng.gen_range(0..frames - min_dur);
    let y2 = rng.gen_range(y1 + min_dur..frames);
    (y1, y2)
}

fn jitter_pair(rng: &mut ChaCha8Rng, y1: usize, y2: usize, frames: usize) -> (usize, usize) {
    let mut j = |v: usize| -> usize {
        let step: i64 = rng.gen_range(-1..=1);
        (v as i64 + step).clamp(0, frames as i64 - 1) as usize
    };
    let a = j(y1);
    let b = j(y2);
    if a < b {
        (a, b)
    } else {
        (y1, y2)
    }
}

pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims: Vec<usize> = (0..cfg.dim).collect();
    dims.shuffle(&mut rng);
    let mut active_dims = dims[..cfg.n_active()].to_vec();
    active_dims.sort_unstable();
    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| SegError::Config(e.to_string()))?;

    let mut make = |split: Split, count: usize| -> Result<Vec<Example>> {
        (0..count)
            .map(|i| {
                let frames = rng.gen_range(cfg.t_min..=cfg.t_max);
                let (y1, y2) = sample_pair(&mut rng, frames, cfg.min_dur);
                let mut values = Matrix::zeros(frames, cfg.dim);
                for v in values.as_mut_slice() {
                    *v = noise.sample(&mut rng);
                }
                for t in y1..=y2 {
                    let row = values.row_mut(t);
                    for &k in &active_dims {
                        row[k] += cfg.delta;
                    }
                }
                let (l1, l2) = if cfg.jitter {
                    jitter_pair(&mut rng, y1, y2, frames)
                } else {
                    (y1, y2)
                };
                let seq = FeatureSequence::new(values, cfg.frame_period_ms, format!("{split}_{i:04}"))?;
                Example::new(seq, TimingPair::new(l1, l2)?)
            })
            .collect()
    };
    let train = make(Split::Train, cfg.n_train)?;
    let dev = make(Split::Dev, cfg.n_dev)?;
    let test = make(Split::Test, cfg.n_test)?;
    Ok(SynthCorpus {
        train,
        dev,
        test,
        active_dims,
    })
}

/// Writes `features/<id>.segf` plus `train.tsv`, `dev.tsv`, `test.tsv`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir)?;
    for split in Split::ALL {
        let mut records = Vec::new();
        for ex in corpus.split(split) {
            let path = feat_dir.join(format!("{}.segf", ex.seq.source_id));
            write_features(&path, &ex.seq)?;
            records.push(ManifestRecord { path, pair: ex.pair });
        }
        DatasetManifest {
            split: Some(split),
            records,
        }
        .write(&dir.join(format!("{split}.tsv")))?;
    }
    Ok(())
}

/// Expected CD loss (tau = 0) of the best constant predictor under the
/// generator's label distribution (jitter off): the per-boundary medians,
/// evaluated by exact enumeration.
pub fn chance_cd(cfg: &SynthConfig) -> Result<f64> {
    cfg.validate()?;
    let t_max = cfg.t_max;
    let mut p_onset = vec![0.0; t_max];
    let mut p_offset = vec![0.0; t_max];
    let n_lengths = (cfg.t_max - cfg.t_min + 1) as f64;
    for frames in cfg.t_min..=cfg.t_max {
        let n_y1 = (frames - cfg.min_dur) as f64;
        for y1 in 0..frames - cfg.min_dur {
            let p1 = 1.0 / n_lengths / n_y1;
            p_onset[y1] += p1;
            let n_y2 = (frames - y1 - cfg.min_dur) as f64;
            for y2 in y1 + cfg.min_dur..frames {
                p_offset[y2] += p1 / n_y2;
            }
        }
    }
    let expected_abs_dev = |p: &[f64]| -> f64 {
        (0..p.len())
            .map(|c| p.iter().enumerate().map(|(y, w)| w * y.abs_diff(c) as f64).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    Ok(expected_abs_dev(&p_onset) + expected_abs_dev(&p_offset))
}
