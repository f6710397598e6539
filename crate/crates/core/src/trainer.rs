//! Per-utterance SGD with AdaGrad, dev-set early stopping on the boundary
//! cost, for both the structured segmenter and the frame-wise baselines.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::{frame_labels, frame_logits, PairSource, OUTPUT_BIAS, OUTPUT_WEIGHT};
use crate::decoder::{hinge_from_scores, hinge_gradients, score_frames, HingeOutcome, TimingPair, WeightMode};
use crate::error::{Result, SegError};
use crate::features::Example;
use crate::losses::{cd_loss, frame_nll};
use crate::model::{parse_metadata, structured_weights_of, BaselineArch, BaselineDecoding, ModelKind, Normalizer, SegmenterModel};
use crate::numeric::{AdaGradState, GradientBundle, Matrix, ParamStore};
use crate::rnn::{bilstm_backward, bilstm_forward, FeatureSequence, RnnConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub patience: usize,
    pub lr: f64,
    pub adagrad_eps: f64,
    pub tau_train: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub dropout: f64,
    pub mode: WeightMode,
    pub seed: u64,
    /// Global-norm clip threshold; `None` disables clipping.
    pub clip: Option<f64>,
    /// L2 coefficient on weight matrices (biases exempt); 0 disables.
    pub weight_decay: f64,
    pub arch: BaselineArch,
    pub smoothing_window: usize,
    pub pair_source: PairSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 200,
            patience: 10,
            lr: AdaGradState::DEFAULT_LR,
            adagrad_eps: AdaGradState::DEFAULT_EPS,
            tau_train: 1,
            hidden: 64,
            layers: 2,
            bidirectional: true,
            dropout: 0.3,
            mode: WeightMode::PerBoundary,
            seed: 0,
            clip: Some(5.0),
            weight_decay: 0.0,
            arch: BaselineArch::BiRnn2,
            smoothing_window: 5,
            pair_source: PairSource::Probabilities,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SegError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(SegError::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 16] = [
        "epochs_max",
        "patience",
        "lr",
        "adagrad_eps",
        "tau_train",
        "hidden",
        "layers",
        "bidirectional",
        "dropout",
        "mode",
        "seed",
        "clip",
        "weight_decay",
        "arch",
        "smoothing_window",
        "pair_source",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "epochs_max" => self.epochs_max = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "adagrad_eps" => self.adagrad_eps = parse_num(key, v)?,
            "tau_train" => self.tau_train = parse_num(key, v)?,
            "hidden" => self.hidden = parse_num(key, v)?,
            "layers" => self.layers = parse_num(key, v)?,
            "bidirectional" => self.bidirectional = parse_bool(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "mode" => self.mode = WeightMode::parse(v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "clip" => {
                self.clip = match v {
                    "none" | "off" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "arch" => self.arch = BaselineArch::parse(v)?,
            "smoothing_window" => self.smoothing_window = parse_num(key, v)?,
            "pair_source" => self.pair_source = PairSource::parse(v)?,
            other => return Err(SegError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_metadata(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs_max = {}", self.epochs_max);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "lr = {:?}", self.lr);
        let _ = writeln!(s, "adagrad_eps = {:?}", self.adagrad_eps);
        let _ = writeln!(s, "tau_train = {}", self.tau_train);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "bidirectional = {}", self.bidirectional);
        let _ = writeln!(s, "dropout = {:?}", self.dropout);
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        match self.clip {
            Some(c) => {
                let _ = writeln!(s, "clip = {c:?}");
            }
            None => {
                let _ = writeln!(s, "clip = none");
            }
        }
        let _ = writeln!(s, "weight_decay = {:?}", self.weight_decay);
        let _ = writeln!(s, "arch = {}", self.arch.as_str());
        let _ = writeln!(s, "smoothing_window = {}", self.smoothing_window);
        let _ = writeln!(s, "pair_source = {}", self.pair_source.as_str());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.epochs_max == 0 {
            return Err(SegError::Config("patience and epochs_max must be >= 1".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(SegError::Config(format!("clip threshold {c} must be > 0")));
            }
        }
        if !(self.lr > 0.0 && self.adagrad_eps > 0.0) {
            return Err(SegError::Config("learning rate and AdaGrad eps must be > 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(SegError::Config("weight decay must be >= 0".into()));
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(SegError::Config("smoothing window must be odd".into()));
        }
        self.rnn_config().validate()
    }

    pub fn rnn_config(&self) -> RnnConfig {
        RnnConfig {
            layers: self.layers,
            hidden: self.hidden,
            bidirectional: self.bidirectional,
            dropout_rate: self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    /// Mean surrogate loss over each epoch's updates (hinge or frame NLL).
    pub train_loss: Vec<f64>,
    /// Mean boundary cost (tau = 0) on dev after each epoch.
    pub dev_cd: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_dev_cd(&self) -> f64 {
        self.dev_cd[self.best_epoch]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_cd: f64,
    pub improved: bool,
}

/// Hinge loss of the full pipeline for one normalized utterance.
pub fn structured_loss(
    params: &ParamStore,
    rnn: &RnnConfig,
    mode: WeightMode,
    seq: &FeatureSequence,
    y_ref: TimingPair,
    tau: usize,
    train_mode: bool,
    seed: u64,
) -> Result<HingeOutcome> {
    let (phi, _) = bilstm_forward(seq, params, rnn, train_mode, seed)?;
    let scores = score_frames(&phi, &structured_weights_of(params, mode)?)?;
    hinge_from_scores(&scores, y_ref, tau)
}

/// Hinge loss and its gradient with respect to every parameter.
pub fn structured_gradient(
    params: &ParamStore,
    rnn: &RnnConfig,
    mode: WeightMode,
    seq: &FeatureSequence,
    y_ref: TimingPair,
    tau: usize,
    train_mode: bool,
    seed: u64,
) -> Result<(HingeOutcome, GradientBundle)> {
    let (phi, cache) = bilstm_forward(seq, params, rnn, train_mode, seed)?;
    let weights = structured_weights_of(params, mode)?;
    let scores = score_frames(&phi, &weights)?;
    let outcome = hinge_from_scores(&scores, y_ref, tau)?;
    if outcome.y_hat == y_ref {
        return Ok((outcome, GradientBundle::zeros_like(params)));
    }
    let hg = hinge_gradients(&phi, &weights, y_ref, outcome.y_hat)?;
    let mut grads = bilstm_backward(&hg.d_phi, &cache, params)?;
    let (on, off) = mode.group_names();
    add_into(grads.require_mut(on)?, &hg.d_onset);
    if mode == WeightMode::PerBoundary {
        add_into(grads.require_mut(off)?, &hg.d_offset);
    }
    Ok((outcome, grads))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Mean frame NLL of the baseline classifier for one normalized utterance.
pub fn baseline_loss(
    params: &ParamStore,
    rnn: &RnnConfig,
    seq: &FeatureSequence,
    labels: &[u8],
    train_mode: bool,
    seed: u64,
) -> Result<f64> {
    let (phi, _) = bilstm_forward(seq, params, rnn, train_mode, seed)?;
    let logits = frame_logits(&phi, params)?;
    Ok(frame_nll(&logits, labels)?.0)
}

pub fn baseline_gradient(
    params: &ParamStore,
    rnn: &RnnConfig,
    seq: &FeatureSequence,
    labels: &[u8],
    train_mode: bool,
    seed: u64,
) -> Result<(f64, GradientBundle)> {
    let (phi, cache) = bilstm_forward(seq, params, rnn, train_mode, seed)?;
    let logits = frame_logits(&phi, params)?;
    let (loss, d_logits) = frame_nll(&logits, labels)?;
    let f = phi.cols();
    let w = params.require(OUTPUT_WEIGHT)?;
    let mut d_phi = Matrix::zeros(phi.rows(), f);
    let mut d_w = vec![0.0; 2 * f];
    let mut d_b = [0.0; 2];
    for t in 0..phi.rows() {
        let g = d_logits.row(t);
        let row = phi.row(t);
        let dp = d_phi.row_mut(t);
        for c in 0..2 {
            d_b[c] += g[c];
            for k in 0..f {
                d_w[c * f + k] += g[c] * row[k];
                dp[k] += g[c] * w[c * f + k];
            }
        }
    }
    let mut grads = bilstm_backward(&d_phi, &cache, params)?;
    add_into(grads.require_mut(OUTPUT_WEIGHT)?, &d_w);
    add_into(grads.require_mut(OUTPUT_BIAS)?, &d_b);
    Ok((loss, grads))
}

fn check_splits(train: &[Example], dev: &[Example]) -> Result<usize> {
    if train.is_empty() || dev.is_empty() {
        return Err(SegError::InvalidInput(format!(
            "training needs nonempty train and dev splits (got {} and {})",
            train.len(),
            dev.len()
        )));
    }
    let dim = train[0].seq.dim();
    if let Some(ex) = train.iter().chain(dev).find(|e| e.seq.dim() != dim) {
        return Err(SegError::Shape(format!(
            "`{}` has {} feature dims, expected {dim}",
            ex.seq.source_id,
            ex.seq.dim()
        )));
    }
    Ok(dim)
}

fn mean_dev_cd(model: &SegmenterModel, dev: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in dev {
        total += cd_loss(ex.pair, model.predict_normalized(&ex.seq)?, 0);
    }
    Ok(total / dev.len() as f64)
}

fn run(
    train: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
    kind: ModelKind,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(SegmenterModel, TrainHistory)> {
    cfg.validate()?;
    let dim = check_splits(train, dev)?;
    let rnn = match kind {
        ModelKind::Baseline(arch) => arch.rnn_config(cfg.hidden, cfg.dropout),
        ModelKind::Structured(_) => cfg.rnn_config(),
    };
    let normalizer = Normalizer::fit(train.iter().map(|e| &e.seq))?;
    let norm = |set: &[Example]| -> Result<Vec<Example>> {
        set.iter()
            .map(|e| {
                Ok(Example {
                    seq: normalizer.apply(&e.seq)?,
                    pair: e.pair,
                })
            })
            .collect()
    };
    let train_n = norm(train)?;
    let dev_n = norm(dev)?;
    let labels: Vec<Vec<u8>> = train_n
        .iter()
        .map(|e| frame_labels(e.pair, e.seq.frames()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SegmenterModel::new(kind, rnn, dim, rng.gen())?;
    model.set_normalizer(normalizer)?;
    model.baseline_decoding = BaselineDecoding {
        smoothing_window: cfg.smoothing_window,
        source: cfg.pair_source,
    };
    model.config_echo = cfg.to_text();
    let mut opt = AdaGradState::new(model.params(), cfg.lr, cfg.adagrad_eps);

    let mut history = TrainHistory::default();
    let mut best_params = model.params().clone();
    let mut best_cd = f64::INFINITY;
    let mut order: Vec<usize> = (0..train_n.len()).collect();
    for epoch in 0..cfg.epochs_max {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let ex = &train_n[i];
            let drop_seed: u64 = rng.gen();
            let (loss, mut grads) = match kind {
                ModelKind::Structured(mode) => {
                    let (out, g) = structured_gradient(
                        model.params(),
                        &rnn,
                        mode,
                        &ex.seq,
                        ex.pair,
                        cfg.tau_train,
                        true,
                        drop_seed,
                    )?;
                    (out.loss, g)
                }
                ModelKind::Baseline(_) => {
                    baseline_gradient(model.params(), &rnn, &ex.seq, &labels[i], true, drop_seed)?
                }
            };
            if !loss.is_finite() {
                return Err(SegError::NonFinite(format!(
                    "training loss on `{}` at epoch {epoch}",
                    ex.seq.source_id
                )));
            }
            loss_sum += loss;
            if loss == 0.0 {
                continue;
            }
            if cfg.weight_decay > 0.0 {
                grads.add_scaled_params(model.params(), cfg.weight_decay, |n| n.ends_with(".w") || n.starts_with("w."));
            }
            if let Some(c) = cfg.clip {
                grads.clip_global_norm(c);
            }
            if !grads.is_finite() {
                return Err(SegError::NonFinite(format!(
                    "gradient on `{}` at epoch {epoch}",
                    ex.seq.source_id
                )));
            }
            opt.step(model.params_mut(), &grads)?;
        }
        let train_loss = loss_sum / train_n.len() as f64;
        let dev_cd = mean_dev_cd(&model, &dev_n)?;
        history.train_loss.push(train_loss);
        history.dev_cd.push(dev_cd);
        let improved = dev_cd < best_cd;
        if improved {
            best_cd = dev_cd;
            history.best_epoch = epoch;
            best_params = model.params().clone();
        }
        observer(&EpochStats {
            epoch,
            train_loss,
            dev_cd,
            improved,
        });
        if epoch - history.best_epoch >= cfg.patience {
            break;
        }
    }
    *model.params_mut() = best_params;
    Ok((model, history))
}

/// Trains the structured segmenter (weight mode from `cfg.mode`).
pub fn train(train: &[Example], dev: &[Example], cfg: &TrainConfig) -> Result<(SegmenterModel, TrainHistory)> {
    train_with_observer(train, dev, cfg, &mut |_| {})
}

pub fn train_with_observer(
    train: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(SegmenterModel, TrainHistory)> {
    run(train, dev, cfg, ModelKind::Structured(cfg.mode), observer)
}

/// Trains a frame classifier of the given architecture with frame NLL.
pub fn train_baseline(
    train: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
    arch: BaselineArch,
) -> Result<(SegmenterModel, TrainHistory)> {
    train_baseline_with_observer(train, dev, cfg, arch, &mut |_| {})
}

pub fn train_baseline_with_observer(
    train: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
    arch: BaselineArch,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(SegmenterModel, TrainHistory)> {
    run(train, dev, cfg, ModelKind::Baseline(arch), observer)
}
