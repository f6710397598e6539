//! The serializable model bundle: recurrent parameters, the structured
//! weights or the baseline output layer, and input normalization.

use std::fmt;
use std::path::Path;

use crate::baseline::{self, PairSource, OUTPUT_BIAS, OUTPUT_WEIGHT};
use crate::decoder::{self, StructuredWeights, TimingPair, WeightMode};
use crate::error::{Result, SegError};
use crate::numeric::{checkpoint, init_params, Matrix, ParamKind, ParamSpec, ParamStore};
use crate::rnn::{bilstm_forward, FeatureSequence, ForwardCache, PhiMatrix, RnnConfig};

const NORM_MEAN: &str = "norm.mean";
const NORM_STD: &str = "norm.std";

/// The four frame-classifier architectures of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineArch {
    Rnn,
    Rnn2,
    BiRnn,
    BiRnn2,
}

impl BaselineArch {
    pub const ALL: [BaselineArch; 4] = [
        BaselineArch::Rnn,
        BaselineArch::Rnn2,
        BaselineArch::BiRnn,
        BaselineArch::BiRnn2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineArch::Rnn => "RNN",
            BaselineArch::Rnn2 => "2-RNN",
            BaselineArch::BiRnn => "BI-RNN",
            BaselineArch::BiRnn2 => "BI-2-RNN",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RNN" => Ok(BaselineArch::Rnn),
            "2-RNN" | "2RNN" => Ok(BaselineArch::Rnn2),
            "BI-RNN" | "BIRNN" => Ok(BaselineArch::BiRnn),
            "BI-2-RNN" | "BI2RNN" => Ok(BaselineArch::BiRnn2),
            other => Err(SegError::Config(format!("unknown baseline architecture `{other}`"))),
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            BaselineArch::Rnn | BaselineArch::BiRnn => 1,
            BaselineArch::Rnn2 | BaselineArch::BiRnn2 => 2,
        }
    }

    pub fn bidirectional(&self) -> bool {
        matches!(self, BaselineArch::BiRnn | BaselineArch::BiRnn2)
    }

    pub fn rnn_config(&self, hidden: usize, dropout_rate: f64) -> RnnConfig {
        RnnConfig {
            layers: self.layers(),
            hidden,
            bidirectional: self.bidirectional(),
            dropout_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Structured(WeightMode),
    Baseline(BaselineArch),
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Structured(m) => write!(f, "structured ({})", m.as_str()),
            ModelKind::Baseline(a) => write!(f, "baseline ({})", a.as_str()),
        }
    }
}

/// Post-processing of baseline posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineDecoding {
    pub smoothing_window: usize,
    pub source: PairSource,
}

impl Default for BaselineDecoding {
    fn default() -> Self {
        Self {
            smoothing_window: 5,
            source: PairSource::Probabilities,
        }
    }
}

/// Per-dimension z-normalization with training-split statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a FeatureSequence>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for s in seqs {
            if sum.is_empty() {
                sum = vec![0.0; s.dim()];
                sq = vec![0.0; s.dim()];
            } else if s.dim() != sum.len() {
                return Err(SegError::Shape(format!(
                    "`{}` has {} dims, expected {}",
                    s.source_id,
                    s.dim(),
                    sum.len()
                )));
            }
            for t in 0..s.frames() {
                for (k, v) in s.values().row(t).iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
            }
            n += s.frames();
        }
        if n == 0 {
            return Err(SegError::InvalidInput("no frames to fit normalization".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                let sd = var.sqrt();
                if sd < 1e-8 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        if seq.dim() != self.dim() {
            return Err(SegError::Shape(format!(
                "`{}` has {} feature dims, model expects {}",
                seq.source_id,
                seq.dim(),
                self.dim()
            )));
        }
        let mut out = seq.clone();
        let m = out.values_mut();
        for t in 0..m.rows() {
            for (k, v) in m.row_mut(t).iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterModel {
    kind: ModelKind,
    rnn: RnnConfig,
    input_dim: usize,
    params: ParamStore,
    normalizer: Normalizer,
    pub baseline_decoding: BaselineDecoding,
    /// Free-form `key = value` lines echoed into the checkpoint.
    pub config_echo: String,
}

impl SegmenterModel {
    pub fn param_specs(kind: ModelKind, rnn: &RnnConfig, input_dim: usize) -> Vec<ParamSpec> {
        let mut specs = rnn.param_specs(input_dim);
        let f = rnn.output_dim();
        match kind {
            ModelKind::Structured(WeightMode::Shared) => {
                specs.push(ParamSpec::new("w.shared", &[f], ParamKind::Weight));
            }
            ModelKind::Structured(WeightMode::PerBoundary) => {
                specs.push(ParamSpec::new("w.onset", &[f], ParamKind::Weight));
                specs.push(ParamSpec::new("w.offset", &[f], ParamKind::Weight));
            }
            ModelKind::Baseline(_) => {
                specs.push(ParamSpec::new(OUTPUT_WEIGHT, &[2, f], ParamKind::Weight));
                specs.push(ParamSpec::new(OUTPUT_BIAS, &[2], ParamKind::Bias));
            }
        }
        specs
    }

    /// Freshly initialized model with identity normalization.
    pub fn new(kind: ModelKind, rnn: RnnConfig, input_dim: usize, seed: u64) -> Result<Self> {
        rnn.validate()?;
        if let ModelKind::Baseline(arch) = kind {
            if arch.layers() != rnn.layers || arch.bidirectional() != rnn.bidirectional {
                return Err(SegError::Config(format!(
                    "recurrent config does not match architecture {}",
                    arch.as_str()
                )));
            }
        }
        let params = init_params(&Self::param_specs(kind, &rnn, input_dim), seed)?;
        Self::from_parts(kind, rnn, input_dim, params, Normalizer::identity(input_dim))
    }

    pub fn from_parts(
        kind: ModelKind,
        rnn: RnnConfig,
        input_dim: usize,
        params: ParamStore,
        normalizer: Normalizer,
    ) -> Result<Self> {
        rnn.check_params(&params, input_dim)?;
        for spec in Self::param_specs(kind, &rnn, input_dim) {
            if params.shape(&spec.name) != Some(spec.shape.as_slice()) {
                return Err(SegError::Shape(format!(
                    "parameter group `{}` missing or misshapen for {kind}",
                    spec.name
                )));
            }
        }
        if normalizer.dim() != input_dim {
            return Err(SegError::Shape("normalizer dimension".into()));
        }
        Ok(Self {
            kind,
            rnn,
            input_dim,
            params,
            normalizer,
            baseline_decoding: BaselineDecoding::default(),
            config_echo: String::new(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn rnn(&self) -> &RnnConfig {
        &self.rnn
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.dim() != self.input_dim {
            return Err(SegError::Shape("normalizer dimension".into()));
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn normalize(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        self.normalizer.apply(seq)
    }

    /// Recurrent features of an already-normalized sequence.
    pub fn features(&self, seq: &FeatureSequence, train_mode: bool, seed: u64) -> Result<(PhiMatrix, ForwardCache)> {
        bilstm_forward(seq, &self.params, &self.rnn, train_mode, seed)
    }

    pub fn structured_weights(&self) -> Result<StructuredWeights<'_>> {
        structured_weights_of(&self.params, self.expect_structured()?)
    }

    pub fn expect_structured(&self) -> Result<WeightMode> {
        match self.kind {
            ModelKind::Structured(m) => Ok(m),
            other => Err(SegError::ModelKind {
                expected: "structured".into(),
                found: other.to_string(),
            }),
        }
    }

    pub fn expect_baseline(&self) -> Result<BaselineArch> {
        match self.kind {
            ModelKind::Baseline(a) => Ok(a),
            other => Err(SegError::ModelKind {
                expected: "baseline".into(),
                found: other.to_string(),
            }),
        }
    }

    /// Predicted pair for a raw (unnormalized) sequence.
    pub fn predict(&self, seq: &FeatureSequence) -> Result<TimingPair> {
        let normalized = self.normalize(seq)?;
        self.predict_normalized(&normalized)
    }

    pub fn predict_normalized(&self, seq: &FeatureSequence) -> Result<TimingPair> {
        let (phi, _) = self.features(seq, false, 0)?;
        match self.kind {
            ModelKind::Structured(_) => {
                let scores = decoder::score_frames(&phi, &self.structured_weights()?)?;
                Ok(decoder::decode(&scores)?.0)
            }
            ModelKind::Baseline(_) => {
                let logits = baseline::frame_logits(&phi, &self.params)?;
                let p = (0..logits.rows())
                    .map(|t| crate::numeric::sigmoid(logits.get(t, 1) - logits.get(t, 0)))
                    .collect();
                let post = baseline::FramePosterior::new(p)?;
                baseline::posterior_to_pair(
                    &post,
                    self.baseline_decoding.smoothing_window,
                    self.baseline_decoding.source,
                )
            }
        }
    }

    fn metadata(&self) -> String {
        let mut m = String::new();
        let mut kv = |k: &str, v: String| {
            m.push_str(k);
            m.push_str(" = ");
            m.push_str(&v);
            m.push('\n');
        };
        match self.kind {
            ModelKind::Structured(mode) => {
                kv("kind", "structured".into());
                kv("mode", mode.as_str().into());
            }
            ModelKind::Baseline(arch) => {
                kv("kind", "baseline".into());
                kv("arch", arch.as_str().into());
            }
        }
        kv("layers", self.rnn.layers.to_string());
        kv("hidden", self.rnn.hidden.to_string());
        kv("bidirectional", self.rnn.bidirectional.to_string());
        kv("dropout", format!("{:?}", self.rnn.dropout_rate));
        kv("input_dim", self.input_dim.to_string());
        kv("smoothing_window", self.baseline_decoding.smoothing_window.to_string());
        kv("pair_source", self.baseline_decoding.source.as_str().into());
        for line in self.config_echo.lines().filter(|l| !l.trim().is_empty()) {
            m.push_str("config.");
            m.push_str(line.trim());
            m.push('\n');
        }
        m
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut store = self.params.clone();
        store.insert(NORM_MEAN, &[self.input_dim], self.normalizer.mean.clone())?;
        store.insert(NORM_STD, &[self.input_dim], self.normalizer.std.clone())?;
        checkpoint::encode(&store, &self.metadata())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (store, meta) = checkpoint::decode(bytes)?;
        let fields = parse_metadata(&meta)?;
        let get = |k: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| SegError::Format(format!("checkpoint metadata lacks `{k}`")))
        };
        let parse_usize = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| SegError::Format(format!("metadata `{k}` is not an integer")))
        };
        let kind = match get("kind")? {
            "structured" => ModelKind::Structured(WeightMode::parse(get("mode")?)?),
            "baseline" => ModelKind::Baseline(BaselineArch::parse(get("arch")?)?),
            other => return Err(SegError::Format(format!("unknown model kind `{other}`"))),
        };
        let rnn = RnnConfig {
            layers: parse_usize("layers")?,
            hidden: parse_usize("hidden")?,
            bidirectional: get("bidirectional")? == "true",
            dropout_rate: get("dropout")?
                .parse()
                .map_err(|_| SegError::Format("metadata `dropout`".into()))?,
        };
        let input_dim = parse_usize("input_dim")?;
        let mut params = ParamStore::new();
        let mut mean = None;
        let mut std = None;
        for e in store.entries() {
            match e.name.as_str() {
                NORM_MEAN => mean = Some(e.values.clone()),
                NORM_STD => std = Some(e.values.clone()),
                _ => params.insert(&e.name, &e.shape, e.values.clone())?,
            }
        }
        let normalizer = Normalizer {
            mean: mean.ok_or_else(|| SegError::Format("checkpoint lacks normalization mean".into()))?,
            std: std.ok_or_else(|| SegError::Format("checkpoint lacks normalization std".into()))?,
        };
        let mut model = Self::from_parts(kind, rnn, input_dim, params, normalizer)
            .map_err(|e| SegError::Format(e.to_string()))?;
        model.baseline_decoding = BaselineDecoding {
            smoothing_window: parse_usize("smoothing_window")?,
            source: PairSource::parse(get("pair_source")?)?,
        };
        model.config_echo = fields
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k} = {v}\n")))
            .collect();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn structured_weights_of(params: &ParamStore, mode: WeightMode) -> Result<StructuredWeights<'_>> {
    let (a, b) = mode.group_names();
    Ok(StructuredWeights {
        mode,
        onset: params.require(a)?,
        offset: params.require(b)?,
    })
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_metadata(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            SegError::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Helper for tests and tools: wraps raw rows as a sequence.
pub fn sequence_from_rows(rows: &[Vec<f64>], source_id: &str) -> Result<FeatureSequence> {
    FeatureSequence::new(
        Matrix::from_rows(rows)?,
        FeatureSequence::DEFAULT_FRAME_PERIOD_MS,
        source_id,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_rnn(bidirectional: bool, layers: usize) -> RnnConfig {
        RnnConfig {
            layers,
            hidden: 3,
            bidirectional,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn arch_mapping() {
        let cfg = BaselineArch::BiRnn2.rnn_config(8, 0.1);
        assert_eq!((cfg.layers, cfg.bidirectional), (2, true));
        let cfg = BaselineArch::Rnn.rnn_config(8, 0.1);
        assert_eq!((cfg.layers, cfg.bidirectional), (1, false));
        for a in BaselineArch::ALL {
            assert_eq!(BaselineArch::parse(a.as_str()).unwrap(), a);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_kind_guard() {
        let mut m = SegmenterModel::new(
            ModelKind::Baseline(BaselineArch::BiRnn),
            tiny_rnn(true, 1),
            4,
            3,
        )
        .unwrap();
        m.set_normalizer(Normalizer {
            mean: vec![0.1, 0.2, 0.3, 0.4],
            std: vec![1.0, 2.0, 3.0, 4.0],
        })
        .unwrap();
        m.config_echo = "lr = 0.05\n".into();
        let bytes = m.to_bytes().unwrap();
        let back = SegmenterModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(matches!(back.expect_structured(), Err(SegError::ModelKind { .. })));
    }

    #[test]
    fn arch_config_mismatch_is_rejected() {
        let res = SegmenterModel::new(
            ModelKind::Baseline(BaselineArch::BiRnn2),
            tiny_rnn(true, 1),
            4,
            0,
        );
        assert!(matches!(res, Err(SegError::Config(_))));
    }

    #[test]
    fn normalizer_fit_standardizes() {
        let s = sequence_from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]], "a").unwrap();
        let n = Normalizer::fit([&s]).unwrap();
        assert_eq!(n.mean, vec![3.0, 5.0]);
        assert_eq!(n.std[1], 1.0);
        let z = n.apply(&s).unwrap();
        let col: Vec<f64> = (0..3).map(|t| z.values().get(t, 0)).collect();
        let mean: f64 = col.iter().sum::<f64>() / 3.0;
        let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metadata_parser() {
        let kv = parse_metadata("# c\n a = 1 \n\nb=two\n").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "two".into())]);
        assert!(parse_metadata("novalue").is_err());
    }
}
