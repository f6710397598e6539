//! Stacked (bi)directional LSTM producing one feature row per frame.
//!
//! Each layer/direction owns a fused weight matrix `W` of shape
//! `4H x (In + H)` acting on `[x_t; h_{t-1}]` and a bias of length `4H`, with
//! gate blocks ordered input, forget, cell candidate, output. In a
//! bidirectional layer the backward direction reads the sequence reversed and
//! its states are re-aligned to the original frame order before
//! concatenation, so row `t` of the output is `[h_fwd(t), h_bwd(t)]`.
//! Layer `l`'s output (after dropout in training mode) is layer `l+1`'s input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SegError};
use crate::numeric::{dot, sigmoid, GradientBundle, Matrix, ParamKind, ParamSpec, ParamStore};

/// Per-frame features for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    values: Matrix,
    pub frame_period_ms: f64,
    pub source_id: String,
}

impl FeatureSequence {
    pub const DEFAULT_FRAME_PERIOD_MS: f64 = 10.0;

    pub fn new(values: Matrix, frame_period_ms: f64, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        if values.rows() < 2 {
            return Err(SegError::InvalidInput(format!(
                "`{source_id}` has {} frames; at least 2 are needed",
                values.rows()
            )));
        }
        if values.cols() == 0 {
            return Err(SegError::InvalidInput(format!("`{source_id}` has zero feature dims")));
        }
        if !values.is_finite() {
            return Err(SegError::NonFinite(format!("features of `{source_id}`")));
        }
        if !(frame_period_ms > 0.0 && frame_period_ms.is_finite()) {
            return Err(SegError::InvalidInput(format!(
                "`{source_id}` frame period {frame_period_ms} ms"
            )));
        }
        Ok(Self {
            values,
            frame_period_ms,
            source_id,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Matrix {
        &mut self.values
    }
}

/// Row `t` is the feature function of frame `t`.
pub type PhiMatrix = Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RnnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    /// Inverted dropout between recurrent layers (never after the last one).
    pub dropout_rate: f64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            bidirectional: true,
            dropout_rate: 0.3,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(SegError::Config(format!(
                "rnn needs layers >= 1 and hidden >= 1 (got {} and {})",
                self.layers, self.hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SegError::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Column count of the output feature matrix.
    pub fn output_dim(&self) -> usize {
        self.hidden * self.directions()
    }

    fn layer_input_dim(&self, layer: usize, input_dim: usize) -> usize {
        if layer == 0 {
            input_dim
        } else {
            self.output_dim()
        }
    }

    pub fn weight_name(layer: usize, dir: usize) -> String {
        format!("rnn.l{layer}.{}.w", DIR_NAMES[dir])
    }

    pub fn bias_name(layer: usize, dir: usize) -> String {
        format!("rnn.l{layer}.{}.b", DIR_NAMES[dir])
    }

    pub fn param_specs(&self, input_dim: usize) -> Vec<ParamSpec> {
        let h = self.hidden;
        let mut specs = Vec::new();
        for l in 0..self.layers {
            let inp = self.layer_input_dim(l, input_dim);
            for d in 0..self.directions() {
                specs.push(ParamSpec::new(
                    Self::weight_name(l, d),
                    &[4 * h, inp + h],
                    ParamKind::Weight,
                ));
                specs.push(ParamSpec::new(
                    Self::bias_name(l, d),
                    &[4 * h],
                    ParamKind::LstmBias { hidden: h },
                ));
            }
        }
        specs
    }

    /// Confirms `params` holds every recurrent group with the right shape.
    pub fn check_params(&self, params: &ParamStore, input_dim: usize) -> Result<()> {
        self.validate()?;
        for spec in self.param_specs(input_dim) {
            match params.shape(&spec.name) {
                Some(s) if s == spec.shape.as_slice() => {}
                Some(s) => {
                    return Err(SegError::Shape(format!(
                        "`{}` has shape {s:?}, config expects {:?}",
                        spec.name, spec.shape
                    )))
                }
                None => {
                    return Err(SegError::Shape(format!(
                        "parameters lack recurrent group `{}`",
                        spec.name
                    )))
                }
            }
        }
        Ok(())
    }
}

const DIR_NAMES: [&str; 2] = ["fwd", "bwd"];

pub(crate) fn is_rnn_group(name: &str) -> bool {
    name.starts_with("rnn.")
}

/// Borrowed weights of one LSTM layer/direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

impl<'a> LstmWeights<'a> {
    pub fn from_store(params: &'a ParamStore, layer: usize, dir: usize, input: usize, hidden: usize) -> Result<Self> {
        let w = params.require(&RnnConfig::weight_name(layer, dir))?;
        let b = params.require(&RnnConfig::bias_name(layer, dir))?;
        if w.len() != 4 * hidden * (input + hidden) || b.len() != 4 * hidden {
            return Err(SegError::Shape(format!(
                "layer {layer} direction {dir}: weights do not match input {input}, hidden {hidden}"
            )));
        }
        Ok(Self { w, b, input, hidden })
    }
}

/// Intermediates of one cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    /// `[x_t; h_prev]`
    pub xh: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`, each of length H.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step: `i,f,o = sigmoid(.)`, `g = tanh(.)`, `c = f*c_prev + i*g`,
/// `h = o*tanh(c)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    weights: &LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let (n_in, h) = (weights.input, weights.hidden);
    if x.len() != n_in || h_prev.len() != h || c_prev.len() != h {
        return Err(SegError::Shape(format!(
            "cell expects x[{n_in}], h[{h}], c[{h}]; got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SegError::NonFinite("LSTM cell input".into()));
    }
    Ok(cell_forward(x, h_prev, c_prev, weights))
}

fn cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    weights: &LstmWeights<'_>,
) -> (Vec<f64>, Vec<f64>, CellCache) {
    let h = weights.hidden;
    let cols = weights.input + h;
    let mut xh = Vec::with_capacity(cols);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);

    let mut gates: Vec<f64> = weights
        .w
        .chunks_exact(cols)
        .zip(weights.b)
        .map(|(row, b)| dot(row, &xh) + b)
        .collect();
    for (k, z) in gates.iter_mut().enumerate() {
        *z = if (2 * h..3 * h).contains(&k) {
            z.tanh()
        } else {
            sigmoid(*z)
        };
    }
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut out = vec![0.0; h];
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        out[j] = o * tanh_c[j];
    }
    let cache = CellCache {
        xh,
        c_prev: c_prev.to_vec(),
        gates,
        c: c.clone(),
        tanh_c,
    };
    (out, c, cache)
}

/// Backward through one cell. Accumulates into `dw`/`db`, writes the input
/// gradient into `dx` (added), and returns `(dh_prev, dc_prev)`.
fn cell_backward(
    dh: &[f64],
    dc_next: &[f64],
    cache: &CellCache,
    weights: &LstmWeights<'_>,
    dw: &mut [f64],
    db: &mut [f64],
    dx: &mut [f64],
    dz: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let h = weights.hidden;
    let n_in = weights.input;
    let cols = n_in + h;
    let g = &cache.gates;
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
        let tc = cache.tanh_c[j];
        let d_o = dh[j] * tc;
        let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dc * gg * i * (1.0 - i);
        dz[h + j] = dc * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * h + j] = dc * i * (1.0 - gg * gg);
        dz[3 * h + j] = d_o * o * (1.0 - o);
        dc_prev[j] = dc * f;
    }
    let mut dxh = vec![0.0; cols];
    for (r, &dzr) in dz.iter().enumerate() {
        if dzr == 0.0 {
            continue;
        }
        db[r] += dzr;
        let wrow = &weights.w[r * cols..(r + 1) * cols];
        let dwrow = &mut dw[r * cols..(r + 1) * cols];
        for k in 0..cols {
            dwrow[k] += dzr * cache.xh[k];
            dxh[k] += dzr * wrow[k];
        }
    }
    for (a, b) in dx.iter_mut().zip(&dxh[..n_in]) {
        *a += b;
    }
    (dxh[n_in..].to_vec(), dc_prev)
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// Steps in processing order (reversed time for the backward direction).
    steps: Vec<CellCache>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input_dim: usize,
    dirs: Vec<DirectionCache>,
}

/// Everything needed for exact BPTT of one forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    cfg: RnnConfig,
    frames: usize,
    layers: Vec<LayerCache>,
    /// Dropout mask applied to each non-final layer's output, if any.
    masks: Vec<Option<Matrix>>,
    fingerprint: u64,
}

impl ForwardCache {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }
}

fn run_direction(input: &Matrix, weights: &LstmWeights<'_>, reverse: bool) -> (Matrix, DirectionCache) {
    let t_len = input.rows();
    let h = weights.hidden;
    let mut out = Matrix::zeros(t_len, h);
    let mut steps = Vec::with_capacity(t_len);
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for p in 0..t_len {
        let t = if reverse { t_len - 1 - p } else { p };
        let (h_new, c_new, cache) = cell_forward(input.row(t), &h_prev, &c_prev, weights);
        out.row_mut(t).copy_from_slice(&h_new);
        steps.push(cache);
        h_prev = h_new;
        c_prev = c_new;
    }
    (out, DirectionCache { steps })
}

/// Runs the stack over `seq`. In `train_mode` with a positive dropout rate,
/// masks between layers are drawn from `seed`; otherwise `seed` is unused.
pub fn bilstm_forward(
    seq: &FeatureSequence,
    params: &ParamStore,
    cfg: &RnnConfig,
    train_mode: bool,
    seed: u64,
) -> Result<(PhiMatrix, ForwardCache)> {
    cfg.check_params(params, seq.dim())?;
    let t_len = seq.frames();
    let h = cfg.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let use_dropout = train_mode && cfg.dropout_rate > 0.0;
    let keep_scale = 1.0 / (1.0 - cfg.dropout_rate);

    let mut layer_input = seq.values().clone();
    let mut layers = Vec::with_capacity(cfg.layers);
    let mut masks = Vec::with_capacity(cfg.layers.saturating_sub(1));
    for l in 0..cfg.layers {
        let in_dim = layer_input.cols();
        let mut out = Matrix::zeros(t_len, cfg.output_dim());
        let mut dirs = Vec::with_capacity(cfg.directions());
        for d in 0..cfg.directions() {
            let weights = LstmWeights::from_store(params, l, d, in_dim, h)?;
            let (hs, cache) = run_direction(&layer_input, &weights, d == 1);
            for t in 0..t_len {
                out.row_mut(t)[d * h..(d + 1) * h].copy_from_slice(hs.row(t));
            }
            dirs.push(cache);
        }
        layers.push(LayerCache {
            input_dim: in_dim,
            dirs,
        });
        if l + 1 < cfg.layers {
            if use_dropout {
                let mut mask = Matrix::zeros(t_len, out.cols());
                for m in mask.as_mut_slice() {
                    *m = if rng.gen::<f64>() < cfg.dropout_rate {
                        0.0
                    } else {
                        keep_scale
                    };
                }
                for (v, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *v *= m;
                }
                masks.push(Some(mask));
            } else {
                masks.push(None);
            }
        }
        layer_input = out;
    }
    let cache = ForwardCache {
        cfg: *cfg,
        frames: t_len,
        layers,
        masks,
        fingerprint: params.fingerprint(is_rnn_group),
    };
    Ok((layer_input, cache))
}

/// Exact gradient of `sum(d_phi .* phi)` with respect to every recurrent
/// parameter. Non-recurrent groups in the returned bundle are zero.
pub fn bilstm_backward(d_phi: &Matrix, cache: &ForwardCache, params: &ParamStore) -> Result<GradientBundle> {
    let cfg = &cache.cfg;
    if d_phi.rows() != cache.frames || d_phi.cols() != cfg.output_dim() {
        return Err(SegError::Shape(format!(
            "upstream gradient is {}x{}, forward output was {}x{}",
            d_phi.rows(),
            d_phi.cols(),
            cache.frames,
            cfg.output_dim()
        )));
    }
    if params.fingerprint(is_rnn_group) != cache.fingerprint {
        return Err(SegError::InvalidInput(
            "forward cache is stale: parameters changed since the forward pass".into(),
        ));
    }
    let mut grads = GradientBundle::zeros_like(params);
    let t_len = cache.frames;
    let h = cfg.hidden;
    let mut d_out = d_phi.clone();
    for l in (0..cfg.layers).rev() {
        let layer = &cache.layers[l];
        let mut d_in = Matrix::zeros(t_len, layer.input_dim);
        for (d, dir) in layer.dirs.iter().enumerate() {
            let weights = LstmWeights::from_store(params, l, d, layer.input_dim, h)?;
            let mut dw = vec![0.0; weights.w.len()];
            let mut db = vec![0.0; weights.b.len()];
            let mut dz = vec![0.0; 4 * h];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for p in (0..t_len).rev() {
                let t = if d == 1 { t_len - 1 - p } else { p };
                let upstream = &d_out.row(t)[d * h..(d + 1) * h];
                let dh: Vec<f64> = upstream.iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (dhp, dcp) = cell_backward(
                    &dh,
                    &dc_next,
                    &dir.steps[p],
                    &weights,
                    &mut dw,
                    &mut db,
                    d_in.row_mut(t),
                    &mut dz,
                );
                dh_next = dhp;
                dc_next = dcp;
            }
            grads
                .require_mut(&RnnConfig::weight_name(l, d))?
                .iter_mut()
                .zip(&dw)
                .for_each(|(g, v)| *g += v);
            grads
                .require_mut(&RnnConfig::bias_name(l, d))?
                .iter_mut()
                .zip(&db)
                .for_each(|(g, v)| *g += v);
        }
        if l > 0 {
            if let Some(mask) = &cache.masks[l - 1] {
                for (v, m) in d_in.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *v *= m;
                }
            }
            d_out = d_in;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::init_params;

    fn seq(t: usize, d: usize, seed: u64) -> FeatureSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureSequence::new(Matrix::from_vec(t, d, data).unwrap(), 10.0, "test").unwrap()
    }

    #[test]
    fn zero_params_give_half_gates_and_zero_state() {
        let w = vec![0.0; 4 * 3 * (2 + 3)];
        let b = vec![0.0; 12];
        let weights = LstmWeights { w: &w, b: &b, input: 2, hidden: 3 };
        let (h, c, cache) = lstm_cell(&[0.7, -1.2], &[0.0; 3], &[0.0; 3], &weights).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
        for j in 0..3 {
            assert_eq!(cache.gates[j], 0.5);
            assert_eq!(cache.gates[3 + j], 0.5);
            assert_eq!(cache.gates[6 + j], 0.0);
            assert_eq!(cache.gates[9 + j], 0.5);
        }
    }

    #[test]
    fn saturated_forget_gate_carries_cell() {
        let w = vec![0.0; 4 * 2 * (1 + 2)];
        let mut b = vec![0.0; 8];
        b[2..4].iter_mut().for_each(|v| *v = 20.0);
        let weights = LstmWeights { w: &w, b: &b, input: 1, hidden: 2 };
        let (_, c, _) = lstm_cell(&[3.0], &[0.1, -0.2], &[0.8, -1.5], &weights).unwrap();
        assert!((c[0] - 0.8).abs() < 1e-8);
        assert!((c[1] + 1.5).abs() < 1e-8);
    }

    #[test]
    fn cell_rejects_bad_input() {
        let w = vec![0.0; 4 * (1 + 1)];
        let b = vec![0.0; 4];
        let weights = LstmWeights { w: &w, b: &b, input: 1, hidden: 1 };
        assert!(matches!(
            lstm_cell(&[f64::NAN], &[0.0], &[0.0], &weights),
            Err(SegError::NonFinite(_))
        ));
        assert!(matches!(
            lstm_cell(&[0.0, 1.0], &[0.0], &[0.0], &weights),
            Err(SegError::Shape(_))
        ));
    }

    #[test]
    fn cell_matches_scalar_evaluation() {
        let (n_in, hid) = (2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w: Vec<f64> = (0..4 * hid * (n_in + hid)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4 * hid).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = [0.3, -0.8];
        let hp = [0.1, 0.5];
        let cp = [-0.4, 0.9];
        let weights = LstmWeights { w: &w, b: &b, input: n_in, hidden: hid };
        let (h, c, _) = lstm_cell(&x, &hp, &cp, &weights).unwrap();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        // row r of W multiplies [x0, x1, h0, h1]
        let pre = |r: usize| w[4 * r] * x[0] + w[4 * r + 1] * x[1] + w[4 * r + 2] * hp[0] + w[4 * r + 3] * hp[1] + b[r];
        for j in 0..hid {
            let i_g = sig(pre(j));
            let f_g = sig(pre(hid + j));
            let g_g = pre(2 * hid + j).tanh();
            let o_g = sig(pre(3 * hid + j));
            let c_j = f_g * cp[j] + i_g * g_g;
            assert!((c[j] - c_j).abs() < 1e-14);
            assert!((h[j] - o_g * c_j.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn reversing_input_swaps_directions() {
        let cfg = RnnConfig { layers: 1, hidden: 3, bidirectional: true, dropout_rate: 0.0 };
        let s = seq(6, 2, 5);
        let rev = FeatureSequence::new(s.values().reversed_rows(), 10.0, "rev").unwrap();
        // tie the two directions so reversal symmetry is exact
        let mut p = init_params(&cfg.param_specs(2), 6).unwrap();
        let fw = p.require(&RnnConfig::weight_name(0, 0)).unwrap().to_vec();
        let fb = p.require(&RnnConfig::bias_name(0, 0)).unwrap().to_vec();
        p.get_mut(&RnnConfig::weight_name(0, 1)).unwrap().copy_from_slice(&fw);
        p.get_mut(&RnnConfig::bias_name(0, 1)).unwrap().copy_from_slice(&fb);
        let (a, _) = bilstm_forward(&s, &p, &cfg, false, 0).unwrap();
        let (r, _) = bilstm_forward(&rev, &p, &cfg, false, 0).unwrap();
        for t in 0..6 {
            let row = a.row(t);
            let mirrored = r.row(5 - t);
            assert_eq!(&row[..3], &mirrored[3..]);
            assert_eq!(&row[3..], &mirrored[..3]);
        }
    }

    #[test]
    fn backward_is_additive_over_rows() {
        let cfg = RnnConfig { layers: 2, hidden: 3, bidirectional: true, dropout_rate: 0.0 };
        let s = seq(5, 2, 9);
        let p = init_params(&cfg.param_specs(2), 1).unwrap();
        let (phi, cache) = bilstm_forward(&s, &p, &cfg, false, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let full: Vec<f64> = (0..phi.as_slice().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let split = 2 * phi.cols();
        let mut head = full.clone();
        head[split..].iter_mut().for_each(|v| *v = 0.0);
        let mut tail = full.clone();
        tail[..split].iter_mut().for_each(|v| *v = 0.0);
        let g = |d: Vec<f64>| bilstm_backward(&Matrix::from_vec(5, phi.cols(), d).unwrap(), &cache, &p).unwrap();
        let (gf, gh, gt) = (g(full), g(head), g(tail));
        for k in 0..gf.num_scalars() {
            assert!((gf.scalar(k) - gh.scalar(k) - gt.scalar(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_only_has_h_columns() {
        let cfg = RnnConfig { layers: 2, hidden: 5, bidirectional: false, dropout_rate: 0.0 };
        let s = seq(6, 3, 1);
        let p = init_params(&cfg.param_specs(3), 2).unwrap();
        let (phi, _) = bilstm_forward(&s, &p, &cfg, false, 0).unwrap();
        assert_eq!((phi.rows(), phi.cols()), (6, 5));
    }

    #[test]
    fn eval_mode_ignores_dropout() {
        let cfg = RnnConfig { layers: 2, hidden: 4, bidirectional: true, dropout_rate: 0.5 };
        let no_drop = RnnConfig { dropout_rate: 0.0, ..cfg };
        let s = seq(7, 3, 3);
        let p = init_params(&cfg.param_specs(3), 4).unwrap();
        let (a, _) = bilstm_forward(&s, &p, &cfg, false, 11).unwrap();
        let (b, _) = bilstm_forward(&s, &p, &no_drop, false, 99).unwrap();
        assert_eq!(a, b);
        let (c, _) = bilstm_forward(&s, &p, &cfg, true, 11).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn param_mismatch_is_rejected() {
        let cfg = RnnConfig { layers: 1, hidden: 4, bidirectional: true, dropout_rate: 0.0 };
        let p = init_params(&cfg.param_specs(5), 0).unwrap();
        let s = seq(4, 3, 0);
        assert!(matches!(bilstm_forward(&s, &p, &cfg, false, 0), Err(SegError::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let cfg = RnnConfig { layers: 2, hidden: 3, bidirectional: true, dropout_rate: 0.0 };
        let s = seq(5, 2, 5);
        let p = init_params(&cfg.param_specs(2), 6).unwrap();
        let (phi, cache) = bilstm_forward(&s, &p, &cfg, false, 0).unwrap();
        let g = bilstm_backward(&Matrix::zeros(phi.rows(), phi.cols()), &cache, &p).unwrap();
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn stale_cache_is_detected() {
        let cfg = RnnConfig { layers: 1, hidden: 2, bidirectional: false, dropout_rate: 0.0 };
        let s = seq(4, 2, 5);
        let mut p = init_params(&cfg.param_specs(2), 6).unwrap();
        let (phi, cache) = bilstm_forward(&s, &p, &cfg, false, 0).unwrap();
        p.get_mut("rnn.l0.fwd.w").unwrap()[0] += 0.1;
        let d = Matrix::zeros(phi.rows(), phi.cols());
        assert!(matches!(bilstm_backward(&d, &cache, &p), Err(SegError::InvalidInput(_))));
        let wrong = Matrix::zeros(phi.rows() + 1, phi.cols());
        assert!(bilstm_backward(&wrong, &cache, &p).is_err());
    }

    #[test]
    fn too_short_sequence_is_rejected() {
        let m = Matrix::zeros(1, 3);
        assert!(FeatureSequence::new(m, 10.0, "x").is_err());
    }
}
