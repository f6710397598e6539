//! Finite-difference checks of every analytic gradient in the pipeline.

use std::cell::Cell;

use boundseg::baseline::frame_labels;
use boundseg::decoder::{TimingPair, WeightMode};
use boundseg::model::{sequence_from_rows, BaselineArch, ModelKind, SegmenterModel};
use boundseg::numeric::{grad_check, GradientBundle, Matrix, ParamStore, DEFAULT_STEP};
use boundseg::rnn::{bilstm_backward, bilstm_forward, FeatureSequence, RnnConfig};
use boundseg::trainer::{baseline_gradient, baseline_loss, structured_gradient, structured_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_seq(frames: usize, dim: usize, seed: u64) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    sequence_from_rows(&rows, "g").unwrap()
}

fn rnn(layers: usize, hidden: usize, bidirectional: bool) -> RnnConfig {
    RnnConfig {
        layers,
        hidden,
        bidirectional,
        dropout_rate: 0.0,
    }
}

/// Larger weights keep hinge losses nonzero and first-layer gradients well
/// above finite-difference noise.
fn scaled(model: &SegmenterModel, factor: f64) -> ParamStore {
    let mut p = model.params().clone();
    for k in 0..p.num_scalars() {
        p.set_scalar(k, p.scalar(k) * factor);
    }
    p
}

#[test]
fn bilstm_backward_matches_finite_differences() {
    for (layers, bidir) in [(1, false), (1, true), (2, true), (3, false)] {
        let cfg = rnn(layers, 3, bidir);
        let seq = random_seq(6, 2, 11);
        let model = SegmenterModel::new(ModelKind::Structured(WeightMode::Shared), cfg, 2, 5).unwrap();
        let params = model.params().clone();
        // fixed random projection of the outputs gives a scalar loss
        let (phi0, _) = bilstm_forward(&seq, &params, &cfg, false, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let proj: Vec<f64> = (0..phi0.as_slice().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &ParamStore| {
            let (phi, _) = bilstm_forward(&seq, p, &cfg, false, 0)?;
            Ok(phi.as_slice().iter().zip(&proj).map(|(a, b)| a * b).sum())
        };
        let grad = |p: &ParamStore| -> boundseg::Result<GradientBundle> {
            let (phi, cache) = bilstm_forward(&seq, p, &cfg, false, 0)?;
            let d = Matrix::from_vec(phi.rows(), phi.cols(), proj.clone())?;
            bilstm_backward(&d, &cache, p)
        };
        let err = grad_check(loss, grad, &params, DEFAULT_STEP).unwrap();
        assert!(err <= 1e-5, "layers {layers} bidir {bidir}: {err}");
    }
}

#[test]
fn bilstm_backward_with_dropout_mask_is_exact() {
    let cfg = RnnConfig {
        dropout_rate: 0.5,
        ..rnn(2, 3, true)
    };
    let seq = random_seq(5, 2, 4);
    let model = SegmenterModel::new(ModelKind::Structured(WeightMode::Shared), cfg, 2, 9).unwrap();
    let loss = |p: &ParamStore| {
        let (phi, _) = bilstm_forward(&seq, p, &cfg, true, 77)?;
        Ok(phi.as_slice().iter().enumerate().map(|(i, v)| v * (i % 5) as f64).sum())
    };
    let grad = |p: &ParamStore| -> boundseg::Result<GradientBundle> {
        let (phi, cache) = bilstm_forward(&seq, p, &cfg, true, 77)?;
        let d = Matrix::from_vec(
            phi.rows(),
            phi.cols(),
            (0..phi.as_slice().len()).map(|i| (i % 5) as f64).collect(),
        )?;
        bilstm_backward(&d, &cache, p)
    };
    let err = grad_check(loss, grad, model.params(), DEFAULT_STEP).unwrap();
    assert!(err <= 1e-5, "{err}");
}

fn structured_check(mode: WeightMode, tau: usize) -> f64 {
    let cfg = rnn(2, 4, true);
    let seq = random_seq(8, 3, 21);
    let y_ref = TimingPair::new(2, 6).unwrap();
    let model = SegmenterModel::new(ModelKind::Structured(mode), cfg, 3, 13).unwrap();
    let params = scaled(&model, 2.0);
    let base = structured_loss(&params, &cfg, mode, &seq, y_ref, tau, false, 0).unwrap();
    assert!(base.loss > 0.0, "degenerate check: zero hinge");
    let flips = Cell::new(0usize);
    let loss = |p: &ParamStore| {
        let out = structured_loss(p, &cfg, mode, &seq, y_ref, tau, false, 0)?;
        if out.y_hat != base.y_hat {
            flips.set(flips.get() + 1);
        }
        Ok(out.loss)
    };
    let grad = |p: &ParamStore| Ok(structured_gradient(p, &cfg, mode, &seq, y_ref, tau, false, 0)?.1);
    let err = grad_check(loss, grad, &params, DEFAULT_STEP).unwrap();
    assert_eq!(flips.get(), 0, "loss-augmented argmax moved under perturbation");
    err
}

#[test]
fn structured_hinge_gradient_per_boundary() {
    for tau in [0, 1, 2] {
        let err = structured_check(WeightMode::PerBoundary, tau);
        assert!(err <= 1e-4, "tau {tau}: {err}");
    }
}

#[test]
fn structured_hinge_gradient_shared() {
    let err = structured_check(WeightMode::Shared, 1);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn structured_gradient_is_zero_when_reference_wins() {
    let cfg = rnn(1, 2, false);
    let seq = random_seq(6, 2, 1);
    let model = SegmenterModel::new(ModelKind::Structured(WeightMode::PerBoundary), cfg, 2, 3).unwrap();
    let scores_pick = structured_loss(model.params(), &cfg, WeightMode::PerBoundary, &seq, TimingPair::new(0, 5).unwrap(), 100, false, 0)
        .unwrap();
    // with a huge tolerance the augmented argmax is the plain argmax
    let y = scores_pick.y_hat;
    let (out, g) = structured_gradient(model.params(), &cfg, WeightMode::PerBoundary, &seq, y, 100, false, 0).unwrap();
    assert_eq!(out.y_hat, y);
    assert_eq!(out.loss, 0.0);
    assert_eq!(g.global_norm(), 0.0);
}

#[test]
fn baseline_nll_gradient() {
    for arch in BaselineArch::ALL {
        let cfg = arch.rnn_config(3, 0.0);
        let seq = random_seq(7, 3, 8);
        let labels = frame_labels(TimingPair::new(2, 4).unwrap(), 7);
        let model = SegmenterModel::new(ModelKind::Baseline(arch), cfg, 3, 2).unwrap();
        let params = scaled(&model, 3.0);
        let loss = |p: &ParamStore| baseline_loss(p, &cfg, &seq, &labels, false, 0);
        let grad = |p: &ParamStore| Ok(baseline_gradient(p, &cfg, &seq, &labels, false, 0)?.1);
        let err = grad_check(loss, grad, &params, DEFAULT_STEP).unwrap();
        assert!(err <= 1e-4, "{}: {err}", arch.as_str());
    }
}
