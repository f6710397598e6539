use boundseg::features::{chance_cd, synth_generate, SynthConfig, SynthCorpus};
use boundseg::losses::cd_loss;
use boundseg::model::{ModelKind, SegmenterModel};
use boundseg::trainer::{train, train_baseline, TrainConfig};
use boundseg::{BaselineArch, SegError};

fn tiny_corpus(seed: u64) -> SynthCorpus {
    synth_generate(
        &SynthConfig {
            n_train: 20,
            n_dev: 8,
            n_test: 8,
            t_min: 20,
            t_max: 30,
            dim: 5,
            min_dur: 5,
            ..SynthConfig::default()
        },
        seed,
    )
    .unwrap()
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        hidden: 8,
        layers: 1,
        epochs_max: 6,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_run() {
    let c = tiny_corpus(1);
    let cfg = tiny_config();
    let (m1, h1) = train(&c.train, &c.dev, &cfg).unwrap();
    let (m2, h2) = train(&c.train, &c.dev, &cfg).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1.to_bytes().unwrap(), m2.to_bytes().unwrap());
    let (_, h3) = train(&c.train, &c.dev, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(h1.train_loss, h3.train_loss);
}

#[test]
fn surrogate_loss_falls_without_clipping() {
    let c = tiny_corpus(2);
    let cfg = TrainConfig {
        clip: None,
        dropout: 0.0,
        epochs_max: 40,
        patience: 40,
        ..tiny_config()
    };
    let (_, h) = train(&c.train, &c.dev, &cfg).unwrap();
    assert_eq!(h.train_loss.len(), 40);
    let (first, last) = (h.train_loss[0], *h.train_loss.last().unwrap());
    assert!(last <= 0.5 * first, "{first} -> {last}");
}

#[test]
fn keeps_best_dev_epoch() {
    let c = tiny_corpus(3);
    let cfg = TrainConfig {
        epochs_max: 12,
        patience: 3,
        ..tiny_config()
    };
    let (model, h) = train(&c.train, &c.dev, &cfg).unwrap();
    assert!(h.dev_cd.len() <= 12);
    assert!(h.dev_cd.len() - 1 - h.best_epoch <= 3);
    let best = h.dev_cd.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_dev_cd(), best);
    // the returned parameters reproduce the best epoch's dev score
    let cd: f64 = c
        .dev
        .iter()
        .map(|e| cd_loss(e.pair, model.predict(&e.seq).unwrap(), 0))
        .sum::<f64>()
        / c.dev.len() as f64;
    assert_eq!(cd, best);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let c = tiny_corpus(4);
    let (model, _) = train_baseline(&c.train, &c.dev, &tiny_config(), BaselineArch::BiRnn).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.segs");
    model.save(&path).unwrap();
    let back = SegmenterModel::load(&path).unwrap();
    assert_eq!(back, model);
    for ex in &c.test {
        assert_eq!(back.predict(&ex.seq).unwrap(), model.predict(&ex.seq).unwrap());
    }
    back.save(&path).unwrap();
    assert_eq!(SegmenterModel::load(&path).unwrap(), model);
    assert!(matches!(back.expect_structured(), Err(SegError::ModelKind { .. })));
    assert_eq!(back.kind(), ModelKind::Baseline(BaselineArch::BiRnn));
}

#[test]
fn dimension_mismatch_is_rejected() {
    let c = tiny_corpus(5);
    let other = synth_generate(
        &SynthConfig {
            n_train: 2,
            n_dev: 2,
            n_test: 0,
            dim: 6,
            ..SynthConfig::default()
        },
        0,
    )
    .unwrap();
    assert!(matches!(train(&c.train, &other.dev, &tiny_config()), Err(SegError::Shape(_))));
}

#[test]
fn no_signal_means_chance_level() {
    let cfg = SynthConfig {
        n_train: 60,
        n_dev: 200,
        n_test: 0,
        t_min: 20,
        t_max: 30,
        dim: 4,
        min_dur: 5,
        delta: 0.0,
        ..SynthConfig::default()
    };
    let c = synth_generate(&cfg, 6).unwrap();
    let (_, h) = train(&c.train, &c.dev, &TrainConfig { epochs_max: 4, ..tiny_config() }).unwrap();
    let chance = chance_cd(&cfg).unwrap();
    let ratio = h.best_dev_cd() / chance;
    assert!(ratio > 0.85, "dev CD {} vs chance {chance}", h.best_dev_cd());
}
