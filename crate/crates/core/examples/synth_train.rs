//! Trains a model on a synthetic corpus and prints per-epoch progress and the
//! final test report. Passing `baseline` trains the frame classifier named by
//! the `arch` key instead of the structured segmenter.
//!
//! `cargo run --release -p boundseg --example synth_train -- [seed] [baseline] [key=value ...]`

use std::time::Instant;

use boundseg::eval::{compare, evaluate, DEFAULT_TOLERANCES_MS};
use boundseg::features::synth_generate;
use boundseg::trainer::{train_baseline_with_observer, train_with_observer, EpochStats, TrainConfig};
use boundseg::SynthConfig;

fn main() -> boundseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");
    let mut cfg = TrainConfig::default();
    let mut baseline = false;
    for kv in args {
        if kv == "baseline" {
            baseline = true;
            continue;
        }
        let (k, v) = kv.split_once('=').expect("key=value");
        cfg.set(k, v)?;
    }
    let corpus = synth_generate(&SynthConfig::default(), seed)?;
    let start = Instant::now();
    let mut observer = |e: &EpochStats| {
        println!(
            "epoch {:3}  loss {:8.4}  dev CD {:7.4}{}  [{:.1}s]",
            e.epoch,
            e.train_loss,
            e.dev_cd,
            if e.improved { " *" } else { "" },
            start.elapsed().as_secs_f64()
        );
    };
    let (model, _) = if baseline {
        train_baseline_with_observer(&corpus.train, &corpus.dev, &cfg, cfg.arch, &mut observer)?
    } else {
        train_with_observer(&corpus.train, &corpus.dev, &cfg, &mut observer)?
    };
    let mut tol = DEFAULT_TOLERANCES_MS.to_vec();
    tol.push(20.0);
    let report = evaluate(&model, &model.kind().to_string(), &corpus.test, &tol)?;
    print!("{}", compare(&[report])?.to_text());
    Ok(())
}
