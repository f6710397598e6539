use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boundseg::decoder::WeightMode;
use boundseg::eval::{compare, evaluate, segment, DEFAULT_TOLERANCES_MS};
use boundseg::features::mfcc::MfccConfig;
use boundseg::features::{
    chance_cd, mfcc, read_wav, synth_generate, write_corpus, write_features, DatasetManifest, Example, SynthConfig,
};
use boundseg::harness::run_comparison;
use boundseg::model::{BaselineArch, ModelKind, SegmenterModel};
use boundseg::numeric::{grad_check, ParamStore, DEFAULT_STEP};
use boundseg::rnn::RnnConfig;
use boundseg::trainer::{
    structured_gradient, structured_loss, train_baseline_with_observer, train_with_observer, EpochStats,
    TrainConfig, TrainHistory,
};
use boundseg::{SegError, TimingPair};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "boundseg", version, about = "Onset/offset segmentation of utterances")]
struct Cli {
    /// Training config file (`key = value` per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainArgs {
    /// Training manifest.
    #[arg(long)]
    train: PathBuf,
    /// Development manifest used for early stopping.
    #[arg(long)]
    dev: PathBuf,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Tolerances in ms, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TOLERANCES_MS.to_vec())]
    tolerances: Vec<f64>,
    /// Emit tab-separated values instead of an aligned table.
    #[arg(long)]
    tsv: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the structured segmenter.
    Train(TrainArgs),
    /// Train a frame-classifier baseline.
    TrainBaseline {
        #[command(flatten)]
        train: TrainArgs,
        /// RNN, 2-RNN, BI-RNN or BI-2-RNN (defaults to the config's `arch`).
        #[arg(long)]
        arch: Option<String>,
    },
    /// Evaluate a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Predict the pair for one feature file or 16-bit mono WAV.
    Segment {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
    },
    /// Side-by-side table. With `--model`, evaluates the given checkpoints on
    /// `--data`; otherwise trains all baselines and the structured model.
    Compare {
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Write a synthetic corpus (features plus train/dev/test manifests).
    Synth {
        #[arg(long, default_value_t = 600)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_dev: usize,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        #[arg(long, default_value_t = 50)]
        t_min: usize,
        #[arg(long, default_value_t = 100)]
        t_max: usize,
        #[arg(long, default_value_t = 13)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long, default_value_t = 10)]
        min_dur: usize,
        /// Add +-1 frame label noise.
        #[arg(long)]
        jitter: bool,
    },
    /// Convert a WAV file to an MFCC feature file.
    Mfcc { input: PathBuf },
    /// Finite-difference check of the full structured pipeline.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value = "per-boundary")]
        mode: String,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
}

enum Failure {
    Usage(String),
    Lib(SegError),
    Threshold(String),
}

impl From<SegError> for Failure {
    fn from(e: SegError) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(SegError::Io(e))
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SegError::Config(_) => 1,
                e if e.is_numeric() => 3,
                _ => 2,
            })
        }
    }
}

fn out_dir(cli_out: &Option<PathBuf>, default: &str) -> Result<PathBuf, Failure> {
    let dir = cli_out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn train_config(cli: &Cli, overrides: &[String]) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("override `{kv}` is not key=value")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_examples(path: &Path) -> Result<Vec<Example>, Failure> {
    Ok(DatasetManifest::read(path, None)?.load(&MfccConfig::default())?)
}

fn progress(quiet: bool) -> impl FnMut(&EpochStats) {
    move |e: &EpochStats| {
        if !quiet {
            eprintln!(
                "epoch {:3}  train loss {:.4}  dev CD {:.4}{}",
                e.epoch,
                e.train_loss,
                e.dev_cd,
                if e.improved { " *" } else { "" }
            );
        }
    }
}

fn write_history(dir: &Path, history: &TrainHistory) -> std::io::Result<()> {
    let mut s = String::from("epoch\ttrain_loss\tdev_cd\n");
    for (i, (l, d)) in history.train_loss.iter().zip(&history.dev_cd).enumerate() {
        s.push_str(&format!("{i}\t{l:.6}\t{d:.4}\n"));
    }
    fs::write(dir.join("history.tsv"), s)
}

fn finish_training(dir: &Path, model: &SegmenterModel, history: &TrainHistory) -> CliResult {
    let path = dir.join("model.segs");
    model.save(&path)?;
    write_history(dir, history)?;
    println!(
        "best epoch {} (dev CD {:.4}); checkpoint {}",
        history.best_epoch,
        history.best_dev_cd(),
        path.display()
    );
    Ok(())
}

fn print_table(table: &boundseg::Comparison, tsv: bool) {
    if tsv {
        print!("{}", table.to_tsv());
    } else {
        print!("{}", table.to_text());
    }
}

fn model_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Train(a) => {
            let cfg = train_config(&cli, &a.overrides)?;
            let (train, dev) = (load_examples(&a.train)?, load_examples(&a.dev)?);
            let dir = out_dir(&cli.out, "model")?;
            let (model, history) = train_with_observer(&train, &dev, &cfg, &mut progress(a.quiet))?;
            finish_training(&dir, &model, &history)
        }
        Command::TrainBaseline { train: a, arch } => {
            let cfg = train_config(&cli, &a.overrides)?;
            let arch = match arch {
                Some(s) => BaselineArch::parse(s)?,
                None => cfg.arch,
            };
            let (train, dev) = (load_examples(&a.train)?, load_examples(&a.dev)?);
            let dir = out_dir(&cli.out, "model")?;
            let (model, history) = train_baseline_with_observer(&train, &dev, &cfg, arch, &mut progress(a.quiet))?;
            finish_training(&dir, &model, &history)
        }
        Command::Eval { model, data, report } => {
            let m = SegmenterModel::load(model)?;
            let r = evaluate(&m, &model_label(model), &load_examples(data)?, &report.tolerances)?;
            println!(
                "{} items; mean onset {:.4} offset {:.4} CD {:.4} frames ({:.2} ms)",
                r.items, r.mean_onset, r.mean_offset, r.mean_cd, r.mean_cd_ms
            );
            print_table(&compare(&[r])?, report.tsv);
            Ok(())
        }
        Command::Segment { model, input } => {
            let m = SegmenterModel::load(model)?;
            let s = segment(&m, input, &MfccConfig::default())?;
            println!(
                "onset_frame {}\toffset_frame {}\tonset_ms {:.1}\toffset_ms {:.1}",
                s.pair.onset, s.pair.offset, s.onset_ms, s.offset_ms
            );
            Ok(())
        }
        Command::Compare {
            model,
            data,
            train,
            dev,
            test,
            report,
        } => {
            if !model.is_empty() {
                let data = data
                    .as_ref()
                    .ok_or_else(|| Failure::Usage("--model needs --data".into()))?;
                let examples = load_examples(data)?;
                let reports = model
                    .iter()
                    .map(|p| evaluate(&SegmenterModel::load(p)?, &model_label(p), &examples, &report.tolerances))
                    .collect::<boundseg::Result<Vec<_>>>()?;
                print_table(&compare(&reports)?, report.tsv);
                return Ok(());
            }
            let (Some(train), Some(dev), Some(test)) = (train, dev, test) else {
                return Err(Failure::Usage(
                    "compare needs --model/--data, or --train, --dev and --test".into(),
                ));
            };
            let cfg = train_config(&cli, &[])?;
            let run = run_comparison(
                &load_examples(train)?,
                &load_examples(dev)?,
                &load_examples(test)?,
                &cfg,
                &report.tolerances,
                &mut |name| eprintln!("training {name}"),
            )?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                for (name, m, _) in &run.models {
                    m.save(&dir.join(format!("{name}.segs")))?;
                }
                fs::write(dir.join("comparison.tsv"), run.table.to_tsv())?;
            }
            print_table(&run.table, report.tsv);
            Ok(())
        }
        Command::Synth {
            n_train,
            n_dev,
            n_test,
            t_min,
            t_max,
            dim,
            sigma,
            delta,
            min_dur,
            jitter,
        } => {
            let cfg = SynthConfig {
                n_train: *n_train,
                n_dev: *n_dev,
                n_test: *n_test,
                t_min: *t_min,
                t_max: *t_max,
                dim: *dim,
                sigma: *sigma,
                delta: *delta,
                min_dur: *min_dur,
                jitter: *jitter,
                ..SynthConfig::default()
            };
            let corpus = synth_generate(&cfg, cli.seed.unwrap_or(0))?;
            let dir = out_dir(&cli.out, "synth")?;
            write_corpus(&corpus, &dir)?;
            println!(
                "wrote {} / {} / {} utterances to {}; active dims {:?}; chance CD {:.3} frames",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                dir.display(),
                corpus.active_dims,
                chance_cd(&cfg)?
            );
            Ok(())
        }
        Command::Mfcc { input } => {
            let wave = read_wav(input)?;
            let seq = mfcc(&wave, &MfccConfig::default())?;
            let stem = input
                .file_stem()
                .ok_or_else(|| Failure::Usage(format!("`{}` has no file name", input.display())))?;
            let dir = out_dir(&cli.out, ".")?;
            let path = dir.join(Path::new(stem).with_extension("segf"));
            write_features(&path, &seq)?;
            println!("{} frames x {} coefficients -> {}", seq.frames(), seq.dim(), path.display());
            Ok(())
        }
        Command::Gradcheck {
            frames,
            dim,
            hidden,
            layers,
            mode,
            threshold,
        } => {
            let mode = WeightMode::parse(mode)?;
            if *frames < 3 {
                return Err(Failure::Usage("gradcheck needs at least 3 frames".into()));
            }
            let rnn = RnnConfig {
                layers: *layers,
                hidden: *hidden,
                bidirectional: true,
                dropout_rate: 0.0,
            };
            let seed = cli.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..*frames)
                .map(|_| (0..*dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let seq = boundseg::model::sequence_from_rows(&rows, "gradcheck")?;
            let y_ref = TimingPair::new(1, frames - 2)?;
            let model = SegmenterModel::new(ModelKind::Structured(mode), rnn, *dim, seed)?;
            let params = model.params().clone();
            let loss = |p: &ParamStore| Ok(structured_loss(p, &rnn, mode, &seq, y_ref, 1, false, 0)?.loss);
            let grad = |p: &ParamStore| Ok(structured_gradient(p, &rnn, mode, &seq, y_ref, 1, false, 0)?.1);
            let err = grad_check(loss, grad, &params, DEFAULT_STEP)?;
            println!("max relative error {err:.3e} over {} parameters", params.num_scalars());
            if err > *threshold {
                return Err(Failure::Threshold(format!("gradient error {err:.3e} exceeds {threshold:e}")));
            }
            Ok(())
        }
    }
}
