//! Boundary-pair segmentation of utterances.
//!
//! A recurrent encoder maps acoustic frames to feature vectors. A linear
//! structured scorer then picks the `(onset, offset)` pair with the highest
//! score and is trained with a max-margin hinge loss. A frame-wise classifier
//! trained with negative log-likelihood is included as a baseline.

// NaN-rejecting comparisons and index-heavy numeric loops are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod baseline;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod harness;
pub mod losses;
pub mod model;
pub mod numeric;
pub mod rnn;
pub mod trainer;

pub use decoder::{decode, decode_loss_augmented, hinge_loss, BoundaryScores, TimingPair, WeightMode};
pub use error::{Result, SegError};
pub use eval::{compare, evaluate, segment, Comparison, EvalReport};
pub use features::{Example, SynthConfig, SynthCorpus};
pub use losses::cd_loss;
pub use model::{BaselineArch, ModelKind, SegmenterModel};
pub use rnn::{FeatureSequence, RnnConfig};
pub use trainer::{train, train_baseline, TrainConfig, TrainHistory};
