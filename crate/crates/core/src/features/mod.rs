//! Data ingestion: audio, MFCCs, feature files, manifests and synthetic corpora.

pub mod manifest;
pub mod mfcc;
pub mod segf;
pub mod synth;
pub mod wav;

pub use manifest::{DatasetManifest, Example, ManifestRecord, Split};
pub use mfcc::{mfcc, MfccConfig, MfccExtractor};
pub use segf::{read_features, write_features};
pub use synth::{chance_cd, synth_generate, write_corpus, SynthConfig, SynthCorpus};
pub use wav::{read_wav, write_wav, Waveform};
