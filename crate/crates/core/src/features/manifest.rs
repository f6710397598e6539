//! Tab-separated dataset manifests: `path<TAB>onset_frame<TAB>offset_frame`,
//! one record per line, `#` lines ignored. Relative paths resolve against the
//! manifest's directory. Paths ending in `.wav` are converted to MFCCs on load;
//! anything else is read as a `SEGF` feature file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::decoder::TimingPair;
use crate::error::{Result, SegError};
use crate::rnn::FeatureSequence;

use super::mfcc::{MfccConfig, MfccExtractor};
use super::segf::read_features;
use super::wav::read_wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub pair: TimingPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: Option<Split>,
    pub records: Vec<ManifestRecord>,
}

/// One labelled utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: FeatureSequence,
    pub pair: TimingPair,
}

impl Example {
    pub fn new(seq: FeatureSequence, pair: TimingPair) -> Result<Self> {
        pair.check_within(seq.frames()).map_err(|_| {
            SegError::InvalidInput(format!(
                "`{}`: pair ({}, {}) outside its {} frames",
                seq.source_id,
                pair.onset,
                pair.offset,
                seq.frames()
            ))
        })?;
        Ok(Self { seq, pair })
    }
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: &Path, split: Option<Split>) -> Result<Self> {
        let mut records = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(SegError::Format(format!(
                    "manifest line {}: expected 3 tab-separated fields, found {}",
                    n + 1,
                    fields.len()
                )));
            }
            let num = |s: &str, what: &str| -> Result<usize> {
                s.trim().parse().map_err(|_| {
                    SegError::Format(format!("manifest line {}: bad {what} `{s}`", n + 1))
                })
            };
            let onset = num(fields[1], "onset")?;
            let offset = num(fields[2], "offset")?;
            let pair = TimingPair::new(onset, offset)
                .map_err(|e| SegError::Format(format!("manifest line {}: {e}", n + 1)))?;
            let p = PathBuf::from(fields[0]);
            let path = if p.is_absolute() { p } else { base_dir.join(p) };
            records.push(ManifestRecord { path, pair });
        }
        Ok(Self { split, records })
    }

    pub fn read(path: &Path, split: Option<Split>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, split)
    }

    /// Serializes with paths relative to `base_dir` where possible.
    pub fn to_text(&self, base_dir: &Path) -> String {
        let mut out = String::new();
        if let Some(s) = self.split {
            out.push_str(&format!("# split: {s}\n"));
        }
        for r in &self.records {
            let p = r.path.strip_prefix(base_dir).unwrap_or(&r.path);
            out.push_str(&format!("{}\t{}\t{}\n", p.display(), r.pair.onset, r.pair.offset));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        fs::write(path, self.to_text(base))?;
        Ok(())
    }

    /// Loads every record, rejecting pairs outside the file's frame range.
    pub fn load(&self, mfcc: &MfccConfig) -> Result<Vec<Example>> {
        let mut extractor: Option<(u32, MfccExtractor)> = None;
        let mut out = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let id = r.path.display().to_string();
            let is_wav = r
                .path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            let seq = if is_wav {
                let wave = read_wav(&r.path)?;
                if extractor.as_ref().map(|(sr, _)| *sr) != Some(wave.sample_rate_hz) {
                    extractor = Some((wave.sample_rate_hz, MfccExtractor::new(mfcc, wave.sample_rate_hz)?));
                }
                extractor.as_ref().unwrap().1.extract(&wave, &id)?
            } else {
                read_features(&r.path)?
            };
            out.push(Example::new(seq, r.pair)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::segf::write_features;
    use crate::model::sequence_from_rows;

    #[test]
    fn parses_and_skips_comments() {
        let m = DatasetManifest::parse("# hi\na.segf\t1\t4\n\n/abs/b.segf\t0\t2\n", Path::new("/data"), None)
            .unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[0].path, PathBuf::from("/data/a.segf"));
        assert_eq!(m.records[1].path, PathBuf::from("/abs/b.segf"));
        assert_eq!(m.records[0].pair, TimingPair::new(1, 4).unwrap());
    }

    #[test]
    fn rejects_bad_records() {
        let base = Path::new(".");
        assert!(DatasetManifest::parse("a\t4\t4\n", base, None).is_err());
        assert!(DatasetManifest::parse("a\t5\t4\n", base, None).is_err());
        assert!(DatasetManifest::parse("a\t1\n", base, None).is_err());
        assert!(DatasetManifest::parse("a\tx\t4\n", base, None).is_err());
    }

    #[test]
    fn load_rejects_out_of_range_offset() {
        let dir = tempfile::tempdir().unwrap();
        let seq = sequence_from_rows(&vec![vec![0.0]; 5], "s").unwrap();
        write_features(&dir.path().join("s.segf"), &seq).unwrap();
        let ok = DatasetManifest::parse("s.segf\t0\t4\n", dir.path(), None).unwrap();
        assert_eq!(ok.load(&MfccConfig::default()).unwrap().len(), 1);
        let bad = DatasetManifest::parse("s.segf\t0\t5\n", dir.path(), None).unwrap();
        assert!(matches!(bad.load(&MfccConfig::default()), Err(SegError::InvalidInput(_))));
    }
}
