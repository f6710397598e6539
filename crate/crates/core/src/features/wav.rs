use std::path::Path;

use crate::error::{Result, SegError};

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub const MIN_SAMPLE_RATE: u32 = 8000;

    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(SegError::InvalidInput("empty waveform".into()));
        }
        if sample_rate_hz < Self::MIN_SAMPLE_RATE {
            return Err(SegError::InvalidInput(format!(
                "sample rate {sample_rate_hz} Hz is below {} Hz",
                Self::MIN_SAMPLE_RATE
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }
}

fn wav_err(e: hound::Error) -> SegError {
    match e {
        hound::Error::IoError(io) => SegError::Io(io),
        other => SegError::Format(format!("wav: {other}")),
    }
}

/// Reads 16-bit PCM mono; samples are scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(SegError::Format(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(SegError::Format(format!(
            "{}: only 16-bit PCM is supported ({:?}, {} bits)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono, rounding and saturating to the i16 range.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &wave.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_and_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &Waveform::new(vec![0.0; 100], 16000).unwrap()).unwrap();
        let w = read_wav(&p).unwrap();
        assert!(w.samples.iter().all(|&s| s == 0.0));

        write_wav(&p, &Waveform::new(vec![-1.0, 0.5], 8000).unwrap()).unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples, vec![-1.0, 0.5]);
        assert_eq!(w.sample_rate_hz, 8000);
    }

    #[test]
    fn sine_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sine.wav");
        let sr = 16000;
        let samples: Vec<f64> = (0..sr)
            .map(|n| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / sr as f64).sin())
            .collect();
        write_wav(&p, &Waveform::new(samples.clone(), sr).unwrap()).unwrap();
        let back = read_wav(&p).unwrap();
        let worst = samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0, "{worst}");
    }

    #[test]
    fn stereo_and_float_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(SegError::Format(_))));

        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(SegError::Format(_))));
    }

    #[test]
    fn garbage_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFFnot really a wave file").unwrap();
        assert!(read_wav(&p).is_err());
    }
}
