//! MFCC front end: pre-emphasis, Hamming window, magnitude FFT, HTK-mel
//! triangular filterbank, log (floored at 1e-10), orthonormal DCT-II, first
//! `n_coeffs` coefficients with C0 kept. No deltas.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SegError};
use crate::numeric::Matrix;
use crate::rnn::FeatureSequence;

use super::wav::Waveform;

const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fmin_hz: f64,
    /// Defaults to Nyquist when `None`.
    pub fmax_hz: Option<f64>,
    pub pre_emphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 13,
            window_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 26,
            fmin_hz: 0.0,
            fmax_hz: None,
            pre_emphasis: 0.97,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(SegError::Config(format!(
                "need 1 <= n_coeffs ({}) <= n_mels ({})",
                self.n_coeffs, self.n_mels
            )));
        }
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return Err(SegError::Config(format!(
                "need 0 < hop ({} ms) <= window ({} ms)",
                self.hop_ms, self.window_ms
            )));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }
}

/// `1 + floor((n - window) / hop)`, or `None` if the signal is shorter than one window.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> Option<usize> {
    if n_samples < window || hop == 0 {
        None
    } else {
        Some(1 + (n_samples - window) / hop)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Orthonormal DCT-II basis, `n x n`, row `k` is coefficient `k`.
pub fn dct_matrix(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            m.set(k, i, scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos());
        }
    }
    m
}

/// Triangular filters on the HTK mel scale, evaluated at FFT bin frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`
    weights: Matrix,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Result<Self> {
        let sr = f64::from(sample_rate);
        if !(0.0 <= fmin && fmin < fmax && fmax <= sr / 2.0) {
            return Err(SegError::Config(format!(
                "mel range [{fmin}, {fmax}] Hz invalid for {sample_rate} Hz audio"
            )));
        }
        let n_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut weights = Matrix::zeros(n_mels, n_bins);
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sr / n_fft as f64;
                let w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                weights.set(m, k, w);
            }
        }
        Ok(Self { weights })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|m| crate::numeric::dot(self.weights.row(m), spectrum))
            .collect()
    }
}

/// Reusable extractor for one sample rate.
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    window_len: usize,
    hop: usize,
    n_fft: usize,
    hamming: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Matrix,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        let window_len = cfg.window_samples(sample_rate);
        let hop = cfg.hop_samples(sample_rate);
        if window_len < 2 || hop == 0 {
            return Err(SegError::Config("window or hop shorter than a sample".into()));
        }
        let n_fft = window_len.next_power_of_two();
        let hamming = (0..window_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (window_len - 1) as f64).cos())
            .collect();
        let fmax = cfg.fmax_hz.unwrap_or(f64::from(sample_rate) / 2.0);
        let filterbank = MelFilterbank::new(cfg.n_mels, n_fft, sample_rate, cfg.fmin_hz, fmax)?;
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window_len,
            hop,
            n_fft,
            hamming,
            filterbank,
            dct: dct_matrix(cfg.n_mels),
            fft,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log mel energies to cepstra.
    pub fn cepstrum(&self, log_mel: &[f64]) -> Vec<f64> {
        (0..self.cfg.n_coeffs)
            .map(|k| crate::numeric::dot(self.dct.row(k), log_mel))
            .collect()
    }

    pub fn extract(&self, wave: &Waveform, source_id: &str) -> Result<FeatureSequence> {
        if wave.sample_rate_hz != self.sample_rate {
            return Err(SegError::InvalidInput(format!(
                "extractor built for {} Hz, got {} Hz",
                self.sample_rate, wave.sample_rate_hz
            )));
        }
        let x = &wave.samples;
        let frames = frame_count(x.len(), self.window_len, self.hop)
            .filter(|&t| t >= 2)
            .ok_or_else(|| {
                SegError::InvalidInput(format!(
                    "`{source_id}`: {} samples is too short for two {}-sample frames",
                    x.len(),
                    self.window_len
                ))
            })?;
        let a = self.cfg.pre_emphasis;
        let emphasized: Vec<f64> = (0..x.len())
            .map(|n| if n == 0 { x[0] } else { x[n] - a * x[n - 1] })
            .collect();

        let mut out = Matrix::zeros(frames, self.cfg.n_coeffs);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut spectrum = vec![0.0; self.n_fft / 2 + 1];
        for t in 0..frames {
            let start = t * self.hop;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = if k < self.window_len {
                    Complex::new(emphasized[start + k] * self.hamming[k], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (s, c) in spectrum.iter_mut().zip(&buf) {
                *s = c.norm();
            }
            let log_mel: Vec<f64> = self
                .filterbank
                .apply(&spectrum)
                .into_iter()
                .map(|e| e.max(LOG_FLOOR).ln())
                .collect();
            out.row_mut(t).copy_from_slice(&self.cepstrum(&log_mel));
        }
        FeatureSequence::new(out, self.cfg.hop_ms, source_id)
    }
}

pub fn mfcc(wave: &Waveform, cfg: &MfccConfig) -> Result<FeatureSequence> {
    MfccExtractor::new(cfg, wave.sample_rate_hz)?.extract(wave, "waveform")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(sr: u32, secs: f64, hz: f64) -> Waveform {
        let n = (sr as f64 * secs) as usize;
        let s = (0..n)
            .map(|i| 0.5 * (2.0 * PI * hz * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(s, sr).unwrap()
    }

    #[test]
    fn one_second_at_16k_has_98_frames() {
        assert_eq!(frame_count(16000, 400, 160), Some(98));
        let f = mfcc(&tone(16000, 1.0, 440.0), &MfccConfig::default()).unwrap();
        assert_eq!((f.frames(), f.dim()), (98, 13));
        assert_eq!(f.frame_period_ms, 10.0);
    }

    #[test]
    fn dct_is_orthonormal() {
        let d = dct_matrix(26);
        for i in 0..26 {
            for j in 0..26 {
                let v = crate::numeric::dot(d.row(i), d.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() <= 1e-10, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn constant_log_mel_has_only_c0() {
        let ex = MfccExtractor::new(&MfccConfig::default(), 16000).unwrap();
        let c = ex.cepstrum(&[-3.7; 26]);
        assert!((c[0] - (-3.7 * 26f64.sqrt())).abs() < 1e-10);
        assert!(c[1..].iter().all(|v| v.abs() <= 1e-10 * c[0].abs()));
    }

    #[test]
    fn filters_are_nonempty_and_peak_at_most_one() {
        let fb = MelFilterbank::new(26, 512, 16000, 0.0, 8000.0).unwrap();
        for m in 0..fb.n_mels() {
            let row = fb.weights.row(m);
            let peak = row.iter().cloned().fold(0.0, f64::max);
            assert!(peak > 0.0 && peak <= 1.0, "filter {m} peak {peak}");
        }
    }

    #[test]
    fn shift_by_hop_shifts_rows() {
        let sr = 16000;
        let n = 8000;
        let mut state = 12345u64;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        let cfg = MfccConfig::default();
        let hop = cfg.hop_samples(sr);
        let a = mfcc(&Waveform::new(x.clone(), sr).unwrap(), &cfg).unwrap();
        let b = mfcc(&Waveform::new(x[hop..].to_vec(), sr).unwrap(), &cfg).unwrap();
        // frame 0 of the shifted signal differs only through pre-emphasis at n = 0
        for t in 1..b.frames() {
            for k in 0..13 {
                let (u, v) = (a.values().get(t + 1, k), b.values().get(t, k));
                assert!((u - v).abs() < 1e-9, "t={t} k={k}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn too_short_and_bad_config() {
        let w = Waveform::new(vec![0.1; 300], 16000).unwrap();
        assert!(mfcc(&w, &MfccConfig::default()).is_err());
        let cfg = MfccConfig {
            n_coeffs: 30,
            ..MfccConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MfccConfig {
            hop_ms: 30.0,
            ..MfccConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn silence_hits_log_floor() {
        let w = Waveform::new(vec![0.0; 1600], 16000).unwrap();
        let f = mfcc(&w, &MfccConfig::default()).unwrap();
        let c0 = LOG_FLOOR.ln() * 26f64.sqrt();
        assert!((f.values().get(0, 0) - c0).abs() < 1e-9);
    }
}
