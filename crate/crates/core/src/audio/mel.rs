use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::error::AudioError;
use crate::nn::Tensor;

/// Framing, filterbank and compression parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub window: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            hop: 256,
            window: 1024,
            n_mels: 40,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |m: &str| Err(AudioError::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return bad("need 0 <= fmin < fmax <= sample_rate/2");
        }
        if !(self.hop >= 1 && self.hop <= self.window && self.window <= self.n_fft) {
            return bad("need 1 <= hop <= window <= n_fft");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1");
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for a signal of `len` samples (0 if shorter than a window).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            1 + (len - self.window) / self.hop
        }
    }

    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }
}

/// Mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidConfig("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Unit-amplitude sine, handy for tests and calibration.
    pub fn sine(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Self {
        let w = std::f64::consts::TAU * freq / sample_rate as f64;
        Self {
            samples: (0..len).map(|n| amplitude * (w * n as f64).sin()).collect(),
            sample_rate,
        }
    }
}

/// Log mel energies, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Tensor<f64>,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.cols()
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / len as f64).cos())
        .collect()
}

fn check_input(w: &Waveform, cfg: &MelConfig) -> Result<(), AudioError> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(AudioError::InvalidConfig(format!(
            "waveform rate {} differs from configured {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    if w.len() < cfg.window {
        return Err(AudioError::TooShort {
            len: w.len(),
            window: cfg.window,
        });
    }
    Ok(())
}

/// Hann-windowed power spectra, `[T × (n_fft/2+1)]`. Frames start at
/// multiples of `hop` with no centering pad.
pub fn stft_power(w: &Waveform, cfg: &MelConfig) -> Result<Tensor<f64>, AudioError> {
    check_input(w, cfg)?;
    let frames = cfg.frame_count(w.len());
    let bins = cfg.n_bins();
    let win = hann(cfg.window);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &w.samples[t * cfg.hop..t * cfg.hop + cfg.window];
        for (slot, (x, h)) in buf.iter_mut().zip(seg.iter().zip(&win)) {
            *slot = Complex::new(x * h, 0.0);
        }
        buf[cfg.window..].fill(Complex::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(Tensor::matrix(frames, bins, out).expect("shape computed above"))
}

/// Triangular filters `[n_mels × (n_fft/2+1)]` with peaks equally spaced on
/// the mel scale between `fmin` and `fmax`.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Tensor<f64>, AudioError> {
    cfg.validate()?;
    let bins = cfg.n_bins();
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut data = vec![0.0; cfg.n_mels * bins];
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c));
            if w > 0.0 {
                data[m * bins + k] = w;
            }
        }
    }
    Ok(Tensor::matrix(cfg.n_mels, bins, data).expect("shape computed above"))
}

/// Frequency in Hz at which filter `m` peaks.
pub fn mel_center_hz(cfg: &MelConfig, m: usize) -> f64 {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    mel_to_hz(lo + (hi - lo) * (m + 1) as f64 / (cfg.n_mels + 1) as f64)
}

/// `log(max(filterbank · power, log_floor))`, shape `[T × n_mels]`.
pub fn to_mel(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram, AudioError> {
    let power = stft_power(w, cfg)?;
    let fb = mel_filterbank(cfg)?;
    let (frames, bins) = (power.rows(), power.cols());
    let mut out = Vec::with_capacity(frames * cfg.n_mels);
    for t in 0..frames {
        let p = power.row(t);
        for m in 0..cfg.n_mels {
            let e: f64 = fb.row(m).iter().zip(p).map(|(a, b)| a * b).sum();
            out.push(e.max(cfg.log_floor).ln());
        }
    }
    debug_assert_eq!(power.cols(), bins);
    Ok(MelSpectrogram {
        frames: Tensor::matrix(frames, cfg.n_mels, out).expect("shape computed above"),
        config: cfg.clone(),
    })
}
