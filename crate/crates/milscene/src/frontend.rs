//! Log-mel front end: Hann-windowed STFT power, HTK mel filterbank, log.

use std::f64::consts::PI;
use std::sync::Arc;

use milscene_core::Tensor;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{format_err, Result};
use crate::wav::AudioClip;

pub const FRAME_SECS: f64 = 0.040;
pub const MEL_BANDS: usize = 40;
pub const LOG_FLOOR: f64 = 1e-10;

/// HTK mel scale.
pub fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Frame length in samples for a 40 ms window.
pub fn frame_length(rate: u32) -> usize {
    (FRAME_SECS * rate as f64).round() as usize
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Number of frames for `samples` at `hop`: the tail is zero-padded so
/// that every one of the `floor(samples / hop)` frames is complete.
pub fn frame_count(samples: usize, hop: usize) -> usize {
    samples / hop
}

/// Squared-magnitude spectrogram `[frames, frame / 2 + 1]`.
pub fn stft_power(samples: &[f64], frame: usize, hop: usize) -> Result<Tensor> {
    Stft::new(frame, hop)?.power(samples)
}

/// Reusable STFT plan.
pub struct Stft {
    frame: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(frame: usize, hop: usize) -> Result<Self> {
        if frame < 2 || hop == 0 {
            return Err(format_err!("frame {frame} and hop {hop} must be positive (frame >= 2)"));
        }
        let fft = FftPlanner::new().plan_fft_forward(frame);
        Ok(Self { frame, hop, window: hann(frame), fft })
    }

    pub fn bins(&self) -> usize {
        self.frame / 2 + 1
    }

    pub fn power(&self, samples: &[f64]) -> Result<Tensor> {
        if samples.len() < self.hop {
            return Err(format_err!("{} samples is shorter than one hop of {}", samples.len(), self.hop));
        }
        let frames = frame_count(samples.len(), self.hop);
        let bins = self.bins();
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); self.frame];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.hop;
            for (n, slot) in buf.iter_mut().enumerate() {
                let x = samples.get(start + n).copied().unwrap_or(0.0);
                *slot = Complex::new(x * self.window[n], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            out.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
        }
        Ok(Tensor::new(vec![frames, bins], out)?)
    }
}

/// Triangular filters `[bands, bins]` with centers equally spaced in mel
/// between 0 Hz and `rate / 2`. Filters are not area-normalized; each
/// peaks at 1 on its center frequency.
pub fn mel_filterbank(bins: usize, bands: usize, rate: u32) -> Result<Tensor> {
    if bands == 0 || bins < bands || bins < 2 {
        return Err(format_err!("cannot build {bands} mel bands over {bins} bins"));
    }
    let nyquist = rate as f64 / 2.0;
    let top = mel(nyquist);
    let edges: Vec<f64> = (0..bands + 2).map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64)).collect();
    let bin_hz = |k: usize| k as f64 * nyquist / (bins - 1) as f64;
    let mut w = vec![0.0; bands * bins];
    for l in 0..bands {
        let (lo, mid, hi) = (edges[l], edges[l + 1], edges[l + 2]);
        let row = &mut w[l * bins..(l + 1) * bins];
        for (k, v) in row.iter_mut().enumerate() {
            let f = bin_hz(k);
            *v = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(format_err!(
                "mel band {l} ({lo:.1}-{hi:.1} Hz) covers no frequency bin; too many bands for {bins} bins"
            ));
        }
    }
    Ok(Tensor::new(vec![bands, bins], w)?)
}

/// Log-mel extractor for one sample rate.
pub struct LogMel {
    rate: u32,
    stft: Stft,
    filterbank: Tensor,
}

impl LogMel {
    /// 40 ms frames, 50% hop.
    pub fn new(rate: u32, bands: usize) -> Result<Self> {
        let frame = frame_length(rate);
        let stft = Stft::new(frame, frame / 2)?;
        let filterbank = mel_filterbank(stft.bins(), bands, rate)?;
        Ok(Self { rate, stft, filterbank })
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn filterbank(&self) -> &Tensor {
        &self.filterbank
    }

    /// `[bands, frames]` log-mel energies, `ln(mel power + 1e-10)`.
    pub fn compute(&self, clip: &AudioClip) -> Result<Tensor> {
        if clip.sample_rate != self.rate {
            return Err(format_err!("clip is {} Hz, extractor expects {} Hz", clip.sample_rate, self.rate));
        }
        let power = self.stft.power(&clip.samples)?;
        let (frames, bins) = (power.dim(0), power.dim(1));
        let bands = self.filterbank.dim(0);
        let mut out = vec![0.0; bands * frames];
        for (l, filter) in self.filterbank.data().chunks_exact(bins).enumerate() {
            // only the support of the triangle contributes
            let first = filter.iter().position(|&v| v > 0.0).unwrap_or(0);
            let last = filter.iter().rposition(|&v| v > 0.0).unwrap_or(0);
            for (t, spectrum) in power.data().chunks_exact(bins).enumerate() {
                let e: f64 = (first..=last).map(|k| filter[k] * spectrum[k]).sum();
                out[l * frames + t] = (e + LOG_FLOOR).ln();
            }
        }
        Ok(Tensor::new(vec![bands, frames], out)?)
    }
}

/// 40-band log-mel spectrogram `[40, frames]` at the clip's own rate.
pub fn log_mel(clip: &AudioClip) -> Result<Tensor> {
    LogMel::new(clip.sample_rate, MEL_BANDS)?.compute(clip)
}
