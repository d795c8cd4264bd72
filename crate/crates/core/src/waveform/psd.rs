//! Averaged-periodogram (Welch) power spectral density.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Samples shared by consecutive segments.
    pub overlap: usize,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segment_len: 4096, overlap: 2048 }
    }
}

/// Two-sided density in power per hertz, frequencies ascending from `-fs/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
    pub segments: usize,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() < 2 {
            0.0
        } else {
            self.freqs[1] - self.freqs[0]
        }
    }

    /// Power in the bins whose centre lies in `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.bin_width();
        self.freqs
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, d)| d * df)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    /// `(frequency, dB/Hz)` pairs.
    pub fn to_db(&self) -> Vec<(f64, f64)> {
        self.freqs
            .iter()
            .zip(&self.density)
            .map(|(f, d)| (*f, 10.0 * d.max(f64::MIN_POSITIVE).log10()))
            .collect()
    }
}

/// Hann-windowed Welch estimate.
pub fn welch(signal: &[Complex64], sample_rate: f64, cfg: WelchConfig, exec: Exec) -> Result<Psd> {
    let len = cfg.segment_len;
    if len < 2 || cfg.overlap >= len {
        return Err(Error::InvalidParameter {
            name: "welch",
            reason: format!("segment {len} with overlap {}", cfg.overlap),
        });
    }
    if signal.len() < len {
        return Err(Error::InvalidParameter {
            name: "welch",
            reason: format!("signal of {} samples is shorter than one segment", signal.len()),
        });
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParameter { name: "sample_rate", reason: format!("{sample_rate}") });
    }
    let step = len - cfg.overlap;
    let segments = (signal.len() - len) / step + 1;
    let window: Vec<f64> = (0..len).map(|n| 0.5 - 0.5 * (TAU * n as f64 / len as f64).cos()).collect();
    let w_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let periodograms = exec.map_range(segments, |s| {
        let mut buf: Vec<Complex64> =
            signal[s * step..s * step + len].iter().zip(&window).map(|(x, w)| x * w).collect();
        fft.process(&mut buf);
        buf.iter().map(|x| x.norm_sqr()).collect::<Vec<f64>>()
    });
    let mut acc = vec![0.0; len];
    for p in &periodograms {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let scale = 1.0 / (segments as f64 * sample_rate * w_energy);
    let half = len / 2;
    let df = sample_rate / len as f64;
    let freqs = (0..len).map(|i| (i as f64 - half as f64) * df).collect();
    let density = (0..len).map(|i| acc[(i + len - half) % len] * scale).collect();
    Ok(Psd { freqs, density, segments })
}
