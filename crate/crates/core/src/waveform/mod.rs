//! Modulated-signal path: test signal generation, de-troughing,
//! transmission through the quantized multiphase (or polar) model and
//! modulation-quality metrics.

mod filter;
pub mod io;
pub mod metrics;
pub mod psd;

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mp::{Interpolator, PhasorTarget, QuantMode};

pub use filter::{kaiser_lowpass, fir_filter_same};
pub use metrics::{aclr, evm, papr_db, Aclr, MetricReport};
pub use psd::{welch, Psd, WelchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    QamSc,
    Ofdm,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qam-sc" => Ok(Scheme::QamSc),
            "ofdm" => Ok(Scheme::Ofdm),
            other => Err(Error::InvalidParameter { name: "scheme", reason: format!("unknown scheme `{other}`") }),
        }
    }
}

/// Parameters of a generated test signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSpec {
    pub scheme: Scheme,
    /// Constellation size: 4, 16, 64 or 256.
    pub order: usize,
    /// Channel bandwidth, hertz.
    pub bandwidth: f64,
    pub sample_rate: f64,
    pub samples: usize,
    pub seed: u64,
    /// OFDM: fraction of the channel covered by active subcarriers.
    pub occupied_fraction: f64,
    pub fft_size: usize,
    /// Single carrier: root-raised-cosine roll-off.
    pub rolloff: f64,
}

impl WaveformSpec {
    /// 64-QAM OFDM in a 15 MHz channel at 8x oversampling.
    pub fn lte_like(samples: usize, seed: u64) -> Self {
        Self {
            scheme: Scheme::Ofdm,
            order: 64,
            bandwidth: 15e6,
            sample_rate: 120e6,
            samples,
            seed,
            occupied_fraction: 0.9,
            fft_size: 1024,
            rolloff: 0.22,
        }
    }

    /// Bandwidth actually carrying signal energy.
    pub fn occupied_bandwidth(&self) -> f64 {
        match self.scheme {
            Scheme::Ofdm => self.occupied_fraction * self.bandwidth,
            Scheme::QamSc => self.bandwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![4, 16, 64, 256].contains(&self.order) {
            return Err(Error::UnsupportedOrder(self.order));
        }
        if !(self.bandwidth > 0.0 && self.sample_rate.is_finite()) || self.sample_rate < 4.0 * self.bandwidth {
            return Err(Error::InvalidParameter {
                name: "sample_rate",
                reason: format!("need at least 4x oversampling of {} Hz, got {} Hz", self.bandwidth, self.sample_rate),
            });
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter { name: "samples", reason: "must be positive".into() });
        }
        if !(self.occupied_fraction > 0.0 && self.occupied_fraction <= 1.0) {
            return Err(Error::InvalidParameter { name: "occupied_fraction", reason: format!("{}", self.occupied_fraction) });
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < 64 {
            return Err(Error::InvalidParameter { name: "fft_size", reason: format!("{}", self.fft_size) });
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidParameter { name: "rolloff", reason: format!("{}", self.rolloff) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub scheme: Scheme,
    pub order: usize,
    pub bandwidth: f64,
    pub occupied_bandwidth: f64,
}

impl BasebandSignal {
    pub fn papr_db(&self) -> f64 {
        papr_db(&self.samples)
    }

    pub fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self { samples, ..self.clone() }
    }
}

/// Ideal points of a square QAM constellation, unit average power.
pub fn qam_constellation(order: usize) -> Result<Vec<Complex64>> {
    if ![4, 16, 64, 256].contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let side = (order as f64).sqrt() as usize;
    let level = |i: usize| 2.0 * i as f64 - (side as f64 - 1.0);
    let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
    Ok((0..order).map(|s| Complex64::new(level(s % side), level(s / side)) / norm).collect())
}

fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let half = (span * sps / 2) as isize;
    let b = rolloff;
    let taps: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / std::f64::consts::PI
            } else if b > 0.0 && (4.0 * b * t).abs() == 1.0 {
                let pi = std::f64::consts::PI;
                b / 2f64.sqrt() * ((1.0 + 2.0 / pi) * (pi / (4.0 * b)).sin() + (1.0 - 2.0 / pi) * (pi / (4.0 * b)).cos())
            } else {
                let pi = std::f64::consts::PI;
                ((pi * t * (1.0 - b)).sin() + 4.0 * b * t * (pi * t * (1.0 + b)).cos())
                    / (pi * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|x| x * x).sum::<f64>().sqrt();
    taps.into_iter().map(|x| x / energy).collect()
}

fn single_carrier(spec: &WaveformSpec, rng: &mut ChaCha8Rng, len: usize) -> Result<Vec<Complex64>> {
    let points = qam_constellation(spec.order)?;
    let symbol_rate = spec.bandwidth / (1.0 + spec.rolloff);
    let sps = (spec.sample_rate / symbol_rate).round().max(4.0) as usize;
    let taps = rrc_taps(spec.rolloff, sps, 12);
    let mut up = vec![Complex64::new(0.0, 0.0); len + taps.len()];
    for i in (0..up.len()).step_by(sps) {
        up[i] = points[rng.gen_range(0..spec.order)];
    }
    let shaped = fir_filter_same(&up, &taps);
    Ok(shaped[taps.len() / 2..taps.len() / 2 + len].to_vec())
}

fn ofdm(spec: &WaveformSpec, rng: &mut ChaCha8Rng, len: usize) -> Result<Vec<Complex64>> {
    let points = qam_constellation(spec.order)?;
    let n = spec.fft_size;
    let active = ((spec.occupied_bandwidth() / spec.sample_rate * n as f64 / 2.0).round() as usize).max(1);
    if 2 * active + 1 >= n {
        return Err(Error::InvalidParameter { name: "fft_size", reason: "too few bins for the occupied band".into() });
    }
    let cp = n * 9 / 128;
    let ifft = rustfft::FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = Vec::with_capacity(len + n + cp);
    let mut bins = vec![Complex64::new(0.0, 0.0); n];
    while out.len() < len {
        bins.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for k in 1..=active {
            bins[k] = points[rng.gen_range(0..spec.order)];
            bins[n - k] = points[rng.gen_range(0..spec.order)];
        }
        ifft.process(&mut bins);
        out.extend_from_slice(&bins[n - cp..]);
        out.extend_from_slice(&bins);
    }
    out.truncate(len);
    Ok(out)
}

/// Generates a deterministic, unit-peak test signal.
///
/// Both schemes are band-limited to the channel with a Kaiser low-pass
/// so that the out-of-channel floor sits far below any quantization noise.
pub fn generate(spec: &WaveformSpec) -> Result<BasebandSignal> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let channel = kaiser_lowpass(
        0.5 * spec.bandwidth / spec.sample_rate,
        (1.0 - spec.occupied_fraction.min(0.9)) * spec.bandwidth / spec.sample_rate,
        100.0,
    );
    let pad = channel.len();
    let raw = match spec.scheme {
        Scheme::QamSc => single_carrier(spec, &mut rng, spec.samples + 2 * pad)?,
        Scheme::Ofdm => ofdm(spec, &mut rng, spec.samples + 2 * pad)?,
    };
    let filtered = fir_filter_same(&raw, &channel);
    let mut samples = filtered[pad..pad + spec.samples].to_vec();
    let peak = samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(BasebandSignal {
        samples,
        sample_rate: spec.sample_rate,
        scheme: spec.scheme,
        order: spec.order,
        bandwidth: spec.bandwidth,
        occupied_bandwidth: spec.occupied_bandwidth(),
    })
}

/// Raises the envelope to at least `floor * peak`, keeping the phase.
pub fn detrough(signal: &BasebandSignal, floor: f64) -> Result<BasebandSignal> {
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::InvalidParameter { name: "detrough", reason: format!("floor {floor} outside [0, 1)") });
    }
    let peak = signal.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let min = floor * peak;
    let samples = signal
        .samples
        .iter()
        .map(|&s| {
            let e = s.norm();
            if e >= min {
                s
            } else if e > 0.0 {
                s * (min / e)
            } else {
                Complex64::new(min, 0.0)
            }
        })
        .collect();
    Ok(signal.with_samples(samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxMode {
    /// Every sample goes through decompose, quantize, rebuild.
    Multiphase,
    /// Amplitude quantized to k bits, phase passed through the clock path.
    Polar,
}

impl std::str::FromStr for TxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiphase" => Ok(TxMode::Multiphase),
            "polar" => Ok(TxMode::Polar),
            other => Err(Error::InvalidParameter { name: "mode", reason: format!("unknown mode `{other}`") }),
        }
    }
}

/// Optional polar-path impairments; all off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolarImpairments {
    /// Low-pass bandwidth of the phase path, hertz.
    pub phase_bandwidth: Option<f64>,
    /// Amplitude path delay relative to the phase path, samples.
    pub am_delay: isize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub phases: usize,
    /// `None` leaves the weights unquantized.
    pub bits: Option<u32>,
    pub mode: TxMode,
    pub quant: QuantMode,
    pub impairments: PolarImpairments,
}

impl Transmitter {
    pub fn multiphase(phases: usize, bits: Option<u32>) -> Self {
        Self { phases, bits, mode: TxMode::Multiphase, quant: QuantMode::Rounding, impairments: PolarImpairments::default() }
    }

    pub fn polar(bits: Option<u32>) -> Self {
        Self { phases: 16, bits, mode: TxMode::Polar, quant: QuantMode::Rounding, impairments: PolarImpairments::default() }
    }

    /// Realized normalized output for every input sample.
    pub fn transmit(&self, signal: &BasebandSignal, exec: Exec) -> Result<Vec<Complex64>> {
        if let Some(s) = signal.samples.iter().find(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::NonFinite(if s.re.is_finite() { "sample Q" } else { "sample I" }));
        }
        match self.mode {
            TxMode::Multiphase => self.transmit_multiphase(&signal.samples, exec),
            TxMode::Polar => self.transmit_polar(signal, exec),
        }
    }

    fn transmit_multiphase(&self, samples: &[Complex64], exec: Exec) -> Result<Vec<Complex64>> {
        let mp = Interpolator::new(self.phases, self.bits.unwrap_or(0))?;
        let quantize = self.bits.is_some();
        let quant = self.quant;
        let out = exec.map(samples, |&s| -> Result<Complex64> {
            let t = PhasorTarget::polar(s.norm().min(1.0), s.im.atan2(s.re))?;
            let w = mp.decompose_exact(&t)?;
            Ok(if quantize {
                mp.output(&mp.quantize(&w, quant))
            } else {
                mp.reconstruct_exact(&w).to_complex()
            })
        });
        out.into_iter().collect()
    }

    fn transmit_polar(&self, signal: &BasebandSignal, exec: Exec) -> Result<Vec<Complex64>> {
        let samples = &signal.samples;
        let full = self.bits.map(|b| (1u64 << b) as f64);
        let amps: Vec<f64> = exec.map(samples, |s| {
            let a = s.norm().min(1.0);
            match full {
                Some(n) => (a * n).round() / n,
                None => a,
            }
        });
        let mut phase: Vec<f64> = Vec::with_capacity(samples.len());
        let mut prev = 0.0;
        for s in samples {
            let p = s.im.atan2(s.re);
            let unwrapped = prev + crate::mp::phase_diff(p, prev);
            phase.push(unwrapped);
            prev = unwrapped;
        }
        if let Some(bw) = self.impairments.phase_bandwidth {
            if !(bw > 0.0) {
                return Err(Error::InvalidParameter { name: "phase_bandwidth", reason: format!("{bw}") });
            }
            let cutoff = (bw / signal.sample_rate).min(0.49);
            let taps = kaiser_lowpass(cutoff, cutoff.min(0.5 - cutoff).max(1e-3), 60.0);
            phase = filter::fir_filter_real_same(&phase, &taps);
        }
        let d = self.impairments.am_delay;
        let n = samples.len() as isize;
        Ok((0..n)
            .map(|i| {
                let j = (i - d).clamp(0, n - 1) as usize;
                Complex64::from_polar(amps[j], phase[i as usize].rem_euclid(TAU))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: Scheme, seed: u64) -> WaveformSpec {
        let mut s = WaveformSpec::lte_like(20_000, seed);
        s.scheme = scheme;
        s
    }

    #[test]
    fn generation_is_deterministic() {
        for scheme in [Scheme::Ofdm, Scheme::QamSc] {
            let a = generate(&small(scheme, 7)).unwrap();
            let b = generate(&small(scheme, 7)).unwrap();
            let c = generate(&small(scheme, 8)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.samples, c.samples);
            let peak = a.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constellation_points_are_distinct() {
        let pts = qam_constellation(64).unwrap();
        assert_eq!(pts.len(), 64);
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!((a - b).norm() > 1e-6);
            }
        }
        let power: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / 64.0;
        assert!((power - 1.0).abs() < 1e-12);
        assert_eq!(qam_constellation(32), Err(Error::UnsupportedOrder(32)));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(Scheme::Ofdm, 1);
        s.order = 8;
        assert_eq!(generate(&s), Err(Error::UnsupportedOrder(8)));
        let mut s = small(Scheme::Ofdm, 1);
        s.sample_rate = 3.0 * s.bandwidth;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn ofdm_papr_in_expected_range() {
        let sig = generate(&WaveformSpec::lte_like(100_000, 3)).unwrap();
        let p = sig.papr_db();
        assert!((8.0..=12.0).contains(&p), "{p}");
    }

    #[test]
    fn detrough_behaviour() {
        let sig = generate(&small(Scheme::Ofdm, 5)).unwrap();
        assert_eq!(detrough(&sig, 0.0).unwrap(), sig);
        let p2 = detrough(&sig, 0.2).unwrap().papr_db();
        let p4 = detrough(&sig, 0.4).unwrap().papr_db();
        assert!(sig.papr_db() >= p2 && p2 >= p4);
        let flat = detrough(&sig, 0.999_999).unwrap().papr_db();
        assert!(flat < 1e-4, "{flat}");
        let d = detrough(&sig, 0.3).unwrap();
        for (a, b) in sig.samples.iter().zip(&d.samples) {
            if a.norm() > 1e-9 {
                assert!(crate::mp::phase_diff(a.arg(), b.arg()).abs() < 1e-9);
            }
        }
        assert!(detrough(&sig, 1.0).is_err());
    }

    #[test]
    fn unquantized_transmit_is_identity() {
        let sig = generate(&small(Scheme::Ofdm, 9)).unwrap();
        for m in [4, 16] {
            let out = Transmitter::multiphase(m, None).transmit(&sig, Exec::default()).unwrap();
            for (a, b) in sig.samples.iter().zip(&out) {
                assert!((a - b).norm() <= 1e-12);
            }
        }
        let out = Transmitter::polar(None).transmit(&sig, Exec::default()).unwrap();
        for (a, b) in sig.samples.iter().zip(&out) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn transmit_is_memoryless() {
        let sig = generate(&small(Scheme::QamSc, 2)).unwrap();
        let tx = Transmitter::multiphase(8, Some(7));
        let out = tx.transmit(&sig, Exec::Sequential).unwrap();
        let rev: Vec<Complex64> = sig.samples.iter().rev().copied().collect();
        let out_rev = tx.transmit(&sig.with_samples(rev), Exec::Parallel).unwrap();
        let back: Vec<Complex64> = out_rev.into_iter().rev().collect();
        assert_eq!(out, back);
    }

    #[test]
    fn coarser_sectors_cost_evm() {
        let sig = generate(&small(Scheme::Ofdm, 4)).unwrap();
        let e4 = evm(&Transmitter::multiphase(4, Some(9)).transmit(&sig, Exec::default()).unwrap(), &sig.samples).unwrap();
        let e16 = evm(&Transmitter::multiphase(16, Some(9)).transmit(&sig, Exec::default()).unwrap(), &sig.samples).unwrap();
        assert!(e4 > e16, "{e4} vs {e16}");
    }

    #[test]
    fn polar_impairments_degrade_evm() {
        let sig = generate(&small(Scheme::Ofdm, 4)).unwrap();
        let clean = Transmitter::polar(Some(9)).transmit(&sig, Exec::default()).unwrap();
        let mut tx = Transmitter::polar(Some(9));
        tx.impairments = PolarImpairments { phase_bandwidth: Some(20e6), am_delay: 1 };
        let dirty = tx.transmit(&sig, Exec::default()).unwrap();
        assert!(evm(&dirty, &sig.samples).unwrap() > 2.0 * evm(&clean, &sig.samples).unwrap());
    }

    #[test]
    fn rotation_commutes_with_detrough_and_quantize() {
        // a rotation by a whole number of sectors maps the state lattice onto itself
        let sig = generate(&small(Scheme::Ofdm, 11)).unwrap();
        let rot = Complex64::from_polar(1.0, TAU / 16.0 * 3.0);
        let rotated = sig.with_samples(sig.samples.iter().map(|s| s * rot).collect());
        let tx = Transmitter::multiphase(16, Some(8));
        let a = tx.transmit(&detrough(&sig, 0.1).unwrap(), Exec::default()).unwrap();
        let b = tx.transmit(&detrough(&rotated, 0.1).unwrap(), Exec::default()).unwrap();
        let mut worst: f64 = 0.0;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x * rot - y).norm());
        }
        // rounding can flip on exact ties only
        let flips = a.iter().zip(&b).filter(|(x, y)| (*x * rot - *y).norm() > 1e-9).count();
        assert!(flips * 1000 < a.len(), "{flips} flips, worst {worst}");
    }
}
