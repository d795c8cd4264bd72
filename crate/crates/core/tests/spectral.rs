use std::f64::consts::TAU;

use mpibeam::waveform::{aclr, evm, generate, welch, Transmitter, WaveformSpec, WelchConfig};
use mpibeam::Exec;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn complex_noise(n: usize, power: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, (power / 2.0).sqrt()).unwrap();
    (0..n).map(|_| Complex64::new(d.sample(&mut rng), d.sample(&mut rng))).collect()
}

fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

#[test]
fn welch_obeys_parseval() {
    let x = complex_noise(1 << 16, 2.5, 1);
    let p = welch(&x, 3.0e6, WelchConfig::default(), Exec::default()).unwrap();
    let rel = (p.total_power() - mean_power(&x)) / mean_power(&x);
    assert!(rel.abs() < 0.02, "{rel}");
}

#[test]
fn policies_give_identical_spectra() {
    let x = complex_noise(1 << 14, 1.0, 2);
    let a = welch(&x, 1.0, WelchConfig { segment_len: 512, overlap: 256 }, Exec::Sequential).unwrap();
    let b = welch(&x, 1.0, WelchConfig { segment_len: 512, overlap: 256 }, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evm_of_minus_forty_dbc_noise_is_one_percent() {
    let sig = generate(&WaveformSpec::lte_like(200_000, 3)).unwrap();
    let p = mean_power(&sig.samples);
    let noise = complex_noise(sig.samples.len(), p * 1e-4, 4);
    let y: Vec<Complex64> = sig.samples.iter().zip(&noise).map(|(s, n)| s + n).collect();
    let e = evm(&y, &sig.samples).unwrap();
    assert!((e - 1.0).abs() < 0.05, "{e}");
}

#[test]
fn tone_aclr_is_below_minus_sixty() {
    let fs = 120e6;
    let x: Vec<Complex64> = (0..1 << 16).map(|n| Complex64::from_polar(1.0, TAU * 0.4e6 * n as f64 / fs)).collect();
    let r = aclr(&x, fs, 13.5e6, 15e6, WelchConfig::default(), Exec::default()).unwrap();
    assert!(r.lower_dbc <= -60.0 && r.upper_dbc <= -60.0, "{r:?}");
}

#[test]
fn quantization_noise_falls_six_db_per_bit() {
    let sig = generate(&WaveformSpec::lte_like(60_000, 5)).unwrap();
    let mut floors = Vec::new();
    for k in 6..=10 {
        let y = Transmitter::multiphase(16, Some(k)).transmit(&sig, Exec::default()).unwrap();
        floors.push(20.0 * (evm(&y, &sig.samples).unwrap() / 100.0).log10());
    }
    for w in floors.windows(2) {
        let step = w[0] - w[1];
        assert!((step - 6.02).abs() < 1.0, "{floors:?}");
    }
}

#[test]
fn unquantized_multiphase_is_transparent() {
    let sig = generate(&WaveformSpec::lte_like(20_000, 6)).unwrap();
    for m in [3, 4, 16] {
        let y = Transmitter::multiphase(m, None).transmit(&sig, Exec::default()).unwrap();
        assert!(evm(&y, &sig.samples).unwrap() < 1e-10);
    }
}
