use num_complex::Complex64;
use rustfft::FftPlanner;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-window low-pass FIR with unit DC gain.
///
/// `cutoff` and `transition` are in cycles per sample; `atten_db` is the
/// stop-band attenuation target. The length is odd so the filter has an
/// integer group delay.
pub fn kaiser_lowpass(cutoff: f64, transition: f64, atten_db: f64) -> Vec<f64> {
    let beta = if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    };
    let order = ((atten_db - 8.0) / (2.285 * std::f64::consts::TAU * transition)).ceil().max(2.0) as usize;
    let order = order + order % 2;
    let mid = order as f64 / 2.0;
    let norm = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..=order)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (std::f64::consts::TAU * cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            let r = t / mid;
            sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Linear convolution trimmed to the input length, centered on the taps.
pub fn fir_filter_same(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    if x.is_empty() || taps.is_empty() {
        return x.to_vec();
    }
    let n = (x.len() + taps.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    a[..x.len()].copy_from_slice(x);
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    for (d, t) in b.iter_mut().zip(taps) {
        *d = Complex64::new(*t, 0.0);
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q / n as f64;
    }
    inv.process(&mut a);
    let half = taps.len() / 2;
    a[half..half + x.len()].to_vec()
}

pub(crate) fn fir_filter_real_same(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let c: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fir_filter_same(&c, taps).into_iter().map(|z| z.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(taps: &[f64], f: f64) -> f64 {
        taps.iter()
            .enumerate()
            .map(|(n, t)| Complex64::from_polar(*t, -std::f64::consts::TAU * f * n as f64))
            .sum::<Complex64>()
            .norm()
    }

    #[test]
    fn kaiser_meets_mask() {
        let taps = kaiser_lowpass(0.1, 0.02, 80.0);
        assert_eq!(taps.len() % 2, 1);
        assert!((response(&taps, 0.0) - 1.0).abs() < 1e-12);
        for i in 0..50 {
            let f = 0.09 * i as f64 / 50.0;
            assert!((20.0 * response(&taps, f).log10()).abs() < 0.01);
        }
        for i in 0..200 {
            let f = 0.111 + (0.5 - 0.111) * i as f64 / 200.0;
            assert!(20.0 * response(&taps, f).log10() < -78.0);
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let x: Vec<Complex64> = (0..37).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let taps = [0.25, 0.5, 0.25, -0.1, 0.05];
        let y = fir_filter_same(&x, &taps);
        for (i, got) in y.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, t) in taps.iter().enumerate() {
                let k = i as isize + 2 - j as isize;
                if k >= 0 && (k as usize) < x.len() {
                    acc += x[k as usize] * t;
                }
            }
            assert!((acc - got).norm() < 1e-12);
        }
    }
}
