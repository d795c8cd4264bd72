use num_complex::Complex64;
use serde::Serialize;

use super::psd::{welch, WelchConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Peak-to-average power ratio in dB.
pub fn papr_db(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let peak = x.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    let mean = x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        10.0 * (peak / mean).log10()
    }
}

/// RMS error vector magnitude in percent of the RMS reference, after
/// scaling `realized` by the least-squares complex gain onto `reference`.
pub fn evm(realized: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if realized.len() != reference.len() || realized.is_empty() {
        return Err(Error::InvalidParameter {
            name: "evm",
            reason: format!("{} realized vs {} reference samples", realized.len(), reference.len()),
        });
    }
    let cross: Complex64 = realized.iter().zip(reference).map(|(r, s)| r.conj() * s).sum();
    let r_pow: f64 = realized.iter().map(|r| r.norm_sqr()).sum();
    let s_pow: f64 = reference.iter().map(|s| s.norm_sqr()).sum();
    if r_pow == 0.0 || s_pow == 0.0 {
        return Err(Error::InvalidParameter { name: "evm", reason: "zero-power signal".into() });
    }
    let gain = cross / r_pow;
    let err: f64 = realized.iter().zip(reference).map(|(r, s)| (gain * r - s).norm_sqr()).sum();
    Ok(100.0 * (err / s_pow).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aclr {
    pub lower_dbc: f64,
    pub upper_dbc: f64,
}

/// Adjacent-channel power ratio: power in a `meas_bw` band centred
/// `offset` above and below the carrier, relative to the same band on
/// the carrier.
pub fn aclr(x: &[Complex64], sample_rate: f64, meas_bw: f64, offset: f64, cfg: WelchConfig, exec: Exec) -> Result<Aclr> {
    if !(meas_bw > 0.0) || offset + meas_bw / 2.0 > sample_rate / 2.0 {
        return Err(Error::InvalidParameter {
            name: "aclr",
            reason: format!("adjacent band at {offset} Hz +- {} Hz exceeds Nyquist", meas_bw / 2.0),
        });
    }
    let p = welch(x, sample_rate, cfg, exec)?;
    let h = meas_bw / 2.0;
    let main = p.band_power(-h, h);
    if main <= 0.0 {
        return Err(Error::InvalidParameter { name: "aclr", reason: "no power in the main channel".into() });
    }
    let db = |v: f64| 10.0 * (v.max(f64::MIN_POSITIVE) / main).log10();
    Ok(Aclr {
        lower_dbc: db(p.band_power(-offset - h, -offset + h)),
        upper_dbc: db(p.band_power(offset - h, offset + h)),
    })
}

/// Modulation quality summary written as JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub evm_pct: f64,
    pub aclr_lo_dbc: f64,
    pub aclr_hi_dbc: f64,
    pub papr_db: f64,
}
