//! Ideal electrical model of the multiphase switched-capacitor PA.
//!
//! Output power follows the class-D-like fundamental swing of the
//! capacitor array, `V_out = (2 V_DD / pi) * A`, into `R_opt`. The
//! dynamic loss is the charge redistribution inside the array: cells
//! switching on phase A against grounded cells and cells switching on
//! phase B against grounded cells. With total array capacitance
//! `C_arr = N * C_unit` that gives
//!
//! ```text
//! C_in = [n1 (N - n1) + n2 (N - n2)] / N^2 * C_arr
//! P_in = C_in * V_DD^2 * f0
//! eta  = 1 / (1 + P_in / P_out)
//!      = 1 / (1 + pi [n1 (N - n1) + n2 (N - n2)] / (4 Q [n1^2 + n2^2 + 2 n1 n2 cos(2pi/M)]))
//! ```
//!
//! where `Q = 1 / (2 pi N C_unit R_opt f0)`. The closed form and the
//! composed ratio are kept as two independent routes and agree to
//! rounding error.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mp::{Interpolator, PhaseWeights, PhasorTarget, QuantMode, QuantizedWeights};

/// Relative tolerance for a supplied Q to match the one derived from the circuit values.
pub const Q_MATCH_TOLERANCE: f64 = 1e-9;

/// A weight pair in cells, integer or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cells {
    pub n1: f64,
    pub n2: f64,
}

impl Cells {
    pub fn new(n1: f64, n2: f64) -> Self {
        Self { n1, n2 }
    }
}

impl From<&QuantizedWeights> for Cells {
    fn from(w: &QuantizedWeights) -> Self {
        Cells::new(w.n1 as f64, w.n2 as f64)
    }
}

impl From<QuantizedWeights> for Cells {
    fn from(w: QuantizedWeights) -> Self {
        Cells::from(&w)
    }
}

impl From<&PhaseWeights> for Cells {
    fn from(w: &PhaseWeights) -> Self {
        Cells::new(w.n1, w.n2)
    }
}

impl From<(u64, u64)> for Cells {
    fn from((n1, n2): (u64, u64)) -> Self {
        Cells::new(n1 as f64, n2 as f64)
    }
}

/// Circuit parameters of one MP-SCPA.
///
/// The network Q can be derived from the unit capacitor (design mode) or
/// supplied directly (analysis mode). When only Q is given, the unit
/// capacitor is implied by it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpaConfig {
    pub vdd: f64,
    pub r_opt: f64,
    pub f0: f64,
    pub bits: u32,
    pub phases: usize,
    pub c_unit: Option<f64>,
    pub q_nw: Option<f64>,
    /// Cascode supply, carried along as metadata only.
    pub vdd_high: Option<f64>,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::InvalidParameter { name, reason: format!("must be positive and finite, got {v}") });
    }
    Ok(())
}

impl ScpaConfig {
    pub fn design(vdd: f64, r_opt: f64, c_unit: f64, bits: u32, phases: usize, f0: f64) -> Result<Self> {
        let cfg = Self { vdd, r_opt, f0, bits, phases, c_unit: Some(c_unit), q_nw: None, vdd_high: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn analysis(vdd: f64, r_opt: f64, q_nw: f64, bits: u32, phases: usize, f0: f64) -> Result<Self> {
        let cfg = Self { vdd, r_opt, f0, bits, phases, c_unit: None, q_nw: Some(q_nw), vdd_high: None };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Adds a supplied network Q; fails if the circuit values imply a different one.
    pub fn with_q(mut self, q_nw: f64) -> Result<Self> {
        self.q_nw = Some(q_nw);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        positive("vdd", self.vdd)?;
        positive("r_opt", self.r_opt)?;
        positive("f0", self.f0)?;
        if self.bits == 0 || self.bits > crate::mp::MAX_BITS {
            return Err(Error::BitsOutOfRange { bits: self.bits, max: crate::mp::MAX_BITS });
        }
        if self.phases < 3 {
            return Err(Error::TooFewPhases(self.phases));
        }
        if let Some(v) = self.vdd_high {
            positive("vdd_high", v)?;
        }
        match (self.c_unit, self.q_nw) {
            (None, None) => Err(Error::InvalidParameter {
                name: "c_unit",
                reason: "either the unit capacitor or the network Q is required".into(),
            }),
            (Some(c), None) => positive("c_unit", c),
            (None, Some(q)) => positive("q_nw", q),
            (Some(c), Some(q)) => {
                positive("c_unit", c)?;
                positive("q_nw", q)?;
                let derived = self.derived_q(c);
                if ((q - derived) / derived).abs() > Q_MATCH_TOLERANCE {
                    return Err(Error::QualityMismatch { supplied: q, derived });
                }
                Ok(())
            }
        }
    }

    pub fn full_scale(&self) -> f64 {
        (1u64 << self.bits) as f64
    }

    fn derived_q(&self, c_unit: f64) -> f64 {
        1.0 / (TAU * self.full_scale() * c_unit * self.r_opt * self.f0)
    }

    /// Quality factor of the series-resonant output network.
    pub fn network_q(&self) -> f64 {
        match (self.q_nw, self.c_unit) {
            (Some(q), _) => q,
            (None, Some(c)) => self.derived_q(c),
            (None, None) => f64::NAN,
        }
    }

    pub fn unit_capacitance(&self) -> f64 {
        match (self.c_unit, self.q_nw) {
            (Some(c), _) => c,
            (None, Some(q)) => 1.0 / (TAU * self.full_scale() * q * self.r_opt * self.f0),
            (None, None) => f64::NAN,
        }
    }

    /// Total array capacitance `N * C_unit`.
    pub fn array_capacitance(&self) -> f64 {
        self.full_scale() * self.unit_capacitance()
    }

    /// Series inductor resonating the full array at `f0`.
    pub fn series_inductance(&self) -> f64 {
        let w0 = TAU * self.f0;
        1.0 / (self.array_capacitance() * w0 * w0)
    }

    fn cos_step(&self) -> f64 {
        (TAU / self.phases as f64).cos()
    }

    /// `n1^2 + n2^2 + 2 n1 n2 cos(2pi/M)`
    fn vector_sum_sq(&self, c: Cells) -> f64 {
        c.n1 * c.n1 + c.n2 * c.n2 + 2.0 * c.n1 * c.n2 * self.cos_step()
    }

    /// `n1 (N - n1) + n2 (N - n2)`
    fn redistribution(&self, c: Cells) -> f64 {
        let n = self.full_scale();
        c.n1 * (n - c.n1) + c.n2 * (n - c.n2)
    }

    /// Fundamental output amplitude across `R_opt`, in volts.
    pub fn output_voltage(&self, w: impl Into<Cells>) -> f64 {
        let c = w.into();
        2.0 * self.vdd / PI * self.vector_sum_sq(c).max(0.0).sqrt() / self.full_scale()
    }

    pub fn output_power(&self, w: impl Into<Cells>) -> f64 {
        let c = w.into();
        let n = self.full_scale();
        2.0 / (PI * PI) * (self.vector_sum_sq(c) / (n * n)) * self.vdd * self.vdd / self.r_opt
    }

    /// Power delivered with the whole array on one phase.
    pub fn peak_output_power(&self) -> f64 {
        2.0 / (PI * PI) * self.vdd * self.vdd / self.r_opt
    }

    /// Switched (redistributed) capacitance seen by the supply each cycle.
    pub fn input_capacitance(&self, w: impl Into<Cells>) -> f64 {
        let c = w.into();
        let n = self.full_scale();
        self.redistribution(c) / (n * n) * self.array_capacitance()
    }

    pub fn input_power(&self, w: impl Into<Cells>) -> f64 {
        self.input_capacitance(w) * self.vdd * self.vdd * self.f0
    }

    /// Closed-form ideal drain efficiency.
    pub fn drain_efficiency(&self, w: impl Into<Cells>) -> Result<f64> {
        let c = w.into();
        let s = self.vector_sum_sq(c);
        if s <= 0.0 {
            return Err(Error::ZeroOutput);
        }
        let loss = PI * self.redistribution(c) / (4.0 * self.network_q() * s);
        Ok(1.0 / (1.0 + loss))
    }

    /// Efficiency composed from the output and input power models.
    pub fn drain_efficiency_composed(&self, w: impl Into<Cells>) -> Result<f64> {
        let c = w.into();
        let p_out = self.output_power(c);
        if p_out <= 0.0 {
            return Err(Error::ZeroOutput);
        }
        Ok(p_out / (p_out + self.input_power(c)))
    }

    pub fn operating_point(&self, w: &QuantizedWeights) -> Result<OperatingPoint> {
        Ok(OperatingPoint {
            weights: *w,
            v_out: self.output_voltage(w),
            p_out: self.output_power(w),
            c_in: self.input_capacitance(w),
            p_in: self.input_power(w),
            eta: self.drain_efficiency(w)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub weights: QuantizedWeights,
    pub v_out: f64,
    pub p_out: f64,
    pub c_in: f64,
    pub p_in: f64,
    pub eta: f64,
}

/// Which weights the efficiency curve is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveWeights {
    Exact,
    Quantized(QuantMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub amp_dbfs: f64,
    pub pout_norm_db: f64,
    pub mean_eta: f64,
}

/// Efficiency versus output backoff, averaged over the phase grid.
///
/// Phase samples whose realized output is zero are left out of the mean
/// efficiency; a row where every sample is off reports `mean_eta = 0`.
pub fn efficiency_curve(
    cfg: &ScpaConfig,
    amps_dbfs: &[f64],
    thetas: &[f64],
    weights: CurveWeights,
    exec: Exec,
) -> Result<Vec<EfficiencyPoint>> {
    cfg.validate()?;
    if thetas.is_empty() {
        return Err(Error::InvalidParameter { name: "thetas", reason: "empty phase grid".into() });
    }
    if let Some(&bad) = amps_dbfs.iter().find(|a| !a.is_finite() || **a > 0.0) {
        return Err(Error::InvalidParameter { name: "amps_dbfs", reason: format!("{bad} is above full scale") });
    }
    let mp = Interpolator::new(cfg.phases, cfg.bits)?;
    let peak = cfg.peak_output_power();
    let rows = exec.map(amps_dbfs, |&db| -> Result<EfficiencyPoint> {
        let amp = 10f64.powf(db / 20.0);
        let mut p_sum = 0.0;
        let mut eta_sum = 0.0;
        let mut on = 0usize;
        for &theta in thetas {
            let real = mp.decompose_exact(&PhasorTarget::polar(amp, theta)?)?;
            let cells = match weights {
                CurveWeights::Exact => Cells::from(&real),
                CurveWeights::Quantized(mode) => Cells::from(mp.quantize(&real, mode)),
            };
            let p = cfg.output_power(cells);
            p_sum += p;
            if p > 0.0 {
                eta_sum += cfg.drain_efficiency(cells)?;
                on += 1;
            }
        }
        let p_mean = p_sum / thetas.len() as f64;
        Ok(EfficiencyPoint {
            amp_dbfs: db,
            pout_norm_db: 10.0 * (p_mean / peak).log10(),
            mean_eta: if on == 0 { 0.0 } else { eta_sum / on as f64 },
        })
    });
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_cfg(phases: usize, q: f64) -> ScpaConfig {
        ScpaConfig::analysis(1.0, 1.0, q, 9, phases, 1.75e9).unwrap()
    }

    #[test]
    fn output_power_examples() {
        let cfg = unit_cfg(16, 3.0);
        assert_relative_eq!(cfg.output_power((512, 0)), 2.0 / (PI * PI), max_relative = 1e-12);
        assert_relative_eq!(cfg.output_power((512, 0)), 0.20264, epsilon = 1e-5);
        assert_eq!(cfg.output_power((0, 0)), 0.0);
        let p = cfg.output_power((256, 256));
        assert_relative_eq!(p, 2.0 / (PI * PI) * (PI / 16.0).cos().powi(2), max_relative = 1e-12);
        assert_relative_eq!(p, 0.19493, epsilon = 1e-5);
    }

    #[test]
    fn output_power_matches_voltage_swing() {
        let cfg = ScpaConfig::design(1.4, 6.25, 4.85e-12 / 512.0, 9, 16, 1.75e9).unwrap();
        let mp = Interpolator::new(16, 9).unwrap();
        for (n1, n2) in [(512, 0), (100, 300), (3, 1), (0, 77)] {
            let w = QuantizedWeights { sector: 3, n1, n2, bits: 9 };
            let v = 2.0 * cfg.vdd / PI * mp.reconstruct(&w).amplitude();
            assert_relative_eq!(cfg.output_power(w), v * v / (2.0 * cfg.r_opt), max_relative = 1e-12);
            assert_relative_eq!(cfg.output_voltage(w), v, max_relative = 1e-12);
        }
    }

    #[test]
    fn input_capacitance_examples() {
        let cfg = ScpaConfig::design(1.0, 1.0, 1e-12, 4, 8, 1.75e9).unwrap();
        let c_arr = cfg.array_capacitance();
        assert_eq!(cfg.input_capacitance((16, 0)), 0.0);
        assert_relative_eq!(cfg.input_capacitance((8, 0)), c_arr / 4.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.input_capacitance((8, 8)), c_arr / 2.0, max_relative = 1e-12);
        assert_eq!(cfg.input_power((0, 0)), 0.0);
    }

    #[test]
    fn input_power_scales_with_frequency() {
        let a = ScpaConfig::design(1.0, 1.0, 1e-12, 4, 8, 1.0e9).unwrap();
        let b = ScpaConfig::design(1.0, 1.0, 1e-12, 4, 8, 2.0e9).unwrap();
        assert_relative_eq!(b.input_power((5, 3)), 2.0 * a.input_power((5, 3)), max_relative = 1e-12);
        // 1 pF switched at 1.75 GHz from 1 V
        let c = ScpaConfig::design(1.0, 1.0, 1e-12 / 8.0, 4, 8, 1.75e9).unwrap();
        assert_relative_eq!(c.input_power((8, 8)), 1.75e-3, max_relative = 1e-12);
    }

    #[test]
    fn efficiency_examples() {
        let cfg = unit_cfg(16, 3.0);
        assert_eq!(cfg.drain_efficiency((512, 0)).unwrap(), 1.0);
        let eta = cfg.drain_efficiency((256, 256)).unwrap();
        let expect = 1.0 / (1.0 + PI / (12.0 * (1.0 + (PI / 8.0).cos())));
        assert_relative_eq!(eta, expect, max_relative = 1e-12);
        assert_relative_eq!(eta, 0.880, epsilon = 5e-4);
        for m in [3, 4, 8, 32] {
            let eta = unit_cfg(m, 3.0).drain_efficiency((256, 0)).unwrap();
            assert_relative_eq!(eta, 1.0 / (1.0 + PI / 12.0), max_relative = 1e-12);
            assert_relative_eq!(eta, 0.7925, epsilon = 1e-4);
        }
        assert_eq!(cfg.drain_efficiency((0, 0)), Err(Error::ZeroOutput));
        assert_eq!(cfg.drain_efficiency_composed((0, 0)), Err(Error::ZeroOutput));
    }

    #[test]
    fn network_values() {
        let cfg = ScpaConfig::design(1.4, 6.25, 4.85e-12 / 512.0, 9, 16, 1.75e9).unwrap();
        assert_relative_eq!(cfg.network_q(), 3.0, epsilon = 0.01);
        assert_relative_eq!(cfg.series_inductance(), 1.71e-9, epsilon = 0.01e-9);
        let w0 = TAU * cfg.f0;
        assert_relative_eq!(w0 * w0 * cfg.series_inductance() * cfg.array_capacitance(), 1.0, max_relative = 1e-12);

        let half_r = ScpaConfig::design(1.4, 3.125, 4.85e-12 / 512.0, 9, 16, 1.75e9).unwrap();
        assert_relative_eq!(half_r.network_q(), 2.0 * cfg.network_q(), max_relative = 1e-12);
        let half_f = ScpaConfig::design(1.4, 6.25, 4.85e-12 / 512.0, 9, 16, 0.875e9).unwrap();
        assert_relative_eq!(half_f.series_inductance(), 4.0 * cfg.series_inductance(), max_relative = 1e-12);
    }

    #[test]
    fn supplied_q_must_match_circuit() {
        let cfg = ScpaConfig::design(1.4, 6.25, 1e-14, 9, 16, 1.75e9).unwrap();
        let q = cfg.network_q();
        assert!(cfg.clone().with_q(q * (1.0 + 1e-12)).is_ok());
        assert!(matches!(cfg.clone().with_q(q * 1.01), Err(Error::QualityMismatch { .. })));
        let analysis = ScpaConfig::analysis(1.4, 6.25, q, 9, 16, 1.75e9).unwrap();
        assert_relative_eq!(analysis.unit_capacitance(), 1e-14, max_relative = 1e-12);
        assert!(ScpaConfig::design(0.0, 1.0, 1e-12, 9, 16, 1e9).is_err());
        assert!(ScpaConfig::design(1.0, 1.0, 1e-12, 9, 2, 1e9).is_err());
    }

    #[test]
    fn closed_form_matches_composition() {
        let cfg = ScpaConfig::design(1.4, 6.25, 1e-14, 6, 8, 1.75e9).unwrap();
        for n1 in 0..=64u64 {
            for n2 in 0..=(64 - n1) {
                if n1 + n2 == 0 {
                    continue;
                }
                let a = cfg.drain_efficiency((n1, n2)).unwrap();
                let b = cfg.drain_efficiency_composed((n1, n2)).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-12);
                assert!(a > 0.0 && a <= 1.0);
                let full = (n1 == 64 && n2 == 0) || (n1 == 0 && n2 == 64);
                assert_eq!(a == 1.0, full, "({n1},{n2})");
            }
        }
    }

    #[test]
    fn higher_q_raises_backoff_efficiency() {
        let lo = unit_cfg(16, 2.0);
        let hi = unit_cfg(16, 4.0);
        for (n1, n2) in [(100, 20), (5, 5), (256, 0), (0, 511)] {
            assert!(hi.drain_efficiency((n1, n2)).unwrap() > lo.drain_efficiency((n1, n2)).unwrap());
        }
    }

    #[test]
    fn curve_is_monotone_in_backoff() {
        let cfg = unit_cfg(16, 3.0);
        let amps: Vec<f64> = (0..=40).map(|i| -0.5 * i as f64).collect();
        let thetas: Vec<f64> = (0..64).map(|i| TAU * i as f64 / 64.0).collect();
        for mode in [CurveWeights::Exact, CurveWeights::Quantized(QuantMode::Rounding)] {
            let rows = efficiency_curve(&cfg, &amps, &thetas, mode, Exec::Sequential).unwrap();
            assert!(rows.windows(2).all(|w| w[1].mean_eta < w[0].mean_eta), "{mode:?}");
        }
        let rows = efficiency_curve(&cfg, &[0.0], &[0.0], CurveWeights::Exact, Exec::Sequential).unwrap();
        assert_eq!(rows[0].mean_eta, 1.0);
        assert_eq!(rows[0].pout_norm_db, 0.0);
    }

    #[test]
    fn quadrature_curve_drops_coupling_term() {
        let cfg = unit_cfg(4, 3.0);
        let theta = PI / 4.0;
        let rows = efficiency_curve(&cfg, &[-6.0], &[theta], CurveWeights::Exact, Exec::Sequential).unwrap();
        let amp = 10f64.powf(-6.0 / 20.0);
        let n = 512.0 * amp / 2f64.sqrt();
        let quad = 1.0 / (1.0 + PI * 2.0 * n * (512.0 - n) / (4.0 * 3.0 * 2.0 * n * n));
        assert_relative_eq!(rows[0].mean_eta, quad, max_relative = 1e-12);
    }
}
