//! Multiphase interpolation: splitting a complex target onto the two
//! adjacent basis phases that bracket it, quantizing the two weights to
//! cell counts, and rebuilding the complex output from a weight pair.
//!
//! Weights are expressed in cells: full scale on a single basis phase is
//! `n1 = N = 2^k`. A weight pair `(n1, n2)` in sector `m` produces
//!
//! ```text
//! v = (n1 * exp(j*phi_m) + n2 * exp(j*phi_{m+1})) / N
//! ```
//!
//! with `|v| = sqrt(n1^2 + n2^2 + 2*n1*n2*cos(2*pi/M)) / N`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest array resolution accepted by [`Interpolator`].
pub const MAX_BITS: u32 = 30;
/// Largest resolution for which full state enumeration is allowed.
pub const MAX_ENUM_BITS: u32 = 12;

/// Wraps an angle into `[0, 2*pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `a - b` wrapped into `(-pi, pi]`.
pub fn phase_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// `M` evenly spaced basis phases `phi_j = 2*pi*j/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPhaseSet {
    count: usize,
    units: Vec<Complex64>,
}

impl BasisPhaseSet {
    pub fn new(count: usize) -> Result<Self> {
        if count < 3 {
            return Err(Error::TooFewPhases(count));
        }
        let units = (0..count)
            .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / count as f64))
            .collect();
        Ok(Self { count, units })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Angle of basis phase `j` (taken modulo `M`).
    pub fn angle(&self, j: usize) -> f64 {
        TAU * (j % self.count) as f64 / self.count as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.angle(j)).collect()
    }

    pub fn unit(&self, j: usize) -> Complex64 {
        self.units[j % self.count]
    }

    /// Angular width of one sector, `2*pi/M`.
    pub fn sector_width(&self) -> f64 {
        TAU / self.count as f64
    }

    /// Sector `m` such that `phi_m <= theta < phi_{m+1}`.
    pub fn sector_of(&self, theta: f64) -> usize {
        let x = wrap_phase(theta) * self.count as f64 / TAU;
        (x.floor() as usize).min(self.count - 1)
    }

    /// Indices of the two basis phases bracketing `theta`.
    pub fn bracket(&self, theta: f64) -> (usize, usize) {
        let m = self.sector_of(theta);
        (m, (m + 1) % self.count)
    }
}

/// Desired complex output as a normalized amplitude and a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorTarget {
    amplitude: f64,
    phase: f64,
}

impl PhasorTarget {
    /// Builds a target from polar coordinates. The phase is wrapped into
    /// `[0, 2*pi)`; a zero amplitude always reports phase 0.
    pub fn polar(amplitude: f64, phase: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::NonFinite("amplitude"));
        }
        if !phase.is_finite() {
            return Err(Error::NonFinite("phase"));
        }
        if amplitude < 0.0 {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                reason: format!("must be non-negative, got {amplitude}"),
            });
        }
        let phase = if amplitude == 0.0 { 0.0 } else { wrap_phase(phase) };
        Ok(Self { amplitude, phase })
    }

    pub fn from_iq(i: f64, q: f64) -> Result<Self> {
        if !i.is_finite() || !q.is_finite() {
            return Err(Error::NonFinite("iq"));
        }
        Self::polar(i.hypot(q), q.atan2(i))
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::from_iq(z.re, z.im)
    }

    pub fn zero() -> Self {
        Self { amplitude: 0.0, phase: 0.0 }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn iq(&self) -> (f64, f64) {
        let z = self.to_complex();
        (z.re, z.im)
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Real-valued weights on the phase pair `(phi_m, phi_{m+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseWeights {
    pub sector: usize,
    pub n1: f64,
    pub n2: f64,
    pub full_scale: f64,
}

/// Integer cell counts on the phase pair `(phi_m, phi_{m+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedWeights {
    pub sector: usize,
    pub n1: u64,
    pub n2: u64,
    pub bits: u32,
}

impl QuantizedWeights {
    pub fn full_scale(&self) -> u64 {
        1u64 << self.bits
    }

    /// Cells held at ground.
    pub fn grounded(&self) -> u64 {
        self.full_scale() - self.n1 - self.n2
    }

    pub fn is_off(&self) -> bool {
        self.n1 == 0 && self.n2 == 0
    }
}

/// How real weights are mapped to integer cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantMode {
    /// Round each weight independently, keeping `n1 + n2 <= N`.
    #[default]
    Rounding,
    /// Nearest reachable state in the sector (Euclidean distance).
    Exhaustive,
}

impl std::str::FromStr for QuantMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rounding" => Ok(QuantMode::Rounding),
            "exhaustive" => Ok(QuantMode::Exhaustive),
            other => Err(Error::InvalidParameter {
                name: "quant-mode",
                reason: format!("expected `rounding` or `exhaustive`, got `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for QuantMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuantMode::Rounding => "rounding",
            QuantMode::Exhaustive => "exhaustive",
        })
    }
}

/// One reachable state of a sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub n1: u64,
    pub n2: u64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Normalized amplitude of the weight pair, `sqrt(n1^2 + n2^2 + 2 n1 n2 cos(2pi/M)) / N`.
pub fn pair_amplitude(n1: f64, n2: f64, cos_step: f64, full_scale: f64) -> f64 {
    (n1 * n1 + n2 * n2 + 2.0 * n1 * n2 * cos_step).max(0.0).sqrt() / full_scale
}

/// A multiphase array: `M` basis phases driving `N = 2^k` unit cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolator {
    phases: BasisPhaseSet,
    bits: u32,
    cos_step: f64,
    sin_step: f64,
}

impl Interpolator {
    pub fn new(phase_count: usize, bits: u32) -> Result<Self> {
        Self::with_phases(BasisPhaseSet::new(phase_count)?, bits)
    }

    pub fn with_phases(phases: BasisPhaseSet, bits: u32) -> Result<Self> {
        if bits > MAX_BITS {
            return Err(Error::BitsOutOfRange { bits, max: MAX_BITS });
        }
        let step = phases.sector_width();
        Ok(Self {
            phases,
            bits,
            cos_step: step.cos(),
            sin_step: step.sin(),
        })
    }

    pub fn phases(&self) -> &BasisPhaseSet {
        &self.phases
    }

    pub fn phase_count(&self) -> usize {
        self.phases.count()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn full_scale(&self) -> u64 {
        1u64 << self.bits
    }

    /// `cos(2*pi/M)`, the coupling term between adjacent phases.
    pub fn cos_step(&self) -> f64 {
        self.cos_step
    }

    /// Real weights placing `target` in the sector that contains its phase.
    pub fn decompose_exact(&self, target: &PhasorTarget) -> Result<PhaseWeights> {
        let a = target.amplitude();
        if a > 1.0 {
            return Err(Error::AmplitudeOverRange(a));
        }
        let full = self.full_scale() as f64;
        if a == 0.0 {
            return Ok(PhaseWeights { sector: 0, n1: 0.0, n2: 0.0, full_scale: full });
        }
        let m = self.phases.sector_of(target.phase());
        let (i, q) = target.iq();
        let lo = self.phases.unit(m);
        let hi = self.phases.unit(m + 1);
        let scale = full / self.sin_step;
        let n1 = (i * hi.im - q * hi.re) * scale;
        let n2 = (-i * lo.im + q * lo.re) * scale;
        Ok(PhaseWeights { sector: m, n1: n1.max(0.0), n2: n2.max(0.0), full_scale: full })
    }

    fn combine(&self, sector: usize, n1: f64, n2: f64, full: f64) -> PhasorTarget {
        let amplitude = pair_amplitude(n1, n2, self.cos_step, full);
        if amplitude == 0.0 {
            return PhasorTarget::zero();
        }
        let z = self.phases.unit(sector) * n1 + self.phases.unit(sector + 1) * n2;
        PhasorTarget { amplitude, phase: wrap_phase(z.im.atan2(z.re)) }
    }

    pub fn reconstruct_exact(&self, w: &PhaseWeights) -> PhasorTarget {
        self.combine(w.sector, w.n1, w.n2, w.full_scale)
    }

    pub fn reconstruct(&self, w: &QuantizedWeights) -> PhasorTarget {
        self.combine(w.sector, w.n1 as f64, w.n2 as f64, w.full_scale() as f64)
    }

    /// Complex output of an integer state, normalized to full scale.
    pub fn output(&self, w: &QuantizedWeights) -> Complex64 {
        let full = w.full_scale() as f64;
        (self.phases.unit(w.sector) * w.n1 as f64 + self.phases.unit(w.sector + 1) * w.n2 as f64)
            / full
    }

    pub fn quantize(&self, w: &PhaseWeights, mode: QuantMode) -> QuantizedWeights {
        match mode {
            QuantMode::Rounding => self.quantize_rounding(w),
            QuantMode::Exhaustive => self.quantize_nearest(w),
        }
    }

    fn quantize_rounding(&self, w: &PhaseWeights) -> QuantizedWeights {
        let full = self.full_scale() as f64;
        let mut a = w.n1.max(0.0);
        let mut b = w.n2.max(0.0);
        // Targets outside the reachable triangle are pulled back onto the
        // n1 + n2 = N edge along the same direction.
        let sum = a + b;
        if sum > full {
            a *= full / sum;
            b = full - a;
        }
        let mut q1 = a.round();
        let mut q2 = b.round();
        if q1 + q2 > full {
            if q1 - a >= q2 - b {
                q1 -= 1.0;
            } else {
                q2 -= 1.0;
            }
        }
        QuantizedWeights { sector: w.sector, n1: q1 as u64, n2: q2 as u64, bits: self.bits }
    }

    fn quantize_nearest(&self, w: &PhaseWeights) -> QuantizedWeights {
        let n = self.full_scale();
        let lo = self.phases.unit(w.sector);
        let hi = self.phases.unit(w.sector + 1);
        let target = lo * w.n1 + hi * w.n2;
        let mut best = (f64::INFINITY, 0u64, 0u64);
        for n1 in 0..=n {
            let rest = target - lo * n1 as f64;
            // distance is a convex quadratic in n2; the integer optimum sits
            // next to the continuous one
            let cont = (hi.conj() * rest).re;
            let limit = (n - n1) as f64;
            let floor = cont.floor().clamp(0.0, limit);
            let ceil = cont.ceil().clamp(0.0, limit);
            for n2f in [floor, ceil] {
                let d = (rest - hi * n2f).norm_sqr();
                let n2 = n2f as u64;
                let better = d < best.0
                    || (d == best.0
                        && (n1 + n2 < best.1 + best.2
                            || (n1 + n2 == best.1 + best.2 && n1 < best.1)));
                if better {
                    best = (d, n1, n2);
                }
            }
        }
        QuantizedWeights { sector: w.sector, n1: best.1, n2: best.2, bits: self.bits }
    }

    /// Decompose, quantize, and rebuild in one step.
    pub fn realize(&self, target: &PhasorTarget, mode: QuantMode) -> Result<(QuantizedWeights, PhasorTarget)> {
        let q = self.quantize(&self.decompose_exact(target)?, mode);
        Ok((q, self.reconstruct(&q)))
    }

    /// Every integer state of `sector`, ordered by `n1 + n2` and then by
    /// decreasing `n1`. There are `(N+1)(N+2)/2` of them.
    pub fn enumerate_states(&self, sector: usize) -> Result<Vec<StatePoint>> {
        if self.bits > MAX_ENUM_BITS {
            return Err(Error::BitsOutOfRange { bits: self.bits, max: MAX_ENUM_BITS });
        }
        if sector >= self.phase_count() {
            return Err(Error::SectorOutOfRange { sector, phases: self.phase_count() });
        }
        let n = self.full_scale();
        let mut out = Vec::with_capacity(((n + 1) * (n + 2) / 2) as usize);
        for sum in 0..=n {
            for n1 in (0..=sum).rev() {
                let w = QuantizedWeights { sector, n1, n2: sum - n1, bits: self.bits };
                let t = self.reconstruct(&w);
                out.push(StatePoint { n1, n2: w.n2, amplitude: t.amplitude(), phase: t.phase() });
            }
        }
        Ok(out)
    }
}
