//! Resolution analysis of an ideal MP-SCPA: RMS phase and amplitude error
//! over the output range, constant-amplitude state maps, and the peak
//! power penalty of interpolating between a finite set of phases.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mp::{phase_diff, Interpolator, PhasorTarget, QuantMode};

/// Default phase samples per amplitude point.
pub const DEFAULT_PHASE_SAMPLES: usize = 4096;
/// Default relative tolerance for a state to sit on a contour.
pub const CONTOUR_TOLERANCE: f64 = 0.01;
/// Largest resolution accepted by [`contour_map`].
pub const MAX_CONTOUR_BITS: u32 = 8;
/// Column names of the error sweep CSV.
pub const SWEEP_HEADER: [&str; 5] = ["M", "k", "amp_dbfs", "rms_phase_err_deg", "rms_amp_err_db"];

/// `0, -step, -2 step, ...` down to `floor_db` inclusive.
pub fn dbfs_grid(floor_db: f64, step_db: f64) -> Vec<f64> {
    let n = (-floor_db / step_db).round() as usize;
    (0..=n).map(|i| 0.0 - i as f64 * step_db).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSweepSpec {
    pub phases: Vec<usize>,
    pub bits: Vec<u32>,
    pub amps_dbfs: Vec<f64>,
    pub phase_samples: usize,
    pub mode: QuantMode,
}

impl ErrorSweepSpec {
    /// 0 to -40 dBFS in 0.25 dB steps, 4096 phases, rounding quantizer.
    pub fn new(phases: Vec<usize>, bits: Vec<u32>) -> Self {
        Self {
            phases,
            bits,
            amps_dbfs: dbfs_grid(-40.0, 0.25),
            phase_samples: DEFAULT_PHASE_SAMPLES,
            mode: QuantMode::Rounding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name| Err(Error::InvalidParameter { name, reason: "empty list".into() });
        if self.phases.is_empty() {
            return empty("phases");
        }
        if self.bits.is_empty() {
            return empty("bits");
        }
        if self.amps_dbfs.is_empty() {
            return empty("amps_dbfs");
        }
        if self.phase_samples == 0 {
            return Err(Error::InvalidParameter { name: "phase_samples", reason: "must be positive".into() });
        }
        if let Some(a) = self.amps_dbfs.iter().find(|a| !a.is_finite() || **a > 0.0) {
            return Err(Error::InvalidParameter { name: "amps_dbfs", reason: format!("{a} is above full scale") });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub phases: usize,
    pub bits: u32,
    pub amp_dbfs: f64,
    pub rms_phase_err_deg: f64,
    pub rms_amp_err_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSweepResult {
    pub rows: Vec<ErrorRow>,
}

impl ErrorSweepResult {
    /// Rows of one `(M, k)` curve, in amplitude-grid order.
    pub fn curve(&self, phases: usize, bits: u32) -> Vec<ErrorRow> {
        self.rows.iter().copied().filter(|r| r.phases == phases && r.bits == bits).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.phases.to_string(),
                r.bits.to_string(),
                r.amp_dbfs.to_string(),
                r.rms_phase_err_deg.to_string(),
                r.rms_amp_err_db.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// RMS phase error (degrees) and RMS amplitude error (dB re full scale)
/// of one grid cell.
pub fn cell_error(mp: &Interpolator, amp: f64, phase_samples: usize, mode: QuantMode) -> Result<(f64, f64)> {
    let mut phase_sq = 0.0;
    let mut amp_sq = 0.0;
    for i in 0..phase_samples {
        let theta = TAU * i as f64 / phase_samples as f64;
        let target = PhasorTarget::polar(amp, theta)?;
        let (_, got) = mp.realize(&target, mode)?;
        let dp = phase_diff(got.phase(), target.phase());
        let da = got.amplitude() - amp;
        phase_sq += dp * dp;
        amp_sq += da * da;
    }
    let n = phase_samples as f64;
    let phase_deg = (phase_sq / n).sqrt().to_degrees();
    let amp_db = 20.0 * (amp_sq / n).sqrt().max(f64::MIN_POSITIVE).log10();
    Ok((phase_deg, amp_db))
}

/// Decompose, quantize and rebuild every `(M, k, amplitude, phase)` point
/// of `spec`. Rows come out in `M`, `k`, amplitude order.
pub fn rms_error_sweep(spec: &ErrorSweepSpec, exec: Exec) -> Result<ErrorSweepResult> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &m in &spec.phases {
        for &k in &spec.bits {
            let mp = Interpolator::new(m, k)?;
            for &db in &spec.amps_dbfs {
                cells.push((mp.clone(), db));
            }
        }
    }
    let rows = exec.map(&cells, |(mp, db)| -> Result<ErrorRow> {
        let (p, a) = cell_error(mp, 10f64.powf(db / 20.0), spec.phase_samples, spec.mode)?;
        Ok(ErrorRow {
            phases: mp.phase_count(),
            bits: mp.bits(),
            amp_dbfs: *db,
            rms_phase_err_deg: p,
            rms_amp_err_db: a,
        })
    });
    Ok(ErrorSweepResult { rows: rows.into_iter().collect::<Result<_>>()? })
}

/// Lowest amplitude (dBFS) above which the curve's RMS phase error stays
/// at or below `threshold_deg`, interpolated linearly in
/// `(dBFS, log10 error)`. `None` if the curve never gets below the
/// threshold or never exceeds it.
pub fn phase_error_crossing(curve: &[ErrorRow], threshold_deg: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|r| (r.amp_dbfs, r.rms_phase_err_deg)).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    if pts.first()?.1 > threshold_deg {
        return None;
    }
    let idx = pts.iter().position(|p| p.1 > threshold_deg)?;
    let (hi_db, hi_err) = pts[idx - 1];
    let (lo_db, lo_err) = pts[idx];
    let (lt, lh, ll) = (threshold_deg.log10(), hi_err.max(1e-300).log10(), lo_err.log10());
    Some(lo_db + (hi_db - lo_db) * (ll - lt) / (ll - lh))
}

/// Worst-case full-envelope power penalty against a polar transmitter:
/// a target midway between two phases is only reachable at `cos(pi/M)`.
pub fn peak_power_drop(phases: usize) -> Result<f64> {
    if phases < 3 {
        return Err(Error::TooFewPhases(phases));
    }
    Ok(-20.0 * (PI / phases as f64).cos().log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub sector: usize,
    pub n1: u64,
    pub n2: u64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourLevel {
    pub level: f64,
    pub points: Vec<ContourPoint>,
}

/// States on each constant-amplitude contour around the full circle.
///
/// A state is on the contour when `|A - level| <= tolerance * level`; the
/// zero level therefore only holds the off state. States on a basis phase
/// are listed once, under the sector they start (`n2 = 0`).
pub fn contour_map(phases: usize, bits: u32, levels: &[f64], tolerance: f64) -> Result<Vec<ContourLevel>> {
    if bits > MAX_CONTOUR_BITS {
        return Err(Error::BitsOutOfRange { bits, max: MAX_CONTOUR_BITS });
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidParameter { name: "levels", reason: format!("{l} outside [0, 1]") });
    }
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter { name: "tolerance", reason: format!("{tolerance}") });
    }
    let mp = Interpolator::new(phases, bits)?;
    let mut states = Vec::new();
    for sector in 0..phases {
        for s in mp.enumerate_states(sector)? {
            let duplicate = s.n1 == 0 && (s.n2 > 0 || sector > 0);
            if !duplicate {
                states.push(ContourPoint { sector, n1: s.n1, n2: s.n2, amplitude: s.amplitude, phase: s.phase });
            }
        }
    }
    Ok(levels
        .iter()
        .map(|&level| ContourLevel {
            level,
            points: states
                .iter()
                .copied()
                .filter(|p| (p.amplitude - level).abs() <= tolerance * level)
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_helper() {
        let g = dbfs_grid(-40.0, 0.25);
        assert_eq!(g.len(), 161);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), -40.0);
    }

    #[test]
    fn peak_power_drop_values() {
        assert_relative_eq!(peak_power_drop(4).unwrap(), 3.0103, epsilon = 1e-4);
        assert_relative_eq!(peak_power_drop(16).unwrap(), 0.1685, epsilon = 1e-4);
        let mut prev = f64::INFINITY;
        for m in 3..200 {
            let d = peak_power_drop(m).unwrap();
            assert!(d < prev && d > 0.0);
            prev = d;
        }
        assert!(peak_power_drop(1 << 20).unwrap() < 1e-9);
        assert!(peak_power_drop(2).is_err());
    }

    #[test]
    fn empty_lists_are_rejected() {
        let spec = ErrorSweepSpec::new(vec![], vec![9]);
        assert!(rms_error_sweep(&spec, Exec::Sequential).is_err());
        let spec = ErrorSweepSpec::new(vec![4], vec![]);
        assert!(rms_error_sweep(&spec, Exec::Sequential).is_err());
    }

    #[test]
    fn sweep_is_deterministic_across_policies() {
        let mut spec = ErrorSweepSpec::new(vec![4, 16], vec![5, 7]);
        spec.amps_dbfs = dbfs_grid(-20.0, 2.0);
        spec.phase_samples = 256;
        let a = rms_error_sweep(&spec, Exec::Sequential).unwrap();
        let b = rms_error_sweep(&spec, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with("M,k,amp_dbfs,rms_phase_err_deg,rms_amp_err_db\n"));
        assert!(a.rows.iter().all(|r| r.rms_phase_err_deg >= 0.0 && r.rms_amp_err_db.is_finite()));
    }

    #[test]
    fn errors_shrink_with_resolution() {
        let spec = ErrorSweepSpec::new(vec![16], (6..=10).collect());
        let res = rms_error_sweep(&spec, Exec::default()).unwrap();
        let mut violations = 0;
        let mut total = 0;
        for k in 6..10 {
            let lo = res.curve(16, k);
            let hi = res.curve(16, k + 1);
            for (a, b) in lo.iter().zip(&hi) {
                total += 2;
                violations += usize::from(b.rms_phase_err_deg > a.rms_phase_err_deg);
                violations += usize::from(b.rms_amp_err_db > a.rms_amp_err_db);
            }
        }
        assert!(violations as f64 <= 0.01 * total as f64, "{violations}/{total}");
        let mean = |k: u32| res.curve(16, k).iter().map(|r| r.rms_phase_err_deg).sum::<f64>();
        for k in 6..10 {
            assert!(mean(k + 1) < 0.75 * mean(k));
        }
    }

    #[test]
    fn crossing_interpolates() {
        let row = |db: f64, e: f64| ErrorRow { phases: 4, bits: 9, amp_dbfs: db, rms_phase_err_deg: e, rms_amp_err_db: 0.0 };
        let curve = vec![row(0.0, 0.1), row(-10.0, 1.0), row(-20.0, 10.0)];
        assert_relative_eq!(phase_error_crossing(&curve, 1.0).unwrap(), -10.0, epsilon = 1e-12);
        assert_relative_eq!(phase_error_crossing(&curve, 10f64.sqrt()).unwrap(), -15.0, epsilon = 1e-9);
        assert_eq!(phase_error_crossing(&curve, 0.01), None);
        assert_eq!(phase_error_crossing(&curve, 100.0), None);
    }

    #[test]
    fn contour_examples() {
        let levels = [1.0, 0.25, 0.5, 0.125, 0.0];
        let map = contour_map(4, 3, &levels, CONTOUR_TOLERANCE).unwrap();
        let zero = &map[4].points;
        assert_eq!(zero.len(), 1);
        assert_eq!((zero[0].n1, zero[0].n2), (0, 0));

        let unit = &map[0].points;
        let in_first: Vec<_> = unit.iter().filter(|p| p.phase <= PI / 2.0 + 1e-12).collect();
        assert_eq!(in_first.len(), 2);
        assert!(unit.iter().all(|p| p.n2 == 0 && p.n1 == 8));
        assert_eq!(unit.len(), 4);

        assert!(contour_map(4, 9, &levels, 0.01).is_err());
        assert!(contour_map(4, 3, &[1.5], 0.01).is_err());
    }

    #[test]
    fn more_phases_give_denser_contours() {
        let density = |m: usize| {
            let map = contour_map(m, 3, &[0.25], CONTOUR_TOLERANCE).unwrap();
            map[0].points.len() as f64 / TAU
        };
        assert!(density(8) >= density(4));
    }
}
