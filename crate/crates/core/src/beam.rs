//! Uniform linear array synthesis from per-element complex gains.
//!
//! Elements are isotropic; element `i` sits at `i * d` wavelengths along
//! the array axis. A beam steered to `theta_s` (from broadside) gives
//! element `i` the progressive phase `-2 pi d i sin(theta_s)`, and the
//! far-field pattern is
//!
//! ```text
//! AF(theta) = sum_i g_i exp(j 2 pi d i sin(theta)) / sum_i taper_i
//! ```
//!
//! so that the ideal uniformly tapered array peaks at exactly 1.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mp::{wrap_phase, Interpolator, PhasorTarget, QuantMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub elements: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self { elements: 4, spacing: 0.5 }
    }
}

impl ArrayGeometry {
    pub fn new(elements: usize, spacing: f64) -> Result<Self> {
        let g = Self { elements, spacing };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements == 0 {
            return Err(Error::InvalidParameter { name: "elements", reason: "need at least one element".into() });
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidParameter { name: "spacing", reason: format!("{}", self.spacing) });
        }
        Ok(())
    }

    /// Element positions in wavelengths.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.elements).map(|i| i as f64 * self.spacing).collect()
    }
}

/// Measured realized phase/amplitude versus phase code for each element.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTable {
    /// Codes per full turn of the phase code.
    pub codes_per_turn: u32,
    /// Per element: rows of `(phase_code, realized_phase_deg, realized_amp_db)` sorted by code.
    pub rows: Vec<Vec<(u32, f64, f64)>>,
    /// Static phase offset (degrees) subtracted from each element's realized phase.
    pub calibration_deg: Vec<f64>,
}

/// CSV header of the measured table input.
pub const MEASURED_HEADER: [&str; 4] = ["element", "phase_code", "realized_phase_deg", "realized_amp_db"];

impl MeasuredTable {
    pub fn new(codes_per_turn: u32, mut rows: Vec<Vec<(u32, f64, f64)>>) -> Result<Self> {
        if codes_per_turn == 0 {
            return Err(Error::InvalidParameter { name: "codes_per_turn", reason: "must be positive".into() });
        }
        for (e, r) in rows.iter_mut().enumerate() {
            r.sort_by_key(|x| x.0);
            if r.is_empty() {
                return Err(Error::InvalidParameter { name: "measured table", reason: format!("element {e} has no rows") });
            }
            if r.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter { name: "measured table", reason: format!("element {e} repeats a code") });
            }
            if r.iter().any(|x| x.0 >= codes_per_turn || !x.1.is_finite() || !x.2.is_finite()) {
                return Err(Error::InvalidParameter { name: "measured table", reason: format!("element {e} has an invalid row") });
            }
        }
        let n = rows.len();
        Ok(Self { codes_per_turn, rows, calibration_deg: vec![0.0; n] })
    }

    /// Reads `element,phase_code,realized_phase_deg,realized_amp_db` rows.
    pub fn read_csv<R: Read>(input: R, codes_per_turn: u32) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != MEASURED_HEADER {
            return Err(Error::Parse { line: 1, reason: format!("unexpected header {:?}", headers) });
        }
        let mut rows: Vec<Vec<(u32, f64, f64)>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |j: usize| rec.get(j).unwrap_or("").trim().to_owned();
            let bad = |what: &str| Error::Parse { line, reason: format!("bad {what}") };
            let element: usize = field(0).parse().map_err(|_| bad("element"))?;
            let code: u32 = field(1).parse().map_err(|_| bad("phase_code"))?;
            let phase: f64 = field(2).parse().map_err(|_| bad("realized_phase_deg"))?;
            let amp: f64 = field(3).parse().map_err(|_| bad("realized_amp_db"))?;
            if rows.len() <= element {
                rows.resize(element + 1, Vec::new());
            }
            rows[element].push((code, phase, amp));
        }
        Self::new(codes_per_turn, rows)
    }

    pub fn with_calibration(mut self, offsets_deg: Vec<f64>) -> Result<Self> {
        if offsets_deg.len() != self.rows.len() {
            return Err(Error::InvalidParameter {
                name: "calibration",
                reason: format!("{} offsets for {} elements", offsets_deg.len(), self.rows.len()),
            });
        }
        self.calibration_deg = offsets_deg;
        Ok(self)
    }

    /// Mean realized-minus-ideal phase of each element, i.e. the static
    /// offset an off-line calibration would remove.
    pub fn static_offsets(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|rows| {
                let sum: f64 = rows
                    .iter()
                    .map(|&(code, ph, _)| {
                        let ideal = 360.0 * code as f64 / self.codes_per_turn as f64;
                        crate::mp::phase_diff(ph.to_radians(), ideal.to_radians()).to_degrees()
                    })
                    .sum();
                sum / rows.len() as f64
            })
            .collect()
    }

    /// Realized `(phase rad, linear amplitude)` at a fractional code.
    pub fn lookup(&self, element: usize, code: f64) -> Result<(f64, f64)> {
        let rows = self.rows.get(element).ok_or(Error::TableCoverage { element, code })?;
        let cpt = self.codes_per_turn as f64;
        let first = rows[0];
        let last = rows[rows.len() - 1];
        let (a, b, frac) = if code >= first.0 as f64 && code <= last.0 as f64 {
            let j = rows.partition_point(|r| (r.0 as f64) <= code);
            if j == rows.len() {
                (last, last, 0.0)
            } else {
                let a = rows[j - 1];
                let b = rows[j];
                (a, b, (code - a.0 as f64) / (b.0 - a.0) as f64)
            }
        } else if first.0 == 0 && last.0 == self.codes_per_turn - 1 && code > last.0 as f64 && code < cpt {
            // full-turn table: wrap from the last code back to code 0
            (last, first, (code - last.0 as f64) / (cpt - last.0 as f64))
        } else {
            return Err(Error::TableCoverage { element, code });
        };
        let pa = a.1.to_radians();
        let pb = pa + crate::mp::phase_diff(b.1.to_radians(), pa);
        let phase = pa + frac * (pb - pa) - self.calibration_deg[element].to_radians();
        let amp_db = a.2 + frac * (b.2 - a.2);
        Ok((wrap_phase(phase), 10f64.powf(amp_db / 20.0)))
    }
}

/// How a commanded element weight turns into a realized gain.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementModel {
    Ideal,
    Quantized { interpolator: Interpolator, mode: QuantMode },
    Measured(MeasuredTable),
}

impl ElementModel {
    pub fn quantized(phases: usize, bits: u32) -> Result<Self> {
        Ok(ElementModel::Quantized { interpolator: Interpolator::new(phases, bits)?, mode: QuantMode::Rounding })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamScenario {
    pub geometry: ArrayGeometry,
    /// Steering angle from broadside, radians.
    pub steer: f64,
    pub taper: Vec<f64>,
    pub model: ElementModel,
}

impl BeamScenario {
    /// Uniform taper.
    pub fn uniform(geometry: ArrayGeometry, steer: f64, model: ElementModel) -> Result<Self> {
        let s = Self { geometry, steer, taper: vec![1.0; geometry.elements], model };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.steer.abs() < FRAC_PI_2) {
            return Err(Error::InvalidParameter { name: "steer", reason: "must be strictly inside +-90 degrees".into() });
        }
        if self.taper.len() != self.geometry.elements {
            return Err(Error::InvalidParameter {
                name: "taper",
                reason: format!("{} amplitudes for {} elements", self.taper.len(), self.geometry.elements),
            });
        }
        if let Some(t) = self.taper.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidParameter { name: "taper", reason: format!("{t} outside [0, 1]") });
        }
        Ok(())
    }

    /// Peak of the ideal pattern, used to normalize every pattern.
    pub fn ideal_peak(&self) -> f64 {
        self.taper.iter().sum()
    }

    pub fn with_steer(&self, steer: f64) -> Result<Self> {
        let mut s = self.clone();
        s.steer = steer;
        s.validate()?;
        Ok(s)
    }
}

/// Progressive-phase steering weights.
pub fn steering_weights(scenario: &BeamScenario) -> Result<Vec<PhasorTarget>> {
    scenario.validate()?;
    let step = -TAU * scenario.geometry.spacing * scenario.steer.sin();
    scenario
        .taper
        .iter()
        .enumerate()
        .map(|(i, &a)| PhasorTarget::polar(a, step * i as f64))
        .collect()
}

/// Realized complex gain of each element.
pub fn apply_element_model(weights: &[PhasorTarget], model: &ElementModel) -> Result<Vec<Complex64>> {
    match model {
        ElementModel::Ideal => Ok(weights.iter().map(PhasorTarget::to_complex).collect()),
        ElementModel::Quantized { interpolator, mode } => weights
            .iter()
            .map(|w| interpolator.realize(w, *mode).map(|(_, t)| t.to_complex()))
            .collect(),
        ElementModel::Measured(table) => weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let code = w.phase() / TAU * table.codes_per_turn as f64;
                let (phase, gain) = table.lookup(i, code)?;
                Ok(Complex64::from_polar(w.amplitude() * gain, phase))
            })
            .collect(),
    }
}

/// Sampled far-field pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayPattern {
    pub angles: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ArrayPattern {
    /// Writes `theta_deg,mag_db,phase_deg` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta_deg", "mag_db", "phase_deg"])?;
        for (a, v) in self.angles.iter().zip(&self.values) {
            let mag_db = 20.0 * v.norm().max(f64::MIN_POSITIVE).log10();
            let phase = v.im.atan2(v.re).to_degrees();
            w.write_record([a.to_degrees().to_string(), mag_db.to_string(), phase.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn index_of(&self, angle: f64) -> Option<usize> {
        self.angles.iter().position(|a| (a - angle).abs() <= 1e-12)
    }
}

/// Evaluates the array factor over `angles`, normalized by `peak`.
pub fn array_factor(gains: &[Complex64], geometry: &ArrayGeometry, angles: &[f64], peak: f64) -> Result<ArrayPattern> {
    geometry.validate()?;
    if gains.len() != geometry.elements {
        return Err(Error::InvalidParameter {
            name: "gains",
            reason: format!("{} gains for {} elements", gains.len(), geometry.elements),
        });
    }
    if let Some(a) = angles.iter().find(|a| !(a.abs() < FRAC_PI_2)) {
        return Err(Error::InvalidParameter { name: "angles", reason: format!("{a} outside (-pi/2, pi/2)") });
    }
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter { name: "peak", reason: format!("{peak}") });
    }
    let positions = geometry.positions();
    let values = angles
        .iter()
        .map(|&theta| {
            let s = theta.sin();
            gains
                .iter()
                .zip(&positions)
                .map(|(g, x)| g * Complex64::from_polar(1.0, TAU * x * s))
                .sum::<Complex64>()
                / peak
        })
        .collect();
    Ok(ArrayPattern { angles: angles.to_vec(), values })
}

/// Pattern of a scenario on an angle grid, realized through its element model.
pub fn scenario_pattern(scenario: &BeamScenario, angles: &[f64]) -> Result<ArrayPattern> {
    let gains = apply_element_model(&steering_weights(scenario)?, &scenario.model)?;
    array_factor(&gains, &scenario.geometry, angles, scenario.ideal_peak())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamErrors {
    pub rms_phase_err_deg: f64,
    pub rms_amp_err_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringError {
    pub steer: f64,
    pub phase_err_deg: f64,
    pub amp_err_db: f64,
}

/// Main-beam phase and gain error of realized against ideal patterns,
/// one pattern pair per steering angle, read at the steered direction.
pub fn beam_error_metrics(
    realized: &[ArrayPattern],
    ideal: &[ArrayPattern],
    steering: &[f64],
) -> Result<(BeamErrors, Vec<SteeringError>)> {
    if realized.len() != steering.len() || ideal.len() != steering.len() || steering.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} realized and {} ideal patterns for {} steering angles",
            realized.len(),
            ideal.len(),
            steering.len()
        )));
    }
    let mut per = Vec::with_capacity(steering.len());
    for ((r, i), &steer) in realized.iter().zip(ideal).zip(steering) {
        if r.angles != i.angles {
            return Err(Error::GridMismatch("realized and ideal angle grids differ".into()));
        }
        let j = r
            .index_of(steer)
            .ok_or_else(|| Error::GridMismatch(format!("steering angle {steer} not on the grid")))?;
        let ratio = r.values[j] / i.values[j];
        per.push(SteeringError {
            steer,
            phase_err_deg: ratio.im.atan2(ratio.re).to_degrees(),
            amp_err_db: 20.0 * ratio.norm().log10(),
        });
    }
    let n = per.len() as f64;
    let errs = BeamErrors {
        rms_phase_err_deg: (per.iter().map(|e| e.phase_err_deg.powi(2)).sum::<f64>() / n).sqrt(),
        rms_amp_err_db: (per.iter().map(|e| e.amp_err_db.powi(2)).sum::<f64>() / n).sqrt(),
    };
    Ok((errs, per))
}

/// Steers `scenario` over `steering` and compares its realized main beam
/// with the same array built from ideal elements.
pub fn steering_sweep(scenario: &BeamScenario, steering: &[f64], exec: Exec) -> Result<(BeamErrors, Vec<SteeringError>)> {
    let pairs = exec.map(steering, |&s| -> Result<(ArrayPattern, ArrayPattern)> {
        let sc = scenario.with_steer(s)?;
        let mut ideal = sc.clone();
        ideal.model = ElementModel::Ideal;
        Ok((scenario_pattern(&sc, &[s])?, scenario_pattern(&ideal, &[s])?))
    });
    let (realized, ideal): (Vec<_>, Vec<_>) = pairs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    beam_error_metrics(&realized, &ideal, steering)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(lo_deg: f64, hi_deg: f64, step: f64) -> Vec<f64> {
        let n = ((hi_deg - lo_deg) / step).round() as usize;
        (0..=n).map(|i| (lo_deg + i as f64 * step).to_radians()).collect()
    }

    #[test]
    fn steering_examples() {
        let g = ArrayGeometry::default();
        let w = steering_weights(&BeamScenario::uniform(g, 0.0, ElementModel::Ideal).unwrap()).unwrap();
        assert!(w.iter().all(|t| t.phase() == 0.0));
        let w = steering_weights(&BeamScenario::uniform(g, 30f64.to_radians(), ElementModel::Ideal).unwrap()).unwrap();
        for (i, t) in w.iter().enumerate() {
            let expect = wrap_phase(-FRAC_PI_2 * i as f64);
            assert!(crate::mp::phase_diff(t.phase(), expect).abs() < 1e-12);
        }
        assert!(BeamScenario::uniform(g, FRAC_PI_2, ElementModel::Ideal).is_err());
    }

    #[test]
    fn broadside_nulls_and_sidelobes() {
        let g = ArrayGeometry::default();
        let gains = vec![Complex64::new(1.0, 0.0); 4];
        let p = array_factor(&gains, &g, &[0.0, 30f64.to_radians(), -30f64.to_radians()], 4.0).unwrap();
        assert_relative_eq!(p.values[0].norm(), 1.0, max_relative = 1e-12);
        assert!(p.values[1].norm() < 1e-12 && p.values[2].norm() < 1e-12);

        let fine = grid(30.0, 89.9, 0.01);
        let p = array_factor(&gains, &g, &fine, 4.0).unwrap();
        let side = p.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert_relative_eq!(20.0 * side.log10(), -11.3, epsilon = 0.05);
    }

    #[test]
    fn single_element_is_isotropic() {
        let g = ArrayGeometry::new(1, 0.5).unwrap();
        let p = array_factor(&[Complex64::new(1.0, 0.0)], &g, &grid(-80.0, 80.0, 5.0), 1.0).unwrap();
        assert!(p.values.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pattern_bounded_and_peaks_at_steer() {
        let g = ArrayGeometry::default();
        let steer = 20f64.to_radians();
        let sc = BeamScenario::uniform(g, steer, ElementModel::Ideal).unwrap();
        let angles = grid(-89.0, 89.0, 0.5);
        let p = scenario_pattern(&sc, &angles).unwrap();
        let peak = scenario_pattern(&sc, &[steer]).unwrap().values[0];
        assert_relative_eq!(peak.norm(), 1.0, max_relative = 1e-12);
        assert!(p.values.iter().all(|v| v.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn steering_reciprocity() {
        let g = ArrayGeometry::new(5, 0.5).unwrap();
        let angles = grid(-80.0, 80.0, 1.0);
        let mirrored: Vec<f64> = angles.iter().map(|a| -a).collect();
        let plus = scenario_pattern(&BeamScenario::uniform(g, 0.4, ElementModel::Ideal).unwrap(), &angles).unwrap();
        let minus = scenario_pattern(&BeamScenario::uniform(g, -0.4, ElementModel::Ideal).unwrap(), &mirrored).unwrap();
        for (a, b) in plus.values.iter().zip(&minus.values) {
            assert_relative_eq!(a.norm(), b.norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn quantized_elements_track_targets() {
        let model = ElementModel::quantized(16, 9).unwrap();
        let weights: Vec<PhasorTarget> =
            (0..512).map(|c| PhasorTarget::polar(1.0, TAU * c as f64 / 512.0).unwrap()).collect();
        let gains = apply_element_model(&weights, &model).unwrap();
        let mut amps_db = Vec::new();
        for (w, g) in weights.iter().zip(&gains) {
            let err = crate::mp::phase_diff(g.im.atan2(g.re), w.phase()).to_degrees();
            assert!(err.abs() <= 1.0, "{err}");
            amps_db.push(20.0 * g.norm().log10());
        }
        let ripple = amps_db.iter().cloned().fold(f64::MIN, f64::max) - amps_db.iter().cloned().fold(f64::MAX, f64::min);
        assert!(ripple < 1.0, "{ripple}");
        let ideal = apply_element_model(&weights, &ElementModel::Ideal).unwrap();
        assert_eq!(ideal[3], weights[3].to_complex());
    }

    #[test]
    fn measured_table_interpolates_and_reports_gaps() {
        let rows = vec![vec![(0, 1.0, 0.0), (256, 177.0, -1.0)], vec![(0, 0.0, 0.0), (511, 359.3, 0.0)]];
        let table = MeasuredTable::new(512, rows).unwrap();
        let (ph, amp) = table.lookup(0, 128.0).unwrap();
        assert_relative_eq!(ph.to_degrees(), 89.0, epsilon = 1e-9);
        assert_relative_eq!(20.0 * amp.log10(), -0.5, epsilon = 1e-9);
        assert!(matches!(table.lookup(0, 300.0), Err(Error::TableCoverage { .. })));
        // element 1 spans the full turn and wraps
        let (ph, _) = table.lookup(1, 511.5).unwrap();
        assert!(ph.to_degrees() > 359.3 || ph.to_degrees() < 1e-9);
        let offsets = table.static_offsets();
        assert_relative_eq!(offsets[0], -1.0, epsilon = 1e-9);

        let cal = table.clone().with_calibration(vec![1.0, 0.0]).unwrap();
        let (ph, _) = cal.lookup(0, 0.0).unwrap();
        assert!(ph.abs() < 1e-12);
    }

    #[test]
    fn measured_table_csv() {
        let text = "element,phase_code,realized_phase_deg,realized_amp_db\n0,0,0.5,0\n0,1,180.5,-0.1\n";
        let t = MeasuredTable::read_csv(text.as_bytes(), 2).unwrap();
        assert_eq!(t.rows[0].len(), 2);
        assert!(MeasuredTable::read_csv("a,b\n1,2\n".as_bytes(), 2).is_err());
        assert!(MeasuredTable::read_csv(format!("{}\n0,x,1,1\n", MEASURED_HEADER.join(",")).as_bytes(), 2).is_err());
    }

    #[test]
    fn ideal_elements_have_zero_beam_error() {
        let sc = BeamScenario::uniform(ArrayGeometry::default(), 0.0, ElementModel::Ideal).unwrap();
        let steering = grid(0.0, 60.0, 1.0);
        let (e, _) = steering_sweep(&sc, &steering, Exec::Sequential).unwrap();
        assert_eq!(e.rms_phase_err_deg, 0.0);
        assert_eq!(e.rms_amp_err_db, 0.0);
    }

    #[test]
    fn one_degree_offset_on_one_element() {
        let g = ArrayGeometry::default();
        let steering = grid(0.0, 60.0, 1.0);
        let mut realized = Vec::new();
        let mut ideal = Vec::new();
        for &s in &steering {
            let sc = BeamScenario::uniform(g, s, ElementModel::Ideal).unwrap();
            let w = apply_element_model(&steering_weights(&sc).unwrap(), &ElementModel::Ideal).unwrap();
            let mut r = w.clone();
            r[2] *= Complex64::from_polar(1.0, 1f64.to_radians());
            ideal.push(array_factor(&w, &g, &[s], 4.0).unwrap());
            realized.push(array_factor(&r, &g, &[s], 4.0).unwrap());
        }
        let (e, _) = beam_error_metrics(&realized, &ideal, &steering).unwrap();
        // analytic: arg(3 + e^{j 1deg})
        let expect = (1f64.to_radians().sin()).atan2(3.0 + 1f64.to_radians().cos()).to_degrees();
        assert_relative_eq!(e.rms_phase_err_deg, expect, max_relative = 1e-9);
        assert_relative_eq!(e.rms_phase_err_deg, 0.25, epsilon = 0.001);

        // a global rotation of both patterns leaves the metrics unchanged
        let rot = Complex64::from_polar(1.0, 0.7);
        let spin = |ps: &[ArrayPattern]| -> Vec<ArrayPattern> {
            ps.iter().map(|p| ArrayPattern { angles: p.angles.clone(), values: p.values.iter().map(|v| v * rot).collect() }).collect()
        };
        let (e2, _) = beam_error_metrics(&spin(&realized), &spin(&ideal), &steering).unwrap();
        assert_relative_eq!(e.rms_phase_err_deg, e2.rms_phase_err_deg, epsilon = 1e-9);
        assert_relative_eq!(e.rms_amp_err_db, e2.rms_amp_err_db, epsilon = 1e-9);

        assert!(beam_error_metrics(&realized[..2], &ideal, &steering).is_err());
    }
}
