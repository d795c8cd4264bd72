//! One function per subcommand. Each reads its own config section, runs
//! the model, writes its artifacts under the output directory, checks
//! them, and returns the paths it wrote.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mpibeam::analysis::{contour_map, dbfs_grid, rms_error_sweep, ErrorSweepSpec, CONTOUR_TOLERANCE, DEFAULT_PHASE_SAMPLES};
use mpibeam::beam::{self, ArrayGeometry, BeamScenario, ElementModel, MeasuredTable};
use mpibeam::decoder::{self, BeamLatch, DecoderConfig, DecoderInput};
use mpibeam::scpa::{efficiency_curve, CurveWeights, ScpaConfig};
use mpibeam::waveform::{self, io as iq, MetricReport, PolarImpairments, Scheme, Transmitter, TxMode, WaveformSpec, WelchConfig};
use mpibeam::{Exec, Interpolator, QuantMode};

use crate::config::{ConfigFile, Section};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Settings shared by every command after flags and file are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub quant: QuantMode,
}

impl RunOptions {
    pub fn exec(&self) -> Exec {
        if self.threads == Some(1) {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn amp_grid(s: &Section, default_floor: f64, default_step: f64) -> Result<Vec<f64>> {
    let floor: f64 = s.get_or("amp_floor_dbfs", default_floor)?;
    let step: f64 = s.get_or("amp_step_db", default_step)?;
    if !(floor <= 0.0 && floor.is_finite()) {
        return Err(CliError::config(s.line("amp_floor_dbfs"), format!("amp_floor_dbfs = {floor} must be <= 0")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::config(s.line("amp_step_db"), format!("amp_step_db = {step} must be positive")));
    }
    Ok(dbfs_grid(floor, step))
}

fn non_empty<T>(s: &Section, key: &str, v: Vec<T>) -> Result<Vec<T>> {
    if v.is_empty() {
        Err(CliError::Usage(format!("`{key}` must list at least one value (config line {})", s.line(key))))
    } else {
        Ok(v)
    }
}

pub fn error_sweep(file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = file.section("error-sweep");
    let phase_samples = s.get_or("phase_samples", DEFAULT_PHASE_SAMPLES)?;
    let explicit = s.has("phases") || s.has("bits");
    // the default grid reaches -60 dBFS so every 2-degree crossing shows up
    let amps = amp_grid(&s, if explicit { -40.0 } else { -60.0 }, 0.25)?;
    let jobs: Vec<(Vec<&str>, Vec<usize>, Vec<u32>)> = if explicit {
        let phases = non_empty(&s, "phases", s.list("phases")?.unwrap_or_else(|| vec![16]))?;
        let bits = non_empty(&s, "bits", s.list("bits")?.unwrap_or_else(|| vec![9]))?;
        vec![(vec!["error_sweep.csv"], phases, bits)]
    } else {
        vec![
            (vec!["phase_error_vs_phases.csv", "amp_error_vs_phases.csv"], vec![4, 8, 16], vec![9]),
            (vec!["phase_error_vs_bits.csv", "amp_error_vs_bits.csv"], vec![16], (6..=12).collect()),
        ]
    };
    let mut written = Vec::new();
    for (names, phases, bits) in jobs {
        let spec = ErrorSweepSpec { phases, bits, amps_dbfs: amps.clone(), phase_samples, mode: opt.quant };
        let result = rms_error_sweep(&spec, opt.exec())?;
        if let Some(r) = result.rows.iter().find(|r| !(r.rms_phase_err_deg.is_finite() && r.rms_amp_err_db.is_finite())) {
            return Err(CliError::Check(format!("non-finite error at M={} k={} {} dBFS", r.phases, r.bits, r.amp_dbfs)));
        }
        for name in names {
            written.push(write_with(&opt.path(name), |w| Ok(result.write_csv(w)?))?);
        }
    }
    Ok(written)
}

fn parse_case(item: &str) -> std::result::Result<(usize, u32), String> {
    let (m, k) = item.split_once(':').ok_or_else(|| format!("`{item}` is not `M:k`"))?;
    let m = m.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
    let k = k.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
    Ok((m, k))
}

pub fn contours(file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = file.section("contours");
    let cases = match s.get_str("cases") {
        Some(text) => text
            .split(',')
            .filter(|c| !c.trim().is_empty())
            .map(|c| parse_case(c.trim()).map_err(|e| CliError::config(s.line("cases"), e)))
            .collect::<Result<Vec<_>>>()?,
        None => vec![(4, 3), (8, 3), (4, 6), (8, 6)],
    };
    let cases = non_empty(&s, "cases", cases)?;
    let levels = non_empty(&s, "levels", s.list("levels")?.unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.125, 0.0]))?;
    let tol: f64 = s.get_or("tolerance", CONTOUR_TOLERANCE)?;
    let maps = opt.exec().map(&cases, |&(m, k)| contour_map(m, k, &levels, tol));
    let path = opt.path("contours.csv");
    let written = write_with(&path, |w| {
        writeln!(w, "M,k,level,sector,n1,n2,amplitude,phase_deg").map_err(|e| CliError::io(&path, e))?;
        for (&(m, k), map) in cases.iter().zip(maps) {
            for level in map? {
                for p in &level.points {
                    if (p.amplitude - level.level).abs() > tol * level.level + 1e-12 {
                        return Err(CliError::Check(format!("state ({}, {}) is off the {} contour", p.n1, p.n2, level.level)));
                    }
                    writeln!(w, "{m},{k},{},{},{},{},{},{}", level.level, p.sector, p.n1, p.n2, p.amplitude, p.phase.to_degrees())
                        .map_err(|e| CliError::io(&path, e))?;
                }
            }
        }
        Ok(())
    })?;
    Ok(vec![written])
}

fn scpa_config(s: &Section) -> Result<ScpaConfig> {
    let vdd = s.get_or("vdd", 1.0)?;
    let r_opt = s.get_or("r_opt", 1.0)?;
    let f0 = s.get_or("f0", 1.75e9)?;
    let bits = s.get_or("bits", 9)?;
    let phases = s.get_or("phases", 16)?;
    let q: Option<f64> = s.get("q_nw")?;
    let cfg = match s.get::<f64>("c_unit")? {
        Some(c) => {
            let cfg = ScpaConfig::design(vdd, r_opt, c, bits, phases, f0)?;
            match q {
                Some(q) => cfg.with_q(q)?,
                None => cfg,
            }
        }
        None => ScpaConfig::analysis(vdd, r_opt, q.unwrap_or(3.0), bits, phases, f0)?,
    };
    Ok(cfg)
}

/// Closed-form efficiency against the composed power ratio on a grid of
/// cell states covering the whole reachable triangle.
fn check_efficiency(cfg: &ScpaConfig) -> Result<usize> {
    let n = cfg.full_scale() as u64;
    let stride = (n / 512).max(1);
    let mut checked = 0;
    for n1 in (0..=n).step_by(stride as usize) {
        for n2 in (0..=n - n1).step_by(stride as usize) {
            if n1 + n2 == 0 {
                continue;
            }
            let a = cfg.drain_efficiency((n1, n2))?;
            let b = cfg.drain_efficiency_composed((n1, n2))?;
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                return Err(CliError::Check(format!("efficiency at ({n1}, {n2}): closed form {a} vs composed {b}")));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn efficiency(file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = file.section("efficiency");
    let cfg = scpa_config(&s)?;
    let weights = match s.get_str("weights").unwrap_or("quantized") {
        "exact" => CurveWeights::Exact,
        "quantized" => CurveWeights::Quantized(opt.quant),
        other => {
            return Err(CliError::config(s.line("weights"), format!("weights must be `exact` or `quantized`, got `{other}`")))
        }
    };
    let amps = amp_grid(&s, -30.0, 0.5)?;
    let samples: usize = s.get_or("phase_samples", 256)?;
    if samples == 0 {
        return Err(CliError::config(s.line("phase_samples"), "phase_samples must be positive"));
    }
    check_efficiency(&cfg)?;
    let thetas: Vec<f64> = (0..samples).map(|i| 2.0 * PI * i as f64 / samples as f64).collect();
    let curve = efficiency_curve(&cfg, &amps, &thetas, weights, opt.exec())?;
    let path = opt.path("efficiency.csv");
    let written = write_with(&path, |w| {
        writeln!(w, "amp_dbfs,pout_norm_db,mean_eta").map_err(|e| CliError::io(&path, e))?;
        for p in &curve {
            if !(0.0..=1.0).contains(&p.mean_eta) {
                return Err(CliError::Check(format!("efficiency {} outside [0, 1] at {} dBFS", p.mean_eta, p.amp_dbfs)));
            }
            writeln!(w, "{},{},{}", p.amp_dbfs, p.pout_norm_db, p.mean_eta).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    })?;
    Ok(vec![written])
}

fn degree_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start {
        return Err(CliError::Usage(format!("bad angle grid {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

pub fn beam(file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = file.section("beam");
    let geometry = ArrayGeometry::new(s.get_or("elements", 4)?, s.get_or("spacing", 0.5)?)?;
    // read the table before any compute so a bad path fails fast
    let model = match s.get_str("model").unwrap_or("quantized") {
        "ideal" => ElementModel::Ideal,
        "quantized" => {
            ElementModel::Quantized { interpolator: Interpolator::new(s.get_or("phases", 16)?, s.get_or("bits", 9)?)?, mode: opt.quant }
        }
        "measured" => {
            let path = PathBuf::from(
                s.get_str("table").ok_or_else(|| CliError::Usage("model = measured needs `table = PATH`".into()))?,
            );
            let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            let mut table = MeasuredTable::read_csv(BufReader::new(f), s.get_or("codes_per_turn", 65536)?)?;
            if s.get_or("calibrate", false)? {
                let offsets = table.static_offsets();
                table = table.with_calibration(offsets)?;
            }
            ElementModel::Measured(table)
        }
        other => {
            return Err(CliError::config(s.line("model"), format!("model must be ideal, quantized or measured, got `{other}`")))
        }
    };
    let taper = s.list("taper")?.unwrap_or_else(|| vec![1.0; geometry.elements]);
    let scenario = BeamScenario { geometry, steer: 0.0, taper, model };
    scenario.validate()?;

    let pattern_step: f64 = s.get_or("pattern_step_deg", 0.5)?;
    // endfire is outside the pattern domain
    let angles: Vec<f64> =
        degree_grid(-90.0, 90.0, pattern_step)?.iter().filter(|d| d.abs() < 90.0).map(|d| d.to_radians()).collect();
    let steers = s.list("pattern_steer_deg")?.unwrap_or_else(|| vec![0.0, 15.0, 30.0, 45.0, 60.0]);
    let sweep = degree_grid(s.get_or("sweep_start_deg", 0.0)?, s.get_or("sweep_stop_deg", 60.0)?, s.get_or("sweep_step_deg", 1.0)?)?;

    let mut written = Vec::new();
    let patterns = opt.exec().map(&steers, |&d: &f64| -> Result<_> {
        let sc = scenario.with_steer(d.to_radians())?;
        Ok(beam::scenario_pattern(&sc, &angles)?)
    });
    for (d, pattern) in steers.iter().zip(patterns) {
        let pattern = pattern?;
        if matches!(scenario.model, ElementModel::Ideal) {
            if let Some(v) = pattern.values.iter().find(|v| v.norm() > 1.0 + 1e-9) {
                return Err(CliError::Check(format!("ideal pattern exceeds its peak: {v}")));
            }
        }
        written.push(write_with(&opt.path(&format!("pattern_steer_{d}.csv")), |w| Ok(pattern.write_csv(w)?))?);
    }

    let radians: Vec<f64> = sweep.iter().map(|d| d.to_radians()).collect();
    let (errs, per) = beam::steering_sweep(&scenario, &radians, opt.exec())?;
    let path = opt.path("steering_errors.csv");
    written.push(write_with(&path, |w| {
        writeln!(w, "steer_deg,phase_err_deg,amp_err_db").map_err(|e| CliError::io(&path, e))?;
        for (d, e) in sweep.iter().zip(&per) {
            writeln!(w, "{d},{},{}", e.phase_err_deg, e.amp_err_db).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    })?);
    let summary = json!({
        "rms_phase_err_deg": errs.rms_phase_err_deg,
        "rms_amp_err_db": errs.rms_amp_err_db,
        "steering_points": per.len(),
    });
    written.push(write_text(&opt.path("beam_summary.json"), &format!("{summary:#}\n"))?);
    Ok(written)
}

pub fn modulate(file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = file.section("modulate");
    let mut spec = WaveformSpec::lte_like(s.get_or("samples", 100_000)?, opt.seed);
    spec.scheme = s.get_or("scheme", Scheme::Ofdm)?;
    spec.order = s.get_or("order", spec.order)?;
    spec.bandwidth = s.get_or("bandwidth", spec.bandwidth)?;
    spec.sample_rate = s.get_or("sample_rate", spec.sample_rate)?;
    spec.occupied_fraction = s.get_or("occupied_fraction", spec.occupied_fraction)?;
    spec.fft_size = s.get_or("fft_size", spec.fft_size)?;
    spec.rolloff = s.get_or("rolloff", spec.rolloff)?;
    spec.validate()?;
    let bits = match s.get_str("bits") {
        Some("none") => None,
        _ => Some(s.get_or("bits", 9)?),
    };
    let mode: TxMode = s.get_or("mode", TxMode::Multiphase)?;
    let tx = Transmitter {
        phases: s.get_or("phases", 16)?,
        bits,
        mode,
        quant: opt.quant,
        impairments: PolarImpairments { phase_bandwidth: s.get("phase_bandwidth")?, am_delay: s.get_or("am_delay", 0)? },
    };
    let welch = WelchConfig { segment_len: s.get_or("welch_segment", 4096)?, overlap: s.get_or("welch_overlap", 2048)? };
    let floor: f64 = s.get_or("detrough", 0.0)?;

    let reference = waveform::generate(&spec)?;
    let drive = if floor > 0.0 { waveform::detrough(&reference, floor)? } else { reference.clone() };
    let realized = tx.transmit(&drive, opt.exec())?;
    let aclr = waveform::aclr(&realized, spec.sample_rate, spec.occupied_bandwidth(), spec.bandwidth, welch, opt.exec())?;
    let report = MetricReport {
        evm_pct: waveform::evm(&realized, &reference.samples)?,
        aclr_lo_dbc: aclr.lower_dbc,
        aclr_hi_dbc: aclr.upper_dbc,
        papr_db: waveform::papr_db(&realized),
    };
    if ![report.evm_pct, report.aclr_lo_dbc, report.aclr_hi_dbc, report.papr_db].iter().all(|v| v.is_finite()) {
        return Err(CliError::Check(format!("non-finite metric in {report:?}")));
    }
    let psd = waveform::welch(&realized, spec.sample_rate, welch, opt.exec())?;

    let mut written = Vec::new();
    for (name, samples) in [("baseband.iq", &reference.samples), ("tx.iq", &realized)] {
        let path = opt.path(name);
        iq::write_iq(&path, samples, spec.sample_rate)?;
        let (back, _) = iq::read_iq(&path)?;
        if back.len() != samples.len() {
            return Err(CliError::Check(format!("{name} read back {} of {} samples", back.len(), samples.len())));
        }
        written.push(path.clone());
        written.push(iq::sidecar_path(&path));
    }
    let path = opt.path("psd.csv");
    written.push(write_with(&path, |w| {
        writeln!(w, "freq_hz,psd_db_hz").map_err(|e| CliError::io(&path, e))?;
        for (f, d) in psd.to_db() {
            writeln!(w, "{f},{d}").map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    })?);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Check(e.to_string()))?;
    written.push(write_text(&opt.path("metrics.json"), &(text + "\n"))?);
    Ok(written)
}

pub fn vectors(file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = file.section("vectors");
    let mut cfg = DecoderConfig::new(s.get_or("phases", 16)?, s.get_or("amp_bits", 16)?)?
        .with_phase_bits(s.get_or("phase_bits", 16)?)?;
    if let Some(active) = s.get("active_bits")? {
        cfg = cfg.with_active_bits(active)?;
    }
    let steps: usize = s.get_or("steps", 1000)?;
    let relatch: usize = s.get_or("relatch_every", 250)?;
    if steps == 0 || relatch == 0 {
        return Err(CliError::Usage("steps and relatch_every must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let amp_max = (1u64 << cfg.amp_bits) - 1;
    let phase_max = (1u64 << cfg.phase_bits) - 1;
    let inputs: Vec<DecoderInput> = (0..steps)
        .map(|i| DecoderInput {
            beam_ctrl: i % relatch == 0,
            amp_code: rng.gen_range(0..=amp_max),
            phase_code: rng.gen_range(0..=phase_max),
        })
        .collect();
    let records = decoder::generate_vectors(&cfg, BeamLatch::empty(), &inputs)?;
    let path = opt.path("vectors.txt");
    write_with(&path, |w| Ok(decoder::write_vectors(&cfg, &records, w)?))?;
    let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    if decoder::read_vectors(BufReader::new(f))? != records {
        return Err(CliError::Check("vector file does not read back to the generated records".into()));
    }
    Ok(vec![path])
}
