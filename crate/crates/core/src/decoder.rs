//! Bit-exact golden model of the per-element multiphase logic decoder.
//!
//! Each step takes an amplitude code, a phase code and the beam-latch
//! control bit. While the control bit is high the input is staged as the
//! element's beam weight and the output carries the beam state alone. On
//! the falling edge the staged weight is latched; from then on every input
//! is treated as modulation and combined with the latched beam weight
//! (amplitudes multiply, phases add). The combined target is split onto
//! the two adjacent basis phases with the rounding quantizer and driven
//! onto a segmented array: `u` unary MSB bits as a thermometer word and
//! `b` binary LSB bits on a C-2C ladder.
//!
//! Two identical segmented words are produced per element. The select
//! word carries `n1` (cells switched on phase A) and the enable word
//! carries `n1 + n2` (cells switched at all); the remaining `N - n1 - n2`
//! cells are held at ground.
//!
//! Full scale `N = 2^k` is one count beyond a k-bit word. It is reached
//! through the termination cell of the C-2C ladder, carried as bit `b` of
//! the C-2C word, which is only set when every other cell is on. On the
//! input side the all-ones amplitude code means full scale.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mp::{wrap_phase, BasisPhaseSet, Interpolator, PhasorTarget, QuantMode, QuantizedWeights};

/// Indices of the basis phases bracketing `theta`. A phase on a basis
/// phase belongs to the sector that starts there.
pub fn select_phases(theta: f64, phases: &BasisPhaseSet) -> (usize, usize) {
    phases.bracket(theta)
}

/// Split of a k-bit array into unary MSBs and binary (C-2C) LSBs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segmentation {
    pub unary_bits: u32,
    pub binary_bits: u32,
}

/// Control words for one function (select or enable) of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentedWord {
    /// Thermometer lines, line `i` on bit `i`.
    pub thermometer: u32,
    /// C-2C ladder bits; bit `binary_bits` is the termination cell.
    pub c2c: u32,
}

impl Segmentation {
    pub fn new(unary_bits: u32, binary_bits: u32) -> Result<Self> {
        if unary_bits == 0 || unary_bits > 5 || binary_bits > 24 {
            return Err(Error::InvalidParameter {
                name: "segmentation",
                reason: format!("unsupported split {unary_bits}u+{binary_bits}b"),
            });
        }
        Ok(Self { unary_bits, binary_bits })
    }

    /// 4 unary MSBs with the rest binary.
    pub fn for_bits(bits: u32) -> Result<Self> {
        let unary = 4.min(bits);
        Self::new(unary, bits - unary)
    }

    pub fn bits(&self) -> u32 {
        self.unary_bits + self.binary_bits
    }

    pub fn full_scale(&self) -> u64 {
        1u64 << self.bits()
    }

    pub fn thermometer_lines(&self) -> u32 {
        (1u32 << self.unary_bits) - 1
    }

    fn binary_mask(&self) -> u32 {
        (1u32 << self.binary_bits) - 1
    }

    pub fn encode(&self, n: u64) -> Result<SegmentedWord> {
        let full = self.full_scale();
        if n > full {
            return Err(Error::CodeOverRange { code: n, bits: self.bits() });
        }
        if n == full {
            return Ok(SegmentedWord {
                thermometer: (1u32 << self.thermometer_lines()) - 1,
                c2c: self.binary_mask() | (1u32 << self.binary_bits),
            });
        }
        let ones = (n >> self.binary_bits) as u32;
        Ok(SegmentedWord {
            thermometer: (1u32 << ones) - 1,
            c2c: (n as u32) & self.binary_mask(),
        })
    }

    /// Cell count represented by a word. Holes in the thermometer word are
    /// counted by population, matching the unary cells' equal weights.
    pub fn decode(&self, w: &SegmentedWord) -> u64 {
        let unary = u64::from(w.thermometer.count_ones()) << self.binary_bits;
        let binary = u64::from(w.c2c & self.binary_mask());
        let term = u64::from((w.c2c >> self.binary_bits) & 1);
        unary + binary + term
    }
}

/// Code widths and array description of one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub phases: BasisPhaseSet,
    pub amp_bits: u32,
    pub phase_bits: u32,
    pub segmentation: Segmentation,
    /// Number of array MSBs actually driven; the LSBs below are held off.
    pub active_bits: u32,
}

impl DecoderConfig {
    /// 16-bit phase code, 4 unary MSBs, whole array active.
    pub fn new(phase_count: usize, amp_bits: u32) -> Result<Self> {
        let cfg = Self {
            phases: BasisPhaseSet::new(phase_count)?,
            amp_bits,
            phase_bits: 16,
            segmentation: Segmentation::for_bits(amp_bits)?,
            active_bits: amp_bits,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_phase_bits(mut self, bits: u32) -> Result<Self> {
        self.phase_bits = bits;
        self.validate()?;
        Ok(self)
    }

    /// Drives only the upper `bits` of the array.
    pub fn with_active_bits(mut self, bits: u32) -> Result<Self> {
        self.active_bits = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amp_bits == 0 || self.amp_bits > 24 {
            return Err(Error::BitsOutOfRange { bits: self.amp_bits, max: 24 });
        }
        if self.phase_bits == 0 || self.phase_bits > 32 {
            return Err(Error::BitsOutOfRange { bits: self.phase_bits, max: 32 });
        }
        if self.segmentation.bits() != self.amp_bits {
            return Err(Error::InvalidParameter {
                name: "segmentation",
                reason: format!("covers {} bits, array has {}", self.segmentation.bits(), self.amp_bits),
            });
        }
        if self.active_bits == 0 || self.active_bits > self.amp_bits {
            return Err(Error::BitsOutOfRange { bits: self.active_bits, max: self.amp_bits });
        }
        Ok(())
    }

    pub fn full_scale(&self) -> u64 {
        1u64 << self.amp_bits
    }

    pub fn amplitude_of(&self, code: u64) -> f64 {
        let max = (1u64 << self.amp_bits) - 1;
        if code == max {
            1.0
        } else {
            code as f64 / self.full_scale() as f64
        }
    }

    /// Phase codes are binary angles: `code / 2^P` of a full turn.
    pub fn phase_of(&self, code: u64) -> f64 {
        wrap_phase(TAU * code as f64 / (1u64 << self.phase_bits) as f64)
    }

    pub fn target_of(&self, input: &DecoderInput) -> Result<PhasorTarget> {
        input.check(self)?;
        PhasorTarget::polar(self.amplitude_of(input.amp_code), self.phase_of(input.phase_code))
    }

    fn select_width(&self) -> u32 {
        usize::BITS - (self.phases.count() - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderInput {
    pub beam_ctrl: bool,
    pub amp_code: u64,
    pub phase_code: u64,
}

impl DecoderInput {
    fn check(&self, cfg: &DecoderConfig) -> Result<()> {
        if self.amp_code >> cfg.amp_bits != 0 {
            return Err(Error::CodeOverRange { code: self.amp_code, bits: cfg.amp_bits });
        }
        if self.phase_code >> cfg.phase_bits != 0 {
            return Err(Error::CodeOverRange { code: self.phase_code, bits: cfg.phase_bits });
        }
        Ok(())
    }
}

/// Stored spatial weight of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamLatch {
    pub amplitude: f64,
    pub phase: f64,
    pub valid: bool,
    staged: Option<(f64, f64)>,
}

impl Default for BeamLatch {
    fn default() -> Self {
        Self::empty()
    }
}

impl BeamLatch {
    pub fn empty() -> Self {
        Self { amplitude: 0.0, phase: 0.0, valid: false, staged: None }
    }

    /// Unity beam weight: modulation passes through unchanged.
    pub fn identity() -> Self {
        Self::latched(1.0, 0.0).expect("unity weight is valid")
    }

    pub fn latched(amplitude: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::AmplitudeOverRange(amplitude));
        }
        if !phase.is_finite() {
            return Err(Error::NonFinite("beam phase"));
        }
        Ok(Self { amplitude, phase: wrap_phase(phase), valid: true, staged: None })
    }

    pub fn is_staging(&self) -> bool {
        self.staged.is_some()
    }
}

/// Applies the beam weight to a modulation sample.
pub fn combine(beam: &BeamLatch, modulation: &PhasorTarget) -> Result<PhasorTarget> {
    if !beam.valid {
        return Err(Error::BeamNotLatched);
    }
    PhasorTarget::polar(beam.amplitude * modulation.amplitude(), beam.phase + modulation.phase())
}

/// Decoder output for one element and one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementCommand {
    pub sel_a: usize,
    pub sel_b: usize,
    pub n1: u64,
    pub n2: u64,
    pub select: SegmentedWord,
    pub enable: SegmentedWord,
    pub full_scale: u64,
}

impl ElementCommand {
    pub fn grounded(&self) -> u64 {
        self.full_scale - self.n1 - self.n2
    }

    pub fn weights(&self, bits: u32) -> QuantizedWeights {
        QuantizedWeights { sector: self.sel_a, n1: self.n1, n2: self.n2, bits }
    }
}

/// Reference quantization of a target at the decoder's active resolution,
/// scaled back to full-array cells.
pub fn reference_weights(cfg: &DecoderConfig, target: &PhasorTarget) -> Result<QuantizedWeights> {
    let mp = Interpolator::with_phases(cfg.phases.clone(), cfg.active_bits)?;
    let w = mp.quantize(&mp.decompose_exact(target)?, QuantMode::Rounding);
    let shift = cfg.amp_bits - cfg.active_bits;
    Ok(QuantizedWeights { sector: w.sector, n1: w.n1 << shift, n2: w.n2 << shift, bits: cfg.amp_bits })
}

fn command_for(cfg: &DecoderConfig, target: &PhasorTarget) -> Result<ElementCommand> {
    let w = reference_weights(cfg, target)?;
    let seg = cfg.segmentation;
    Ok(ElementCommand {
        sel_a: w.sector,
        sel_b: (w.sector + 1) % cfg.phases.count(),
        n1: w.n1,
        n2: w.n2,
        select: seg.encode(w.n1)?,
        enable: seg.encode(w.n1 + w.n2)?,
        full_scale: cfg.full_scale(),
    })
}

/// One decoder clock.
pub fn decode_step(cfg: &DecoderConfig, input: &DecoderInput, latch: &mut BeamLatch) -> Result<ElementCommand> {
    let target = cfg.target_of(input)?;
    if input.beam_ctrl {
        latch.staged = Some((target.amplitude(), target.phase()));
        return command_for(cfg, &target);
    }
    if let Some((amplitude, phase)) = latch.staged.take() {
        *latch = BeamLatch::latched(amplitude, phase)?;
    }
    command_for(cfg, &combine(latch, &target)?)
}

/// A decoder instance owning its element's beam latch.
#[derive(Debug, Clone)]
pub struct Decoder {
    cfg: DecoderConfig,
    latch: BeamLatch,
}

impl Decoder {
    pub fn new(cfg: DecoderConfig) -> Self {
        Self { cfg, latch: BeamLatch::empty() }
    }

    pub fn with_latch(cfg: DecoderConfig, latch: BeamLatch) -> Self {
        Self { cfg, latch }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn latch(&self) -> &BeamLatch {
        &self.latch
    }

    pub fn step(&mut self, input: &DecoderInput) -> Result<ElementCommand> {
        decode_step(&self.cfg, input, &mut self.latch)
    }
}

/// One line of a golden vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorRecord {
    pub input: DecoderInput,
    pub sel_a: usize,
    pub sel_b: usize,
    pub therm_sel: u32,
    pub therm_en: u32,
    pub c2c_sel: u32,
    pub c2c_en: u32,
}

impl VectorRecord {
    pub fn new(input: DecoderInput, cmd: &ElementCommand) -> Self {
        Self {
            input,
            sel_a: cmd.sel_a,
            sel_b: cmd.sel_b,
            therm_sel: cmd.select.thermometer,
            therm_en: cmd.enable.thermometer,
            c2c_sel: cmd.select.c2c,
            c2c_en: cmd.enable.c2c,
        }
    }
}

fn hex_digits(bits: u32) -> usize {
    bits.div_ceil(4).max(1) as usize
}

/// Formats one vector line:
/// `ctrl amp_code phase_code | selA selB therm_sel therm_en c2c_sel c2c_en`,
/// every word in zero-padded lowercase hex, most significant digit first.
pub fn format_vector(cfg: &DecoderConfig, r: &VectorRecord) -> String {
    let seg = cfg.segmentation;
    let (a, p, s) = (hex_digits(cfg.amp_bits), hex_digits(cfg.phase_bits), hex_digits(cfg.select_width()));
    let (t, c) = (hex_digits(seg.thermometer_lines()), hex_digits(seg.binary_bits + 1));
    let mut line = String::new();
    let _ = write!(
        line,
        "{} {:0a$x} {:0p$x} | {:0s$x} {:0s$x} {:0t$x} {:0t$x} {:0c$x} {:0c$x}",
        u8::from(r.input.beam_ctrl),
        r.input.amp_code,
        r.input.phase_code,
        r.sel_a,
        r.sel_b,
        r.therm_sel,
        r.therm_en,
        r.c2c_sel,
        r.c2c_en,
    );
    line
}

pub fn write_vectors<W: Write>(cfg: &DecoderConfig, records: &[VectorRecord], mut out: W) -> Result<()> {
    writeln!(out, "# mpibeam decoder vectors")?;
    writeln!(
        out,
        "# phases={} amp_bits={} phase_bits={} unary_bits={} binary_bits={} active_bits={}",
        cfg.phases.count(),
        cfg.amp_bits,
        cfg.phase_bits,
        cfg.segmentation.unary_bits,
        cfg.segmentation.binary_bits,
        cfg.active_bits
    )?;
    writeln!(out, "# ctrl amp_code phase_code | selA selB therm_sel therm_en c2c_sel c2c_en")?;
    for r in records {
        writeln!(out, "{}", format_vector(cfg, r))?;
    }
    Ok(())
}

/// Parses vector lines, skipping blanks and `#` comments.
pub fn read_vectors<R: BufRead>(input: R) -> Result<Vec<VectorRecord>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse { line: lineno, reason };
        let (lhs, rhs) = body.split_once('|').ok_or_else(|| err("missing `|` separator".into()))?;
        let hex = |s: &str| u64::from_str_radix(s, 16).map_err(|e| err(format!("bad hex `{s}`: {e}")));
        let l: Vec<&str> = lhs.split_whitespace().collect();
        let r: Vec<&str> = rhs.split_whitespace().collect();
        if l.len() != 3 || r.len() != 6 {
            return Err(err(format!("expected 3 inputs and 6 outputs, got {} and {}", l.len(), r.len())));
        }
        let beam_ctrl = match l[0] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("bad control bit `{other}`"))),
        };
        out.push(VectorRecord {
            input: DecoderInput { beam_ctrl, amp_code: hex(l[1])?, phase_code: hex(l[2])? },
            sel_a: hex(r[0])? as usize,
            sel_b: hex(r[1])? as usize,
            therm_sel: hex(r[2])? as u32,
            therm_en: hex(r[3])? as u32,
            c2c_sel: hex(r[4])? as u32,
            c2c_en: hex(r[5])? as u32,
        });
    }
    Ok(out)
}

/// Runs a decoder over a stimulus and collects the vector records.
pub fn generate_vectors(cfg: &DecoderConfig, latch: BeamLatch, inputs: &[DecoderInput]) -> Result<Vec<VectorRecord>> {
    let mut dec = Decoder::with_latch(cfg.clone(), latch);
    inputs
        .iter()
        .map(|i| dec.step(i).map(|cmd| VectorRecord::new(*i, &cmd)))
        .collect()
}
