//! Behavioral model of a multiphase-interpolating switched-capacitor
//! power amplifier (MP-SCPA) and of a digital beamforming transmitter
//! built from an array of them.
//!
//! * [`mp`] splits a complex target onto two adjacent basis phases and
//!   quantizes the weights to cell counts.
//! * [`scpa`] turns cell counts into output power, switching loss and
//!   drain efficiency.
//! * [`decoder`] is a bit-exact model of the per-element logic decoder.
//! * [`analysis`] runs the resolution sweeps (phase/amplitude error,
//!   constant-amplitude contours).
//! * [`beam`] synthesizes linear-array patterns from quantized elements.
//! * [`waveform`] generates modulated test signals and measures
//!   EVM, ACLR, PAPR and PSD.
//!
//! Sweeps run on rayon when the `parallel` feature is enabled (default);
//! see [`exec::Exec`].

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod beam;
pub mod decoder;
pub mod error;
pub mod exec;
pub mod mp;
pub mod scpa;
pub mod waveform;

pub use error::{Error, Result};
pub use exec::Exec;
pub use mp::{BasisPhaseSet, Interpolator, PhaseWeights, PhasorTarget, QuantMode, QuantizedWeights};
