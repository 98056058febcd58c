//! Inaudible-payload DSP: shifts a band-limited spoken command into the
//! 16–22 kHz near-ultrasound range by single upper-sideband modulation, and
//! verifies recoverability with two independent demodulators.
//!
//! The forward chain lives in [`modulate`]: resample to 48 kHz if needed,
//! low-pass at 6 kHz, normalize, multiply onto a 16 kHz carrier with the
//! Hilbert companion cancelling the lower sideband, taper with a Tukey
//! window, normalize again, and quantize to 16-bit PCM at write time
//! ([`wav`]). The reverse checks live in [`demodulate`]: a coherent
//! product demodulator and a square-law envelope model of a non-linear
//! microphone front-end. [`spectrum`] provides the periodogram measurements
//! the tests and the CLI report.
//!
//! Every operation is a pure function of its inputs; nothing here owns
//! global state or randomness.

#![forbid(unsafe_code)]

pub mod analytic;
pub mod audio;
pub mod demodulate;
pub mod fir;
pub mod modulate;
pub mod spectrum;
pub mod wav;
pub mod window;

use thiserror::Error;

/// Failure modes shared across the pipeline stages.
#[derive(Debug, Error)]
pub enum DspError {
    /// A parameter violates its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    /// A frequency placement would exceed the representable band.
    #[error("{what} needs {required_hz} Hz of bandwidth but Nyquist is {nyquist_hz} Hz")]
    Nyquist {
        what: &'static str,
        required_hz: f64,
        nyquist_hz: f64,
    },
    /// Band-energy measurement on an all-zero signal.
    #[error("signal has no energy; band ratio is undefined")]
    ZeroEnergy,
    /// WAV container problems: malformed or unsupported structure.
    #[error("wav: {0}")]
    Wav(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
