//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter is outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are structurally invalid (mismatched lengths, bad combinations).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Scenario file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Scenario value failed validation.
    #[error("validation error: key `{key}`: {message}")]
    Validation { key: String, message: String },

    /// A time series is too short for the requested spectral estimate.
    #[error(
        "insufficient data: {got_s:.3} s available, at least {required_s:.3} s required \
         for {averages} averages at {rbw_hz} Hz resolution bandwidth"
    )]
    InsufficientData {
        required_s: f64,
        got_s: f64,
        averages: u32,
        rbw_hz: f64,
    },

    /// Spans leave part of the requested frequency range uncovered.
    #[error("span gap: no trace covers {from_hz} Hz to {to_hz} Hz")]
    SpanGap { from_hz: f64, to_hz: f64 },

    /// Beam spills past the photodiode active area.
    #[error("beam clipping: only {overlap:.4} of the beam power hits the active area (need >= 0.99)")]
    BeamClipped { overlap: f64 },

    /// Scattered power too large for the linearized beat model.
    #[error("linearization error: scattered power {p_sc_w:.3e} W exceeds 1 % of LO power {p_lo_w:.3e} W")]
    Linearization { p_sc_w: f64, p_lo_w: f64 },

    /// Requested balance point is not physically reachable.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit status the CLI maps this error to: 1 for configuration
    /// problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } => 1,
            _ => 2,
        }
    }
}
