//! Two-port network records, Touchstone v1 ingestion and exact S/Y algebra.
//!
//! A [`NetworkRecord`] is a frequency grid plus one 2×2 complex matrix per
//! point. Records parsed from `.s2p` files are always S-parameters; the
//! resonator analysis works on the device admittance extracted from the
//! Y-parameters (see [`device_admittance`]).

mod convert;
mod touchstone;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convert::{device_admittance, extract_y21, s_to_y, y_to_s, Embedding};
pub use touchstone::{
    parse_touchstone, parse_touchstone_with_comments, write_touchstone, DataFormat, FreqUnit,
    TouchstoneError,
};

/// Per-frequency 2×2 complex matrix, row-major (`m[row][col]`).
pub type Mat2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    S,
    Y,
}

impl std::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamKind::S => f.write_str("S"),
            ParamKind::Y => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("expected {expected}-parameters, got {found}-parameters")]
    WrongKind { expected: ParamKind, found: ParamKind },
    #[error("singular conversion matrix at {freq} Hz")]
    Singular { freq: f64 },
    #[error("frequencies must be strictly increasing and positive (index {index})")]
    BadFrequencies { index: usize },
    #[error("{freqs} frequencies but {values} data points")]
    LengthMismatch { freqs: usize, values: usize },
    #[error("reference impedance must be positive, got {0}")]
    BadImpedance(f64),
}

fn check_freqs(freqs: &[f64]) -> Result<(), NetError> {
    for (i, &f) in freqs.iter().enumerate() {
        if !(f > 0.0 && f.is_finite()) || (i > 0 && f <= freqs[i - 1]) {
            return Err(NetError::BadFrequencies { index: i });
        }
    }
    Ok(())
}

/// Frequency grid with one 2×2 network matrix per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    /// Frequencies in Hz, strictly increasing.
    pub freqs: Vec<f64>,
    pub matrices: Vec<Mat2>,
    pub kind: ParamKind,
    /// Reference impedance in ohms.
    pub z0: f64,
}

impl NetworkRecord {
    pub fn new(
        freqs: Vec<f64>,
        matrices: Vec<Mat2>,
        kind: ParamKind,
        z0: f64,
    ) -> Result<Self, NetError> {
        check_freqs(&freqs)?;
        if freqs.len() != matrices.len() {
            return Err(NetError::LengthMismatch {
                freqs: freqs.len(),
                values: matrices.len(),
            });
        }
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(NetError::BadImpedance(z0));
        }
        Ok(Self {
            freqs,
            matrices,
            kind,
            z0,
        })
    }

    /// Y-parameter record of a single two-terminal element placed in series
    /// between port 1 and port 2: `Y = [[y, -y], [-y, y]]`.
    pub fn series_element(trace: &ComplexTrace, z0: f64) -> Result<Self, NetError> {
        let matrices = trace
            .values
            .iter()
            .map(|&y| [[y, -y], [-y, y]])
            .collect();
        Self::new(trace.freqs.clone(), matrices, ParamKind::Y, z0)
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Canonical JSON dump: frequencies in Hz, complex values as `[re, im]`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Complex response sampled on a frequency grid, typically an admittance in siemens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexTrace {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ComplexTrace {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self, NetError> {
        check_freqs(&freqs)?;
        if freqs.len() != values.len() {
            return Err(NetError::LengthMismatch {
                freqs: freqs.len(),
                values: values.len(),
            });
        }
        Ok(Self { freqs, values })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Every `step`-th point, starting at the first.
    pub fn decimate(&self, step: usize) -> Self {
        let step = step.max(1);
        Self {
            freqs: self.freqs.iter().step_by(step).copied().collect(),
            values: self.values.iter().step_by(step).copied().collect(),
        }
    }

    /// Impedance view (`1/Y`) of an admittance trace.
    pub fn reciprocal(&self) -> Self {
        Self {
            freqs: self.freqs.clone(),
            values: self.values.iter().map(|v| v.inv()).collect(),
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}
