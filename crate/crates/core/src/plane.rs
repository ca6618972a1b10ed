//! Single-channel 2-D grids: binary ground-truth masks and per-pixel
//! crack-probability maps.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Binary ground-truth plane. Every value is 0 (non-crack) or 1 (crack).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlane {
    values: Array2<u8>,
}

impl MaskPlane {
    /// Wrap a grid, rejecting anything outside {0, 1}.
    pub fn from_binary(values: Array2<u8>) -> Result<Self> {
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must all be 0 or 1"));
        }
        Ok(MaskPlane { values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        MaskPlane {
            values: Array2::zeros((height, width)),
        }
    }

    /// Build from a per-pixel predicate (true = crack).
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        MaskPlane {
            values: Array2::from_shape_fn((height, width), |(r, c)| u8::from(f(r, c))),
        }
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[(row, col)]
    }

    /// Number of crack (1) pixels.
    pub fn crack_pixels(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn total_pixels(&self) -> u64 {
        (self.height() * self.width()) as u64
    }
}

/// Per-pixel crack probability in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityPlane {
    values: Array2<f64>,
}

impl ProbabilityPlane {
    /// Wrap a grid, rejecting non-finite values or values outside [0, 1].
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values
            .iter()
            .any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v))
        {
            return Err(Error::invalid(
                "probability values must be finite and within [0, 1]",
            ));
        }
        Ok(ProbabilityPlane { values })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), value))
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }
}
