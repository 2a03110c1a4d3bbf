//! Search space and observation data.
//!
//! All model code operates on the normalized unit cube and standardized
//! outputs; original units appear only at the library boundary.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Box-constrained search domain in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    lower: Array1<f64>,
    upper: Array1<f64>,
}

impl SearchSpace {
    pub fn new(lower: Array1<f64>, upper: Array1<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidParameter("search space needs dim >= 1".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "bounds at dim {i} must satisfy lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Hypercube `[0,1]^d` expressed in original units.
    pub fn unit(dim: usize) -> Self {
        Self::new(Array1::zeros(dim), Array1::ones(dim)).expect("dim >= 1")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Array1<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &Array1<f64> {
        &self.upper
    }

    /// Per-dimension range `upper - lower`.
    pub fn range(&self) -> Array1<f64> {
        &self.upper - &self.lower
    }

    /// Map a point in original units onto the unit cube.
    pub fn normalize(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x.len())?;
        Ok(Array1::from_iter(
            x.iter()
                .enumerate()
                .map(|(i, &v)| (v - self.lower[i]) / (self.upper[i] - self.lower[i])),
        ))
    }

    /// Map a unit-cube point back to original units.
    pub fn denormalize(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_dim(u.len())?;
        Ok(Array1::from_iter(
            u.iter()
                .enumerate()
                .map(|(i, &v)| self.lower[i] + v * (self.upper[i] - self.lower[i])),
        ))
    }

    /// True when the original-units point lies inside the box.
    pub fn contains(&self, x: ArrayView1<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Affine map between raw outputs and the standardized scale the GP sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    fn fit(y: &Array1<f64>) -> Self {
        let n = y.len();
        if n < 2 {
            return Self {
                mean: y.first().copied().unwrap_or(0.0),
                scale: 1.0,
            };
        }
        let mean = y.mean().unwrap();
        let var = y.mapv(|v| (v - mean).powi(2)).sum() / (n as f64 - 1.0);
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, scale }
    }

    pub fn to_std(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn to_raw(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

/// Observations in normalized inputs, carrying both raw and standardized
/// outputs. The standardizer is refit on every change to `y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    x: Array2<f64>,
    y_raw: Array1<f64>,
    y_std: Array1<f64>,
    standardizer: Standardizer,
}

impl Dataset {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            x: Array2::zeros((0, dim)),
            y_raw: Array1::zeros(0),
            y_std: Array1::zeros(0),
            standardizer: Standardizer {
                mean: 0.0,
                scale: 1.0,
            },
        }
    }

    /// Build from normalized inputs and raw outputs.
    pub fn from_parts(x: Array2<f64>, y_raw: Array1<f64>) -> Result<Self> {
        if x.nrows() != y_raw.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y_raw.len(),
            });
        }
        if x.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(Error::InvalidParameter(
                "normalized inputs must lie in the unit cube".into(),
            ));
        }
        let mut d = Self::empty(x.ncols());
        d.x = x;
        d.y_raw = y_raw;
        d.refit();
        Ok(d)
    }

    /// Append one observation (normalized input, raw output).
    pub fn push(&mut self, x: ArrayView1<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.x.push_row(x).expect("row shape checked");
        let mut y_new = self.y_raw.to_vec();
        y_new.push(y);
        self.y_raw = Array1::from_vec(y_new);
        self.refit();
        Ok(())
    }

    fn refit(&mut self) {
        self.standardizer = Standardizer::fit(&self.y_raw);
        let s = self.standardizer;
        self.y_std = self.y_raw.mapv(|v| s.to_std(v));
    }

    pub fn len(&self) -> usize {
        self.y_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_raw.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y_raw(&self) -> &Array1<f64> {
        &self.y_raw
    }

    pub fn y_std(&self) -> &Array1<f64> {
        &self.y_std
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    /// Mean observation count axis helper for tests.
    pub fn rows(&self) -> Axis {
        Axis(0)
    }
}
