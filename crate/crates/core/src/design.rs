//! Experimental designs: the `n × p_x` matrix of input locations.

use nalgebra::DMatrix;

use crate::error::{GaspError, Result};

/// Input locations, one row per run.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    points: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(GaspError::Data("design must have at least one row and one column".into()));
        }
        if let Some(bad) = points.iter().find(|v| !v.is_finite()) {
            return Err(GaspError::Data(format!("non-finite design entry {bad}")));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map(Vec::len).unwrap_or(0);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(GaspError::Data(format!(
                    "design row {i} has {} columns, expected {p}",
                    r.len()
                )));
            }
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.points[(i, l)]
    }

    /// Per-coordinate `(min, max)`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|l| {
                let col = self.points.column(l);
                (col.min(), col.max())
            })
            .collect()
    }

    /// Whether `x` lies inside the bounding box of the design.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds()
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &v)| v >= lo && v <= hi)
    }

    /// Maps a design on the unit cube onto the box given by `bounds`.
    pub fn scale_from_unit(&self, bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.len() != self.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "bounds",
                expected: self.dim(),
                got: bounds.len(),
            });
        }
        let m = DMatrix::from_fn(self.nrows(), self.dim(), |i, l| {
            let (lo, hi) = bounds[l];
            lo + (hi - lo) * self.points[(i, l)]
        });
        Self::new(m)
    }
}
