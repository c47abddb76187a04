use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Weighted multi-load-case set. Column `i` of the weighted matrix is
/// `sqrt(weight_i) * f_i`, so the weighted compliance is the trace of
/// `F^T K^-1 F`.
#[derive(Debug, Clone)]
pub struct LoadSet {
    weights: Vec<f64>,
    cases: Vec<DVector<f64>>,
    weighted: DMatrix<f64>,
}

impl LoadSet {
    /// Build from raw load cases and weights. Weights must be strictly
    /// positive and sum to one within 1e-12.
    pub fn new(cases: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::InvalidInput(
                "load set needs at least one case".into(),
            ));
        }
        if cases.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: cases.len(),
                got: weights.len(),
                context: "one weight per load case",
            });
        }
        let dim = cases[0].len();
        if cases.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidInput("load cases differ in length".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput(
                "load weights must be strictly positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "load weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        let mut weighted = DMatrix::zeros(dim, cases.len());
        for (i, (case, &w)) in cases.iter().zip(&weights).enumerate() {
            weighted.set_column(i, &(case * w.sqrt()));
        }
        Ok(Self {
            weights,
            cases,
            weighted,
        })
    }

    /// Equal weights `1/m` over the given cases.
    pub fn equal_weighted(cases: Vec<DVector<f64>>) -> Result<Self> {
        let m = cases.len();
        let w = 1.0 / m as f64;
        let mut weights = vec![w; m];
        // make the sum exactly 1.0 regardless of rounding
        let sum: f64 = weights.iter().sum();
        weights[m - 1] += 1.0 - sum;
        Self::new(cases, weights)
    }

    pub fn case_count(&self) -> usize {
        self.cases.len()
    }

    pub fn dim(&self) -> usize {
        self.weighted.nrows()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn case(&self, i: usize) -> &DVector<f64> {
        &self.cases[i]
    }

    /// The weighted load matrix `F`.
    pub fn weighted_matrix(&self) -> &DMatrix<f64> {
        &self.weighted
    }

    /// Combined load `F * xi` for one sign vector.
    pub fn combine(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        if xi.len() != self.cases.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cases.len(),
                got: xi.len(),
                context: "sign vector length vs load-case count",
            });
        }
        Ok(&self.weighted * xi)
    }
}

/// Point loads at `node`, swept over `count` equally spaced directions
/// starting at `start_deg` degrees. A full-circle sweep of magnitude-equal
/// vectors sums to zero.
pub fn angular_sweep(
    dof_count: usize,
    node: usize,
    dim: usize,
    count: usize,
    start_deg: f64,
    magnitude: f64,
) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput("angular sweep needs count >= 1".into()));
    }
    if dim != 2 {
        return Err(Error::InvalidInput(
            "angular sweeps are defined in 2D".into(),
        ));
    }
    let mut cases = Vec::with_capacity(count);
    for j in 0..count {
        let theta = (start_deg + 360.0 * j as f64 / count as f64).to_radians();
        let mut f = DVector::zeros(dof_count);
        f[node * dim] = magnitude * theta.cos();
        f[node * dim + 1] = magnitude * theta.sin();
        cases.push(f);
    }
    Ok(cases)
}
