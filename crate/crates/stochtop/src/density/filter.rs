use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Mesh;

/// Distance weighting of the density filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// Weights proportional to `max(0, r - dist)`.
    Linear,
    /// Weights proportional to `max(0, r - dist)^2`.
    Quadratic,
}

/// Row-stochastic density filter `rho_bar = H rho` built on element
/// centroids.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    radius: f64,
    kind: FilterKind,
}

/// Build the filter matrix for the given radius. Neighbor search uses a
/// uniform spatial grid, so construction is linear in the element count for
/// bounded neighbor counts.
pub fn build_filter(mesh: &Mesh, radius: f64, kind: FilterKind) -> Result<DensityFilter> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "filter radius must be positive, got {radius}"
        )));
    }
    let m = mesh.element_count();
    let centroids: Vec<[f64; 3]> = (0..m).map(|e| mesh.centroid(e)).collect();

    // bucket elements by centroid cell of size `radius`
    use std::collections::HashMap;
    let key = |c: &[f64; 3]| -> (i64, i64, i64) {
        (
            (c[0] / radius).floor() as i64,
            (c[1] / radius).floor() as i64,
            (c[2] / radius).floor() as i64,
        )
    };
    let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (e, c) in centroids.iter().enumerate() {
        buckets.entry(key(c)).or_default().push(e);
    }

    let mut row_ptr = vec![0usize; m + 1];
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    let mut all_singleton = true;
    for (e, c) in centroids.iter().enumerate() {
        let (kx, ky, kz) = key(c);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(cands) = buckets.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in cands {
                        let d2: f64 = (0..3).map(|a| (centroids[j][a] - c[a]).powi(2)).sum();
                        let dist = d2.sqrt();
                        if dist < radius {
                            let w = match kind {
                                FilterKind::Linear => radius - dist,
                                FilterKind::Quadratic => (radius - dist) * (radius - dist),
                            };
                            row.push((j, w));
                        }
                    }
                }
            }
        }
        row.sort_by_key(|&(j, _)| j);
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        if row.len() > 1 {
            all_singleton = false;
        }
        for (j, w) in row {
            cols.push(j);
            weights.push(w / total);
        }
        row_ptr[e + 1] = cols.len();
    }
    if all_singleton {
        log::warn!(
            "filter radius {radius} is below the centroid spacing; the filter degenerates to the identity"
        );
    }
    Ok(DensityFilter {
        row_ptr,
        cols,
        weights,
        radius,
        kind,
    })
}

impl DensityFilter {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical field `H x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.weights[p] * x[self.cols[p]];
            }
            out[i] = s;
        }
        out
    }

    /// Chain rule through the filter: `H^T g`.
    pub fn chain_gradient(&self, g: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; m];
        for i in 0..m {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[p]] += self.weights[p] * g[i];
            }
        }
        out
    }

    /// Row sums; each must be 1 for a well-formed filter.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                self.weights[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .sum()
            })
            .collect()
    }
}
