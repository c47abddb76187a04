//! Minimal sparse kernels for the reduced stiffness system: a CSR matrix for
//! products and residual checks, a skyline (envelope) Cholesky factorization
//! for the direct path, and a Jacobi-preconditioned conjugate-gradient
//! fallback for systems too large to factor.

use crate::error::{Error, Result};

/// Compressed sparse row matrix, full (both triangles) storage.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Build from unordered triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            let p = next[i];
            cols[p] = j;
            vals[p] = v;
            next[i] += 1;
        }
        // sort each row by column and merge duplicates
        let mut row_ptr = vec![0usize; n + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        for i in 0..n {
            let (lo, hi) = (counts[i], counts[i + 1]);
            let mut row: Vec<(usize, f64)> = cols[lo..hi]
                .iter()
                .copied()
                .zip(vals[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if out_cols.len() > row_ptr[i] && *out_cols.last().unwrap() == c {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            row_ptr[i + 1] = out_cols.len();
        }
        Csr {
            n,
            row_ptr,
            cols: out_cols,
            vals: out_vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.cols[p] == j {
                return self.vals[p];
            }
        }
        0.0
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn max_relative_asymmetry(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[p];
                if j > i {
                    worst = worst.max((self.vals[p] - self.get(j, i)).abs());
                }
            }
        }
        worst / scale
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Skyline (envelope) storage of the lower triangle with an in-place
/// Cholesky factorization. Adequate for the banded systems produced by
/// structured meshes and small ground structures.
///
/// With a drop tolerance, degrees of freedom whose pivot collapses relative
/// to their assembled diagonal are constrained to zero instead of failing the
/// factorization. Filtered ground structures routinely carry unloaded
/// mechanism DOFs mid-run; dropping them is the sparse-solver equivalent of
/// the automatic single-point constraints used by structural codes. Loads on
/// dropped DOFs are rejected at solve time.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    /// first stored column of each row
    first: Vec<usize>,
    /// start of each row's envelope in `data`
    row_start: Vec<usize>,
    data: Vec<f64>,
    dropped: Vec<bool>,
}

impl SkylineCholesky {
    /// Factor the matrix given by `csr` (assumed symmetric). With
    /// `drop_tol = None` any non-positive pivot fails with
    /// [`Error::UnrestrainedStructure`]; with `Some(rel)` pivots at or below
    /// `rel` times the assembled diagonal are dropped.
    pub fn factor(csr: &Csr, drop_tol: Option<f64>) -> Result<Self> {
        let n = csr.n;
        let mut first = (0..n).collect::<Vec<_>>();
        for i in 0..n {
            for p in csr.row_ptr[i]..csr.row_ptr[i + 1] {
                let j = csr.cols[p];
                if j <= i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut row_start = vec![0usize; n + 1];
        for i in 0..n {
            row_start[i + 1] = row_start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; row_start[n]];
        for i in 0..n {
            for p in csr.row_ptr[i]..csr.row_ptr[i + 1] {
                let j = csr.cols[p];
                if j <= i {
                    data[row_start[i] + (j - first[i])] = csr.vals[p];
                }
            }
        }

        let diag0 = csr.diagonal();
        let mut fac = SkylineCholesky {
            n,
            first,
            row_start,
            data,
            dropped: vec![false; n],
        };
        fac.decompose(&diag0, drop_tol)?;
        Ok(fac)
    }

    fn decompose(&mut self, diag0: &[f64], drop_tol: Option<f64>) -> Result<()> {
        for i in 0..self.n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let mut sum = self.data[self.row_start[i] + (j - fi)];
                for k in lo..j {
                    sum -= self.data[self.row_start[i] + (k - fi)]
                        * self.data[self.row_start[j] + (k - fj)];
                }
                if j < i {
                    let slot = self.row_start[i] + (j - fi);
                    if self.dropped[j] {
                        self.data[slot] = 0.0;
                    } else {
                        self.data[slot] = sum / self.data[self.row_start[j] + (j - fj)];
                    }
                } else {
                    let slot = self.row_start[i] + (i - fi);
                    match drop_tol {
                        Some(rel) if sum <= rel * diag0[i].max(0.0) => {
                            // mechanism DOF: constrain it instead of failing
                            for k in fi..i {
                                self.data[self.row_start[i] + (k - fi)] = 0.0;
                            }
                            self.data[slot] = 1.0;
                            self.dropped[i] = true;
                        }
                        // only an exactly non-positive pivot counts as
                        // singular; legitimate systems reach extreme
                        // conditioning (area ratios near 1e16 under the
                        // stiffness floor) and the solve residual backstops
                        // near-singular dust
                        _ if !(sum > 0.0) => {
                            return Err(Error::UnrestrainedStructure(format!(
                                "non-positive pivot {sum:.3e} at reduced equation {i} \
                                 (structure admits rigid-body or zero-stiffness motion)"
                            )));
                        }
                        _ => self.data[slot] = sum.sqrt(),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dropped(&self) -> &[bool] {
        &self.dropped
    }

    /// Solve `L L^T x = b` in place; dropped DOFs are held at zero.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        // forward: L y = b
        for i in 0..self.n {
            if self.dropped[i] {
                b[i] = 0.0;
                continue;
            }
            let fi = self.first[i];
            let mut sum = b[i];
            for k in fi..i {
                sum -= self.data[self.row_start[i] + (k - fi)] * b[k];
            }
            b[i] = sum / self.data[self.row_start[i] + (i - fi)];
        }
        // backward: L^T x = y
        for i in (0..self.n).rev() {
            if self.dropped[i] {
                b[i] = 0.0;
                continue;
            }
            let fi = self.first[i];
            b[i] /= self.data[self.row_start[i] + (i - fi)];
            let xi = b[i];
            for k in fi..i {
                b[k] -= self.data[self.row_start[i] + (k - fi)] * xi;
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients; used instead of the direct
/// factorization once systems grow past the skyline's practical range.
pub fn solve_cg(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Solver(
                "CG encountered a non-positive curvature".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r <= tol * norm_b {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::Solver(format!(
        "CG did not converge in {max_iter} iterations (relative residual {:.3e})",
        norm_r / norm_b
    )))
}
