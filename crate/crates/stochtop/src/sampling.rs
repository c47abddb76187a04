//! Rademacher sampling, trace estimation and the sample-average estimators of
//! the weighted compliance and its gradient.
//!
//! For a symmetric matrix `A` and a random vector `xi` with i.i.d. +-1
//! entries, `E(xi^T A xi) = Trace(A)`, so averaging the quadratic form over a
//! few sampled sign vectors estimates the trace. Applied to
//! `A = F^T K^-1 F`, each sample costs one linear solve with the combined
//! load `F xi`, which is what makes the randomized optimization engines cheap
//! compared to solving every load case.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignField;
use crate::error::{Error, Result};
use crate::fem::{FemModel, MaterialModel, StiffnessSystem};
use crate::loads::LoadSet;

/// Identifies the (seed, step) slot a batch was drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchProvenance {
    pub seed: u64,
    pub step: u64,
}

impl std::fmt::Display for BatchProvenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(seed {}, step {})", self.seed, self.step)
    }
}

/// A batch of `n` Rademacher sign vectors of dimension `m`.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    provenance: BatchProvenance,
    xi: Vec<DVector<f64>>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Counter-based stream key: every (seed, step, sample) triple owns an
/// independent, reproducible generator regardless of draw order elsewhere.
fn stream_key(seed: u64, step: u64, sample: u64) -> [u8; 32] {
    let mut state = seed ^ 0xA076_1D64_78BD_642F;
    let mut key = [0u8; 32];
    let a = splitmix64(&mut state);
    state ^= step.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let b = splitmix64(&mut state);
    state ^= sample.wrapping_mul(0x8EBC_6AF0_9C88_C6E3);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    key
}

/// Draw `n` Rademacher vectors of dimension `m` for the given (seed, step).
/// Deterministic: the same arguments always produce the same batch.
pub fn draw_rademacher(m: usize, n: usize, seed: u64, step: u64) -> Result<SampleBatch> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput(
            "rademacher batch needs m >= 1 and n >= 1".into(),
        ));
    }
    let mut xi = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = ChaCha8Rng::from_seed(stream_key(seed, step, k as u64));
        let v = DVector::from_fn(m, |_, _| if rng.next_u64() & 1 == 1 { 1.0 } else { -1.0 });
        xi.push(v);
    }
    Ok(SampleBatch {
        provenance: BatchProvenance { seed, step },
        xi,
    })
}

impl SampleBatch {
    /// All `2^m` sign vectors; averaging over this batch reproduces the exact
    /// trace/expectation. Guarded to small `m`.
    pub fn exhaustive(m: usize) -> Result<SampleBatch> {
        if m == 0 || m > 20 {
            return Err(Error::InvalidInput(format!(
                "exhaustive batch needs 1 <= m <= 20, got {m}"
            )));
        }
        let count = 1usize << m;
        let xi = (0..count)
            .map(|bits| DVector::from_fn(m, |i, _| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }))
            .collect();
        Ok(SampleBatch {
            provenance: BatchProvenance {
                seed: u64::MAX,
                step: u64::MAX,
            },
            xi,
        })
    }

    pub fn provenance(&self) -> BatchProvenance {
        self.provenance
    }

    pub fn sample_count(&self) -> usize {
        self.xi.len()
    }

    pub fn dim(&self) -> usize {
        self.xi.first().map_or(0, |v| v.len())
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.xi
    }

    /// Combined loads `g_k = F xi_k` for every sample in the batch.
    pub fn combine(&self, loads: &LoadSet) -> Result<SampleLoads> {
        let g = self
            .xi
            .iter()
            .map(|xi| loads.combine(xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleLoads {
            provenance: self.provenance,
            g,
        })
    }
}

/// Combined sample loads `F xi_k` carrying the provenance of their batch.
#[derive(Debug, Clone)]
pub struct SampleLoads {
    provenance: BatchProvenance,
    g: Vec<DVector<f64>>,
}

impl SampleLoads {
    pub fn provenance(&self) -> BatchProvenance {
        self.provenance
    }

    pub fn sample_count(&self) -> usize {
        self.g.len()
    }

    pub fn loads(&self) -> &[DVector<f64>] {
        &self.g
    }
}

/// Mean, biased sample variance and standard deviation of a set of
/// quadratic-form samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEstimate {
    pub mean: f64,
    pub sample_variance: f64,
    pub sample_std_dev: f64,
    pub n: usize,
}

impl TraceEstimate {
    fn from_samples(samples: &[f64]) -> Result<Self> {
        let variance = sample_variance(samples)?;
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        Ok(TraceEstimate {
            mean,
            sample_variance: variance,
            sample_std_dev: variance.sqrt(),
            n,
        })
    }
}

/// Estimate `Trace(A)` as the batch average of `xi^T A xi`, with `A` given by
/// its action on a vector. `A` must be symmetric.
pub fn hutchinson_trace<F>(apply_a: F, batch: &SampleBatch) -> Result<TraceEstimate>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut samples = Vec::with_capacity(batch.sample_count());
    for xi in batch.vectors() {
        let axi = apply_a(xi);
        if axi.len() != xi.len() {
            return Err(Error::DimensionMismatch {
                expected: xi.len(),
                got: axi.len(),
                context: "operator output vs sign vector",
            });
        }
        samples.push(xi.dot(&axi));
    }
    TraceEstimate::from_samples(&samples)
}

/// Exact variance of `xi^T A xi` for a symmetric matrix:
/// `2 * sum_{i != j} A_ij^2`.
pub fn exact_variance(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
            context: "square matrix",
        });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut sum = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i == j {
                continue;
            }
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
            sum += a[(i, j)] * a[(i, j)];
        }
    }
    Ok(2.0 * sum)
}

/// Biased (divide-by-n) sample variance of quadratic-form samples.
pub fn sample_variance(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "sample variance of an empty list".into(),
        ));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    Ok(samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n)
}

/// Displacements produced by [`estimate_compliance`], kept so the gradient can
/// reuse them without further solves.
#[derive(Debug, Clone)]
pub struct SampleSolution {
    provenance: BatchProvenance,
    displacements: Vec<DVector<f64>>,
    estimate: TraceEstimate,
}

impl SampleSolution {
    pub fn estimate(&self) -> TraceEstimate {
        self.estimate
    }

    pub fn compliance(&self) -> f64 {
        self.estimate.mean
    }

    pub fn displacements(&self) -> &[DVector<f64>] {
        &self.displacements
    }

    pub fn provenance(&self) -> BatchProvenance {
        self.provenance
    }
}

/// Sample-average compliance estimate `(1/n) sum_k g_k^T K^-1 g_k`.
/// Consumes exactly one solve per sample and retains the displacements.
pub fn estimate_compliance(sys: &StiffnessSystem, loads: &SampleLoads) -> Result<SampleSolution> {
    let mut samples = Vec::with_capacity(loads.sample_count());
    let mut displacements = Vec::with_capacity(loads.sample_count());
    for g in loads.loads() {
        let u = sys.solve_vec(g)?;
        samples.push(g.dot(&u));
        displacements.push(u);
    }
    Ok(SampleSolution {
        provenance: loads.provenance(),
        displacements,
        estimate: TraceEstimate::from_samples(&samples)?,
    })
}

/// Sample-average gradient: component `e` is
/// `-(1/n) sum_k u_k^T (dK/dv_e) u_k`, reusing the displacements of
/// [`estimate_compliance`]. Rejects displacements from a different batch.
pub fn estimate_sensitivity(
    model: &FemModel,
    material: &MaterialModel,
    values: &[f64],
    solution: &SampleSolution,
    batch: &SampleBatch,
) -> Result<Vec<f64>> {
    if solution.provenance != batch.provenance() {
        return Err(Error::StaleBatch {
            expected: batch.provenance().to_string(),
            got: solution.provenance.to_string(),
        });
    }
    let n = solution.displacements.len() as f64;
    let mut grad = vec![0.0; model.mesh().element_count()];
    for (e, g) in grad.iter_mut().enumerate() {
        let mut acc = 0.0;
        // fixed summation order keeps reruns bit-identical
        for u in &solution.displacements {
            acc += model.sensitivity_kernel(material, values, e, u, u);
        }
        *g = -acc / n;
    }
    Ok(grad)
}

/// Exact weighted compliance and gradient; one solve per load case. The
/// gradient is with respect to the physical element values (no filter chain).
pub fn exact_compliance_and_gradient(
    model: &FemModel,
    material: &MaterialModel,
    values: &[f64],
    loads: &LoadSet,
    sys: &StiffnessSystem,
) -> Result<(f64, Vec<f64>)> {
    let f = loads.weighted_matrix();
    let u = sys.solve(f)?;
    let mut compliance = 0.0;
    for c in 0..f.ncols() {
        compliance += f.column(c).dot(&u.column(c));
    }
    let mut grad = vec![0.0; model.mesh().element_count()];
    let cols: Vec<DVector<f64>> = (0..u.ncols())
        .map(|c| DVector::from_column_slice(u.column(c).as_slice()))
        .collect();
    for (e, g) in grad.iter_mut().enumerate() {
        let mut acc = 0.0;
        for col in &cols {
            acc += model.sensitivity_kernel(material, values, e, col, col);
        }
        *g = -acc;
    }
    Ok((compliance, grad))
}

/// Convenience wrapper around [`DesignField`] values for call sites that have
/// a field rather than a slice.
pub fn estimate_sensitivity_for_field(
    model: &FemModel,
    material: &MaterialModel,
    field: &DesignField,
    solution: &SampleSolution,
    batch: &SampleBatch,
) -> Result<Vec<f64>> {
    estimate_sensitivity(model, material, &field.values, solution, batch)
}
