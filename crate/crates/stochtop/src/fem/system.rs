use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::element::{bar_stiffness_unit, q4_stiffness_unit, MaterialModel};
use crate::fem::mesh::{ElementKind, Mesh};
use crate::fem::sparse::{solve_cg, Csr, SkylineCholesky};

/// Relative residual required of every linear solve.
const SOLVE_RESIDUAL_TOL: f64 = 1e-9;
/// Reduced systems larger than this fall back to conjugate gradients.
const DIRECT_SOLVER_LIMIT: usize = 150_000;
const CG_TOL: f64 = 1e-10;

/// A mesh bundled with precomputed unit element stiffness matrices
/// (unit modulus for continuum, unit axial rigidity for bars).
#[derive(Debug, Clone)]
pub struct FemModel {
    mesh: Mesh,
    unit: Vec<DMatrix<f64>>,
}

impl FemModel {
    pub fn new(mesh: Mesh, poisson: f64) -> Self {
        let unit = (0..mesh.element_count())
            .map(|e| match mesh.kind() {
                ElementKind::Q4 => {
                    let n = mesh.element(e);
                    let c: Vec<[f64; 2]> = n
                        .iter()
                        .map(|&i| [mesh.node(i)[0], mesh.node(i)[1]])
                        .collect();
                    let ke = q4_stiffness_unit(&[c[0], c[1], c[2], c[3]], poisson);
                    DMatrix::from_fn(8, 8, |i, j| ke[(i, j)])
                }
                ElementKind::Bar => {
                    bar_stiffness_unit(&mesh.bar_direction(e), mesh.bar_length(e), mesh.dim())
                }
            })
            .collect();
        Self { mesh, unit }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn unit_matrix(&self, e: usize) -> &DMatrix<f64> {
        &self.unit[e]
    }

    /// Assemble the reduced stiffness system for the given physical design
    /// values. Supports are eliminated by dropping rows and columns; bar
    /// elements with exactly zero stiffness are skipped entirely and degrees
    /// of freedom no element touches drop out of the reduced system.
    pub fn assemble(&self, values: &[f64], material: &MaterialModel) -> Result<StiffnessSystem> {
        let mesh = &self.mesh;
        if values.len() != mesh.element_count() {
            return Err(Error::DimensionMismatch {
                expected: mesh.element_count(),
                got: values.len(),
                context: "design values per element",
            });
        }
        if mesh.fixed_dofs().is_empty() {
            return Err(Error::UnrestrainedStructure(
                "no fixed degrees of freedom; structure admits rigid-body motion".into(),
            ));
        }

        let full_dim = mesh.dof_count();
        let mut touched = vec![false; full_dim];
        let mut scales = Vec::with_capacity(values.len());
        for (e, &v) in values.iter().enumerate() {
            let s = material.modulus(v);
            if s != 0.0 {
                for dof in mesh.element_dofs(e) {
                    touched[dof] = true;
                }
            }
            scales.push(s);
        }

        let mut reduced_of = vec![usize::MAX; full_dim];
        let mut fixed = vec![false; full_dim];
        for &dof in mesh.fixed_dofs() {
            fixed[dof] = true;
        }
        let mut reduced_dim = 0usize;
        for dof in 0..full_dim {
            if !fixed[dof] && touched[dof] {
                reduced_of[dof] = reduced_dim;
                reduced_dim += 1;
            }
        }
        if reduced_dim == 0 {
            return Err(Error::UnrestrainedStructure(
                "no free degrees of freedom remain after elimination".into(),
            ));
        }

        let mut triplets = Vec::new();
        for (e, &scale) in scales.iter().enumerate() {
            if scale == 0.0 {
                continue;
            }
            let dofs = mesh.element_dofs(e);
            let ke = &self.unit[e];
            for (li, &gi) in dofs.iter().enumerate() {
                let ri = reduced_of[gi];
                if ri == usize::MAX {
                    continue;
                }
                for (lj, &gj) in dofs.iter().enumerate() {
                    let rj = reduced_of[gj];
                    if rj == usize::MAX {
                        continue;
                    }
                    triplets.push((ri, rj, scale * ke[(li, lj)]));
                }
            }
        }

        let csr = Csr::from_triplets(reduced_dim, &triplets);
        // truss systems may legitimately carry unloaded mechanism DOFs while
        // the member filter is active; continuum assemblies must be SPD
        let drop_tol = match mesh.kind() {
            ElementKind::Bar => Some(1e-12),
            ElementKind::Q4 => None,
        };
        let mut dropped = vec![false; reduced_dim];
        let backend = if reduced_dim <= DIRECT_SOLVER_LIMIT {
            let fac = SkylineCholesky::factor(&csr, drop_tol)?;
            dropped.copy_from_slice(fac.dropped());
            Backend::Direct(fac)
        } else {
            Backend::ConjugateGradient
        };

        Ok(StiffnessSystem {
            inner: Arc::new(SystemInner {
                full_dim,
                reduced_of,
                fixed,
                csr,
                dropped,
                backend,
            }),
            counter: AtomicU64::new(0),
        })
    }

    /// `u_left^T (dK/dv_e) u_right` restricted to element `e`, where `v_e` is
    /// the element's physical design value. Both displacement vectors span the
    /// full DOF set.
    pub fn sensitivity_kernel(
        &self,
        material: &MaterialModel,
        values: &[f64],
        e: usize,
        u_left: &DVector<f64>,
        u_right: &DVector<f64>,
    ) -> f64 {
        let dofs = self.mesh.element_dofs(e);
        let ke = &self.unit[e];
        let m = dofs.len();
        let mut form = 0.0;
        for i in 0..m {
            let uli = u_left[dofs[i]];
            if uli == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..m {
                row += ke[(i, j)] * u_right[dofs[j]];
            }
            form += uli * row;
        }
        material.dmodulus(values[e]) * form
    }
}

#[derive(Debug)]
enum Backend {
    Direct(SkylineCholesky),
    ConjugateGradient,
}

#[derive(Debug)]
struct SystemInner {
    full_dim: usize,
    reduced_of: Vec<usize>,
    fixed: Vec<bool>,
    csr: Csr,
    dropped: Vec<bool>,
    backend: Backend,
}

/// Assembled, factorized stiffness system over the free degrees of freedom.
///
/// Every right-hand side solved through [`StiffnessSystem::solve`] increments
/// the instance's solve counter by exactly one. A [`StiffnessSystem::detached_view`]
/// shares the factorization but counts its own solves, which keeps diagnostic
/// solves out of an optimization run's cost accounting.
#[derive(Debug)]
pub struct StiffnessSystem {
    inner: Arc<SystemInner>,
    counter: AtomicU64,
}

impl StiffnessSystem {
    pub fn reduced_dim(&self) -> usize {
        self.inner.csr.n
    }

    pub fn full_dim(&self) -> usize {
        self.inner.full_dim
    }

    pub fn solve_count(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    /// Share the factorization under an independent solve counter.
    pub fn detached_view(&self) -> StiffnessSystem {
        StiffnessSystem {
            inner: Arc::clone(&self.inner),
            counter: AtomicU64::new(0),
        }
    }

    /// Largest relative asymmetry of the assembled reduced matrix.
    pub fn max_relative_asymmetry(&self) -> f64 {
        self.inner.csr.max_relative_asymmetry()
    }

    /// `u^T K u` over the reduced system; `u` spans the full DOF set.
    pub fn energy(&self, u: &DVector<f64>) -> f64 {
        let r = self.reduce(u);
        let mut ku = vec![0.0; r.len()];
        self.inner.csr.matvec(&r, &mut ku);
        r.iter().zip(&ku).map(|(a, b)| a * b).sum()
    }

    fn reduce(&self, full: &DVector<f64>) -> Vec<f64> {
        let mut r = vec![0.0; self.inner.csr.n];
        for (dof, &ri) in self.inner.reduced_of.iter().enumerate() {
            if ri != usize::MAX {
                r[ri] = full[dof];
            }
        }
        r
    }

    fn expand(&self, reduced: &[f64]) -> DVector<f64> {
        let mut full = DVector::zeros(self.inner.full_dim);
        for (dof, &ri) in self.inner.reduced_of.iter().enumerate() {
            if ri != usize::MAX {
                full[dof] = reduced[ri];
            }
        }
        full
    }

    /// Solve for one right-hand side over the full DOF numbering.
    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.inner.full_dim {
            return Err(Error::DimensionMismatch {
                expected: self.inner.full_dim,
                got: rhs.len(),
                context: "right-hand side length",
            });
        }
        for (dof, &is_fixed) in self.inner.fixed.iter().enumerate() {
            if is_fixed && rhs[dof] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "right-hand side must be zero at fixed DOF {dof}"
                )));
            }
            if !is_fixed && rhs[dof] != 0.0 {
                let ri = self.inner.reduced_of[dof];
                if ri == usize::MAX || self.inner.dropped[ri] {
                    return Err(Error::UnrestrainedStructure(format!(
                        "load applied at DOF {dof}, which has no stiffness path to the supports"
                    )));
                }
            }
        }

        let b = self.reduce(rhs);
        let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x = if norm_b == 0.0 {
            vec![0.0; b.len()]
        } else {
            let x = match &self.inner.backend {
                Backend::Direct(fac) => {
                    let mut x = b.clone();
                    fac.solve_in_place(&mut x);
                    x
                }
                Backend::ConjugateGradient => {
                    solve_cg(&self.inner.csr, &b, CG_TOL, 40 * self.inner.csr.n.max(100))?
                }
            };
            let mut kx = vec![0.0; x.len()];
            self.inner.csr.matvec(&x, &mut kx);
            let res = kx
                .iter()
                .zip(&b)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / norm_b;
            if !(res <= SOLVE_RESIDUAL_TOL) {
                return Err(Error::Solver(format!(
                    "solve residual {res:.3e} exceeds tolerance {SOLVE_RESIDUAL_TOL:.1e}"
                )));
            }
            x
        };
        self.counter.fetch_add(1, Ordering::Relaxed);
        Ok(self.expand(&x))
    }

    /// Solve for every column of `rhs`; the counter advances once per column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = DVector::from_column_slice(rhs.column(c).as_slice());
            out.set_column(c, &self.solve_vec(&col)?);
        }
        Ok(out)
    }
}
