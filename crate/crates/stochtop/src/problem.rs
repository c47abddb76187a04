//! Problem definitions read from versioned TOML files and resolved into
//! engine-ready problems. Validation reports every finding at once rather
//! than stopping at the first.

use nalgebra::DVector;
use serde::Deserialize;

use crate::density::{build_filter, build_symmetry_map, DensityProblem, FilterKind, SymmetrySpec};
use crate::error::{Error, Result};
use crate::fem::{FemModel, Mesh};
use crate::gsm::{generate_ground_structure, DiscreteFilterParams, GsmProblem, VoidZone};
use crate::loads::{angular_sweep, LoadSet};
use crate::metrics::Engine;
use crate::params::RunParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Density,
    Gsm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Density => write!(f, "density"),
            Method::Gsm => write!(f, "gsm"),
        }
    }
}

/// Raw problem file contents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub schema: u32,
    pub method: Method,
    pub title: Option<String>,
    pub engine: Option<Engine>,
    pub seed: Option<u64>,
    pub domain: DomainSpec,
    pub mesh: Option<MeshSpec>,
    pub material: Option<MaterialSpec>,
    pub density: Option<DensitySpec>,
    pub gsm: Option<GsmSpec>,
    #[serde(default)]
    pub supports: Vec<SupportSpec>,
    #[serde(default)]
    pub loads: Vec<PointLoadSpec>,
    #[serde(default)]
    pub load_sweeps: Vec<SweepSpec>,
    pub params: Option<ParamsSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub width: f64,
    pub height: f64,
    pub depth: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub e0: Option<f64>,
    pub e_min: Option<f64>,
    pub poisson: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub volume_fraction: f64,
    pub rho_min: Option<f64>,
    pub filter_radius: f64,
    pub filter_kind: Option<FilterKind>,
    /// Mirror symmetries to enforce: subset of ["x", "y"].
    pub symmetry: Option<Vec<String>>,
    pub continuation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsmSpec {
    pub volume_max: f64,
    /// Lower area bound as a multiple of the uniform initial area.
    pub x_min_factor: Option<f64>,
    /// Upper area bound as a multiple of the uniform initial area.
    pub x_max_factor: Option<f64>,
    /// Relative cutoff defining the exported topology (no discrete filter).
    pub cutoff: Option<f64>,
    pub grid: Option<GridSpec>,
    pub custom: Option<CustomTrussSpec>,
    pub filter: Option<FilterSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Divisions per axis; two entries for 2D, three for 3D.
    pub cells: Vec<usize>,
    /// Connectivity level; 0 or missing means full level.
    pub level: Option<usize>,
    #[serde(default)]
    pub voids: Vec<VoidSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoidSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTrussSpec {
    pub nodes: Vec<Vec<f64>>,
    pub members: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub alpha_f: Option<f64>,
    pub n_f: Option<usize>,
    pub final_alpha_f: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub at: Vec<f64>,
    /// Restrained axes, subset of ["x", "y", "z"]; all axes when omitted.
    pub dofs: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLoadSpec {
    pub at: Vec<f64>,
    pub direction: Vec<f64>,
    pub magnitude: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub at: Vec<f64>,
    pub count: usize,
    pub start_deg: Option<f64>,
    pub magnitude: Option<f64>,
    /// Weight of each generated case before normalization.
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub n: Option<usize>,
    pub n_s: Option<usize>,
    pub tau_step: Option<f64>,
    pub gamma: Option<f64>,
    pub n_step_window: Option<usize>,
    /// Absolute move limit (density method).
    pub move_limit: Option<f64>,
    /// Move limit as a multiple of the initial area (ground structures).
    pub move_factor: Option<f64>,
    pub eta: Option<f64>,
    pub tau_opt: Option<f64>,
    pub budget: Option<usize>,
    pub diagnostics: Option<bool>,
    pub damping: Option<bool>,
}

/// A resolved problem ready to run.
pub struct Resolved {
    pub kind: ResolvedKind,
    pub params: RunParams,
    pub method: Method,
    pub title: Option<String>,
    /// Uniform initial design value (volume fraction or initial area).
    pub initial_value: f64,
    /// Density grid layout for exports.
    pub grid_dims: Option<(usize, usize)>,
    pub warnings: Vec<String>,
}

pub enum ResolvedKind {
    Density(DensityProblem),
    Gsm(GsmProblem),
}

/// Read and parse a problem file.
pub fn parse_problem(path: &std::path::Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_str(&text)
}

pub fn parse_problem_str(text: &str) -> Result<ProblemSpec> {
    let spec: ProblemSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if spec.schema != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
            spec.schema
        )));
    }
    Ok(spec)
}

fn axis_index(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        "y" => Some(1),
        "z" => Some(2),
        _ => None,
    }
}

struct Validator {
    errors: Vec<String>,
}

impl Validator {
    fn new() -> Self {
        Validator { errors: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }

    fn finish(self) -> Result<()> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.errors))
        }
    }
}

impl ProblemSpec {
    /// Validate and resolve into an engine-ready problem plus parameters.
    pub fn resolve(&self) -> Result<Resolved> {
        match self.method {
            Method::Density => self.resolve_density(),
            Method::Gsm => self.resolve_gsm(),
        }
    }

    fn base_params(&self, mut params: RunParams) -> RunParams {
        if let Some(engine) = self.engine {
            params.engine = engine;
        }
        if let Some(seed) = self.seed {
            params.seed = seed;
        }
        if let Some(p) = &self.params {
            if let Some(v) = p.n {
                params.sample_size = v;
            }
            if let Some(v) = p.n_s {
                params.sample_refresh = v.max(1);
            }
            if let Some(v) = p.tau_step {
                params.tau_step = v;
            }
            if let Some(v) = p.gamma {
                params.gamma = v;
            }
            if let Some(v) = p.n_step_window {
                params.damping_window = v;
            }
            if let Some(v) = p.eta {
                params.eta = v;
            }
            if let Some(v) = p.tau_opt {
                params.tau_opt = v;
            }
            if let Some(v) = p.budget {
                params.step_budget = v;
            }
            if let Some(v) = p.diagnostics {
                params.diagnostics = v;
            }
            if let Some(v) = p.damping {
                params.damping_enabled = v;
            }
        }
        params
    }

    /// Gather point loads and sweeps into a load set; weights are normalized
    /// to sum to one, warning when the file's weights did not.
    fn gather_loads(
        &self,
        mesh: &Mesh,
        tol: f64,
        v: &mut Validator,
        warnings: &mut Vec<String>,
    ) -> Option<LoadSet> {
        let dim = mesh.dim();
        let dofs = mesh.dof_count();
        let mut cases: Vec<DVector<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();

        for (i, load) in self.loads.iter().enumerate() {
            let Some(node) = mesh.find_node(&load.at, tol) else {
                v.check(false, || format!("load {i}: no node at {:?}", load.at));
                continue;
            };
            v.check(load.direction.len() == dim, || {
                format!("load {i}: direction needs {dim} components")
            });
            let mag = load.magnitude.unwrap_or(1.0);
            let norm: f64 = load.direction.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm == 0.0 {
                v.check(false, || format!("load {i}: zero direction"));
                continue;
            }
            let mut f = DVector::zeros(dofs);
            for (a, &d) in load.direction.iter().take(dim).enumerate() {
                f[node * dim + a] = mag * d / norm;
            }
            cases.push(f);
            weights.push(load.weight.unwrap_or(1.0));
        }

        for (i, sweep) in self.load_sweeps.iter().enumerate() {
            let Some(node) = mesh.find_node(&sweep.at, tol) else {
                v.check(false, || {
                    format!("load sweep {i}: no node at {:?}", sweep.at)
                });
                continue;
            };
            if sweep.count == 0 {
                v.check(false, || format!("load sweep {i}: count must be >= 1"));
                continue;
            }
            if dim != 2 {
                v.check(false, || format!("load sweep {i}: sweeps are 2D only"));
                continue;
            }
            let swept = angular_sweep(
                dofs,
                node,
                dim,
                sweep.count,
                sweep.start_deg.unwrap_or(0.0),
                sweep.magnitude.unwrap_or(1.0),
            );
            match swept {
                Ok(generated) => {
                    let w = sweep.weight.unwrap_or(1.0);
                    for f in generated {
                        cases.push(f);
                        weights.push(w);
                    }
                }
                Err(e) => v.check(false, || format!("load sweep {i}: {e}")),
            }
        }

        if cases.is_empty() {
            v.check(false, || "no load cases defined".into());
            return None;
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            v.check(false, || "load weights must be strictly positive".into());
            return None;
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            warnings.push(format!("load weights sum to {total}; normalizing to 1"));
        }
        let mut normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let s: f64 = normalized.iter().sum();
        let last = normalized.len() - 1;
        normalized[last] += 1.0 - s;
        match LoadSet::new(cases, normalized) {
            Ok(set) => Some(set),
            Err(e) => {
                v.check(false, || format!("load set: {e}"));
                None
            }
        }
    }

    fn apply_supports(&self, mesh: &mut Mesh, tol: f64, v: &mut Validator) {
        if self.supports.is_empty() {
            v.check(false, || "at least one support is required".into());
        }
        for (i, s) in self.supports.iter().enumerate() {
            let Some(node) = mesh.find_node(&s.at, tol) else {
                v.check(false, || format!("support {i}: no node at {:?}", s.at));
                continue;
            };
            match &s.dofs {
                None => mesh.fix_node(node).unwrap(),
                Some(axes) => {
                    for name in axes {
                        match axis_index(name) {
                            Some(a) if a < mesh.dim() => mesh.fix_dof(node, a).unwrap(),
                            _ => v.check(false, || format!("support {i}: unknown axis {name:?}")),
                        }
                    }
                }
            }
        }
    }

    fn resolve_density(&self) -> Result<Resolved> {
        let mut v = Validator::new();
        let mut warnings = Vec::new();

        let Some(mesh_spec) = &self.mesh else {
            return Err(Error::Validation(vec![
                "density method needs a [mesh] section".into(),
            ]));
        };
        let Some(density) = &self.density else {
            return Err(Error::Validation(vec![
                "density method needs a [density] section".into(),
            ]));
        };
        v.check(self.gsm.is_none(), || {
            "[gsm] section not allowed for density".into()
        });
        v.check(
            density.volume_fraction > 0.0 && density.volume_fraction <= 1.0,
            || "volume_fraction must lie in (0, 1]".into(),
        );
        v.check(density.filter_radius > 0.0, || {
            "filter_radius must be positive".into()
        });

        let mut mesh = Mesh::rect_q4(
            self.domain.width,
            self.domain.height,
            mesh_spec.nx,
            mesh_spec.ny,
        )
        .map_err(|e| Error::Validation(vec![e.to_string()]))?;
        let tol = 1e-6 * self.domain.width.max(self.domain.height).max(1.0);
        self.apply_supports(&mut mesh, tol, &mut v);
        let loads = self.gather_loads(&mesh, tol, &mut v, &mut warnings);

        let symmetry_spec = match &density.symmetry {
            None => SymmetrySpec::default(),
            Some(axes) => {
                let mut spec = SymmetrySpec::default();
                for a in axes {
                    match a.as_str() {
                        "x" => spec.mirror_x = true,
                        "y" => spec.mirror_y = true,
                        other => v.check(false, || format!("unknown symmetry axis {other:?}")),
                    }
                }
                spec
            }
        };

        let material = self.material.clone().unwrap_or(MaterialSpec {
            e0: None,
            e_min: None,
            poisson: None,
        });
        let continuation = density
            .continuation
            .clone()
            .unwrap_or_else(|| vec![1.0, 1.5, 2.0, 2.5, 3.0]);

        v.finish()?;
        let loads = loads.expect("load set present when validation passed");

        let filter = build_filter(
            &mesh,
            density.filter_radius,
            density.filter_kind.unwrap_or(FilterKind::Linear),
        )?;
        let symmetry = if symmetry_spec.any() {
            Some(build_symmetry_map(&mesh, symmetry_spec)?)
        } else {
            None
        };
        let total_volume: f64 = (0..mesh.element_count())
            .map(|e| mesh.element_volume(e))
            .sum();
        let poisson = material.poisson.unwrap_or(0.3);
        let problem = DensityProblem {
            model: FemModel::new(mesh, poisson),
            loads,
            filter,
            symmetry,
            e0: material.e0.unwrap_or(1.0),
            e_min: material.e_min.unwrap_or(1e-9),
            poisson,
            rho_min: density.rho_min.unwrap_or(1e-3),
            v_max: density.volume_fraction * total_volume,
            continuation,
            initial: None,
        };
        problem.validate()?;

        let mut params = self.base_params(RunParams::density_defaults());
        if let Some(p) = &self.params {
            if let Some(mv) = p.move_limit {
                params.move_limit = mv;
            }
            if p.move_factor.is_some() {
                warnings.push("move_factor is ignored by the density method".into());
            }
        }

        Ok(Resolved {
            kind: ResolvedKind::Density(problem),
            params,
            method: Method::Density,
            title: self.title.clone(),
            initial_value: density.volume_fraction,
            grid_dims: Some((mesh_spec.nx, mesh_spec.ny)),
            warnings,
        })
    }

    fn resolve_gsm(&self) -> Result<Resolved> {
        let mut v = Validator::new();
        let mut warnings = Vec::new();

        let Some(gsm) = &self.gsm else {
            return Err(Error::Validation(vec![
                "gsm method needs a [gsm] section".into()
            ]));
        };
        v.check(self.mesh.is_none(), || {
            "[mesh] section not allowed for gsm".into()
        });
        v.check(self.density.is_none(), || {
            "[density] section not allowed for gsm".into()
        });
        v.check(gsm.volume_max > 0.0, || {
            "volume_max must be positive".into()
        });
        v.check(gsm.grid.is_some() != gsm.custom.is_some(), || {
            "gsm needs exactly one of [gsm.grid] or [gsm.custom]".into()
        });

        let mut mesh = match (&gsm.grid, &gsm.custom) {
            (Some(grid), None) => {
                let dims = grid.cells.len();
                if dims != 2 && dims != 3 {
                    v.check(false, || "grid.cells needs two or three entries".into());
                    return Err(Error::Validation(v.errors));
                }
                let cells = [
                    grid.cells[0],
                    grid.cells.get(1).copied().unwrap_or(0),
                    grid.cells.get(2).copied().unwrap_or(0),
                ];
                let depth = self.domain.depth.unwrap_or(0.0);
                v.check(cells[2] == 0 || depth > 0.0, || {
                    "3D grids need domain.depth".into()
                });
                let spacing = [
                    self.domain.width / cells[0].max(1) as f64,
                    self.domain.height / cells[1].max(1) as f64,
                    if cells[2] > 0 {
                        depth / cells[2] as f64
                    } else {
                        0.0
                    },
                ];
                let pad = |v: &[f64], fill: f64| {
                    [
                        v.first().copied().unwrap_or(fill),
                        v.get(1).copied().unwrap_or(fill),
                        v.get(2).copied().unwrap_or(fill),
                    ]
                };
                let voids: Vec<VoidZone> = grid
                    .voids
                    .iter()
                    .map(|z| VoidZone {
                        min: pad(&z.min, f64::NEG_INFINITY),
                        max: pad(&z.max, f64::INFINITY),
                    })
                    .collect();
                let gs = generate_ground_structure(cells, spacing, grid.level, &voids)
                    .map_err(|e| Error::Validation(vec![e.to_string()]))?;
                Mesh::truss(gs.dim, &gs.nodes, &gs.members)
                    .map_err(|e| Error::Validation(vec![e.to_string()]))?
            }
            (None, Some(custom)) => {
                let dim = custom.nodes.first().map(|n| n.len()).unwrap_or(0);
                v.check(dim == 2 || dim == 3, || {
                    "custom nodes need two or three coordinates".into()
                });
                v.check(custom.nodes.iter().all(|n| n.len() == dim), || {
                    "custom nodes differ in dimension".into()
                });
                let mut members = Vec::new();
                for (i, m) in custom.members.iter().enumerate() {
                    if m.len() != 2 {
                        v.check(false, || format!("member {i} needs two node indices"));
                    } else {
                        members.push([m[0], m[1]]);
                    }
                }
                if !v.errors.is_empty() {
                    return Err(Error::Validation(v.errors));
                }
                let nodes: Vec<[f64; 3]> = custom
                    .nodes
                    .iter()
                    .map(|n| {
                        [
                            n[0],
                            n.get(1).copied().unwrap_or(0.0),
                            n.get(2).copied().unwrap_or(0.0),
                        ]
                    })
                    .collect();
                Mesh::truss(dim, &nodes, &members)
                    .map_err(|e| Error::Validation(vec![e.to_string()]))?
            }
            _ => return Err(Error::Validation(v.errors)),
        };

        let scale = self
            .domain
            .width
            .max(self.domain.height)
            .max(self.domain.depth.unwrap_or(0.0))
            .max(1.0);
        let tol = 1e-6 * scale;
        self.apply_supports(&mut mesh, tol, &mut v);
        let loads = self.gather_loads(&mesh, tol, &mut v, &mut warnings);

        let has_filter = gsm.filter.is_some();
        let x_min_factor = gsm
            .x_min_factor
            .unwrap_or(if has_filter { 0.0 } else { 1e-2 });
        let x_max_factor = gsm.x_max_factor.unwrap_or(1e4);
        v.check(x_min_factor >= 0.0 && x_min_factor < x_max_factor, || {
            "need 0 <= x_min_factor < x_max_factor".into()
        });
        if has_filter {
            v.check(x_min_factor == 0.0, || {
                "the discrete filter requires x_min_factor = 0".into()
            });
        }

        v.finish()?;
        let loads = loads.expect("load set present when validation passed");

        let e0 = self.material.as_ref().and_then(|m| m.e0).unwrap_or(1.0);
        let total_length: f64 = (0..mesh.element_count()).map(|e| mesh.bar_length(e)).sum();
        let x0 = gsm.volume_max / total_length;
        let discrete_filter = gsm.filter.as_ref().map(|f| DiscreteFilterParams {
            alpha_f: f.alpha_f.unwrap_or(1e-4),
            n_f: f.n_f.unwrap_or(10),
            final_alpha_f: f.final_alpha_f,
        });
        let problem = GsmProblem {
            model: FemModel::new(mesh, 0.0),
            loads,
            v_max: gsm.volume_max,
            x_min: x_min_factor * x0,
            x_max: x_max_factor * x0,
            e0,
            discrete_filter,
            cutoff: gsm.cutoff.unwrap_or(1e-2),
        };
        problem.validate()?;

        let mut params = self.base_params(RunParams::gsm_defaults());
        params.move_limit = x0
            * self
                .params
                .as_ref()
                .and_then(|p| p.move_factor)
                .unwrap_or(1e4);
        if let Some(p) = &self.params {
            if let Some(mv) = p.move_limit {
                params.move_limit = mv;
            }
        }

        Ok(Resolved {
            kind: ResolvedKind::Gsm(problem),
            params,
            method: Method::Gsm,
            title: self.title.clone(),
            initial_value: x0,
            grid_dims: None,
            warnings,
        })
    }
}
