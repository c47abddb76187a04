//! SIMP density-based continuum optimization: filtering, exact and
//! sample-average compliance/sensitivity, penalization continuation and
//! optional symmetry enforcement, driven by either the standard (all load
//! cases per step) or the stochastic (sampled combined loads) engine.

mod filter;
mod symmetry;

pub use filter::{build_filter, DensityFilter, FilterKind};
pub use symmetry::{build_symmetry_map, SymmetryMap, SymmetrySpec};

use crate::damping::{gradient_alignment, kkt_angle, DampingState};
use crate::design::DesignField;
use crate::error::{Error, Result};
use crate::fem::{FemModel, MaterialModel};
use crate::loads::LoadSet;
use crate::metrics::{Engine, RunMetrics, RunResult, StepRecord};
use crate::oc::oc_update;
use crate::params::RunParams;
use crate::sampling::{
    draw_rademacher, estimate_compliance, estimate_sensitivity, exact_compliance_and_gradient,
    SampleBatch,
};

/// Advance to the next penalization value after this many steps even if the
/// design-change trigger never fires.
const STEPS_PER_PENAL_CAP: usize = 300;

/// A density-method problem: mesh/model, loads, filter and material data.
#[derive(Debug)]
pub struct DensityProblem {
    pub model: FemModel,
    pub loads: LoadSet,
    pub filter: DensityFilter,
    pub symmetry: Option<SymmetryMap>,
    pub e0: f64,
    pub e_min: f64,
    pub poisson: f64,
    pub rho_min: f64,
    pub v_max: f64,
    /// Strictly increasing penalization schedule starting at 1.
    pub continuation: Vec<f64>,
    /// Optional custom start; defaults to the uniform feasible field.
    pub initial: Option<Vec<f64>>,
}

impl DensityProblem {
    pub fn validate(&self) -> Result<()> {
        if self.loads.dim() != self.model.mesh().dof_count() {
            return Err(Error::DimensionMismatch {
                expected: self.model.mesh().dof_count(),
                got: self.loads.dim(),
                context: "load vector length vs mesh DOF count",
            });
        }
        if self.filter.len() != self.model.mesh().element_count() {
            return Err(Error::DimensionMismatch {
                expected: self.model.mesh().element_count(),
                got: self.filter.len(),
                context: "filter rows vs element count",
            });
        }
        if self.continuation.is_empty() || self.continuation[0] != 1.0 {
            return Err(Error::InvalidInput(
                "penalization schedule must start at 1".into(),
            ));
        }
        if self.continuation.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "penalization schedule must be strictly increasing".into(),
            ));
        }
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return Err(Error::InvalidInput("rho_min must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn volumes(&self) -> Vec<f64> {
        let mesh = self.model.mesh();
        (0..mesh.element_count())
            .map(|e| mesh.element_volume(e))
            .collect()
    }

    fn material(&self, penal: f64) -> MaterialModel {
        MaterialModel::Simp {
            e0: self.e0,
            e_min: self.e_min,
            poisson: self.poisson,
            penal,
        }
    }

    fn initial_field(&self) -> Result<DesignField> {
        let volumes = self.volumes();
        match &self.initial {
            Some(values) => {
                DesignField::new(values.clone(), volumes, self.rho_min, 1.0, self.v_max)
            }
            None => DesignField::uniform_feasible(volumes, self.rho_min, 1.0, self.v_max),
        }
    }

    /// Exact compliance and design-space gradient (chained through the
    /// filter) at the given design variables and penalization.
    pub fn true_compliance_and_gradient(
        &self,
        values: &[f64],
        penal: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let material = self.material(penal);
        let phys = self.filter.apply(values);
        let sys = self.model.assemble(&phys, &material)?;
        let (c, gbar) =
            exact_compliance_and_gradient(&self.model, &material, &phys, &self.loads, &sys)?;
        Ok((c, self.filter.chain_gradient(&gbar)))
    }
}

/// Run the density engine until the maximum design change falls below
/// `tau_opt` at the final penalization value, or the step budget runs out
/// (the result is then flagged non-converged).
pub fn run_density(problem: &DensityProblem, params: &RunParams) -> Result<RunResult> {
    problem.validate()?;
    let model = &problem.model;
    let volumes = problem.volumes();
    let m = problem.loads.case_count();

    let mut field = problem.initial_field()?;
    if let Some(sym) = &problem.symmetry {
        sym.apply(&mut field.values);
    }

    let mut damping = DampingState::new(
        params.damping_window,
        params.tau_step,
        params.gamma,
        params.move_limit,
    );
    damping.record(&field.values);

    let mut metrics = RunMetrics::default();
    let mut engine_solves = 0u64;
    let mut diagnostic_solves = 0u64;
    let mut p_idx = 0usize;
    let mut steps_at_p = 0usize;
    let mut converged = false;
    let mut n_step = 0usize;
    let mut batch: Option<SampleBatch> = None;

    for step in 1..=params.step_budget {
        n_step = step;
        let penal = problem.continuation[p_idx];
        let material = problem.material(penal);
        let phys = problem.filter.apply(&field.values);
        let sys = model.assemble(&phys, &material)?;

        let (estimate, true_compliance, gradient, cos_theta) = match params.engine {
            Engine::Standard => {
                let (c, gbar) =
                    exact_compliance_and_gradient(model, &material, &phys, &problem.loads, &sys)?;
                (None, Some(c), problem.filter.chain_gradient(&gbar), None)
            }
            Engine::Stochastic => {
                let refresh = (step - 1) % params.sample_refresh == 0;
                if refresh || batch.is_none() {
                    batch = Some(draw_rademacher(
                        m,
                        params.sample_size,
                        params.seed,
                        step as u64,
                    )?);
                }
                let b = batch.as_ref().unwrap();
                let sample_loads = b.combine(&problem.loads)?;
                let solution = estimate_compliance(&sys, &sample_loads)?;
                let ghat_bar = estimate_sensitivity(model, &material, &phys, &solution, b)?;
                let ghat = problem.filter.chain_gradient(&ghat_bar);
                let (tc, cos) = if params.diagnostics {
                    let view = sys.detached_view();
                    let (c, gbar) = exact_compliance_and_gradient(
                        model,
                        &material,
                        &phys,
                        &problem.loads,
                        &view,
                    )?;
                    diagnostic_solves += view.solve_count();
                    let g = problem.filter.chain_gradient(&gbar);
                    (Some(c), gradient_alignment(&g, &ghat))
                } else {
                    (None, None)
                };
                (Some(solution.compliance()), tc, ghat, cos)
            }
        };
        engine_solves += sys.solve_count();

        let kkt = if params.diagnostics && params.engine == Engine::Standard {
            kkt_angle(&gradient, &volumes, &field.values, problem.rho_min, 1.0)
        } else {
            None
        };

        let move_limit = damping.move_limit();
        let mut new_values = oc_update(&field, &gradient, &volumes, move_limit, params.eta, None)?;
        if let Some(sym) = &problem.symmetry {
            sym.apply(&mut new_values);
        }

        let mut step_norm = 0.0;
        let mut max_change = 0.0_f64;
        for (n, o) in new_values.iter().zip(&field.values) {
            let d = n - o;
            step_norm += d * d;
            max_change = max_change.max(d.abs());
        }
        let step_norm = step_norm.sqrt();

        damping.record(&new_values);
        let (ratio, damped) = if params.engine == Engine::Stochastic && params.damping_enabled {
            damping.evaluate()
        } else {
            (None, false)
        };

        field.values = new_values;
        debug_assert!(
            field.check_feasible().is_ok(),
            "update left the design infeasible"
        );
        metrics.push(StepRecord {
            step,
            penal: Some(penal),
            move_limit,
            estimate,
            true_compliance,
            step_norm,
            max_change,
            step_ratio: ratio,
            damped,
            cos_theta,
            kkt_angle: kkt,
            n_solve_cum: engine_solves,
        });

        let at_final_penal = p_idx + 1 == problem.continuation.len();
        if at_final_penal {
            if max_change < params.tau_opt {
                converged = true;
                break;
            }
        } else {
            steps_at_p += 1;
            if max_change < 10.0 * params.tau_opt || steps_at_p >= STEPS_PER_PENAL_CAP {
                p_idx += 1;
                steps_at_p = 0;
            }
        }
    }

    // exact objective of the final design at the target penalization,
    // outside the engine's solve accounting
    let final_penal = *problem.continuation.last().unwrap();
    let material = problem.material(final_penal);
    let phys = problem.filter.apply(&field.values);
    let fsys = model.assemble(&phys, &material)?;
    let (final_compliance, gbar) =
        exact_compliance_and_gradient(model, &material, &phys, &problem.loads, &fsys)?;
    diagnostic_solves += fsys.solve_count();
    let g = problem.filter.chain_gradient(&gbar);
    let final_kkt_angle = kkt_angle(&g, &volumes, &field.values, problem.rho_min, 1.0);

    debug_assert_eq!(
        engine_solves,
        n_step as u64
            * match params.engine {
                Engine::Standard => m as u64,
                Engine::Stochastic => params.sample_size as u64,
            }
    );

    Ok(RunResult {
        design: field,
        metrics,
        converged,
        n_step,
        n_solve: engine_solves,
        diagnostic_solves,
        final_compliance,
        final_kkt_angle,
        engine: params.engine,
        seed: params.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    /// Small cantilever: left edge clamped, tip load at the right.
    fn cantilever(nx: usize, ny: usize, m_loads: usize) -> DensityProblem {
        let mut mesh = Mesh::rect_q4(nx as f64, ny as f64, nx, ny).unwrap();
        for j in 0..=ny {
            mesh.fix_node(j).unwrap();
        }
        let dofs = mesh.dof_count();
        let tip = mesh.find_node(&[nx as f64, ny as f64 / 2.0], 0.5).unwrap();
        let mut cases = Vec::new();
        for i in 0..m_loads {
            let mut f = DVector::zeros(dofs);
            f[2 * tip + 1] = -1.0;
            if i > 0 {
                // vary the secondary cases a little
                f[2 * tip] = 0.3 * i as f64;
            }
            cases.push(f);
        }
        let loads = LoadSet::equal_weighted(cases).unwrap();
        let filter = build_filter(&mesh, 1.2, FilterKind::Linear).unwrap();
        let model = FemModel::new(mesh, 0.3);
        DensityProblem {
            model,
            loads,
            filter,
            symmetry: None,
            e0: 1.0,
            e_min: 1e-9,
            poisson: 0.3,
            rho_min: 1e-3,
            v_max: (nx * ny) as f64 * 0.4,
            continuation: vec![1.0, 2.0, 3.0],
            initial: None,
        }
    }

    #[test]
    fn single_element_unit_load_compliance_is_tip_displacement() {
        let mut mesh = Mesh::rect_q4(1.0, 1.0, 1, 1).unwrap();
        mesh.fix_node(0).unwrap();
        mesh.fix_node(1).unwrap();
        let dofs = mesh.dof_count();
        let mut f = DVector::zeros(dofs);
        f[2 * 3 + 1] = 1.0; // node 3 = (1, 1)
        let loads = LoadSet::equal_weighted(vec![f.clone()]).unwrap();
        let filter = build_filter(&mesh, 0.1, FilterKind::Linear).unwrap();
        let model = FemModel::new(mesh, 0.3);
        let problem = DensityProblem {
            model,
            loads,
            filter,
            symmetry: None,
            e0: 1.0,
            e_min: 1e-9,
            poisson: 0.3,
            rho_min: 1e-3,
            v_max: 1.0,
            continuation: vec![1.0],
            initial: Some(vec![1.0]),
        };
        let (c, _) = problem.true_compliance_and_gradient(&[1.0], 1.0).unwrap();
        let material = problem.material(1.0);
        let sys = problem.model.assemble(&[1.0], &material).unwrap();
        let u = sys.solve_vec(&f).unwrap();
        assert_relative_eq!(c, u[2 * 3 + 1], epsilon = 1e-12);
    }

    #[test]
    fn compliance_matches_dense_trace_oracle() {
        // trace(F^T K^-1 F) computed densely on a small model
        let problem = cantilever(3, 1, 3);
        let values = vec![0.5, 0.6, 0.7];
        let penal = 2.0;
        let (c, _) = problem
            .true_compliance_and_gradient(&values, penal)
            .unwrap();

        let material = problem.material(penal);
        let phys = problem.filter.apply(&values);
        let sys = problem.model.assemble(&phys, &material).unwrap();
        let f = problem.loads.weighted_matrix();
        let mut trace = 0.0;
        for c_idx in 0..f.ncols() {
            let col = DVector::from_column_slice(f.column(c_idx).as_slice());
            let u = sys.solve_vec(&col).unwrap();
            trace += col.dot(&u);
        }
        assert_relative_eq!(c, trace, max_relative = 1e-10);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let problem = cantilever(4, 4, 2);
        let values: Vec<f64> = (0..16).map(|e| 0.3 + 0.02 * (e % 5) as f64).collect();
        let penal = 3.0;
        let (_, grad) = problem
            .true_compliance_and_gradient(&values, penal)
            .unwrap();
        assert!(grad.iter().all(|&g| g <= 0.0));

        let h = 1e-6;
        let scale = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        for e in [0usize, 5, 10, 15] {
            let mut v = values.clone();
            v[e] = values[e] + h;
            let (cp, _) = problem.true_compliance_and_gradient(&v, penal).unwrap();
            v[e] = values[e] - h;
            let (cm, _) = problem.true_compliance_and_gradient(&v, penal).unwrap();
            let fd = (cp - cm) / (2.0 * h);
            assert!(
                (fd - grad[e]).abs() <= 1e-5 * scale,
                "element {e}: fd {fd} vs analytic {}",
                grad[e]
            );
        }
    }

    #[test]
    fn full_volume_budget_runs_to_solid() {
        let mut problem = cantilever(2, 2, 1);
        problem.v_max = 4.0; // entire domain
        problem.continuation = vec![1.0];
        let mut params = RunParams::density_defaults();
        params.step_budget = 10;
        let result = run_density(&problem, &params).unwrap();
        assert!(result.converged);
        assert!(result.n_step <= 2, "took {} steps", result.n_step);
        for &v in &result.design.values {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
        let (c_solid, _) = problem
            .true_compliance_and_gradient(&vec![1.0; 4], 1.0)
            .unwrap();
        assert_relative_eq!(result.final_compliance, c_solid, max_relative = 1e-12);
    }

    #[test]
    fn convex_problem_start_independence() {
        // p = 1 is convex: two standard runs from different feasible starts
        // must agree in compliance within 0.1 %
        let mut problem = cantilever(6, 2, 2);
        problem.continuation = vec![1.0];
        let mut params = RunParams::density_defaults();
        params.tau_opt = 1e-4;
        params.step_budget = 2000;
        let a = run_density(&problem, &params).unwrap();

        let m = problem.model.mesh().element_count();
        let budget = problem.v_max;
        // feasible ramp start with the same volume
        let raw: Vec<f64> = (0..m).map(|e| 0.2 + 0.5 * (e as f64 / m as f64)).collect();
        let total: f64 = raw.iter().sum();
        let scaled: Vec<f64> = raw
            .iter()
            .map(|v| (v * budget / total).clamp(1e-3, 1.0))
            .collect();
        problem.initial = Some(scaled);
        let b = run_density(&problem, &params).unwrap();
        assert!(a.converged && b.converged);
        let rel = (a.final_compliance - b.final_compliance).abs() / a.final_compliance;
        assert!(
            rel < 1e-3,
            "compliances {} vs {}",
            a.final_compliance,
            b.final_compliance
        );
    }

    #[test]
    fn solve_accounting_standard_and_stochastic() {
        let problem = cantilever(4, 2, 3);
        let mut params = RunParams::density_defaults();
        params.step_budget = 12;
        params.tau_opt = 1e-12; // force budget exhaustion
        let std = run_density(&problem, &params).unwrap();
        assert!(!std.converged);
        assert_eq!(std.n_solve, 3 * std.n_step as u64);
        assert_eq!(std.metrics.n_steps(), std.n_step);

        params.engine = Engine::Stochastic;
        params.sample_size = 2;
        params.damping_window = 5;
        let sto = run_density(&problem, &params).unwrap();
        assert_eq!(sto.n_solve, 2 * sto.n_step as u64);

        // reusing the batch for several steps changes the trajectory but not
        // the per-step solve count
        params.sample_refresh = 4;
        let reused = run_density(&problem, &params).unwrap();
        assert_eq!(reused.n_solve, 2 * reused.n_step as u64);
        assert_ne!(
            reused.design.values, sto.design.values,
            "a held batch must steer differently from a fresh one"
        );
    }

    #[test]
    fn continuation_schedule_validated() {
        let mut problem = cantilever(2, 2, 1);
        problem.continuation = vec![2.0, 3.0];
        assert!(problem.validate().is_err());
        problem.continuation = vec![1.0, 1.0];
        assert!(problem.validate().is_err());
        problem.continuation = vec![1.0, 2.5, 3.0];
        assert!(problem.validate().is_ok());
    }

    #[test]
    fn stochastic_exhaustive_batch_equals_standard_gradient() {
        // m = 2 loads: the exhaustive 4-vector batch reproduces the exact
        // compliance and gradient through the whole chain
        let problem = cantilever(3, 2, 2);
        let values = vec![0.4; 6];
        let penal = 2.0;
        let material = problem.material(penal);
        let phys = problem.filter.apply(&values);
        let sys = problem.model.assemble(&phys, &material).unwrap();

        let batch = SampleBatch::exhaustive(2).unwrap();
        let sl = batch.combine(&problem.loads).unwrap();
        let sol = estimate_compliance(&sys, &sl).unwrap();
        let ghat_bar =
            estimate_sensitivity(&problem.model, &material, &phys, &sol, &batch).unwrap();
        let ghat = problem.filter.chain_gradient(&ghat_bar);

        let (c, g) = problem
            .true_compliance_and_gradient(&values, penal)
            .unwrap();
        assert_relative_eq!(sol.compliance(), c, max_relative = 1e-12);
        for (a, b) in ghat.iter().zip(&g) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-15);
        }
    }
}
