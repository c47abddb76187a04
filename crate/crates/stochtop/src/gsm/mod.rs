//! Ground-structure truss optimization: candidate-member generation, exact
//! and sample-average compliance/sensitivity, discrete member filters and
//! end-of-run cleanup.

mod cleanup;
mod dfilter;
mod ground;

pub use cleanup::{cleanup_final, CleanupOutcome};
pub use dfilter::{discrete_filter_standard, DiscreteFilterParams, FilterState};
pub use ground::{generate_ground_structure, GroundStructure, VoidZone};

use crate::damping::{gradient_alignment, kkt_angle, DampingState};
use crate::design::DesignField;
use crate::error::{Error, Result};
use crate::fem::{FemModel, MaterialModel, Mesh};
use crate::loads::LoadSet;
use crate::metrics::{Engine, RunMetrics, RunResult, StepRecord};
use crate::oc::oc_update;
use crate::params::RunParams;
use crate::sampling::{
    draw_rademacher, estimate_compliance, estimate_sensitivity, exact_compliance_and_gradient,
    SampleBatch,
};

/// A ground-structure problem: truss model, loads, volume budget and bounds.
#[derive(Debug)]
pub struct GsmProblem {
    pub model: FemModel,
    pub loads: LoadSet,
    pub v_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub e0: f64,
    pub discrete_filter: Option<DiscreteFilterParams>,
    /// Relative cutoff applied by the final cleanup when no discrete filter
    /// ran during the optimization.
    pub cutoff: f64,
}

impl GsmProblem {
    pub fn validate(&self) -> Result<()> {
        if self.loads.dim() != self.model.mesh().dof_count() {
            return Err(Error::DimensionMismatch {
                expected: self.model.mesh().dof_count(),
                got: self.loads.dim(),
                context: "load vector length vs mesh DOF count",
            });
        }
        if self.discrete_filter.is_some() && self.x_min != 0.0 {
            return Err(Error::InvalidInput(
                "the discrete filter requires a zero lower area bound".into(),
            ));
        }
        if !(self.x_min >= 0.0 && self.x_min < self.x_max) {
            return Err(Error::InvalidInput(
                "area bounds must satisfy 0 <= x_min < x_max".into(),
            ));
        }
        Ok(())
    }

    pub fn lengths(&self) -> Vec<f64> {
        let mesh = self.model.mesh();
        (0..mesh.element_count())
            .map(|e| mesh.bar_length(e))
            .collect()
    }

    /// Uniform initial area `V_max / sum(L)`.
    pub fn initial_area(&self) -> f64 {
        self.v_max / self.lengths().iter().sum::<f64>()
    }

    fn material(&self) -> MaterialModel {
        MaterialModel::Truss { e0: self.e0 }
    }

    fn stiffness_floor(&self) -> f64 {
        1e-12 * self.initial_area()
    }

    /// Effective assembly areas: inactive members contribute nothing, active
    /// members get a tiny stiffness floor so the matrix stays SPD when the
    /// lower bound is zero.
    fn effective_areas(&self, values: &[f64], active: &[bool]) -> Vec<f64> {
        let floor = self.stiffness_floor();
        values
            .iter()
            .zip(active)
            .map(|(&x, &a)| if a { x.max(floor) } else { 0.0 })
            .collect()
    }

    /// Exact weighted compliance and gradient over the active members.
    pub fn true_compliance_and_gradient(
        &self,
        values: &[f64],
        active: &[bool],
    ) -> Result<(f64, Vec<f64>)> {
        let material = self.material();
        let eff = self.effective_areas(values, active);
        let sys = self.model.assemble(&eff, &material)?;
        let (c, mut g) =
            exact_compliance_and_gradient(&self.model, &material, &eff, &self.loads, &sys)?;
        for e in 0..g.len() {
            if !active[e] {
                g[e] = 0.0;
            }
        }
        Ok((c, g))
    }
}

/// Run the ground-structure engine until the Euclidean design change falls
/// below `tau_opt`, or the step budget runs out (flagged non-converged).
pub fn run_gsm(problem: &GsmProblem, params: &RunParams) -> Result<RunResult> {
    problem.validate()?;
    let model = &problem.model;
    let material = problem.material();
    let lengths = problem.lengths();
    let m_cases = problem.loads.case_count();
    let member_count = model.mesh().element_count();

    let x0 = problem.initial_area().clamp(problem.x_min, problem.x_max);
    let mut field = DesignField::new(
        vec![x0; member_count],
        lengths.clone(),
        problem.x_min,
        problem.x_max,
        problem.v_max,
    )?;
    let mut active = vec![true; member_count];
    let mut filter_state = problem
        .discrete_filter
        .map(|fp| FilterState::new(member_count, fp.n_f));

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
    let mut converged = false;
    let mut n_step = 0usize;
    let mut batch: Option<SampleBatch> = None;

    for step in 1..=params.step_budget {
        n_step = step;
        let eff = problem.effective_areas(&field.values, &active);
        let sys = model.assemble(&eff, &material)?;

        let (estimate, true_compliance, mut gradient, cos_theta) = match params.engine {
            Engine::Standard => {
                let (c, g) =
                    exact_compliance_and_gradient(model, &material, &eff, &problem.loads, &sys)?;
                (None, Some(c), g, None)
            }
            Engine::Stochastic => {
                let refresh = (step - 1) % params.sample_refresh == 0;
                if refresh || batch.is_none() {
                    batch = Some(draw_rademacher(
                        m_cases,
                        params.sample_size,
                        params.seed,
                        step as u64,
                    )?);
                }
                let b = batch.as_ref().unwrap();
                let sample_loads = b.combine(&problem.loads)?;
                let solution = estimate_compliance(&sys, &sample_loads)?;
                let ghat = estimate_sensitivity(model, &material, &eff, &solution, b)?;
                let (tc, cos) = if params.diagnostics {
                    let view = sys.detached_view();
                    let (c, g) = exact_compliance_and_gradient(
                        model,
                        &material,
                        &eff,
                        &problem.loads,
                        &view,
                    )?;
                    diagnostic_solves += view.solve_count();
                    (Some(c), gradient_alignment(&g, &ghat))
                } else {
                    (None, None)
                };
                (Some(solution.compliance()), tc, ghat, cos)
            }
        };
        engine_solves += sys.solve_count();
        for e in 0..member_count {
            if !active[e] {
                gradient[e] = 0.0;
            }
        }

        let kkt = if params.diagnostics && params.engine == Engine::Standard {
            kkt_angle(
                &gradient,
                &lengths,
                &field.values,
                problem.x_min,
                problem.x_max,
            )
        } else {
            None
        };

        let move_limit = damping.move_limit();
        let mut new_values = oc_update(
            &field,
            &gradient,
            &lengths,
            move_limit,
            params.eta,
            Some(&active),
        )?;

        // discrete filter on the updated design
        if let Some(fp) = problem.discrete_filter {
            let removed = match params.engine {
                Engine::Standard => discrete_filter_standard(&new_values, &active, fp.alpha_f)?,
                Engine::Stochastic => filter_state.as_mut().unwrap().observe_and_filter(
                    &new_values,
                    &active,
                    fp.alpha_f,
                )?,
            };
            for e in removed {
                active[e] = false;
                new_values[e] = 0.0;
            }
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
            penal: None,
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

        if step_norm < params.tau_opt {
            converged = true;
            break;
        }
    }

    // one-off larger filter value on the converged design
    if let Some(fp) = problem.discrete_filter {
        if let Some(fa) = fp.final_alpha_f {
            if let Ok(removed) = discrete_filter_standard(&field.values, &active, fa) {
                for e in removed {
                    active[e] = false;
                    field.values[e] = 0.0;
                }
            }
        }
    }

    // exact objective and KKT angle of the final design, outside engine accounting
    let eff = problem.effective_areas(&field.values, &active);
    let fsys = model.assemble(&eff, &material)?;
    let (final_compliance, g) =
        exact_compliance_and_gradient(model, &material, &eff, &problem.loads, &fsys)?;
    diagnostic_solves += fsys.solve_count();
    let final_kkt_angle = kkt_angle(&g, &lengths, &field.values, problem.x_min, problem.x_max);

    debug_assert_eq!(
        engine_solves,
        n_step as u64
            * match params.engine {
                Engine::Standard => m_cases as u64,
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

/// Surviving member mask of the final topology (cutoff + pruning +
/// equilibrium check) for a finished run.
pub fn final_topology(problem: &GsmProblem, result: &RunResult) -> Result<CleanupOutcome> {
    let active: Vec<bool> = result.design.values.iter().map(|&x| x > 0.0).collect();
    let cutoff = if problem.discrete_filter.is_some() {
        // the discrete filter already removed negligible members during the
        // run; the cleanup only needs to catch stragglers
        problem.discrete_filter.unwrap().alpha_f
    } else {
        problem.cutoff
    };
    cleanup_final(
        &problem.model,
        &result.design.values,
        &active,
        cutoff,
        &problem.loads,
        problem.e0,
    )
}

/// Three bars fanning from left-edge supports to a single loaded joint;
/// member lengths (1.5, 0.6, 1.5) sum to 3.6.
pub fn three_bar_nodes() -> (Vec<[f64; 3]>, Vec<[usize; 2]>) {
    let h = 1.89_f64.sqrt(); // sqrt(1.5^2 - 0.6^2)
    (
        vec![
            [0.0, h, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, -h, 0.0],
            [0.6, 0.0, 0.0],
        ],
        vec![[0, 3], [1, 3], [2, 3]],
    )
}

/// Assembled three-bar demo model with the left supports fixed.
pub fn three_bar_model() -> FemModel {
    let (nodes, members) = three_bar_nodes();
    let mut mesh = Mesh::truss(2, &nodes, &members).unwrap();
    for n in 0..3 {
        mesh.fix_node(n).unwrap();
    }
    FemModel::new(mesh, 0.0)
}

/// The three-bar demo problem: nine equal-weighted unit load cases swept over
/// the full circle at the free joint, volume budget 0.1.
pub fn three_bar_problem() -> GsmProblem {
    let model = three_bar_model();
    let dofs = model.mesh().dof_count();
    let cases = crate::loads::angular_sweep(dofs, 3, 2, 9, 0.0, 1.0).unwrap();
    let loads = LoadSet::equal_weighted(cases).unwrap();
    let x0 = 0.1 / 3.6;
    GsmProblem {
        model,
        loads,
        v_max: 0.1,
        x_min: 1e-8 * x0,
        x_max: 1e4 * x0,
        e0: 1.0,
        discrete_filter: None,
        cutoff: 1e-2,
    }
}

/// Run parameters used for the three-bar demo: window 10, tolerance 0.05,
/// halving damping, initial move one tenth of the initial area.
pub fn three_bar_params(engine: Engine) -> RunParams {
    let mut p = RunParams::gsm_defaults();
    p.engine = engine;
    p.damping_window = 10;
    p.tau_step = 0.05;
    p.gamma = 2.0;
    p.move_limit = 0.1 * (0.1 / 3.6);
    p.step_budget = 80000;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn single_bar_closed_form_compliance() {
        // C = P^2 L / (E x) for an axial load on one bar
        let nodes = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let mut mesh = Mesh::truss(2, &nodes, &[[0, 1]]).unwrap();
        mesh.fix_node(0).unwrap();
        mesh.fix_dof(1, 1).unwrap();
        let model = FemModel::new(mesh, 0.0);
        let mut f = DVector::zeros(4);
        f[2] = 3.0;
        let loads = LoadSet::equal_weighted(vec![f]).unwrap();
        let problem = GsmProblem {
            model,
            loads,
            v_max: 1.0,
            x_min: 1e-6,
            x_max: 10.0,
            e0: 1.0,
            discrete_filter: None,
            cutoff: 1e-2,
        };
        let (c, g) = problem
            .true_compliance_and_gradient(&[0.5], &[true])
            .unwrap();
        assert_relative_eq!(c, 9.0 * 2.0 / 0.5, max_relative = 1e-12);
        // dC/dx = -P^2 L / (E x^2)
        assert_relative_eq!(g[0], -9.0 * 2.0 / 0.25, max_relative = 1e-10);
    }

    #[test]
    fn three_bar_gradient_matches_finite_differences() {
        let problem = three_bar_problem();
        let x = vec![0.03, 0.02, 0.025];
        let active = vec![true; 3];
        let (_, g) = problem.true_compliance_and_gradient(&x, &active).unwrap();
        let h = 1e-7;
        for e in 0..3 {
            let mut xp = x.clone();
            xp[e] += h;
            let (cp, _) = problem.true_compliance_and_gradient(&xp, &active).unwrap();
            xp[e] = x[e] - h;
            let (cm, _) = problem.true_compliance_and_gradient(&xp, &active).unwrap();
            let fd = (cp - cm) / (2.0 * h);
            assert_relative_eq!(g[e], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn three_bar_compliance_is_half_trace_of_inverse() {
        // nine equally spaced unit loads average the two diagonal entries of
        // K^-1, so C = trace(K^-1) / 2; computed densely as an oracle
        let problem = three_bar_problem();
        let x = vec![0.03, 0.01, 0.02];
        let (c, _) = problem
            .true_compliance_and_gradient(&x, &[true; 3])
            .unwrap();

        let mesh = problem.model.mesh();
        let mut k = [[0.0f64; 2]; 2];
        for e in 0..3 {
            let d = mesh.bar_direction(e);
            let s = x[e] / mesh.bar_length(e);
            for i in 0..2 {
                for j in 0..2 {
                    k[i][j] += s * d[i] * d[j];
                }
            }
        }
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        let trace_inv = (k[1][1] + k[0][0]) / det;
        assert_relative_eq!(c, 0.5 * trace_inv, max_relative = 1e-10);
    }

    /// Hand-solved optimum of the three-bar demo. With the full-circle sweep
    /// the objective is `trace(K^-1) / 2`; by symmetry the side bars are
    /// equal, the volume constraint eliminates the middle bar, and the 1D
    /// stationarity condition has a closed form. For span `d`, side length
    /// `Ls` and rise `y`: with `c1 = d^2/Ls^3`, `c2 = y^2/Ls^3`,
    /// `K11 = c1 s + x2/d`, `K22 = c2 s`, volume `Ls s + d x2 = V`, the
    /// optimal total side area is
    /// `s = (V/d^2) / ((Ls/d^2 - c1) + sqrt((Ls/d^2 - c1) c2))`.
    fn three_bar_hand_optimum() -> ([f64; 3], f64) {
        let (v, d, ls) = (0.1_f64, 0.6_f64, 1.5_f64);
        let y2 = ls * ls - d * d;
        let c1 = d * d / ls.powi(3);
        let c2 = y2 / ls.powi(3);
        let a = ls / (d * d) - c1;
        let s = (v / (d * d)) / (a + (a * c2).sqrt());
        let x_mid = (v - ls * s) / d;
        let k11 = c1 * s + x_mid / d;
        let k22 = c2 * s;
        ([s / 2.0, x_mid, s / 2.0], 0.5 * (1.0 / k11 + 1.0 / k22))
    }

    #[test]
    fn standard_three_bar_reaches_hand_solved_optimum() {
        let problem = three_bar_problem();
        let params = three_bar_params(Engine::Standard);
        let result = run_gsm(&problem, &params).unwrap();
        assert!(result.converged);

        let (x_expected, c_expected) = three_bar_hand_optimum();
        for e in 0..3 {
            assert_relative_eq!(result.design.values[e], x_expected[e], max_relative = 1e-4);
        }
        // all three members active at the optimum
        assert!(result.design.values.iter().all(|&x| x > 1e-3));
        // volume constraint active
        assert_relative_eq!(result.design.volume(), 0.1, max_relative = 1e-6);
        assert_relative_eq!(result.final_compliance, c_expected, max_relative = 1e-6);
    }

    #[test]
    fn solve_accounting_matches_engine() {
        let problem = three_bar_problem();
        let mut params = three_bar_params(Engine::Standard);
        params.step_budget = 7;
        params.tau_opt = 0.0;
        let r = run_gsm(&problem, &params).unwrap();
        assert_eq!(r.n_solve, 9 * 7);
        assert_eq!(r.metrics.n_steps(), 7);

        let mut params = three_bar_params(Engine::Stochastic);
        params.sample_size = 6;
        params.step_budget = 7;
        params.tau_opt = 0.0;
        let r = run_gsm(&problem, &params).unwrap();
        assert_eq!(r.n_solve, 6 * 7);
    }

    #[test]
    fn filtered_run_removes_members_monotonically() {
        // box ground structure with a discrete filter: removal sets only grow
        let gs = generate_ground_structure([4, 2, 0], [1.0, 1.0, 0.0], None, &[]).unwrap();
        let mut mesh = Mesh::truss(2, &gs.nodes, &gs.members).unwrap();
        let left_bottom = mesh.find_node(&[0.0, 0.0], 1e-9).unwrap();
        let right_bottom = mesh.find_node(&[4.0, 0.0], 1e-9).unwrap();
        mesh.fix_node(left_bottom).unwrap();
        mesh.fix_node(right_bottom).unwrap();
        let dofs = mesh.dof_count();
        let mid = mesh.find_node(&[2.0, 2.0], 1e-9).unwrap();
        let mut f = DVector::zeros(dofs);
        f[2 * mid + 1] = -1.0;
        let loads = LoadSet::equal_weighted(vec![f]).unwrap();
        let model = FemModel::new(mesh, 0.0);
        let problem = GsmProblem {
            model,
            loads,
            v_max: 1.0,
            x_min: 0.0,
            x_max: 1e4,
            e0: 1.0,
            discrete_filter: Some(DiscreteFilterParams {
                alpha_f: 1e-3,
                n_f: 5,
                final_alpha_f: None,
            }),
            cutoff: 1e-2,
        };
        let mut params = RunParams::gsm_defaults();
        params.engine = Engine::Stochastic;
        params.damping_window = 20;
        params.move_limit = 1e4 * problem.initial_area();
        params.step_budget = 400;
        params.seed = 5;
        let r = run_gsm(&problem, &params).unwrap();
        // members removed by the filter stay at exactly zero
        let zeroed = r.design.values.iter().filter(|&&x| x == 0.0).count();
        assert!(zeroed > 0, "filter removed nothing");
        // the surviving structure carries the load
        let topo = final_topology(&problem, &r).unwrap();
        assert!(!topo.rolled_back);
        assert!(topo.active.iter().filter(|&&a| a).count() >= 3);
    }

    fn filtered_box_problem(final_alpha_f: Option<f64>) -> GsmProblem {
        let gs = generate_ground_structure([4, 2, 0], [1.0, 1.0, 0.0], None, &[]).unwrap();
        let mut mesh = Mesh::truss(2, &gs.nodes, &gs.members).unwrap();
        mesh.fix_node(mesh.find_node(&[0.0, 0.0], 1e-9).unwrap())
            .unwrap();
        mesh.fix_node(mesh.find_node(&[4.0, 0.0], 1e-9).unwrap())
            .unwrap();
        let dofs = mesh.dof_count();
        let mid = mesh.find_node(&[2.0, 2.0], 1e-9).unwrap();
        let mut f = DVector::zeros(dofs);
        f[2 * mid + 1] = -1.0;
        let loads = LoadSet::equal_weighted(vec![f]).unwrap();
        GsmProblem {
            model: FemModel::new(mesh, 0.0),
            loads,
            v_max: 1.0,
            x_min: 0.0,
            x_max: 1e4,
            e0: 1.0,
            discrete_filter: Some(DiscreteFilterParams {
                alpha_f: 1e-6,
                n_f: 5,
                final_alpha_f,
            }),
            cutoff: 1e-2,
        }
    }

    #[test]
    fn final_filter_value_trims_converged_design() {
        // a larger filter value applied once to the converged design removes
        // the members between the running and final thresholds
        let mut params = RunParams::gsm_defaults();
        params.step_budget = 1500;
        params.tau_opt = 1e-6;

        let gentle = filtered_box_problem(None);
        let base = run_gsm(&gentle, &params).unwrap();
        let max = base.design.values.iter().cloned().fold(0.0_f64, f64::max);
        let trimmable = base
            .design
            .values
            .iter()
            .filter(|&&x| x > 0.0 && x / max < 1e-2)
            .count();
        assert!(
            trimmable > 0,
            "fixture needs members between the thresholds"
        );

        let trimmed = run_gsm(&filtered_box_problem(Some(1e-2)), &params).unwrap();
        let tmax = trimmed
            .design
            .values
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        for &x in &trimmed.design.values {
            assert!(
                x == 0.0 || x / tmax >= 1e-2,
                "member at {x} survived the final filter"
            );
        }
    }

    #[test]
    fn destructive_final_filter_surfaces_an_error() {
        // removing load-bearing members with an aggressive final value must
        // fail loudly, not silently return a broken design
        let mut problem = three_bar_problem();
        problem.x_min = 0.0;
        problem.discrete_filter = Some(DiscreteFilterParams {
            alpha_f: 1e-6,
            n_f: 3,
            final_alpha_f: Some(0.9),
        });
        let mut params = three_bar_params(Engine::Standard);
        params.step_budget = 300;
        params.tau_opt = 1e-6;
        assert!(matches!(
            run_gsm(&problem, &params),
            Err(Error::UnrestrainedStructure(_))
        ));
    }
}
