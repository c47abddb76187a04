//! End-to-end checks through the TOML front end, including the 3D truss path.

use stochtop::gsm::final_topology;
use stochtop::metrics::Engine;
use stochtop::problem::{parse_problem_str, ResolvedKind};
use stochtop::runner::{run_once, run_trials};

const MINI_TOWER: &str = r#"
schema = 1
method = "gsm"
seed = 9

[domain]
width = 1.0
height = 1.0
depth = 2.0

[gsm]
volume_max = 0.5

[gsm.grid]
cells = [1, 1, 2]
level = 1

[[supports]]
at = [0.0, 0.0, 0.0]
[[supports]]
at = [1.0, 0.0, 0.0]
[[supports]]
at = [0.0, 1.0, 0.0]
[[supports]]
at = [1.0, 1.0, 0.0]

[[loads]]
at = [0.0, 0.0, 2.0]
direction = [1.0, 0.5, -0.2]
[[loads]]
at = [1.0, 1.0, 2.0]
direction = [-1.0, 0.0, -0.5]
[[loads]]
at = [1.0, 0.0, 2.0]
direction = [0.0, 1.0, 0.0]

[params]
tau_opt = 1e-6
budget = 4000
"#;

#[test]
fn three_d_tower_standard_and_stochastic() {
    let resolved = parse_problem_str(MINI_TOWER).unwrap().resolve().unwrap();
    let ResolvedKind::Gsm(problem) = &resolved.kind else {
        panic!("expected a truss problem")
    };
    assert_eq!(problem.model.mesh().dim(), 3);

    let mut params = resolved.params.clone();
    params.engine = Engine::Standard;
    let standard = run_once(&resolved, &params).unwrap();
    assert!(standard.converged);
    assert!(standard.final_compliance > 0.0);
    // volume budget active at the optimum
    assert!((standard.design.volume() - 0.5).abs() / 0.5 < 1e-6);

    let topo = final_topology(problem, &standard).unwrap();
    assert!(!topo.rolled_back);
    assert!(topo.active.iter().filter(|&&a| a).count() >= 3);

    params.engine = Engine::Stochastic;
    params.sample_size = 3;
    params.damping_window = 20;
    params.seed = 5;
    params.tau_step = 0.1;
    params.tau_opt = 1e-5;
    params.step_budget = 20_000;
    let stochastic = run_once(&resolved, &params).unwrap();
    assert!(stochastic.converged);
    // convex ground-structure objective: the randomized engine cannot beat
    // the exact optimum
    assert!(stochastic.final_compliance >= standard.final_compliance * (1.0 - 1e-6));
}

#[test]
fn multi_trial_runner_flags_partial_convergence() {
    let text = MINI_TOWER.replace("budget = 4000", "budget = 4");
    let resolved = parse_problem_str(&text).unwrap().resolve().unwrap();
    let arts = run_trials(&resolved, 2, None).unwrap();
    assert!(!arts.summary.all_converged);
    assert_eq!(arts.summary.per_trial.len(), 2);
}
