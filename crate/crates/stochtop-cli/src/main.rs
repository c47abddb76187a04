use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand, ValueEnum};

use stochtop::metrics::Engine;
use stochtop::problem::{parse_problem, Resolved};
use stochtop::runner::{read_baseline, run_trials, write_artifacts, RunArtifacts};

#[derive(Parser)]
#[command(
    name = "stochtop",
    version,
    about = "Topology optimization under many load cases with standard and randomized engines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a problem file and export designs, metrics and a summary
    Run(RunArgs),
    /// Run both engines on one problem and print the comparison table
    Compare(CompareArgs),
    /// Parameter study over the sample size or the step-ratio tolerance
    Sweep(SweepArgs),
    /// Brute-force enumeration and finite-difference oracles
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Standard,
    Stochastic,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Engine {
        match e {
            EngineArg::Standard => Engine::Standard,
            EngineArg::Stochastic => Engine::Stochastic,
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// Engine override: standard or stochastic
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Sample size n for the stochastic engine
    #[arg(long)]
    n: Option<usize>,
    /// Tolerance on the effective step ratio
    #[arg(long = "tau-step")]
    tau_step: Option<f64>,
    /// Move-limit reduction factor
    #[arg(long)]
    gamma: Option<f64>,
    /// Damping window size (steps)
    #[arg(long = "n-step-window")]
    n_step_window: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Step budget per run
    #[arg(long)]
    budget: Option<usize>,
    /// Record exact compliance and gradient alignment every step
    #[arg(long)]
    diagnostics: bool,
}

impl Overrides {
    fn apply(&self, resolved: &mut Resolved) {
        let p = &mut resolved.params;
        if let Some(e) = self.engine {
            p.engine = e.into();
        }
        if let Some(n) = self.n {
            p.sample_size = n;
        }
        if let Some(t) = self.tau_step {
            p.tau_step = t;
        }
        if let Some(g) = self.gamma {
            p.gamma = g;
        }
        if let Some(w) = self.n_step_window {
            p.damping_window = w;
        }
        if let Some(s) = self.seed {
            p.seed = s;
        }
        if let Some(b) = self.budget {
            p.step_budget = b;
        }
        if self.diagnostics {
            p.diagnostics = true;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Problem definition file (TOML)
    spec: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Independent trials with derived seeds
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Baseline compliance file (summary.json or a bare number)
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    spec: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Stochastic trials to average over
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Output directory for artifacts (omit to skip writing)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    spec: PathBuf,
    /// Parameter to sweep: n or tau-step
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[command(flatten)]
    overrides: Overrides,
    /// Trials per value
    #[arg(long, default_value_t = 3)]
    trials: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    N,
    TauStep,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn print_warnings(resolved: &Resolved) {
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
}

fn engine_row(label: &str, arts: &RunArtifacts, n: Option<usize>) -> String {
    let s = &arts.summary;
    let cos = s
        .per_trial
        .iter()
        .filter_map(|t| t.mean_cos_theta)
        .collect::<Vec<_>>();
    let cos_str = if cos.is_empty() {
        "-".to_string()
    } else {
        format!("{:.3}", cos.iter().sum::<f64>() / cos.len() as f64)
    };
    let dc = s
        .delta_c_percent
        .map(|d| format!("{d:.2}%"))
        .unwrap_or_else(|| "-".to_string());
    format!(
        "{label:<12} {mean:>12.6} {dc:>8} {cos_str:>8} {n:>4} {steps:>8.0} {solves:>9}",
        mean = s.mean_compliance,
        n = n.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
        steps = s.mean_n_step,
        solves = s.total_n_solve,
    )
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let spec = parse_problem(&args.spec)?;
    let mut resolved = spec.resolve()?;
    args.overrides.apply(&mut resolved);
    print_warnings(&resolved);
    if let Some(title) = &resolved.title {
        println!("problem: {title}");
    }
    println!(
        "method: {}, engine: {}, initial value: {:.4}",
        resolved.method, resolved.params.engine, resolved.initial_value
    );
    let baseline = args.baseline.as_deref().map(read_baseline).transpose()?;
    let arts = run_trials(&resolved, args.trials, baseline)?;
    write_artifacts(&args.out, &resolved, &arts)?;

    let s = &arts.summary;
    for t in &s.per_trial {
        println!(
            "trial {}: seed {}, C = {:.6}, steps = {}, solves = {}, converged = {}",
            t.trial, t.seed, t.compliance, t.n_step, t.n_solve, t.converged
        );
    }
    println!(
        "mean C = {:.6}, total solves = {}, artifacts in {}",
        s.mean_compliance,
        s.total_n_solve,
        args.out.display()
    );
    if let Some(d) = s.delta_c_percent {
        println!("delta C vs baseline = {d:.3}%");
    }
    Ok(if s.all_converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let spec = parse_problem(&args.spec)?;
    let mut resolved = spec.resolve()?;
    args.overrides.apply(&mut resolved);
    print_warnings(&resolved);

    resolved.params.engine = Engine::Standard;
    let standard = run_trials(&resolved, 1, None)?;
    let c_star = standard.summary.mean_compliance;

    resolved.params.engine = Engine::Stochastic;
    let stochastic = run_trials(&resolved, args.trials, Some(c_star))?;

    println!(
        "{:<12} {:>12} {:>8} {:>8} {:>4} {:>8} {:>9}",
        "engine", "C", "dC", "cos_avg", "n", "N_step", "N_solve"
    );
    println!("{}", engine_row("standard", &standard, None));
    println!(
        "{}",
        engine_row("stochastic", &stochastic, Some(resolved.params.sample_size))
    );
    if let Some(out) = &args.out {
        resolved.params.engine = Engine::Standard;
        write_artifacts(&out.join("standard"), &resolved, &standard)?;
        resolved.params.engine = Engine::Stochastic;
        write_artifacts(&out.join("stochastic"), &resolved, &stochastic)?;
    }
    let ok = standard.summary.all_converged && stochastic.summary.all_converged;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let spec = parse_problem(&args.spec)?;
    let mut resolved = spec.resolve()?;
    args.overrides.apply(&mut resolved);
    resolved.params.engine = Engine::Stochastic;
    print_warnings(&resolved);
    if args.values.is_empty() {
        bail!("sweep needs at least one value");
    }

    println!(
        "{:<10} {:>12} {:>12} {:>8} {:>9} {:>8}",
        "value", "mean C", "std C", "N_step", "N_solve", "cos_avg"
    );
    let mut all_ok = true;
    for &value in &args.values {
        match args.param {
            SweepParam::N => resolved.params.sample_size = value as usize,
            SweepParam::TauStep => resolved.params.tau_step = value,
        }
        let arts = run_trials(&resolved, args.trials, None)?;
        let s = &arts.summary;
        let mean = s.mean_compliance;
        let var = s
            .per_trial
            .iter()
            .map(|t| (t.compliance - mean) * (t.compliance - mean))
            .sum::<f64>()
            / s.trials.max(1) as f64;
        let cos: Vec<f64> = s
            .per_trial
            .iter()
            .filter_map(|t| t.mean_cos_theta)
            .collect();
        let cos_str = if cos.is_empty() {
            "-".to_string()
        } else {
            format!("{:.3}", cos.iter().sum::<f64>() / cos.len() as f64)
        };
        println!(
            "{value:<10} {mean:>12.6} {std:>12.6} {steps:>8.0} {solves:>9} {cos_str:>8}",
            std = var.sqrt(),
            steps = s.mean_n_step,
            solves = s.total_n_solve,
        );
        all_ok &= s.all_converged;
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    use nalgebra::{DMatrix, DVector};
    use stochtop::sampling::{exact_variance, hutchinson_trace, SampleBatch};

    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} — {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // exhaustive sign-vector average vs the matrix trace
    let q = 8;
    let mut state = args.seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    };
    let mut a = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in 0..=i {
            let v = next();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let batch = SampleBatch::exhaustive(q).unwrap();
    let est = hutchinson_trace(|x| &a * x, &batch).unwrap();
    let trace = a.trace();
    let trace_err = (est.mean - trace).abs() / trace.abs().max(1e-30);
    check(
        "exhaustive trace identity",
        trace_err < 1e-10,
        format!("relative error {trace_err:.2e} over 2^{q} sign vectors"),
    );

    // closed-form variance vs enumerated population variance
    let samples: Vec<f64> = batch.vectors().iter().map(|x| x.dot(&(&a * x))).collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let pop_var =
        samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64;
    let var = exact_variance(&a).unwrap();
    let var_err = (var - pop_var).abs() / pop_var.max(1e-30);
    check(
        "variance formula vs enumeration",
        var_err < 1e-10,
        format!("relative error {var_err:.2e}"),
    );

    // finite-difference check of the density gradient (4x4 mesh, 2 cases)
    {
        use stochtop::density::{build_filter, DensityProblem, FilterKind};
        use stochtop::fem::{FemModel, Mesh};
        use stochtop::loads::LoadSet;

        let mut mesh = Mesh::rect_q4(4.0, 4.0, 4, 4).unwrap();
        for j in 0..=4 {
            mesh.fix_node(j).unwrap();
        }
        let dofs = mesh.dof_count();
        let tip = mesh.find_node(&[4.0, 2.0], 1e-9).unwrap();
        let mut f1 = DVector::zeros(dofs);
        f1[2 * tip + 1] = -1.0;
        let mut f2 = DVector::zeros(dofs);
        f2[2 * tip] = 1.0;
        let loads = LoadSet::equal_weighted(vec![f1, f2]).unwrap();
        let filter = build_filter(&mesh, 1.2, FilterKind::Linear).unwrap();
        let problem = DensityProblem {
            model: FemModel::new(mesh, 0.3),
            loads,
            filter,
            symmetry: None,
            e0: 1.0,
            e_min: 1e-9,
            poisson: 0.3,
            rho_min: 1e-3,
            v_max: 8.0,
            continuation: vec![1.0, 3.0],
            initial: None,
        };
        let values: Vec<f64> = (0..16).map(|e| 0.3 + 0.02 * (e % 5) as f64).collect();
        let (_, grad) = problem.true_compliance_and_gradient(&values, 3.0).unwrap();
        let scale = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let h = 1e-6;
        let mut worst = 0.0_f64;
        for e in 0..16 {
            let mut v = values.clone();
            v[e] += h;
            let (cp, _) = problem.true_compliance_and_gradient(&v, 3.0).unwrap();
            v[e] = values[e] - h;
            let (cm, _) = problem.true_compliance_and_gradient(&v, 3.0).unwrap();
            worst = worst.max(((cp - cm) / (2.0 * h) - grad[e]).abs() / scale);
        }
        check(
            "density gradient vs central differences",
            worst < 1e-5,
            format!("max relative deviation {worst:.2e} on a 4x4 mesh"),
        );
    }

    // finite-difference check of the truss gradient on the three-bar demo
    {
        let problem = stochtop::gsm::three_bar_problem();
        let x = vec![0.03, 0.02, 0.025];
        let active = vec![true; 3];
        let (_, g) = problem.true_compliance_and_gradient(&x, &active).unwrap();
        let h = 1e-7;
        let mut worst = 0.0_f64;
        for e in 0..3 {
            let mut xp = x.clone();
            xp[e] += h;
            let (cp, _) = problem.true_compliance_and_gradient(&xp, &active).unwrap();
            xp[e] = x[e] - h;
            let (cm, _) = problem.true_compliance_and_gradient(&xp, &active).unwrap();
            worst = worst.max(((cp - cm) / (2.0 * h) - g[e]).abs() / g[e].abs());
        }
        check(
            "truss gradient vs central differences",
            worst < 1e-6,
            format!("max relative deviation {worst:.2e} on the three-bar truss"),
        );
    }

    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
