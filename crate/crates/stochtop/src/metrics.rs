use serde::Serialize;

/// Which objective/gradient estimates drive the optimization loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Solve every load case each step; exact compliance and gradient.
    Standard,
    /// Solve `n` sampled sign-combined loads each step.
    Stochastic,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Engine::Standard => write!(f, "standard"),
            Engine::Stochastic => write!(f, "stochastic"),
        }
    }
}

/// One optimization step as recorded in the run log.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Penalization exponent (density method only).
    pub penal: Option<f64>,
    /// Move limit in force during this step.
    pub move_limit: f64,
    /// Sample-average compliance estimate (stochastic engine).
    pub estimate: Option<f64>,
    /// Exact weighted compliance; always present for the standard engine,
    /// present for the stochastic engine when diagnostics are on.
    pub true_compliance: Option<f64>,
    /// Euclidean norm of the design change.
    pub step_norm: f64,
    /// Max-norm of the design change.
    pub max_change: f64,
    /// Effective step ratio, once the damping window is warm.
    pub step_ratio: Option<f64>,
    pub damped: bool,
    /// Cosine between exact and estimated gradients (diagnostics).
    pub cos_theta: Option<f64>,
    /// Angle between reduced objective and volume gradients (diagnostics).
    pub kkt_angle: Option<f64>,
    /// Cumulative engine solve count after this step.
    pub n_solve_cum: u64,
}

/// Per-step history of a run. One record per optimization step.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMetrics {
    pub records: Vec<StepRecord>,
}

impl RunMetrics {
    pub fn push(&mut self, record: StepRecord) {
        debug_assert!(
            self.records
                .last()
                .map_or(true, |r| record.n_solve_cum >= r.n_solve_cum),
            "cumulative solve count must be non-decreasing"
        );
        self.records.push(record);
    }

    pub fn n_steps(&self) -> usize {
        self.records.len()
    }

    /// Moving average of `cos_theta` over the trailing `window` records ending
    /// at `step` (1-based). `None` if any record in the window lacks it.
    pub fn cos_theta_moving_average(&self, step: usize, window: usize) -> Option<f64> {
        if step < window || step > self.records.len() {
            return None;
        }
        let slice = &self.records[step - window..step];
        let mut sum = 0.0;
        for r in slice {
            sum += r.cos_theta?;
        }
        Some(sum / window as f64)
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub design: crate::design::DesignField,
    pub metrics: RunMetrics,
    pub converged: bool,
    pub n_step: usize,
    /// Engine solves only; diagnostic solves are counted separately.
    pub n_solve: u64,
    pub diagnostic_solves: u64,
    /// Exact weighted compliance of the final design.
    pub final_compliance: f64,
    /// KKT angle of the final design (when the active set is non-empty).
    pub final_kkt_angle: Option<f64>,
    pub engine: Engine,
    pub seed: u64,
}
