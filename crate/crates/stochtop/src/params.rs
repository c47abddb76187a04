use serde::{Deserialize, Serialize};

use crate::metrics::Engine;

/// Algorithmic parameters of one optimization run.
///
/// Defaults follow the usual practice for these methods: sample size 6 with a
/// fresh sample every step, damping window 100 with scale factor 2, step-ratio
/// tolerance 0.1 (density) or 0.05 (trusses), OC damping exponent 0.5.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunParams {
    pub engine: Engine,
    /// Sample size `n` for the stochastic engine.
    pub sample_size: usize,
    /// Steps between fresh sample batches (`n_s`); 1 redraws every step.
    pub sample_refresh: usize,
    /// Tolerance on the effective step ratio.
    pub tau_step: f64,
    /// Move-limit reduction factor.
    pub gamma: f64,
    /// Damping window size (`n_step`).
    pub damping_window: usize,
    /// Disabled only for experiments; the stochastic engine will generally
    /// not converge without damping.
    pub damping_enabled: bool,
    /// Initial move limit in design-variable units.
    pub move_limit: f64,
    /// OC update damping exponent.
    pub eta: f64,
    /// Convergence tolerance on the design change.
    pub tau_opt: f64,
    pub step_budget: usize,
    /// Record exact compliance/gradient alignment each step (costs one solve
    /// per load case per step, tracked separately from engine solves).
    pub diagnostics: bool,
    pub seed: u64,
}

impl RunParams {
    pub fn density_defaults() -> Self {
        RunParams {
            engine: Engine::Standard,
            sample_size: 6,
            sample_refresh: 1,
            tau_step: 0.1,
            gamma: 2.0,
            damping_window: 100,
            damping_enabled: true,
            move_limit: 0.05,
            eta: 0.5,
            tau_opt: 1e-2,
            step_budget: 3000,
            diagnostics: false,
            seed: 0,
        }
    }

    pub fn gsm_defaults() -> Self {
        RunParams {
            engine: Engine::Standard,
            sample_size: 6,
            sample_refresh: 1,
            tau_step: 0.05,
            gamma: 2.0,
            damping_window: 100,
            damping_enabled: true,
            // callers normally override this with a multiple of the initial
            // area; see GsmProblem::default_move_limit
            move_limit: 1.0,
            eta: 0.5,
            tau_opt: 1e-8,
            step_budget: 5000,
            diagnostics: false,
            seed: 0,
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
