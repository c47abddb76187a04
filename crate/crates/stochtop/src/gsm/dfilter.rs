use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete-filter configuration for ground-structure runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiscreteFilterParams {
    /// Members whose normalized area stays below this value are removed.
    pub alpha_f: f64,
    /// Steps a member must stay below `alpha_f` before removal (stochastic
    /// engine only; the standard filter removes immediately).
    pub n_f: usize,
    /// Optional larger filter value applied once to the converged design.
    pub final_alpha_f: Option<f64>,
}

impl Default for DiscreteFilterParams {
    fn default() -> Self {
        DiscreteFilterParams {
            alpha_f: 1e-4,
            n_f: 10,
            final_alpha_f: None,
        }
    }
}

fn check_alpha(alpha_f: f64) -> Result<()> {
    if !(alpha_f > 0.0 && alpha_f < 1.0) {
        return Err(Error::InvalidInput(format!(
            "discrete filter value must lie in (0, 1), got {alpha_f}"
        )));
    }
    Ok(())
}

fn max_active(values: &[f64], active: &[bool]) -> Result<f64> {
    let max = values
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::InvalidInput(
            "discrete filter needs a positive maximum active area".into(),
        ));
    }
    Ok(max)
}

/// Standard discrete filter: active members with `x_e / max(x) < alpha_f`
/// are removed at once. Returns the indices to remove.
pub fn discrete_filter_standard(
    values: &[f64],
    active: &[bool],
    alpha_f: f64,
) -> Result<Vec<usize>> {
    check_alpha(alpha_f)?;
    let max = max_active(values, active)?;
    Ok((0..values.len())
        .filter(|&e| active[e] && values[e] / max < alpha_f)
        .collect())
}

/// Rolling normalized-area history driving the stochastic discrete filter:
/// a member is removed only once its normalized area has stayed below the
/// filter value for `n_f` consecutive recorded steps.
#[derive(Debug, Clone)]
pub struct FilterState {
    n_f: usize,
    histories: Vec<VecDeque<f64>>,
    removed: Vec<bool>,
}

impl FilterState {
    pub fn new(member_count: usize, n_f: usize) -> Self {
        FilterState {
            n_f: n_f.max(1),
            histories: vec![VecDeque::new(); member_count],
            removed: vec![false; member_count],
        }
    }

    pub fn window(&self) -> usize {
        self.n_f
    }

    pub fn removed(&self) -> &[bool] {
        &self.removed
    }

    /// Record this step's normalized areas and return the members whose whole
    /// window sits below `alpha_f`. Removed members never re-enter.
    pub fn observe_and_filter(
        &mut self,
        values: &[f64],
        active: &[bool],
        alpha_f: f64,
    ) -> Result<Vec<usize>> {
        check_alpha(alpha_f)?;
        let max = max_active(values, active)?;
        let mut out = Vec::new();
        for e in 0..values.len() {
            if !active[e] || self.removed[e] {
                continue;
            }
            let hist = &mut self.histories[e];
            hist.push_back(values[e] / max);
            while hist.len() > self.n_f {
                hist.pop_front();
            }
            if hist.len() == self.n_f && hist.iter().all(|&r| r < alpha_f) {
                self.removed[e] = true;
                out.push(e);
            }
        }
        Ok(out)
    }
}
