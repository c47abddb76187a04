//! Move-limit damping for the randomized engines. The effective step ratio
//! compares the windowed average displacement against the latest step length;
//! once updates stop making net progress the move limit is divided by a
//! fixed factor, which forces the noisy iteration to settle.

use std::collections::VecDeque;

/// Effective step ratio over a design history:
/// `R = (|x_k - x_{k-w+1}| / w) / |x_k - x_{k-1}|`
/// where `w` is the window size. Returns `None` while the history holds fewer
/// than `w + 1` designs and `+inf` when the latest step is exactly zero.
pub fn effective_step_ratio(history: &[Vec<f64>], window: usize) -> Option<f64> {
    if window == 0 || history.len() < window + 1 {
        return None;
    }
    let k = history.len() - 1;
    let newest = &history[k];
    let prev = &history[k - 1];
    let window_start = &history[k - (window - 1)];
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let step = dist(newest, prev);
    if step == 0.0 {
        return Some(f64::INFINITY);
    }
    Some(dist(newest, window_start) / window as f64 / step)
}

/// Damping controller state: the design ring buffer, the current move limit
/// and the reduction bookkeeping.
#[derive(Debug, Clone)]
pub struct DampingState {
    window: usize,
    tau_step: f64,
    gamma: f64,
    move_limit: f64,
    history: VecDeque<Vec<f64>>,
    damp_events: u32,
}

impl DampingState {
    pub fn new(window: usize, tau_step: f64, gamma: f64, initial_move: f64) -> Self {
        assert!(window >= 1, "damping window must hold at least one step");
        assert!(gamma > 1.0, "damping factor must shrink the move limit");
        Self {
            window,
            tau_step,
            gamma,
            move_limit: initial_move,
            history: VecDeque::with_capacity(window + 2),
            damp_events: 0,
        }
    }

    /// Record a design snapshot (call once per optimization step, plus once
    /// for the initial design).
    pub fn record(&mut self, design: &[f64]) {
        self.history.push_back(design.to_vec());
        while self.history.len() > self.window + 1 {
            self.history.pop_front();
        }
    }

    pub fn is_warm(&self) -> bool {
        self.history.len() >= self.window + 1
    }

    pub fn ratio(&self) -> Option<f64> {
        let hist: Vec<Vec<f64>> = self.history.iter().cloned().collect();
        effective_step_ratio(&hist, self.window)
    }

    /// Evaluate the ratio and cut the move limit when it falls below the
    /// tolerance. Evaluated every step once the window is warm; a cut
    /// immediately doubles the ratio (the denominator halves while the
    /// window still holds larger steps), so reductions self-pace.
    /// Returns `(ratio, damped_this_step)`.
    pub fn evaluate(&mut self) -> (Option<f64>, bool) {
        match self.ratio() {
            Some(r) if r < self.tau_step => {
                self.move_limit /= self.gamma;
                self.damp_events += 1;
                log::debug!(
                    "damping event {}: ratio {r:.4} < {}, move limit now {:.3e}",
                    self.damp_events,
                    self.tau_step,
                    self.move_limit
                );
                (Some(r), true)
            }
            r => (r, false),
        }
    }

    pub fn move_limit(&self) -> f64 {
        self.move_limit
    }

    pub fn damp_events(&self) -> u32 {
        self.damp_events
    }
}

/// Cosine of the angle between the exact and estimated gradients. `None` when
/// either vector is zero.
pub fn gradient_alignment(exact: &[f64], estimated: &[f64]) -> Option<f64> {
    debug_assert_eq!(exact.len(), estimated.len());
    let dot: f64 = exact.iter().zip(estimated).map(|(a, b)| a * b).sum();
    let na: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = estimated.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Angle in `[0, pi]` between the objective and volume-constraint gradients
/// reduced to the variables strictly inside their bounds; `pi` at a KKT
/// point. `None` when the active set is empty or a reduced gradient vanishes.
pub fn kkt_angle(
    obj_grad: &[f64],
    vol_grad: &[f64],
    values: &[f64],
    lower: f64,
    upper: f64,
) -> Option<f64> {
    let eps = 1e-9 * (upper - lower).max(f64::MIN_POSITIVE);
    let mut active = Vec::new();
    for e in 0..values.len() {
        if values[e] > lower + eps && values[e] < upper - eps {
            active.push(e);
        }
    }
    let na: f64 = active
        .iter()
        .map(|&e| obj_grad[e] * obj_grad[e])
        .sum::<f64>()
        .sqrt();
    let nb: f64 = active
        .iter()
        .map(|&e| vol_grad[e] * vol_grad[e])
        .sum::<f64>()
        .sqrt();
    if active.is_empty() || na == 0.0 || nb == 0.0 {
        return None;
    }
    // 2 atan2(|u - v|, |u + v|) on the normalized gradients stays accurate
    // where acos of the dot product loses digits (angles near 0 and pi)
    let mut diff = 0.0;
    let mut sum = 0.0;
    for &e in &active {
        let u = obj_grad[e] / na;
        let v = vol_grad[e] / nb;
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Some(2.0 * diff.sqrt().atan2(sum.sqrt()))
}
