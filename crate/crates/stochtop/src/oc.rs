//! Optimality-criteria design update shared by the density and
//! ground-structure engines: each variable is scaled by a damped power of its
//! benefit-to-cost ratio while a bisected Lagrange multiplier keeps the
//! volume constraint active (or the update feasible when the constraint is
//! slack).

use crate::design::DesignField;
use crate::error::{Error, Result};

const LAMBDA_LO: f64 = 1e-30;
const LAMBDA_HI: f64 = 1e30;
const MAX_BISECTIONS: usize = 200;

/// One OC step. `gradient` must be componentwise non-positive (compliance
/// descent structure); `volume_gradient` strictly positive for updated
/// entries. Entries where `active` is false keep their current value and
/// their volume contribution.
pub fn oc_update(
    field: &DesignField,
    gradient: &[f64],
    volume_gradient: &[f64],
    move_limit: f64,
    eta: f64,
    active: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let m = field.len();
    if gradient.len() != m || volume_gradient.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: gradient.len().min(volume_gradient.len()),
            context: "gradient length vs design length",
        });
    }
    if !(move_limit >= 0.0) {
        return Err(Error::InvalidInput(
            "move limit must be non-negative".into(),
        ));
    }
    let is_active = |e: usize| active.map_or(true, |mask| mask[e]);
    for e in 0..m {
        if is_active(e) && !(volume_gradient[e] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "volume gradient must be positive at active element {e}"
            )));
        }
    }

    let candidate = |lambda: f64, out: &mut Vec<f64>| {
        out.clear();
        for e in 0..m {
            let x = field.values[e];
            if !is_active(e) {
                out.push(x);
                continue;
            }
            let benefit = (-gradient[e]).max(0.0);
            let ratio = benefit / (lambda * volume_gradient[e]);
            let scaled = x * ratio.powf(eta);
            let lo = (x - move_limit).max(field.lower);
            let hi = (x + move_limit).min(field.upper);
            out.push(scaled.clamp(lo, hi));
        }
    };
    let volume_of =
        |vals: &[f64]| -> f64 { vals.iter().zip(volume_gradient).map(|(v, g)| v * g).sum() };

    let target = field.v_max;
    let vol_tol = 1e-11 * target.abs().max(1.0);
    let mut buf = Vec::with_capacity(m);

    candidate(LAMBDA_LO, &mut buf);
    let vol_at_lo = volume_of(&buf);
    if vol_at_lo <= target + vol_tol {
        // constraint slack even at the most generous multiplier
        return Ok(buf);
    }
    candidate(LAMBDA_HI, &mut buf);
    let vol_at_hi = volume_of(&buf);
    if vol_at_hi > target + vol_tol {
        return Err(Error::BisectionBracket {
            vol_lo: vol_at_lo,
            vol_hi: vol_at_hi,
            target,
        });
    }

    let (mut lo, mut hi) = (LAMBDA_LO, LAMBDA_HI);
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        candidate(mid, &mut buf);
        let vol = volume_of(&buf);
        if (vol - target).abs() <= 1e-13 * target.abs().max(1.0) {
            return Ok(buf);
        }
        if vol > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // land on the feasible side of the bracket
    candidate(hi, &mut buf);
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn field(
        values: Vec<f64>,
        volumes: Vec<f64>,
        lower: f64,
        upper: f64,
        v_max: f64,
    ) -> DesignField {
        DesignField::new(values, volumes, lower, upper, v_max).unwrap()
    }

    #[test]
    fn uniform_gradient_gives_uniform_design() {
        let f = field(vec![0.3; 4], vec![1.0; 4], 1e-3, 1.0, 2.0);
        let g = vec![-1.0; 4];
        let v = vec![1.0; 4];
        let next = oc_update(&f, &g, &v, 0.5, 0.5, None).unwrap();
        for &x in &next {
            assert_relative_eq!(x, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_move_leaves_design_unchanged() {
        let f = field(vec![0.2, 0.4, 0.1], vec![1.0; 3], 1e-3, 1.0, 0.7);
        let g = vec![-3.0, -1.0, -2.0];
        let next = oc_update(&f, &g, &[1.0, 1.0, 1.0], 0.0, 0.5, None).unwrap();
        assert_eq!(next, f.values);
    }

    #[test]
    fn slack_constraint_pushes_to_bounds() {
        let f = field(vec![0.5, 0.5], vec![1.0, 1.0], 0.0, 1.0, 100.0);
        let next = oc_update(&f, &[-1.0, -1.0], &[1.0, 1.0], 0.2, 0.5, None).unwrap();
        assert_eq!(next, vec![0.7, 0.7]);
    }

    #[test]
    fn infeasible_lower_bound_reports_bracket() {
        let f = DesignField {
            values: vec![0.5, 0.5],
            volumes: vec![1.0, 1.0],
            lower: 0.4,
            upper: 1.0,
            v_max: 0.5,
        };
        let err = oc_update(&f, &[-1.0, -1.0], &[1.0, 1.0], 0.01, 0.5, None).unwrap_err();
        assert!(matches!(err, Error::BisectionBracket { .. }));
    }

    #[test]
    fn two_variable_problem_reaches_hand_solved_kkt_point() {
        // minimize a1/x1 + a2/x2 subject to L1 x1 + L2 x2 = V. The stationarity
        // conditions give x_i = sqrt(a_i / L_i) * V / sum_j sqrt(a_j L_j); for
        // a = (4, 2), L = (1, 2), V = 1 that is x = (0.5, 0.25).
        let volumes = vec![1.0, 2.0];
        let a = [4.0, 2.0];
        let mut f = field(vec![0.2, 0.2], volumes.clone(), 1e-6, 10.0, 1.0);
        for _ in 0..500 {
            let g: Vec<f64> = (0..2)
                .map(|i| -a[i] / (f.values[i] * f.values[i]))
                .collect();
            let next = oc_update(&f, &g, &volumes, 0.05, 0.5, None).unwrap();
            let delta: f64 = next
                .iter()
                .zip(&f.values)
                .map(|(n, o)| (n - o) * (n - o))
                .sum::<f64>()
                .sqrt();
            f.values = next;
            if delta < 1e-13 {
                break;
            }
        }
        assert_relative_eq!(f.values[0], 0.5, max_relative = 1e-6);
        assert_relative_eq!(f.values[1], 0.25, max_relative = 1e-6);
        assert_relative_eq!(f.volume(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn inactive_entries_are_frozen() {
        let f = field(vec![0.0, 0.3, 0.3], vec![1.0; 3], 0.0, 1.0, 0.9);
        let active = vec![false, true, true];
        let next = oc_update(&f, &[-5.0, -1.0, -2.0], &[1.0; 3], 0.2, 0.5, Some(&active)).unwrap();
        assert_eq!(next[0], 0.0);
        assert!(next[1] > 0.0 && next[2] > 0.0);
    }

    proptest! {
        #[test]
        fn update_is_feasible_and_bounded(
            seed in 0u64..500,
            m in 2usize..12,
            move_limit in 0.01f64..0.3,
        ) {
            let mut s = seed;
            let mut next_f64 = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64)
            };
            let volumes: Vec<f64> = (0..m).map(|_| 0.5 + next_f64()).collect();
            let values: Vec<f64> = (0..m).map(|_| 0.2 + 0.3 * next_f64()).collect();
            let vol: f64 = values.iter().zip(&volumes).map(|(a, b)| a * b).sum();
            let f = DesignField::new(values, volumes.clone(), 1e-3, 1.0, vol).unwrap();
            let g: Vec<f64> = (0..m).map(|_| -next_f64() - 1e-6).collect();
            let next = oc_update(&f, &g, &volumes, move_limit, 0.5, None).unwrap();
            let new_vol: f64 = next.iter().zip(&volumes).map(|(a, b)| a * b).sum();
            prop_assert!(new_vol <= f.v_max * (1.0 + 1e-9));
            for (e, &x) in next.iter().enumerate() {
                prop_assert!(x >= f.lower - 1e-15 && x <= f.upper + 1e-15);
                prop_assert!((x - f.values[e]).abs() <= move_limit + 1e-12);
            }
        }
    }
}
