use crate::error::{Error, Result};
use crate::fem::{FemModel, MaterialModel};
use crate::loads::LoadSet;

/// Final topology after cutoff, unstable-node pruning and the equilibrium
/// check. When the cleaned structure cannot carry the loads the cleanup is
/// rolled back and reported.
#[derive(Debug, Clone)]
pub struct CleanupOutcome {
    pub active: Vec<bool>,
    pub rolled_back: bool,
    pub report: Option<String>,
}

/// Remove members below `cutoff` relative to the largest area, then
/// iteratively drop free nodes connected by fewer members than the spatial
/// dimension (together with their members), and verify the survivors are in
/// equilibrium under every load case.
pub fn cleanup_final(
    model: &FemModel,
    values: &[f64],
    active_in: &[bool],
    cutoff: f64,
    loads: &LoadSet,
    e0: f64,
) -> Result<CleanupOutcome> {
    let mesh = model.mesh();
    let m = mesh.element_count();
    if values.len() != m || active_in.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: values.len().min(active_in.len()),
            context: "design values vs member count",
        });
    }
    let max = values
        .iter()
        .zip(active_in)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateDesign(
            "no active member with positive area".into(),
        ));
    }

    let mut active: Vec<bool> = (0..m)
        .map(|e| active_in[e] && values[e] / max >= cutoff)
        .collect();

    // support nodes (any fixed DOF) are exempt from the degree rule
    let dim = mesh.dim();
    let mut is_support = vec![false; mesh.node_count()];
    for &dof in mesh.fixed_dofs() {
        is_support[dof / dim] = true;
    }

    loop {
        let mut degree = vec![0usize; mesh.node_count()];
        for e in 0..m {
            if active[e] {
                for &n in mesh.element(e) {
                    degree[n] += 1;
                }
            }
        }
        let mut changed = false;
        for e in 0..m {
            if !active[e] {
                continue;
            }
            let unstable = mesh
                .element(e)
                .iter()
                .any(|&n| !is_support[n] && degree[n] < dim);
            if unstable {
                active[e] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    if active.iter().all(|&a| !a) {
        return Ok(CleanupOutcome {
            active: active_in.to_vec(),
            rolled_back: true,
            report: Some("cleanup removed every member; rolled back".into()),
        });
    }

    // equilibrium check: the cleaned structure must carry every load case
    let floor = 1e-12 * max;
    let eff: Vec<f64> = (0..m)
        .map(|e| if active[e] { values[e].max(floor) } else { 0.0 })
        .collect();
    let check = || -> Result<()> {
        let sys = model.assemble(&eff, &MaterialModel::Truss { e0 })?;
        for i in 0..loads.case_count() {
            sys.solve_vec(loads.case(i))?;
        }
        Ok(())
    };
    match check() {
        Ok(()) => Ok(CleanupOutcome {
            active,
            rolled_back: false,
            report: None,
        }),
        Err(err) => Ok(CleanupOutcome {
            active: active_in.to_vec(),
            rolled_back: true,
            report: Some(format!("equilibrium check failed after cleanup: {err}")),
        }),
    }
}
