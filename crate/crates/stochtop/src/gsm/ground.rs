use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned exclusion box. Nodes strictly inside are dropped and members
/// passing through the interior are excluded; geometry touching the boundary
/// survives.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VoidZone {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Candidate node grid and member set for truss optimization.
#[derive(Debug, Clone)]
pub struct GroundStructure {
    pub dim: usize,
    pub nodes: Vec<[f64; 3]>,
    pub members: Vec<[usize; 2]>,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Does the open segment a-b pass through the interior of the box?
fn segment_crosses_void(a: [f64; 3], b: [f64; 3], zone: &VoidZone, tol: f64) -> bool {
    // clip the segment against the box shrunk by `tol`; a non-empty clipped
    // interval means the member runs through the interior
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for axis in 0..3 {
        let lo = zone.min[axis] + tol;
        let hi = zone.max[axis] - tol;
        if hi <= lo {
            return false;
        }
        let d = b[axis] - a[axis];
        if d.abs() < tol * 1e-3 {
            if a[axis] <= lo || a[axis] >= hi {
                return false;
            }
            continue;
        }
        let (mut enter, mut exit) = ((lo - a[axis]) / d, (hi - a[axis]) / d);
        if enter > exit {
            std::mem::swap(&mut enter, &mut exit);
        }
        t0 = t0.max(enter);
        t1 = t1.min(exit);
        if t0 >= t1 {
            return false;
        }
    }
    true
}

/// Generate a ground structure on a regular grid of `cells` divisions per
/// axis with the given cell `spacing` (use zero cells on the third axis for
/// 2D). Members connect node pairs whose lattice offset lies within the
/// level-`level` Chebyshev neighborhood (`None` = full level). A member is
/// excluded when an intermediate lattice node exists on its segment (the
/// longer bar duplicates a chain of shorter ones) or when it crosses a void
/// zone.
pub fn generate_ground_structure(
    cells: [usize; 3],
    spacing: [f64; 3],
    level: Option<usize>,
    voids: &[VoidZone],
) -> Result<GroundStructure> {
    if cells[0] == 0 {
        return Err(Error::Mesh(
            "grid needs at least one division along x".into(),
        ));
    }
    let dim = if cells[2] > 0 { 3 } else { 2 };
    for a in 0..3 {
        if cells[a] > 0 && !(spacing[a] > 0.0) {
            return Err(Error::Mesh(format!(
                "grid spacing along axis {a} must be positive"
            )));
        }
    }
    let max_cells = cells.iter().copied().max().unwrap();
    let level = match level {
        Some(0) | None => max_cells,
        Some(l) => l,
    };
    let tol = 1e-9 * spacing.iter().cloned().fold(1.0_f64, f64::max);

    // lattice nodes outside every void zone
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut nodes = Vec::new();
    for ix in 0..=cells[0] as i64 {
        for iy in 0..=cells[1] as i64 {
            for iz in 0..=cells[2] as i64 {
                let p = [
                    ix as f64 * spacing[0],
                    iy as f64 * spacing[1],
                    iz as f64 * spacing[2],
                ];
                let inside_void = voids
                    .iter()
                    .any(|z| (0..3).all(|a| p[a] > z.min[a] + tol && p[a] < z.max[a] - tol));
                if !inside_void {
                    index.insert((ix, iy, iz), nodes.len());
                    nodes.push(p);
                }
            }
        }
    }

    // canonical half-space of offsets so each pair is visited once
    let mut offsets = Vec::new();
    let bound = |axis: usize| (level.min(cells[axis])) as i64;
    for dx in 0..=bound(0) {
        let dy_lo = if dx == 0 { 0 } else { -bound(1) };
        for dy in dy_lo..=bound(1) {
            let dz_lo = if dx == 0 && dy == 0 { 1 } else { -bound(2) };
            for dz in dz_lo..=bound(2) {
                if dx == 0 && dy <= 0 && dz <= 0 {
                    continue;
                }
                offsets.push((dx, dy, dz));
            }
        }
    }

    let mut members = Vec::new();
    for (&(ix, iy, iz), &a_idx) in &index {
        for &(dx, dy, dz) in &offsets {
            let target = (ix + dx, iy + dy, iz + dz);
            let Some(&b_idx) = index.get(&target) else {
                continue;
            };
            // exclude members that pass over an existing intermediate node
            let g = gcd(gcd(dx, dy), dz);
            if g > 1 {
                let (sx, sy, sz) = (dx / g, dy / g, dz / g);
                let covered =
                    (1..g).any(|t| index.contains_key(&(ix + t * sx, iy + t * sy, iz + t * sz)));
                if covered {
                    continue;
                }
            }
            let (pa, pb) = (nodes[a_idx], nodes[b_idx]);
            if voids.iter().any(|z| segment_crosses_void(pa, pb, z, tol)) {
                continue;
            }
            members.push([a_idx.min(b_idx), a_idx.max(b_idx)]);
        }
    }
    members.sort_unstable();

    if members.is_empty() {
        return Err(Error::Mesh(
            "generated ground structure has no members".into(),
        ));
    }
    Ok(GroundStructure {
        dim,
        nodes,
        members,
    })
}
