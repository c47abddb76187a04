use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fem::Mesh;

/// Requested mirror symmetries of the design field about the mesh midplanes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SymmetrySpec {
    /// Mirror about the vertical midline (x -> x_min + x_max - x).
    pub mirror_x: bool,
    /// Mirror about the horizontal midline (y -> y_min + y_max - y).
    pub mirror_y: bool,
}

impl SymmetrySpec {
    pub fn any(&self) -> bool {
        self.mirror_x || self.mirror_y
    }
}

/// Precomputed orbits of mirrored elements. Applying the map replaces every
/// orbit's values by their average, which is idempotent.
#[derive(Debug, Clone)]
pub struct SymmetryMap {
    orbits: Vec<Vec<usize>>,
}

/// Match elements across the requested mirror planes by centroid. Fails when
/// the mesh is not geometrically symmetric about a requested axis.
pub fn build_symmetry_map(mesh: &Mesh, spec: SymmetrySpec) -> Result<SymmetryMap> {
    let m = mesh.element_count();
    let centroids: Vec<[f64; 3]> = (0..m).map(|e| mesh.centroid(e)).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in &centroids {
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let diag: f64 = (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
    let quant = (diag * 1e-7).max(f64::MIN_POSITIVE);
    let key = |c: &[f64; 3]| -> (i64, i64, i64) {
        (
            (c[0] / quant).round() as i64,
            (c[1] / quant).round() as i64,
            (c[2] / quant).round() as i64,
        )
    };
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    for (e, c) in centroids.iter().enumerate() {
        if index.insert(key(c), e).is_some() {
            return Err(Error::Mesh(format!("elements share a centroid near {c:?}")));
        }
    }

    let lookup = |c: &[f64; 3], axis_name: &str| -> Result<usize> {
        index.get(&key(c)).copied().ok_or_else(|| {
            Error::Mesh(format!(
                "mesh is not symmetric about the {axis_name} midplane: no element with centroid {c:?}"
            ))
        })
    };

    // orbit of an element under the requested mirror group (size 1, 2 or 4)
    let mut volumes: Vec<f64> = (0..m).map(|e| mesh.element_volume(e)).collect();
    let vol_scale = volumes.iter().cloned().fold(0.0_f64, f64::max);
    volumes.iter_mut().for_each(|v| *v /= vol_scale);

    let mut seen = vec![false; m];
    let mut orbits = Vec::new();
    for e in 0..m {
        if seen[e] {
            continue;
        }
        let c = centroids[e];
        let mut members = vec![e];
        let push = |idx: usize, members: &mut Vec<usize>| {
            if !members.contains(&idx) {
                members.push(idx);
            }
        };
        if spec.mirror_x {
            let mx = [lo[0] + hi[0] - c[0], c[1], c[2]];
            push(lookup(&mx, "x")?, &mut members);
        }
        if spec.mirror_y {
            let my = [c[0], lo[1] + hi[1] - c[1], c[2]];
            push(lookup(&my, "y")?, &mut members);
        }
        if spec.mirror_x && spec.mirror_y {
            let mxy = [lo[0] + hi[0] - c[0], lo[1] + hi[1] - c[1], c[2]];
            push(lookup(&mxy, "x and y")?, &mut members);
        }
        for &idx in &members {
            if (volumes[idx] - volumes[e]).abs() > 1e-9 {
                return Err(Error::Mesh(
                    "mirrored elements differ in volume; averaging would change the total volume"
                        .into(),
                ));
            }
            seen[idx] = true;
        }
        members.sort_unstable();
        orbits.push(members);
    }
    Ok(SymmetryMap { orbits })
}

impl SymmetryMap {
    /// Replace each orbit by its average.
    pub fn apply(&self, values: &mut [f64]) {
        for orbit in &self.orbits {
            let avg = orbit.iter().map(|&e| values[e]).sum::<f64>() / orbit.len() as f64;
            for &e in orbit {
                values[e] = avg;
            }
        }
    }

    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_field_unchanged() {
        let mesh = Mesh::rect_q4(2.0, 1.0, 2, 1).unwrap();
        let map = build_symmetry_map(
            &mesh,
            SymmetrySpec {
                mirror_x: true,
                mirror_y: false,
            },
        )
        .unwrap();
        let mut v = vec![0.4, 0.4];
        map.apply(&mut v);
        assert_eq!(v, vec![0.4, 0.4]);
    }

    #[test]
    fn asymmetric_pair_averages() {
        let mesh = Mesh::rect_q4(2.0, 1.0, 2, 1).unwrap();
        let map = build_symmetry_map(
            &mesh,
            SymmetrySpec {
                mirror_x: true,
                mirror_y: false,
            },
        )
        .unwrap();
        let mut v = vec![0.2, 0.4];
        map.apply(&mut v);
        assert!((v[0] - 0.3).abs() < 1e-15 && v[0] == v[1]);
    }

    #[test]
    fn application_is_idempotent() {
        let mesh = Mesh::rect_q4(4.0, 2.0, 4, 2).unwrap();
        let map = build_symmetry_map(
            &mesh,
            SymmetrySpec {
                mirror_x: true,
                mirror_y: true,
            },
        )
        .unwrap();
        let mut v: Vec<f64> = (0..8).map(|i| (i as f64 * 0.31).fract()).collect();
        map.apply(&mut v);
        let once = v.clone();
        map.apply(&mut v);
        assert_eq!(v, once);
        // total volume preserved for the uniform grid
        let before: f64 = (0..8).map(|i| (i as f64 * 0.31).fract()).sum();
        let after: f64 = once.iter().sum();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn four_fold_orbit() {
        let mesh = Mesh::rect_q4(2.0, 2.0, 2, 2).unwrap();
        let map = build_symmetry_map(
            &mesh,
            SymmetrySpec {
                mirror_x: true,
                mirror_y: true,
            },
        )
        .unwrap();
        // elements: (0,0), (0,1), (1,0), (1,1) -> one orbit of four
        assert_eq!(map.orbit_count(), 1);
        let mut v = vec![0.1, 0.2, 0.3, 0.4];
        map.apply(&mut v);
        for x in v {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn non_symmetric_mesh_reports_failure() {
        // 3x1 strip is x-symmetric but a truss mesh with off-grid nodes is not
        let nodes = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.7, 0.0]];
        let mesh = Mesh::truss(2, &nodes, &[[0, 1], [1, 2]]).unwrap();
        let err = build_symmetry_map(
            &mesh,
            SymmetrySpec {
                mirror_x: true,
                mirror_y: false,
            },
        );
        assert!(err.is_err());
    }
}
