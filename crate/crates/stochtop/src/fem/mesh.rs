use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Element family carried by a [`Mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    /// Bilinear 4-node quadrilateral, 2D continuum.
    Q4,
    /// Two-node truss bar, 2D or 3D.
    Bar,
}

/// Finite element mesh: node coordinates, element connectivity and supports.
///
/// Coordinates are stored with three components per node; 2D meshes leave the
/// third at zero. All degrees of freedom are numbered `node * dim + axis`.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    coords: Vec<[f64; 3]>,
    elements: Vec<Vec<usize>>,
    kind: ElementKind,
    fixed: BTreeSet<usize>,
}

impl Mesh {
    /// Structured grid of Q4 elements over a `width` x `height` rectangle with
    /// `nx` x `ny` elements. Nodes are numbered column-major (y fastest).
    pub fn rect_q4(width: f64, height: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Mesh(
                "rect_q4 needs at least one element per axis".into(),
            ));
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::Mesh("rect_q4 needs positive dimensions".into()));
        }
        let dx = width / nx as f64;
        let dy = height / ny as f64;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for i in 0..=nx {
            for j in 0..=ny {
                coords.push([i as f64 * dx, j as f64 * dy, 0.0]);
            }
        }
        let node = |i: usize, j: usize| i * (ny + 1) + j;
        let mut elements = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                // counter-clockwise: SW, SE, NE, NW
                elements.push(vec![
                    node(i, j),
                    node(i + 1, j),
                    node(i + 1, j + 1),
                    node(i, j + 1),
                ]);
            }
        }
        Ok(Self {
            dim: 2,
            coords,
            elements,
            kind: ElementKind::Q4,
            fixed: BTreeSet::new(),
        })
    }

    /// Truss mesh from explicit node coordinates and member node pairs.
    /// Zero-length members are rejected.
    pub fn truss(dim: usize, nodes: &[[f64; 3]], members: &[[usize; 2]]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Mesh(format!(
                "truss dimension must be 2 or 3, got {dim}"
            )));
        }
        for (e, m) in members.iter().enumerate() {
            for &n in m {
                if n >= nodes.len() {
                    return Err(Error::Mesh(format!(
                        "member {e} references node {n} but mesh has {} nodes",
                        nodes.len()
                    )));
                }
            }
            let d: f64 = (0..3)
                .map(|a| (nodes[m[0]][a] - nodes[m[1]][a]).powi(2))
                .sum();
            if d.sqrt() <= 0.0 {
                return Err(Error::Mesh(format!("member {e} has zero length")));
            }
        }
        Ok(Self {
            dim,
            coords: nodes.to_vec(),
            elements: members.iter().map(|m| m.to_vec()).collect(),
            kind: ElementKind::Bar,
            fixed: BTreeSet::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Total degree-of-freedom count, `dim * node_count`.
    pub fn dof_count(&self) -> usize {
        self.dim * self.coords.len()
    }

    pub fn node(&self, n: usize) -> [f64; 3] {
        self.coords[n]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.iter().map(|e| e.as_slice())
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let nodes = &self.elements[e];
        let mut c = [0.0; 3];
        for &n in nodes {
            for a in 0..3 {
                c[a] += self.coords[n][a];
            }
        }
        for a in &mut c {
            *a /= nodes.len() as f64;
        }
        c
    }

    /// Element volume: area (unit thickness) for Q4, length for bars.
    pub fn element_volume(&self, e: usize) -> f64 {
        match self.kind {
            ElementKind::Bar => self.bar_length(e),
            ElementKind::Q4 => {
                // shoelace formula on the quad
                let n = &self.elements[e];
                let mut area = 0.0;
                for k in 0..4 {
                    let a = self.coords[n[k]];
                    let b = self.coords[n[(k + 1) % 4]];
                    area += a[0] * b[1] - b[0] * a[1];
                }
                0.5 * area.abs()
            }
        }
    }

    pub fn bar_length(&self, e: usize) -> f64 {
        let m = &self.elements[e];
        let (a, b) = (self.coords[m[0]], self.coords[m[1]]);
        ((0..3).map(|k| (b[k] - a[k]).powi(2)).sum::<f64>()).sqrt()
    }

    /// Unit direction cosines of a bar, first node to second.
    pub fn bar_direction(&self, e: usize) -> [f64; 3] {
        let m = &self.elements[e];
        let (a, b) = (self.coords[m[0]], self.coords[m[1]]);
        let len = self.bar_length(e);
        [
            (b[0] - a[0]) / len,
            (b[1] - a[1]) / len,
            (b[2] - a[2]) / len,
        ]
    }

    /// Restrain one axis of a node.
    pub fn fix_dof(&mut self, node: usize, axis: usize) -> Result<()> {
        if node >= self.coords.len() || axis >= self.dim {
            return Err(Error::Mesh(format!("cannot fix node {node} axis {axis}")));
        }
        self.fixed.insert(node * self.dim + axis);
        Ok(())
    }

    /// Restrain every axis of a node.
    pub fn fix_node(&mut self, node: usize) -> Result<()> {
        for axis in 0..self.dim {
            self.fix_dof(node, axis)?;
        }
        Ok(())
    }

    pub fn fixed_dofs(&self) -> &BTreeSet<usize> {
        &self.fixed
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed.contains(&dof)
    }

    /// Find the node at `point` within an absolute tolerance.
    pub fn find_node(&self, point: &[f64], tol: f64) -> Option<usize> {
        let mut p = [0.0; 3];
        p[..point.len().min(3)].copy_from_slice(&point[..point.len().min(3)]);
        self.coords
            .iter()
            .position(|c| (0..3).all(|a| (c[a] - p[a]).abs() <= tol))
    }

    /// Degrees of freedom touched by element `e`, in local ordering.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let mut dofs = Vec::with_capacity(self.elements[e].len() * self.dim);
        for &n in &self.elements[e] {
            for a in 0..self.dim {
                dofs.push(n * self.dim + a);
            }
        }
        dofs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_grid_counts_and_volumes() {
        let mesh = Mesh::rect_q4(2.0, 1.0, 4, 2).unwrap();
        assert_eq!(mesh.node_count(), 15);
        assert_eq!(mesh.element_count(), 8);
        assert_eq!(mesh.dof_count(), 30);
        for e in 0..8 {
            assert!((mesh.element_volume(e) - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_length_bar_rejected() {
        let nodes = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let err = Mesh::truss(2, &nodes, &[[0, 1]]).unwrap_err();
        assert!(matches!(err, Error::Mesh(_)));
    }

    #[test]
    fn bar_geometry() {
        let nodes = [[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]];
        let mesh = Mesh::truss(2, &nodes, &[[0, 1]]).unwrap();
        assert!((mesh.bar_length(0) - 5.0).abs() < 1e-15);
        let d = mesh.bar_direction(0);
        assert!((d[0] - 0.6).abs() < 1e-15);
        assert!((d[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn find_node_by_coordinate() {
        let mesh = Mesh::rect_q4(1.0, 1.0, 1, 1).unwrap();
        assert_eq!(mesh.find_node(&[1.0, 1.0], 1e-9), Some(3));
        assert_eq!(mesh.find_node(&[0.5, 0.5], 1e-9), None);
    }
}
