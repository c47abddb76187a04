//! Meshing, element stiffness, sparse assembly and linear solves for 2D
//! quadrilateral continuum elements and 2D/3D truss bars.

mod element;
mod mesh;
mod sparse;
mod system;

pub use element::{bar_stiffness_unit, q4_stiffness_unit, MaterialModel};
pub use mesh::{ElementKind, Mesh};
pub use sparse::{solve_cg, Csr, SkylineCholesky};
pub use system::{FemModel, StiffnessSystem};
