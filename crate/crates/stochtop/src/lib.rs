//! Topology optimization under many load cases.
//!
//! Two design parameterizations are supported — SIMP element densities on
//! quadrilateral continuum meshes and member areas on ground-structure
//! trusses — each driven by one of two engines:
//!
//! * **standard**: every load case is solved each step, giving the exact
//!   weighted compliance and gradient;
//! * **stochastic**: the weighted compliance is a matrix trace, so a handful
//!   of Rademacher sign-combined loads estimate it (and its gradient) at a
//!   fraction of the solves. A move-limit damping scheme watches the
//!   effective step ratio and halves the optimizer's move limit whenever the
//!   randomized updates stop making net progress, which forces convergence.
//!
//! The [`problem`] module reads problem definitions from TOML files, the
//! [`runner`] module orchestrates seeded (multi-trial) runs, and [`export`]
//! writes designs, member tables and step metrics as plain delimited text.

pub mod damping;
pub mod density;
pub mod design;
pub mod error;
pub mod export;
pub mod fem;
pub mod gsm;
pub mod loads;
pub mod metrics;
pub mod oc;
pub mod params;
pub mod problem;
pub mod runner;
pub mod sampling;

pub use error::{Error, Result};
pub use metrics::{Engine, RunMetrics, RunResult};
pub use params::RunParams;
