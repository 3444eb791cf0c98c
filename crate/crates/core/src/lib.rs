//! Two-dimensional minimum-compliance topology optimization with a level-set
//! description of the material layout. The layout evolves under a reaction
//! term built from the strain energy density, regularized by nodal diffusion.
//! Optionally, the computational mesh is re-adapted during the run to an
//! anisotropic metric derived from a gradient-recovery error estimator of the
//! (filtered) level-set field, producing graded meshes that concentrate thin
//! stretched elements along the material interface.

pub mod bench;
pub mod config;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod io;
pub mod levelset;
pub mod mesh;
pub mod metric;
pub mod remesh;
pub mod solver;
pub mod transfer;

pub use error::{Error, Result};
