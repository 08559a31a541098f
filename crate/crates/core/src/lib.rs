//! Multipatch discontinuous Galerkin isogeometric analysis (dG IgA) for
//! diffusion problems on volumetric domains and on open or closed surfaces.
//!
//! The pipeline is: a [`geometry::MultiPatchDomain`] of (rational) spline
//! patches, per-patch discontinuous spline spaces ([`assembly::Discretization`]),
//! the symmetric interior penalty system ([`assembly::assemble`]), a sparse
//! solve ([`linalg`]) and error/rate analysis ([`analysis`]). The
//! [`problems`] registry holds the benchmark cases.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod problems;
pub mod quadrature;
pub mod splines;

pub use error::{Error, Result, SolveError};

// Types shared with the driver and benchmark crates.
pub use analysis::{ConvergenceRecord, ErrorNorms};
pub use assembly::{DGSystem, Discretization, FieldSpace, ProblemSpec};
pub use geometry::{MultiPatchDomain, Patch, Point};
pub use linalg::{CgOptions, CsrMatrix, SolveReport};
pub use problems::{CaseParams, ProblemCase};
