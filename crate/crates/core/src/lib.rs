//! Kronecker-structured solvers for the isogeometric Poisson problem on
//! tensor-product B-spline patches: fast diagonalization and ADI
//! preconditioners, PCG, an IC(0) baseline, and overlapping Schwarz for
//! conforming multipatch domains.
//!
//! Dofs are ordered with the last parametric direction fastest.

pub mod adi;
pub mod assembly;
pub mod bspline;
pub mod eigen;
pub mod envelope;
pub mod error;
pub mod experiment;
pub mod fd;
pub mod geometry;
pub mod ic;
pub mod kronecker;
pub mod linalg;
pub mod multipatch;
pub mod pcg;
pub mod sparse;

pub use adi::{AdiPreconditioner, ShiftPlan, ShiftPlan2D, ShiftPlan3D, Shifts3D};
pub use bspline::{KnotVector, SplineSpace1D};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use fd::FdPreconditioner;
pub use geometry::{BuiltinDomain, GeometryMap};
pub use ic::IcFactor;
pub use kronecker::{KroneckerSum, Pencil};
pub use multipatch::{MultiPatchDomain, SchwarzMode, SchwarzPreconditioner};
pub use pcg::{pcg, LinearOperator, PcgResult};
pub use sparse::SparseMatrix;
