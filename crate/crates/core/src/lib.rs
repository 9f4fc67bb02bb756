//! Repair learned linear dynamical models so they conserve prescribed linear
//! invariants exactly.
//!
//! Given a learned operator `Â` and a full-column-rank constraint matrix `C`
//! (one column per invariant `cᵀx`), the nearest matrix to `Â` in the
//! Frobenius norm with `CᵀA = 0` is
//!
//! ```text
//! A* = Â − C (CᵀC)⁻¹ CᵀÂ
//! ```
//!
//! [`projection`] computes it, [`diagnostics`] measures what changed,
//! [`dynamics`] simulates both models to show the drift disappearing, and
//! [`oracle`] holds independent brute-force solvers used to check the result.
//!
//! ```
//! use conserve::{projection::project_single, DenseMatrix};
//!
//! let a_hat = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
//! let repair = project_single(&a_hat, &[1.0, 1.0]).unwrap();
//! assert_eq!(repair.corrected.col_sums(), vec![0.0, 0.0]);
//! assert_eq!(repair.correction_rank, 1);
//! ```

pub mod demo;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod projection;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ConstraintSet, DenseMatrix, ExperimentConfig, RepairResult, TimeMode, Trajectory};
