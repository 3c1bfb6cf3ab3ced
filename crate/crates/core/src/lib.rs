//! Explicit inversion of integral operators with D-difference kernels of
//! exponential type, and recovery of canonical-system Hamiltonians from
//! rational Weyl matrix functions.
//!
//! Module map:
//!
//! * [`linalg`]: dense complex matrices, exponentials, solves, spectra.
//! * [`kernel`]: the diagonal structure `D`, realizations and the kernels
//!   `k`, `s`, `Phi_1`, `Upsilon`.
//! * [`inversion`]: fundamental solution `U`, projector `P^x`, inverse
//!   kernel `T_ij` and the kernel subspace in the singular case.
//! * [`oracle`]: Nyström discretizations, RK4 integration and quadrature
//!   checks used to verify the closed forms independently.
//! * [`inverse_problem`]: Weyl function, Herglotz data, Hamiltonian
//!   recovery, matrizant and the similarity factorization.

pub mod error;
pub mod fixtures;
pub mod inverse_problem;
pub mod inversion;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod quadrature;

pub use error::{Error, Result};
pub use inversion::{FundamentalSolution, InverseKernel};
pub use kernel::{DiagonalStructure, Realization};
pub use linalg::{CMatrix, CVector};
