//! Robust estimation of sparse, low-rank vector error correction models.
//!
//! The model is `Δy_t = ν + Π y_{t−1} + Σ_i Γ_i Δy_{t−i} + ε_t` with `rank Π ≤ r`.
//! Parameters are fitted by minimizing a Cauchy negative log-likelihood plus a
//! smoothed Geman-type group penalty on the columns of `Π`, using a
//! majorization-minimization scheme whose inner step is a truncated SVD.
//!
//! Modules, bottom up:
//! * [`vecm`] — parameter and data containers, matrix form, residuals.
//! * [`objective`] — losses, penalty, weights, gradient.
//! * [`mm`] — the MM solver and its building blocks.
//! * [`baselines`] — projected gradient descent and alternative loss families.
//! * [`simulate`] — ground-truth generation and path simulation.
//! * [`experiments`] — convergence comparison and NMSE sweeps.
//! * [`io`] — CSV and key-value file formats.

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod io;
pub(crate) mod linalg;
pub mod mm;
pub mod objective;
pub mod simulate;
pub mod vecm;

pub use baselines::{fit_gd, fit_with_loss, GdOptions, StepRule};
pub use error::{Result, VecmError};
pub use mm::{fit, FitReport, Init, MmSolver, SolverOptions, Termination};
pub use objective::{LossKind, ObjectiveConfig, RatParams};
pub use simulate::{DgpSpec, GroundTruth, Innovation};
pub use vecm::{assemble_matrix_form, CointFactors, MatrixForm, SamplePath, VecmParams};
