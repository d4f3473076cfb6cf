//! Radial normal solutions of `(-Δ)^{n/2} u = |x|^{nα} Q e^{nu}` via the
//! logarithmic integral representation.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod profile;
pub mod quad;
pub mod shooter;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Density, RadialField, RadialGrid};
pub use kernel::{angular_log_average, apply_kernel, build_kernel, KernelMatrix};
pub use model::{ball_volume, sphere_area, CutoffConfig, ModelParams};
pub use profile::{eval_q, Decay, QProfile, TailTerm};
pub use diagnostics::{BolVerdict, Integral, PohozaevReport};
pub use solver::{scan_origin, solve_normal, solve_normal_from, ScanPoint, Normalization, NonConvergence, SolveReport, SolverOptions};
pub use continuation::{continuation_solve, existence_window, ContinuationReport, Schedule, StageRecord};
pub use shooter::{cross_validate, remark62_scan, shoot, shoot_on_grid, RemarkCase, RemarkRow, ShootResult};
