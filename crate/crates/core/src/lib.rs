//! Non-rigid shape correspondence with spectral filter operator preserving
//! functional maps.
//!
//! Modules, in pipeline order:
//!
//! - [`mesh`]: mesh loading, cotangent stiffness and lumped mass assembly,
//!   graph geodesics.
//! - [`spectral`]: truncated generalized Laplace–Beltrami eigenbasis.
//! - [`descriptors`]: wave and heat kernel signatures.
//! - [`filters`]: heat, ideal, Meyer and orthonormal Jacobi filter banks.
//! - [`fmap`]: functional map estimation, closed-form filter refinement and
//!   point-to-point conversions (including ZoomOut as an ideal-filter schedule).
//! - [`optimize`]: unsupervised frequency-aware losses and per-pair
//!   optimization of Jacobi filter parameters.
//! - [`eval`]: mean geodesic error and error curves.
//! - [`config`]: key/value configuration with the `full` and `desk` profiles.
//! - [`pipeline`]: end-to-end orchestration used by the CLI.
//! - [`plot`]: dependency-free SVG line charts.
//! - [`selfcheck`]: numerical invariants runnable from the CLI.
//! - [`sparse`]: CSR matrices and an envelope Cholesky factorization.

pub mod config;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod filters;
pub mod fmap;
pub mod mesh;
pub mod optimize;
pub mod pipeline;
pub mod plot;
pub mod selfcheck;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
