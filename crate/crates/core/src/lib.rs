//! Numerical toolkit for Dirichlet Laplacians in thin bent and twisted tubes.
//!
//! The crate builds unit-speed space curves with relatively parallel
//! (rotation-minimizing) adapted frames, mollifies rough curvature data by
//! Steklov window averages, solves planar Dirichlet cross-section
//! eigenproblems, assembles the straightened-tube metric and the associated
//! discrete Schroedinger-type operators, and measures how fast their
//! resolvents approach the effective one-dimensional Hamiltonian as the tube
//! radius shrinks.
//!
//! Modules are layered bottom-up:
//!
//! * [`curve`] - arc-length grids, frames, curvature extraction;
//! * [`mollify`] - window averages, window-difference derivatives and
//!   L2 shift moduli of sampled functions;
//! * [`cross_section`] - planar Dirichlet eigenpairs, angular coupling and
//!   geometric constants of the tube profile;
//! * [`tube`] - Jacobian and metric fields of the straightened tube, the
//!   admissibility threshold for the tube radius;
//! * [`linalg`] - sparse symmetric storage, banded Cholesky, Lanczos and
//!   power iterations used by the spectral layer;
//! * [`spectral`] - operator assembly (exact and mollified coefficients),
//!   flattening to a unitarily equivalent symmetric matrix, effective and
//!   comparison operators, resolvent-gap and rate-bracket estimators;
//! * [`lab`] - scenario presets, radius sweeps, rate fitting and reports.

pub mod cross_section;
pub mod curve;
pub mod error;
pub mod lab;
pub mod linalg;
pub mod mollify;
pub mod spectral;
pub mod tube;

pub use error::{Error, Result};
