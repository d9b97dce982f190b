//! # fraclab
//!
//! A spectral numerical laboratory for the fractional Yamabe flow on the
//! flat torus `T^n` and the round sphere `S^n` (`n = 1, 2`).
//!
//! The conformal fractional Laplacian `P_gamma` acts diagonally on the
//! natural harmonic basis of either background, so every operator here is
//! a spectral multiplier plus pointwise nonlinear work on an oversampled
//! quadrature grid.  On top of that sit:
//!
//! * [`geometry`] — grids, quadrature, orthonormal bases and transforms;
//! * [`fraclap`] — multiplier tables for `P_gamma` and the degenerate
//!   extension ODE used to cross-check the torus symbol `|k|^{2 gamma}`;
//! * [`functionals`] — curvature, mean curvature, the Yamabe energy,
//!   curvature moments and entropy-type inequalities;
//! * [`flow`] — an adaptive IMEX integrator for the normalized flow
//!   `du/dt = (s - R) u` together with run-level diagnostics;
//! * [`bubbles`] — flat-space bubble profiles, stereographic transfer and
//!   concentration (bubble-count) bookkeeping;
//! * [`stability`] — weighted eigenproblems at a limit metric, spectral
//!   projections, coercivity estimates and the sphere spectral gap;
//! * [`cli`] / [`config`] / [`report`] — deterministic, file-based runs.
//!
//! All randomness flows from a single `u64` seed through splittable
//! counter-based streams (see [`rng`]), and every CSV emitted by the CLI
//! is byte-identical across repeat runs with the same config and seed.

pub mod bubbles;
pub mod cli;
pub mod config;
pub mod error;
pub mod extension;
pub mod flow;
pub mod fraclap;
pub mod functionals;
pub mod geometry;
pub mod report;
pub mod rng;
pub mod stability;

pub(crate) mod par;

pub use error::{Error, Result};
pub use geometry::{Geometry, GeometryKind, SpectralField};
