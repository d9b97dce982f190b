//! Error types shared across the crate.
//!
//! Numerical operations report structured errors instead of panicking:
//! precondition violations (dimension, resolution, positivity, ...) are
//! caught before any expensive work, and run-level failures such as a
//! blow-up carry enough context for the caller to decide what to do with
//! the partial output.

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension outside `{1, 2}` or violating `n > 2 gamma`.
    #[error("dimension/order mismatch: n = {n}, gamma = {gamma} (need n in {{1,2}} and n > 2*gamma > 0)")]
    Dimension { n: usize, gamma: f64 },

    /// Grid or basis resolution below the supported minimum.
    #[error("resolution {got} below minimum {min} for {what}")]
    Resolution {
        what: &'static str,
        got: usize,
        min: usize,
    },

    /// A field was paired with a geometry it does not belong to.
    #[error("geometry mismatch: field built on geometry #{field}, operation given geometry #{given}")]
    GeometryMismatch { field: u64, given: u64 },

    /// Mode index beyond the truncated multiplier table.
    #[error("mode {mode} outside truncated table (max {max})")]
    ModeOutOfRange { mode: usize, max: usize },

    /// Extension profile failed to decay at the outer boundary.
    #[error("extension profile not decayed: |W| = {tail:.3e} near rho_max (need <= {limit:.1e}); increase rho_max*k")]
    Decay { tail: f64, limit: f64 },

    /// Extension mesh does not resolve the degenerate endpoint.
    #[error("singular mesh: first node {rho1:.3e} not within {limit:.3e} of rho = 0")]
    SingularMesh { rho1: f64, limit: f64 },

    /// Dirichlet-to-Neumann calibration ratios disagree across modes.
    #[error("DtN calibration failed: ratio spread {spread:.3e} exceeds {tol:.1e}")]
    Calibration { spread: f64, tol: f64 },

    /// A conformal factor lost positivity.
    #[error("positivity lost: min u = {min:.6e} at node {node} (floor {floor:.3e})")]
    Positivity { min: f64, node: usize, floor: f64 },

    /// The zero field was supplied where a nonzero field is required.
    #[error("zero field supplied where a nonzero field is required")]
    ZeroField,

    /// A flow step kept failing after the maximum number of halvings.
    #[error("flow step failed after {halvings} halvings at t = {t:.6e} (dt = {dt:.3e}): {reason}")]
    StepFailure {
        halvings: usize,
        t: f64,
        dt: f64,
        reason: String,
    },

    /// The conformal factor exceeded the blow-up guard.
    #[error("blow-up guard tripped: max u = {max:.3e} exceeds {limit:.1e} at t = {t:.6e}")]
    Blowup { max: f64, limit: f64, t: f64 },

    /// A scalar parameter outside its admissible range.
    #[error("parameter {name} = {value} outside admissible range {range}")]
    Range {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    /// Bubble fit did not explain the concentration peak.
    #[error("bubble fit residual {residual:.3e} exceeds {limit:.3e} (half the local peak mass)")]
    Fit { residual: f64, limit: f64 },

    /// Stereographic evaluation at (or too close to) the projection pole.
    #[error("evaluation at the stereographic projection pole (distance {dist:.3e})")]
    Pole { dist: f64 },

    /// Index out of bounds in a user-facing accessor.
    #[error("index {index} out of bounds (len {len})")]
    Index { index: usize, len: usize },

    /// An eigenvalue sits on the coercivity threshold within tolerance,
    /// so the strict spectral-gap inequality is vacuous.
    #[error("degenerate spectrum: eigenvalue {lambda:.12e} within {tol:.1e} of threshold {threshold:.12e}")]
    Degenerate {
        lambda: f64,
        threshold: f64,
        tol: f64,
    },

    /// Dense eigensolver failed to converge.
    #[error("eigensolver failed to converge")]
    Convergence,

    /// Not enough usable data points for a requested fit.
    #[error("insufficient data: {reason}")]
    InsufficientData { reason: String },

    /// Malformed or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// I/O failure while reading or writing run artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
