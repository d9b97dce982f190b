//! The conformal fractional Laplacian `P_gamma` as a spectral multiplier.
//!
//! On the flat torus the operator is the fractional Laplacian with symbol
//! `|kappa|^{2 gamma}` (and `0` on constants).  On the round sphere it is
//! the intertwining operator, acting on degree-`k` harmonics by
//!
//! ```text
//! lambda(k) = Gamma(k + n/2 + gamma) / Gamma(k + n/2 - gamma)
//! ```
//!
//! evaluated through log-Gamma differences: direct Gamma ratios overflow
//! long before the truncation degrees used here, while
//! `exp(ln Gamma(a) - ln Gamma(b))` stays accurate uniformly in `k`.

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryKind, ModeSymbol, SpectralField};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

/// The truncated multiplier table of a geometry.
#[derive(Debug, Clone)]
pub struct MultiplierTable {
    /// Geometry the table belongs to.
    pub geometry_id: u64,
    pub gamma: f64,
    /// One multiplier per basis index, aligned with the coefficient
    /// layout of [`SpectralField`].
    pub values: Vec<f64>,
}

/// Sphere multiplier at degree `k` for parameters `(n, gamma)`.
pub fn sphere_multiplier(n: usize, gamma: f64, k: usize) -> f64 {
    let half_n = n as f64 / 2.0;
    (ln_gamma(k as f64 + half_n + gamma) - ln_gamma(k as f64 + half_n - gamma)).exp()
}

fn compute_table(geom: &Geometry) -> Vec<f64> {
    (0..geom.basis_len())
        .map(|b| match geom.mode_symbol(b).expect("b < basis_len") {
            ModeSymbol::TorusKsq(ksq) => {
                if ksq == 0.0 {
                    0.0
                } else {
                    ksq.powf(geom.gamma())
                }
            }
            ModeSymbol::SphereDegree(k) => sphere_multiplier(geom.dim(), geom.gamma(), k),
        })
        .collect()
}

/// Per-basis-index multipliers, computed once per geometry and cached.
pub fn multipliers(geom: &Arc<Geometry>) -> &[f64] {
    geom.multipliers.get_or_init(|| compute_table(geom))
}

/// The full multiplier table as a value type.
pub fn table(geom: &Arc<Geometry>) -> MultiplierTable {
    MultiplierTable {
        geometry_id: geom.id(),
        gamma: geom.gamma(),
        values: multipliers(geom).to_vec(),
    }
}

/// Multiplier at mode `k`: harmonic degree on spheres, axis wavenumber
/// on tori (i.e. the symbol at wavevector `(k, 0, ...)`).
pub fn multiplier(geom: &Arc<Geometry>, k: usize) -> Result<f64> {
    let max = match geom.kind() {
        GeometryKind::Sphere => geom.truncation(),
        GeometryKind::Torus => {
            if geom.truncation() % 2 == 0 {
                geom.truncation() / 2 - 1
            } else {
                (geom.truncation() - 1) / 2
            }
        }
    };
    if k > max {
        return Err(Error::ModeOutOfRange { mode: k, max });
    }
    Ok(match geom.kind() {
        GeometryKind::Sphere => sphere_multiplier(geom.dim(), geom.gamma(), k),
        GeometryKind::Torus => {
            let kappa = std::f64::consts::TAU * k as f64 / geom.period();
            if k == 0 {
                0.0
            } else {
                kappa.powf(2.0 * geom.gamma())
            }
        }
    })
}

/// Apply `P_gamma` to a field (diagonal in coefficient space).
pub fn apply_p(geom: &Arc<Geometry>, f: &SpectralField) -> Result<SpectralField> {
    f.check_geometry(geom)?;
    let table = multipliers(geom);
    let coeffs = f
        .coeffs()
        .iter()
        .zip(table.iter())
        .map(|(c, m)| c * m)
        .collect();
    SpectralField::from_coeffs(geom, coeffs)
}

/// Quadratic form `int f P_gamma(f) d mu_0` (nonnegative).
pub fn quadratic_form(geom: &Arc<Geometry>, f: &SpectralField) -> Result<f64> {
    f.check_geometry(geom)?;
    let table = multipliers(geom);
    Ok(f.coeffs()
        .iter()
        .zip(table.iter())
        .map(|(c, m)| c * c * m)
        .sum())
}
