//! Background geometries, quadrature grids and spectral fields.
//!
//! A [`Geometry`] bundles a flat torus `T^n` or round sphere `S^n`
//! (`n = 1, 2`) with
//!
//! * a quadrature grid whose weights reproduce the background volume and
//!   integrate products of basis functions exactly,
//! * an orthonormal truncated basis of harmonics (trigonometric modes on
//!   periodic backgrounds, real spherical harmonics on `S^2`),
//! * a 2x-oversampled companion grid used for pointwise nonlinear
//!   operations (fractional powers of conformal factors), and
//! * the fractional order `gamma` of the conformal operator, subject to
//!   `0 < 2 gamma < min(2, n)`.
//!
//! A [`SpectralField`] is a real coefficient vector over that basis plus
//! its synthesized grid values; analysis and synthesis invert each other
//! exactly on the truncated band.

mod sphere;
mod trig;

pub use sphere::{gauss_legendre, legendre_table, tri, SphereGrid};
pub use trig::TrigGrid;

use crate::error::{Error, Result};
use once_cell::sync::OnceCell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Which background manifold a geometry describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Torus,
    Sphere,
}

/// The critical exponents attached to `(n, gamma)`.
#[derive(Debug, Clone, Copy)]
pub struct Exponents {
    pub n: f64,
    pub gamma: f64,
}

impl Exponents {
    /// Critical Sobolev exponent `(n + 2 gamma) / (n - 2 gamma)`.
    pub fn crit(&self) -> f64 {
        (self.n + 2.0 * self.gamma) / (self.n - 2.0 * self.gamma)
    }

    /// Conformal volume exponent `2n / (n - 2 gamma)`.
    pub fn vol(&self) -> f64 {
        2.0 * self.n / (self.n - 2.0 * self.gamma)
    }

    /// Weight exponent `4 gamma / (n - 2 gamma)`.
    pub fn weight(&self) -> f64 {
        4.0 * self.gamma / (self.n - 2.0 * self.gamma)
    }

    /// Energy denominator exponent `(n - 2 gamma) / n`.
    pub fn energy_den(&self) -> f64 {
        (self.n - 2.0 * self.gamma) / self.n
    }
}

/// Spectral label of one basis function, used to build multiplier tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeSymbol {
    /// Squared angular wavenumber `|2 pi k / period|^2` on a torus.
    TorusKsq(f64),
    /// Harmonic degree on a sphere.
    SphereDegree(usize),
}

#[derive(Debug)]
enum Backend {
    /// `n = 1`: flat circle of arbitrary period, or the round `S^1`.
    Line { base: TrigGrid, over: TrigGrid },
    /// `n = 2` torus: tensor square of a 1-d periodic grid.
    Plane { base: TrigGrid, over: TrigGrid },
    /// `n = 2` round sphere.
    Sphere2 { base: SphereGrid, over: SphereGrid },
}

/// A background manifold with its grids, basis and fractional order.
#[derive(Debug)]
pub struct Geometry {
    id: u64,
    kind: GeometryKind,
    n: usize,
    gamma: f64,
    truncation: usize,
    period: f64,
    volume: f64,
    backend: Backend,
    weights: Vec<f64>,
    over_weights: Vec<f64>,
    pub(crate) multipliers: OnceCell<Vec<f64>>,
}

fn check_order(n: usize, gamma: f64) -> Result<()> {
    let ok = (n == 1 || n == 2) && gamma > 0.0 && 2.0 * gamma < (n as f64).min(2.0);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension { n, gamma })
    }
}

impl Geometry {
    /// Flat torus `(R / period Z)^n` with `modes_per_axis` grid points
    /// per axis and the spectral band `|k_i| <= modes_per_axis / 2 - 1`.
    pub fn torus(n: usize, period: f64, modes_per_axis: usize, gamma: f64) -> Result<Arc<Self>> {
        check_order(n, gamma)?;
        if period <= 0.0 {
            return Err(Error::Range {
                name: "period",
                value: period,
                range: "(0, inf)",
            });
        }
        if modes_per_axis < 4 {
            return Err(Error::Resolution {
                what: "modes_per_axis",
                got: modes_per_axis,
                min: 4,
            });
        }
        let m = modes_per_axis;
        let kmax = if m % 2 == 0 { m / 2 - 1 } else { (m - 1) / 2 };
        let base = TrigGrid::new(m, period, kmax);
        let over = TrigGrid::new(2 * m, period, kmax);
        let backend = if n == 1 {
            Backend::Line { base, over }
        } else {
            Backend::Plane { base, over }
        };
        Ok(Self::finish(
            GeometryKind::Torus,
            n,
            gamma,
            modes_per_axis,
            period,
            period.powi(n as i32),
            backend,
        ))
    }

    /// Round sphere `S^n` with harmonics up to degree `degree_max`.
    pub fn sphere(n: usize, degree_max: usize, gamma: f64) -> Result<Arc<Self>> {
        check_order(n, gamma)?;
        if degree_max < 4 {
            return Err(Error::Resolution {
                what: "degree_max",
                got: degree_max,
                min: 4,
            });
        }
        let l = degree_max;
        let (volume, backend) = if n == 1 {
            let period = std::f64::consts::TAU;
            (
                period,
                Backend::Line {
                    base: TrigGrid::new(2 * l + 1, period, l),
                    over: TrigGrid::new(4 * l + 2, period, l),
                },
            )
        } else {
            (
                4.0 * std::f64::consts::PI,
                Backend::Sphere2 {
                    base: SphereGrid::new(l, l + 1, 2 * l + 1),
                    over: SphereGrid::new(l, 2 * l + 2, 4 * l + 2),
                },
            )
        };
        Ok(Self::finish(
            GeometryKind::Sphere,
            n,
            gamma,
            degree_max,
            std::f64::consts::TAU,
            volume,
            backend,
        ))
    }

    fn finish(
        kind: GeometryKind,
        n: usize,
        gamma: f64,
        truncation: usize,
        period: f64,
        volume: f64,
        backend: Backend,
    ) -> Arc<Self> {
        let (weights, over_weights) = match &backend {
            Backend::Line { base, over } => (
                vec![base.weight(); base.nodes],
                vec![over.weight(); over.nodes],
            ),
            Backend::Plane { base, over } => (
                vec![base.weight() * base.weight(); base.nodes * base.nodes],
                vec![over.weight() * over.weight(); over.nodes * over.nodes],
            ),
            Backend::Sphere2 { base, over } => {
                let w = |g: &SphereGrid| {
                    (0..g.node_count())
                        .map(|idx| g.weight(idx / g.nphi))
                        .collect::<Vec<_>>()
                };
                (w(base), w(over))
            }
        };
        Arc::new(Geometry {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            kind,
            n,
            gamma,
            truncation,
            period,
            volume,
            backend,
            weights,
            over_weights,
            multipliers: OnceCell::new(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Band-limit parameter: `modes_per_axis` (torus) or `degree_max`.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Torus period (`2 pi` for spheres, which are parametrized by angle).
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Background volume `vol(M, g_0)`.
    pub fn background_volume(&self) -> f64 {
        self.volume
    }

    pub fn exponents(&self) -> Exponents {
        Exponents {
            n: self.n as f64,
            gamma: self.gamma,
        }
    }

    pub fn basis_len(&self) -> usize {
        match &self.backend {
            Backend::Line { base, .. } => base.basis_len(),
            Backend::Plane { base, .. } => base.basis_len() * base.basis_len(),
            Backend::Sphere2 { base, .. } => base.basis_len(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn over_node_count(&self) -> usize {
        self.over_weights.len()
    }

    /// Quadrature weights of the base grid (sum = background volume).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature weights of the 2x-oversampled grid.
    pub fn over_weights(&self) -> &[f64] {
        &self.over_weights
    }

    /// Coordinates of base-grid node `i`: `[x]`, `[x, y]`, or
    /// `[theta, phi]`.
    pub fn node_position(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.node_count() {
            return Err(Error::Index {
                index: i,
                len: self.node_count(),
            });
        }
        Ok(match &self.backend {
            Backend::Line { base, .. } => vec![base.node(i)],
            Backend::Plane { base, .. } => {
                vec![base.node(i / base.nodes), base.node(i % base.nodes)]
            }
            Backend::Sphere2 { base, .. } => base.position(i).to_vec(),
        })
    }

    /// Coordinates of oversampled-grid node `i`.
    pub fn over_node_position(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.over_node_count() {
            return Err(Error::Index {
                index: i,
                len: self.over_node_count(),
            });
        }
        Ok(match &self.backend {
            Backend::Line { over, .. } => vec![over.node(i)],
            Backend::Plane { over, .. } => {
                vec![over.node(i / over.nodes), over.node(i % over.nodes)]
            }
            Backend::Sphere2 { over, .. } => over.position(i).to_vec(),
        })
    }

    /// Spectral label of basis index `b`.
    pub fn mode_symbol(&self, b: usize) -> Result<ModeSymbol> {
        if b >= self.basis_len() {
            return Err(Error::Index {
                index: b,
                len: self.basis_len(),
            });
        }
        Ok(match (&self.backend, self.kind) {
            (Backend::Line { .. }, GeometryKind::Sphere) => {
                ModeSymbol::SphereDegree(TrigGrid::wavenumber(b))
            }
            (Backend::Line { .. }, GeometryKind::Torus) => {
                let k = TrigGrid::wavenumber(b) as f64;
                let kappa = std::f64::consts::TAU * k / self.period;
                ModeSymbol::TorusKsq(kappa * kappa)
            }
            (Backend::Plane { base, .. }, _) => {
                let blen = base.basis_len();
                let ka = TrigGrid::wavenumber(b / blen) as f64;
                let kb = TrigGrid::wavenumber(b % blen) as f64;
                let scale = std::f64::consts::TAU / self.period;
                ModeSymbol::TorusKsq(scale * scale * (ka * ka + kb * kb))
            }
            (Backend::Sphere2 { .. }, _) => ModeSymbol::SphereDegree((b as f64).sqrt() as usize),
        })
    }

    /// Dimensionless magnitude of basis index `b` (degree, or `|k|` in
    /// integer wavenumber units on the torus).  Used for spectral decay.
    pub fn mode_magnitude(&self, b: usize) -> f64 {
        match self.mode_symbol(b).expect("index checked by caller") {
            ModeSymbol::SphereDegree(l) => l as f64,
            ModeSymbol::TorusKsq(ksq) => ksq.sqrt() * self.period / std::f64::consts::TAU,
        }
    }

    /// Synthesis on the base grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Line { base, .. } => base.synth(coeffs),
            Backend::Plane { base, .. } => base.synth2(coeffs),
            Backend::Sphere2 { base, .. } => base.synth(coeffs),
        }
    }

    /// Analysis (quadrature projection) from the base grid.
    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Line { base, .. } => base.analyze(values),
            Backend::Plane { base, .. } => base.analyze2(values),
            Backend::Sphere2 { base, .. } => base.analyze(values),
        }
    }

    /// Synthesis on the 2x-oversampled grid.
    pub fn synthesize_over(&self, coeffs: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Line { over, .. } => over.synth(coeffs),
            Backend::Plane { over, .. } => over.synth2(coeffs),
            Backend::Sphere2 { over, .. } => over.synth(coeffs),
        }
    }

    /// Analysis from the oversampled grid, truncated to the base band.
    pub fn analyze_over(&self, values: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Line { over, .. } => over.analyze(values),
            Backend::Plane { over, .. } => over.analyze2(values),
            Backend::Sphere2 { over, .. } => over.analyze(values),
        }
    }

    /// Quadrature of raw oversampled-grid values against `d mu_0`.
    pub fn integrate_over_values(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(self.over_weights.iter())
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Quadrature of raw base-grid values against `d mu_0`.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(self.weights.iter())
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Evaluate a coefficient vector at an arbitrary point (coordinates
    /// as in [`Geometry::node_position`]).
    pub fn eval(&self, coeffs: &[f64], point: &[f64]) -> Result<f64> {
        if coeffs.len() != self.basis_len() {
            return Err(Error::Index {
                index: coeffs.len(),
                len: self.basis_len(),
            });
        }
        Ok(match &self.backend {
            Backend::Line { base, .. } => {
                let x = point[0];
                (0..base.basis_len())
                    .map(|b| coeffs[b] * base.basis_at(b, x))
                    .sum()
            }
            Backend::Plane { base, .. } => {
                let blen = base.basis_len();
                let vx: Vec<f64> = (0..blen).map(|a| base.basis_at(a, point[0])).collect();
                let vy: Vec<f64> = (0..blen).map(|b| base.basis_at(b, point[1])).collect();
                let mut acc = 0.0;
                for a in 0..blen {
                    let mut row = 0.0;
                    for b in 0..blen {
                        row += coeffs[a * blen + b] * vy[b];
                    }
                    acc += vx[a] * row;
                }
                acc
            }
            Backend::Sphere2 { base, .. } => base.eval(coeffs, point[0], point[1]),
        })
    }
}

/// A truncated-band field on a fixed geometry: real coefficients over
/// the orthonormal basis, plus their synthesized base-grid values.
#[derive(Debug, Clone)]
pub struct SpectralField {
    geom: Arc<Geometry>,
    coeffs: Vec<f64>,
    values: Vec<f64>,
}

impl SpectralField {
    /// Build a field from basis coefficients.
    pub fn from_coeffs(geom: &Arc<Geometry>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != geom.basis_len() {
            return Err(Error::Index {
                index: coeffs.len(),
                len: geom.basis_len(),
            });
        }
        let values = geom.synthesize(&coeffs);
        Ok(SpectralField {
            geom: Arc::clone(geom),
            coeffs,
            values,
        })
    }

    /// Build a field from base-grid samples.
    ///
    /// Samples outside the truncated band are projected away; for
    /// band-limited input the round trip is exact.
    pub fn from_values(geom: &Arc<Geometry>, values: &[f64]) -> Result<Self> {
        if values.len() != geom.node_count() {
            return Err(Error::Index {
                index: values.len(),
                len: geom.node_count(),
            });
        }
        let coeffs = geom.analyze(values);
        Self::from_coeffs(geom, coeffs)
    }

    /// The constant field `c`.
    pub fn constant(geom: &Arc<Geometry>, c: f64) -> Self {
        let mut coeffs = vec![0.0; geom.basis_len()];
        coeffs[0] = c * geom.background_volume().sqrt();
        Self::from_coeffs(geom, coeffs).expect("constant field is well-formed")
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geom
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values on the oversampled grid (computed on demand).
    pub fn values_over(&self) -> Vec<f64> {
        self.geom.synthesize_over(&self.coeffs)
    }

    /// Ensure this field lives on `geom`.
    pub fn check_geometry(&self, geom: &Arc<Geometry>) -> Result<()> {
        if Arc::ptr_eq(&self.geom, geom) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                field: self.geom.id(),
                given: geom.id(),
            })
        }
    }

    /// `self * c`.
    pub fn scale(&self, c: f64) -> Self {
        let coeffs = self.coeffs.iter().map(|x| x * c).collect();
        Self::from_coeffs(&self.geom, coeffs).expect("scaling preserves length")
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        other.check_geometry(&self.geom)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| x + a * y)
            .collect();
        Self::from_coeffs(&self.geom, coeffs)
    }

    /// Background integral `int f d mu_0` (exact: only the constant mode
    /// contributes).
    pub fn integral(&self) -> f64 {
        self.coeffs[0] * self.geom.background_volume().sqrt()
    }

    /// `int f g d mu_0` via Parseval on the orthonormal basis.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        other.check_geometry(&self.geom)?;
        Ok(self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| x * y)
            .sum())
    }

    /// Squared `L^2(d mu_0)` norm.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum()
    }

    /// Minimum value over the base grid.
    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Maximum value over the base grid.
    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
