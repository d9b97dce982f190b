//! Linear stability apparatus around a flow limit.
//!
//! Near a positive stationary factor `u_inf` the relevant operator is
//! the weighted eigenproblem
//!
//! ```text
//! P_gamma psi_a = lambda_a W psi_a,      W = u_inf^{4g/(n-2g)},
//! ```
//!
//! solved as a dense symmetric matrix pencil in the truncated spectral
//! basis: the stiffness is the diagonal multiplier table, the mass is
//! the Galerkin matrix of the weight assembled by oversampled
//! quadrature.  Eigenvalues at or below the threshold
//! `(n+2g)/(n-2g) s_inf` span the low-mode set `A`; the coercivity gap
//! of the complement controls convergence rates, and the sphere
//! eigenvalue-gap margin is the closed-form version of the same
//! inequality on the round sphere.
//!
//! A structural fact worth stating once: on the round sphere with
//! constant `u_inf`, the degree-1 eigenvalues sit *exactly on* the
//! threshold for every admissible `(n, gamma)` — they are the conformal
//! directions.  The low-mode set is therefore boundary-inclusive, and
//! degeneracy is only reported when a *complement* eigenvalue touches
//! the threshold.

use crate::error::{Error, Result};
use crate::flow::DiagnosticsSeries;
use crate::fraclap;
use crate::geometry::{Geometry, SpectralField};
use crate::par;
use crate::rng;
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

/// Relative tolerance for boundary inclusion into the low-mode set and
/// for the degeneracy check of the complement.
pub const THRESHOLD_TOL: f64 = 1e-9;

/// One generalized eigenpair of the weighted problem.
#[derive(Debug, Clone)]
pub struct EigenPair {
    /// Eigenvalue (ascending across the returned list).
    pub lambda: f64,
    /// Eigenfunction, weighted-orthonormal: `int psi_a psi_b W dmu0 = delta_ab`.
    pub psi: SpectralField,
}

/// Index set of eigenpairs at or below the coercivity threshold.
#[derive(Debug, Clone)]
pub struct LowModeSet {
    /// Indices into the eigenpair list (boundary-inclusive).
    pub indices: Vec<usize>,
    /// The threshold `(n+2g)/(n-2g) * s_inf`.
    pub threshold: f64,
}

/// Weight `W = u_inf^{4g/(n-2g)}` on the oversampled grid.
pub fn weight_values(geom: &Arc<Geometry>, u_inf: &SpectralField) -> Result<Vec<f64>> {
    u_inf.check_geometry(geom)?;
    let w_exp = geom.exponents().weight();
    let u_over = u_inf.values_over();
    let mut min = f64::INFINITY;
    let mut argmin = 0;
    for (i, v) in u_over.iter().enumerate() {
        if *v < min {
            min = *v;
            argmin = i;
        }
    }
    if !(min > 0.0) {
        return Err(Error::Positivity {
            min,
            node: argmin,
            floor: 0.0,
        });
    }
    Ok(par::map_collect(u_over.len(), |i| u_over[i].powf(w_exp)))
}

/// Galerkin mass matrix of the weight in the spectral basis.
fn mass_matrix(geom: &Arc<Geometry>, w_over: &[f64]) -> DMatrix<f64> {
    let nb = geom.basis_len();
    let nq = geom.over_node_count();
    let ow = geom.over_weights();
    // Basis columns on the oversampled grid, scaled by quadrature x weight.
    let mut phi = DMatrix::zeros(nq, nb);
    let mut phi_w = DMatrix::zeros(nq, nb);
    let cols: Vec<Vec<f64>> = par::map_collect(nb, |b| {
        let mut e = vec![0.0; nb];
        e[b] = 1.0;
        geom.synthesize_over(&e)
    });
    for (b, col) in cols.iter().enumerate() {
        for i in 0..nq {
            phi[(i, b)] = col[i];
            phi_w[(i, b)] = col[i] * ow[i] * w_over[i];
        }
    }
    let mut m = phi.transpose() * phi_w;
    // Enforce exact symmetry against quadrature round-off.
    for a in 0..nb {
        for b in (a + 1)..nb {
            let s = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = s;
            m[(b, a)] = s;
        }
    }
    m
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Chosen over a QL/QR-style solver because the sphere spectrum is
/// highly degenerate (multiplicity `2k+1` clusters), where two-sided
/// rotations keep eigenvector residuals at round-off level while
/// shift-based iterations can leak O(1e-3) contamination across
/// clusters.
fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::identity(n, n);
    let scale = a.norm().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 * scale {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// The `count` smallest eigenpairs of `P psi = lambda W psi`.
pub fn weighted_eigs(
    geom: &Arc<Geometry>,
    u_inf: &SpectralField,
    count: usize,
) -> Result<Vec<EigenPair>> {
    let nb = geom.basis_len();
    if count == 0 || count > nb {
        return Err(Error::Range {
            name: "count",
            value: count as f64,
            range: "[1, basis_len]",
        });
    }
    let w_over = weight_values(geom, u_inf)?;
    let mass = mass_matrix(geom, &w_over);
    let mult = fraclap::multipliers(geom);
    let stiff = DMatrix::from_fn(nb, nb, |a, b| if a == b { mult[a] } else { 0.0 });

    // Reduce the pencil to a standard symmetric problem through the
    // Cholesky factor of the (positive definite) mass matrix.
    let chol = mass.clone().cholesky().ok_or(Error::Convergence)?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&stiff)
        .ok_or(Error::Convergence)?;
    let y = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::Convergence)?;
    let mut m = y.transpose();
    for a in 0..nb {
        for b in (a + 1)..nb {
            let s = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = s;
            m[(b, a)] = s;
        }
    }
    let (eigenvalues, eigenvectors) = jacobi_eigen(m);

    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));

    let lt = l.transpose();
    let mut pairs = Vec::with_capacity(count);
    for &j in order.iter().take(count) {
        let yv: DVector<f64> = eigenvectors.column(j).into();
        let mut c = lt
            .solve_upper_triangular(&yv)
            .ok_or(Error::Convergence)?;
        // Deterministic sign: largest-magnitude coefficient positive.
        let mut imax = 0;
        for i in 1..nb {
            if c[i].abs() > c[imax].abs() {
                imax = i;
            }
        }
        if c[imax] < 0.0 {
            c.neg_mut();
        }
        let lambda = eigenvalues[j].max(0.0);

        // Residual certificate: || A c - lambda B c || <= 1e-8 lambda ||c||_B.
        let ac = &stiff * &c;
        let bc = &mass * &c;
        let res = (&ac - lambda * &bc).norm();
        let scale = lambda.max(mult[nb - 1] * 1e-8) * c.norm().max(1e-300);
        if res > 1e-8 * scale.max(1e-8) {
            return Err(Error::Convergence);
        }
        pairs.push(EigenPair {
            lambda,
            psi: SpectralField::from_coeffs(geom, c.iter().cloned().collect())?,
        });
    }
    Ok(pairs)
}

/// Low-mode set of eigenvalues at or below `(n+2g)/(n-2g) s_inf`
/// (boundary-inclusive within [`THRESHOLD_TOL`] relative).
pub fn low_mode_set(geom: &Geometry, pairs: &[EigenPair], s_inf: f64) -> LowModeSet {
    let threshold = geom.exponents().crit() * s_inf;
    let slack = THRESHOLD_TOL * threshold.abs().max(1.0);
    let indices = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.lambda <= threshold + slack)
        .map(|(i, _)| i)
        .collect();
    LowModeSet { indices, threshold }
}

/// The projection in its stated (non-canonical) form:
/// `Pi(f) = f - sum_{a in A} (int psi_a f dmu0) psi_a W`.
pub fn projection_pi(
    geom: &Arc<Geometry>,
    f: &SpectralField,
    pairs: &[EigenPair],
    set: &LowModeSet,
    u_inf: &SpectralField,
) -> Result<SpectralField> {
    f.check_geometry(geom)?;
    let w_over = weight_values(geom, u_inf)?;
    let mut out = f.clone();
    for &a in &set.indices {
        let pair = pairs.get(a).ok_or(Error::Index {
            index: a,
            len: pairs.len(),
        })?;
        // Unweighted pairing is a plain coefficient dot product.
        let coef = pair.psi.inner(f)?;
        // Weighted re-insertion: psi_a * W projected back to the band.
        let psi_over = pair.psi.values_over();
        let vals = par::map_collect(psi_over.len(), |i| psi_over[i] * w_over[i]);
        let psi_w = SpectralField::from_coeffs(geom, geom.analyze_over(&vals))?;
        out = out.axpy(-coef, &psi_w)?;
    }
    Ok(out)
}

/// The canonical companion projection with respect to the weighted
/// inner product: `Pi~(f) = f - sum_{a in A} (int psi_a f W dmu0) psi_a`.
pub fn projection_pi_canonical(
    geom: &Arc<Geometry>,
    f: &SpectralField,
    pairs: &[EigenPair],
    set: &LowModeSet,
    u_inf: &SpectralField,
) -> Result<SpectralField> {
    f.check_geometry(geom)?;
    let w_over = weight_values(geom, u_inf)?;
    let f_over = f.values_over();
    let mut out = f.clone();
    for &a in &set.indices {
        let pair = pairs.get(a).ok_or(Error::Index {
            index: a,
            len: pairs.len(),
        })?;
        let psi_over = pair.psi.values_over();
        let vals = par::map_collect(psi_over.len(), |i| psi_over[i] * f_over[i] * w_over[i]);
        let coef = geom.integrate_over_values(&vals);
        out = out.axpy(-coef, &pair.psi)?;
    }
    Ok(out)
}

/// Weighted norm-square `int W w^2 dmu0`.
fn weighted_norm_sq(geom: &Geometry, w_over: &[f64], f: &SpectralField) -> f64 {
    let f_over = f.values_over();
    let vals = par::map_collect(f_over.len(), |i| w_over[i] * f_over[i] * f_over[i]);
    geom.integrate_over_values(&vals)
}

/// Coercivity-gap estimate on the complement of the low-mode set:
///
/// ```text
/// c_est = 1 - max over probes of
///     [(n+2g)/(n-2g) s_inf * int W w^2 dmu0] / [int w P w dmu0],
/// ```
///
/// probed with every complement eigenfunction (on which the ratio is
/// exactly `threshold / lambda`) plus `probe_count` seeded random fields
/// projected onto the complement.  A complement eigenvalue within
/// [`THRESHOLD_TOL`] of the threshold makes the strict inequality
/// vacuous and raises [`Error::Degenerate`].
pub fn coercivity_gap(
    geom: &Arc<Geometry>,
    pairs: &[EigenPair],
    set: &LowModeSet,
    u_inf: &SpectralField,
    probe_count: usize,
    seed: u64,
) -> Result<f64> {
    let w_over = weight_values(geom, u_inf)?;
    let slack = THRESHOLD_TOL * set.threshold.abs().max(1.0);
    let mut max_ratio = 0.0f64;

    for (i, pair) in pairs.iter().enumerate() {
        if set.indices.contains(&i) {
            continue;
        }
        if (pair.lambda - set.threshold).abs() <= slack {
            return Err(Error::Degenerate {
                lambda: pair.lambda,
                threshold: set.threshold,
                tol: slack,
            });
        }
        let num = set.threshold * weighted_norm_sq(geom, &w_over, &pair.psi);
        let den = fraclap::quadratic_form(geom, &pair.psi)?;
        if den > 0.0 {
            max_ratio = max_ratio.max(num / den);
        }
    }

    let mut rng = rng::stream(seed, geom.id());
    for _ in 0..probe_count {
        let raw = rng::random_field(geom, &mut rng);
        let w = projection_pi_canonical(geom, &raw, pairs, set, u_inf)?;
        let den = fraclap::quadratic_form(geom, &w)?;
        if den <= 1e-14 * raw.norm_sq() {
            continue; // probe collapsed into the low-mode span
        }
        let num = set.threshold * weighted_norm_sq(geom, &w_over, &w);
        max_ratio = max_ratio.max(num / den);
    }
    Ok(1.0 - max_ratio)
}

/// Closed-form sphere gap margin
/// `Gamma(2+n/2+g)/Gamma(2+n/2-g) - (n+2g)/(n-2g) * Gamma(n/2+g)/Gamma(n/2-g)`,
/// i.e. `lambda(2) - threshold` for the round sphere at unit volume
/// normalization; strictly positive on the admissible range.
pub fn sphere_gap_margin(n: usize, gamma: f64) -> Result<f64> {
    if n == 0 || !(gamma > 0.0 && gamma < 1.0) || 2.0 * gamma >= n as f64 {
        return Err(Error::Range {
            name: "gamma",
            value: gamma,
            range: "(0, 1) with n > 2*gamma",
        });
    }
    let half_n = n as f64 / 2.0;
    let lhs = (ln_gamma(2.0 + half_n + gamma) - ln_gamma(2.0 + half_n - gamma)).exp();
    let crit = (n as f64 + 2.0 * gamma) / (n as f64 - 2.0 * gamma);
    let rhs = crit * (ln_gamma(half_n + gamma) - ln_gamma(half_n - gamma)).exp();
    Ok(lhs - rhs)
}

/// Łojasiewicz-exponent diagnostic: least-squares slope of
/// `log(s(t) - s_inf)` against `log F_crit(t)` over the tail half of a
/// convergent run, converted to `delta_est = 2n * slope / (n+2g) - 1`.
///
/// Diagnostic only — the result is checked against the wide sanity band
/// `(-0.5, 1.5)` rather than the theoretical `(0, 1)`.
pub fn lojasiewicz_fit(series: &DiagnosticsSeries, s_inf: f64) -> Result<f64> {
    let rows = &series.rows;
    let tail = &rows[rows.len() / 2..];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in tail {
        let ds = row.s - s_inf;
        if ds > 1e-13 && row.f_crit > 0.0 {
            xs.push(row.f_crit.ln());
            ys.push(ds.ln());
        }
    }
    if xs.len() < 20 {
        return Err(Error::InsufficientData {
            reason: format!(
                "need at least 20 usable tail rows for the fit, got {}",
                xs.len()
            ),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx < 1e-20 {
        return Err(Error::InsufficientData {
            reason: "no variation in F_crit over the tail".into(),
        });
    }
    let slope = sxy / sxx;
    let nn = series.n as f64;
    let delta = 2.0 * nn * slope / (nn + 2.0 * series.gamma) - 1.0;
    if !(-0.5..1.5).contains(&delta) {
        return Err(Error::Range {
            name: "delta_est",
            value: delta,
            range: "(-0.5, 1.5)",
        });
    }
    Ok(delta)
}
