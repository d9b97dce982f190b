//! Standard bubbles, stereographic transfer, and bubbling diagnostics.
//!
//! The extremal profile of the critical fractional equation on flat
//! space is the standard bubble
//!
//! ```text
//! u_bar(x) = alpha_bar (1 + |x|^2)^{-(n - 2g)/2},
//! (-Delta)^g u_bar = u_bar^{(n+2g)/(n-2g)},
//! ```
//!
//! whose rescalings are the only obstruction to compactness of the flow:
//! a non-convergent volume-normalized run sheds an integer number `L` of
//! bubbles, each carrying conformal volume `Y_sphere^{n/(2g)}`.  This
//! module provides the closed-form model constants, bubble evaluation on
//! the plane and planted on the sphere (through the stereographic
//! conformal transfer), a Gauss--Newton bubble fit, and the resulting
//! volume-quantization estimate `L_est`.

use crate::error::{Error, Result};
use crate::fraclap::{self, sphere_multiplier};
use crate::functionals;
use crate::geometry::{Geometry, GeometryKind, SpectralField};
use crate::par;
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::sync::Arc;

/// Closed-form constants of the model pair `(n, gamma)`.
#[derive(Debug, Clone, Copy)]
pub struct ModelConstants {
    pub n: usize,
    pub gamma: f64,
    /// Amplitude of the standard bubble.
    pub alpha_bar: f64,
    /// `alpha_{n,g} = 2^{(n-2g)/2} (Gamma(n/2+g)/Gamma(n/2-g))^{(n-2g)/(4g)}`;
    /// coincides with the bubble amplitude.
    pub alpha: f64,
    /// Leading Green's-function constant
    /// `g_{n,g} = pi^{-n/2} 2^{-2g} Gamma(n/2-g) / Gamma(g)`.
    pub green_const: f64,
    /// Yamabe constant of the round sphere,
    /// `Y_gamma(S^n) = lambda(0) vol(S^n)^{2g/n}`.
    pub y_sphere: f64,
}

impl ModelConstants {
    /// Build the constants; requires `n in {1, 2}` and `0 < 2g < n`.
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if !(n == 1 || n == 2) || !(gamma > 0.0) || 2.0 * gamma >= n as f64 || gamma >= 1.0 {
            return Err(Error::Dimension { n, gamma });
        }
        let half_n = n as f64 / 2.0;
        let lambda0 = sphere_multiplier(n, gamma, 0);
        let m = (n as f64 - 2.0 * gamma) / 2.0;
        let alpha = 2f64.powf(m) * lambda0.powf(m / (2.0 * gamma));
        let green_const = PI.powf(-half_n)
            * 2f64.powf(-2.0 * gamma)
            * (ln_gamma(half_n - gamma) - ln_gamma(gamma)).exp();
        let sphere_vol = if n == 1 { 2.0 * PI } else { 4.0 * PI };
        let y_sphere = lambda0 * sphere_vol.powf(2.0 * gamma / n as f64);
        Ok(ModelConstants {
            n,
            gamma,
            alpha_bar: alpha,
            alpha,
            green_const,
            y_sphere,
        })
    }

    /// Conformal volume carried by one bubble, `Y_sphere^{n/(2g)}`.
    pub fn bubble_volume(&self) -> f64 {
        self.y_sphere.powf(self.n as f64 / (2.0 * self.gamma))
    }
}

/// Scale, center, and amplitude of one bubble.
#[derive(Debug, Clone)]
pub struct BubbleParams {
    /// Center: a plane point for [`bubble_flat`], geometry coordinates
    /// (`[x]`, `[x, y]`, or `[theta, phi]`) when planted.
    pub center: Vec<f64>,
    /// Concentration scale `eps > 0`.
    pub eps: f64,
    /// Amplitude multiplier (1 for the exact profile).
    pub amp: f64,
}

impl BubbleParams {
    pub fn new(center: Vec<f64>, eps: f64, amp: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Range {
                name: "eps",
                value: eps,
                range: "(0, inf)",
            });
        }
        Ok(BubbleParams { center, eps, amp })
    }
}

/// Scaled/translated standard bubble on the plane:
/// `amp * eps^{-(n-2g)/2} u_bar((x - x0)/eps)`.
pub fn bubble_flat(c: &ModelConstants, x: &[f64], params: &BubbleParams) -> f64 {
    let mut r2 = 0.0;
    for (xi, x0) in x.iter().zip(params.center.iter()) {
        r2 += (xi - x0) * (xi - x0);
    }
    let m = (c.n as f64 - 2.0 * c.gamma) / 2.0;
    // eps^{-m} (1 + r^2/eps^2)^{-m} = (eps / (eps^2 + r^2))^m
    params.amp * c.alpha_bar * (params.eps / (params.eps * params.eps + r2)).powf(m)
}

/// Geodesic angle between two sphere points given in geometry
/// coordinates (`[theta]` position angle on `S^1`, `[theta, phi]` on
/// `S^2`).
pub fn geodesic_angle(n: usize, a: &[f64], b: &[f64]) -> f64 {
    match n {
        1 => {
            let d = (a[0] - b[0]).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        }
        _ => {
            let cosd = a[0].cos() * b[0].cos() + a[0].sin() * b[0].sin() * (a[1] - b[1]).cos();
            cosd.clamp(-1.0, 1.0).acos()
        }
    }
}

/// Bubble planted on the round sphere at geodesic angle `alpha` from its
/// center (the stereographic pullback of [`bubble_flat`]):
///
/// ```text
/// u(alpha) = amp * alpha_bar *
///     [ eps / (2 (eps^2 cos^2(alpha/2) + sin^2(alpha/2))) ]^{(n-2g)/2},
/// ```
///
/// which is pole-safe (finite at `alpha = pi`) and reduces to the
/// constant `lambda(0)^{(n-2g)/(4g)}` at `eps = 1`.
pub fn bubble_on_sphere(c: &ModelConstants, alpha: f64, eps: f64, amp: f64) -> f64 {
    let m = (c.n as f64 - 2.0 * c.gamma) / 2.0;
    let (s, co) = ((alpha / 2.0).sin(), (alpha / 2.0).cos());
    amp * c.alpha_bar * (eps / (2.0 * (eps * eps * co * co + s * s))).powf(m)
}

/// Sample a planted bubble as a spectral field on a sphere geometry.
pub fn planted_bubble(
    geom: &Arc<Geometry>,
    c: &ModelConstants,
    params: &BubbleParams,
) -> Result<SpectralField> {
    if geom.kind() != GeometryKind::Sphere {
        return Err(Error::Config(
            "planted bubbles are defined on sphere geometries".into(),
        ));
    }
    if geom.dim() != c.n || (geom.gamma() - c.gamma).abs() > 1e-14 {
        return Err(Error::Dimension {
            n: geom.dim(),
            gamma: geom.gamma(),
        });
    }
    let positions: Vec<Vec<f64>> = (0..geom.node_count())
        .map(|i| geom.node_position(i))
        .collect::<Result<_>>()?;
    let values = par::map_collect(positions.len(), |i| {
        let a = geodesic_angle(c.n, &positions[i], &params.center);
        bubble_on_sphere(c, a, params.eps, params.amp)
    });
    SpectralField::from_values(geom, &values)
}

/// Stereographic image `xi in R^n` of a sphere point (projection from
/// the pole antipodal to the coordinate origin, `|xi| = tan(theta/2)`).
pub fn stereo_to_plane(n: usize, point: &[f64]) -> Result<Vec<f64>> {
    let theta = match n {
        1 => {
            let d = point[0].rem_euclid(2.0 * PI);
            if d > PI {
                d - 2.0 * PI
            } else {
                d
            }
        }
        _ => point[0],
    };
    let dist = PI - theta.abs();
    if dist < 1e-12 {
        return Err(Error::Pole { dist });
    }
    let t = (theta / 2.0).tan();
    Ok(match n {
        1 => vec![t],
        _ => vec![t * point[1].cos(), t * point[1].sin()],
    })
}

/// Inverse of [`stereo_to_plane`].
pub fn stereo_to_sphere(n: usize, xi: &[f64]) -> Vec<f64> {
    match n {
        1 => vec![2.0 * xi[0].atan()],
        _ => {
            let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            vec![2.0 * r.atan(), xi[1].atan2(xi[0]).rem_euclid(2.0 * PI)]
        }
    }
}

/// Conformal factor `rho(xi) = (2 / (1 + |xi|^2))^{(n-2g)/2}` relating
/// the round and flat metrics under stereographic projection.
pub fn rho_factor(c: &ModelConstants, xi: &[f64]) -> f64 {
    let r2: f64 = xi.iter().map(|x| x * x).sum();
    (2.0 / (1.0 + r2)).powf((c.n as f64 - 2.0 * c.gamma) / 2.0)
}

/// Transfer a sphere value to the plane: `w_hat(xi) = rho(xi) v(point)`.
/// Returns the plane point together with the transferred value.
pub fn sphere_to_plane(c: &ModelConstants, point: &[f64], v: f64) -> Result<(Vec<f64>, f64)> {
    let xi = stereo_to_plane(c.n, point)?;
    let w = rho_factor(c, &xi) * v;
    Ok((xi, w))
}

/// Transfer a plane value to the sphere: `v = w_hat(xi) / rho(xi)`.
/// Returns the sphere point together with the transferred value.
pub fn plane_to_sphere(c: &ModelConstants, xi: &[f64], w: f64) -> (Vec<f64>, f64) {
    let point = stereo_to_sphere(c.n, xi);
    (point, w / rho_factor(c, xi))
}

/// Concentration threshold `s_0` of the convergence criterion:
/// `[Y_M^{n/(2g)} + Y_sphere^{n/(2g)}]^{2g/n}`.
pub fn threshold_s0(c: &ModelConstants, y_m_est: f64) -> f64 {
    let p = c.n as f64 / (2.0 * c.gamma);
    (y_m_est.max(0.0).powf(p) + c.y_sphere.powf(p)).powf(1.0 / p)
}

/// Slack of the Aubin inequality `Y_M_est <= Y_sphere` (nonnegative when
/// the estimate is admissible).
pub fn aubin_slack(c: &ModelConstants, y_m_est: f64) -> f64 {
    c.y_sphere - y_m_est
}

/// Result of the bubbling diagnostic.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    /// Estimated bubble count from the volume-quantization identity.
    pub l_est: f64,
    /// Whether `l_est` is within 0.1 of an integer.
    pub near_integer: bool,
    /// Concentration scale from the fitted peak height (`None` when no
    /// bubble was fitted, e.g. for nearly constant fields).
    pub eps_est: Option<f64>,
    /// Fitted bubble center in geometry coordinates.
    pub center_est: Option<Vec<f64>>,
    /// Energy of the field with the fitted bubble removed.
    pub e_background: f64,
    /// Mean curvature of the unit-volume rescaled field.
    pub s_fin: f64,
}

/// Relative variation below which a field counts as concentration-free.
const FLAT_TOL: f64 = 0.05;
/// Background volume fraction below which the background energy term is
/// dropped (the weak limit is treated as zero).
const VANISHED_VOLUME_FRACTION: f64 = 1e-3;

/// Model value of the fitted bubble-plus-constant at grid node `i`.
fn fit_model(
    geom: &Geometry,
    c: &ModelConstants,
    positions: &[Vec<f64>],
    p: &[f64],
    i: usize,
) -> f64 {
    // p = [center..., ln eps, ln amp, offset]
    let d = geom.dim();
    let eps = p[d].exp();
    let amp = p[d + 1].exp();
    let b = p[d + 2];
    match geom.kind() {
        GeometryKind::Sphere => {
            let a = geodesic_angle(d, &positions[i], &p[..d]);
            b + bubble_on_sphere(c, a, eps, amp)
        }
        GeometryKind::Torus => {
            let m = (c.n as f64 - 2.0 * c.gamma) / 2.0;
            let mut r2 = 0.0;
            for (x, x0) in positions[i].iter().zip(p[..d].iter()) {
                let mut dx = (x - x0).rem_euclid(geom.period());
                if dx > geom.period() / 2.0 {
                    dx = geom.period() - dx;
                }
                r2 += dx * dx;
            }
            b + amp * c.alpha_bar * (eps / (eps * eps + r2)).powf(m)
        }
    }
}

/// Weighted Gauss--Newton fit of a single bubble plus constant offset,
/// seeded at the grid maximum.  Returns the parameter vector
/// `[center..., ln eps, ln amp, offset]` and the final weighted residual
/// norm.
fn fit_bubble(
    geom: &Arc<Geometry>,
    c: &ModelConstants,
    u: &SpectralField,
) -> Result<(Vec<f64>, f64)> {
    let values = u.values();
    let weights = geom.weights();
    let positions: Vec<Vec<f64>> = (0..geom.node_count())
        .map(|i| geom.node_position(i))
        .collect::<Result<_>>()?;
    let d = geom.dim();

    // Seed: peak position, eps from the peak height, offset at the min.
    let (imax, &umax) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let umin = u.min_value();
    let m = (c.n as f64 - 2.0 * c.gamma) / 2.0;
    let eps0 = match geom.kind() {
        // Peak height amp*alpha_bar*(2 eps)^{-m} on the sphere.
        GeometryKind::Sphere => (c.alpha_bar / (umax - umin).max(1e-12)).powf(1.0 / m) / 2.0,
        // Peak height amp*alpha_bar*eps^{-m} on the plane.
        GeometryKind::Torus => (c.alpha_bar / (umax - umin).max(1e-12)).powf(1.0 / m),
    };
    let mut p: Vec<f64> = positions[imax].clone();
    p.push(eps0.max(1e-6).ln());
    p.push(0.0);
    p.push(umin);

    let npar = d + 3;
    let resid_norm = |p: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..values.len() {
            let r = values[i] - fit_model(geom, c, &positions, p, i);
            acc += weights[i] * r * r;
        }
        acc.sqrt()
    };
    let mut best = resid_norm(&p);
    for _ in 0..50 {
        // Numerical Jacobian of the weighted residuals.
        let mut jac = DMatrix::zeros(values.len(), npar);
        let mut res = DVector::zeros(values.len());
        for i in 0..values.len() {
            let sw = weights[i].sqrt();
            res[i] = sw * (values[i] - fit_model(geom, c, &positions, &p, i));
        }
        for j in 0..npar {
            let h = 1e-6 * (1.0 + p[j].abs());
            let mut pj = p.clone();
            pj[j] += h;
            for i in 0..values.len() {
                let sw = weights[i].sqrt();
                let f1 = sw * fit_model(geom, c, &positions, &pj, i);
                jac[(i, j)] = (f1 - (sw * values[i] - res[i])) / h;
            }
        }
        let jt = jac.transpose();
        let mut a = &jt * &jac;
        // Light Levenberg damping for a safe solve.
        for j in 0..npar {
            a[(j, j)] *= 1.0 + 1e-10;
            a[(j, j)] += 1e-14;
        }
        let g = &jt * &res;
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&g),
            None => return Err(Error::Convergence),
        };
        // Damped update: halve until the residual does not increase.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + lambda * s).collect();
            let r = resid_norm(&cand);
            if r < best {
                p = cand;
                best = r;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((p, best))
}

/// Energy-like quantity of a possibly sign-changing residual field: the
/// quadratic form over the conformal volume of `|w|` (the background of
/// a bubble subtraction need not stay positive pointwise).
fn background_energy(geom: &Arc<Geometry>, w: &SpectralField) -> (f64, f64) {
    let ex = geom.exponents();
    let w_over = w.values_over();
    let vol_exp = ex.vol();
    let vol = geom.integrate_over_values(&par::map_collect(w_over.len(), |i| {
        w_over[i].abs().powf(vol_exp)
    }));
    let num = fraclap::quadratic_form(geom, w).expect("same geometry");
    let e = if vol > 0.0 {
        num / vol.powf(ex.energy_den())
    } else {
        0.0
    };
    (e, vol)
}

/// Volume-quantization diagnostic of a (possibly non-convergent) run's
/// final factor.
///
/// The field is rescaled to unit conformal volume, a single bubble plus
/// constant offset is least-squares fitted near the grid maximum, and
/// the bubble count is estimated from the rearranged decomposition
///
/// ```text
/// L_est = (s_fin^{n/(2g)} - E_background^{n/(2g)}) / Y_sphere^{n/(2g)}.
/// ```
///
/// Nearly constant fields skip the fit (`eps_est`, `center_est` report
/// `None`); a background whose residual volume is negligible is treated
/// as a vanished weak limit (`E_background = 0`).
pub fn detect_concentration(
    geom: &Arc<Geometry>,
    final_u: &SpectralField,
    c: &ModelConstants,
) -> Result<ConcentrationReport> {
    detect_concentration_inner(geom, final_u, c)
}

/// Like [`detect_concentration`], but a field that is neither nearly
/// constant nor explained by a single-bubble fit is bookkept with the
/// whole (unit-volume rescaled) field as background instead of
/// propagating the fit rejection.  This is the right semantics for
/// run summaries, where intermediate states are transient rather than
/// concentrating.
pub fn detect_concentration_or_background(
    geom: &Arc<Geometry>,
    final_u: &SpectralField,
    c: &ModelConstants,
) -> Result<ConcentrationReport> {
    match detect_concentration_inner(geom, final_u, c) {
        Err(Error::Fit { .. }) => {
            let ex = geom.exponents();
            let vol = functionals::conformal_volume(geom, final_u)?;
            let u = final_u.scale(vol.powf(-1.0 / ex.vol()));
            let rep = functionals::report(geom, &u)?;
            let power = c.n as f64 / (2.0 * c.gamma);
            let e_bg = rep.energy;
            let l_est = (rep.s.powf(power) - e_bg.powf(power)) / c.y_sphere.powf(power);
            Ok(ConcentrationReport {
                l_est,
                near_integer: (l_est - l_est.round()).abs() < 0.1,
                eps_est: None,
                center_est: None,
                e_background: e_bg,
                s_fin: rep.s,
            })
        }
        other => other,
    }
}

fn detect_concentration_inner(
    geom: &Arc<Geometry>,
    final_u: &SpectralField,
    c: &ModelConstants,
) -> Result<ConcentrationReport> {
    final_u.check_geometry(geom)?;
    if geom.dim() != c.n || (geom.gamma() - c.gamma).abs() > 1e-14 {
        return Err(Error::Dimension {
            n: geom.dim(),
            gamma: geom.gamma(),
        });
    }
    let ex = geom.exponents();
    let vol = functionals::conformal_volume(geom, final_u)?;
    let u = final_u.scale(vol.powf(-1.0 / ex.vol()));
    let rep = functionals::report(geom, &u)?;
    let s_fin = rep.s;
    let power = c.n as f64 / (2.0 * c.gamma);

    let mean = u.integral() / geom.background_volume();
    if (rep.max_u - rep.min_u) <= FLAT_TOL * mean {
        // Concentration-free: the field itself is the background.
        let e_bg = rep.energy;
        let l_est = (s_fin.powf(power) - e_bg.powf(power)) / c.y_sphere.powf(power);
        return Ok(ConcentrationReport {
            l_est,
            near_integer: (l_est - l_est.round()).abs() < 0.1,
            eps_est: None,
            center_est: None,
            e_background: e_bg,
            s_fin,
        });
    }

    let (p, resid) = fit_bubble(geom, c, &u)?;
    // Reject fits that fail to explain at least half of the local peak
    // mass (weighted L2 of the centered field).
    let mean_w = u.integral() / geom.background_volume();
    let mut peak_mass = 0.0;
    for (v, w) in u.values().iter().zip(geom.weights()) {
        peak_mass += w * (v - mean_w) * (v - mean_w);
    }
    let peak_mass = peak_mass.sqrt();
    if resid > 0.5 * peak_mass {
        return Err(Error::Fit {
            residual: resid,
            limit: 0.5 * peak_mass,
        });
    }

    let d = geom.dim();
    let amp_fit = p[d + 1].exp();
    // Subtract the fitted bubble (not the offset: the offset is the
    // background estimate itself).
    let positions: Vec<Vec<f64>> = (0..geom.node_count())
        .map(|i| geom.node_position(i))
        .collect::<Result<_>>()?;
    let mut pz = p.clone();
    pz[d + 2] = 0.0;
    let bg_values = par::map_collect(u.values().len(), |i| {
        u.values()[i] - fit_model(geom, c, &positions, &pz, i)
    });
    let bg = SpectralField::from_values(geom, &bg_values)?;
    let (e_raw, vol_bg) = background_energy(geom, &bg);
    let e_bg = if vol_bg < VANISHED_VOLUME_FRACTION {
        0.0
    } else {
        e_raw
    };

    let l_est = (s_fin.powf(power) - e_bg.powf(power)) / c.y_sphere.powf(power);
    let eps_est = (amp_fit * c.alpha_bar / rep.max_u).powf(1.0 / ((c.n as f64 - 2.0 * c.gamma) / 2.0));
    Ok(ConcentrationReport {
        l_est,
        near_integer: (l_est - l_est.round()).abs() < 0.1,
        eps_est: Some(eps_est),
        center_est: Some(p[..d].to_vec()),
        e_background: e_bg,
        s_fin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::energy_e;

    #[test]
    fn constants_match_oracles() {
        // Frozen against an independent log-Gamma evaluation.
        let c = ModelConstants::new(1, 0.25).unwrap();
        assert!((c.alpha - 0.6913673390362933).abs() < 1e-13);
        assert!((c.green_const - 0.3989422804014327).abs() < 1e-13);
        assert!((c.y_sphere - 0.847213084793979).abs() < 1e-12);

        let c = ModelConstants::new(2, 0.5).unwrap();
        assert!((c.alpha - 1.0).abs() < 1e-13, "alpha(2, 1/2) = 1");
        assert!((c.green_const - 0.15915494309189535).abs() < 1e-14); // 1/(2 pi)
        assert!((c.y_sphere - (4.0 * PI).sqrt() / 2.0).abs() < 1e-13);
        assert!((c.bubble_volume() - PI).abs() < 1e-12);

        let c = ModelConstants::new(2, 0.3).unwrap();
        assert!((c.alpha - 1.0561750736803193).abs() < 1e-13);
        assert!((c.y_sphere - 1.4773725678010061).abs() < 1e-12);

        assert!(ModelConstants::new(1, 0.5).is_err());
        assert!(ModelConstants::new(3, 0.5).is_err());
    }

    #[test]
    fn y_sphere_matches_round_energy() {
        for (n, l, g) in [(2usize, 12usize, 0.5f64), (1, 16, 0.25), (2, 12, 0.3)] {
            let geom = Geometry::sphere(n, l, g).unwrap();
            let c = ModelConstants::new(n, g).unwrap();
            let e = energy_e(&geom, &SpectralField::constant(&geom, 1.0)).unwrap();
            assert!(
                (e - c.y_sphere).abs() < 1e-10 * c.y_sphere,
                "n={n} g={g}: {e} vs {}",
                c.y_sphere
            );
        }
    }

    #[test]
    fn flat_bubble_peak_and_decay() {
        let c = ModelConstants::new(2, 0.5).unwrap();
        let p = BubbleParams::new(vec![0.3, -0.2], 1.0, 1.0).unwrap();
        assert!((bubble_flat(&c, &[0.3, -0.2], &p) - c.alpha_bar).abs() < 1e-14);
        // Decay like |x|^{-(n-2g)}: doubling the radius quarters nothing;
        // ratio tends to 2^{-(n-2g)} = 1/2.
        let far = bubble_flat(&c, &[1000.3, -0.2], &p);
        let farther = bubble_flat(&c, &[2000.3, -0.2], &p);
        assert!((farther / far - 0.5).abs() < 1e-3);
        assert!(BubbleParams::new(vec![0.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn bubble_volume_matches_quadrature() {
        // volbar(u_bar) = int u_bar^{2n/(n-2g)} dx = Y_sphere^{n/(2g)},
        // checked by radial Simpson quadrature on the closed form.
        for (n, g) in [(2usize, 0.5f64), (1, 0.25), (2, 0.3)] {
            let c = ModelConstants::new(n, g).unwrap();
            let p = 2.0 * n as f64 / (n as f64 - 2.0 * g);
            let m = (n as f64 - 2.0 * g) / 2.0;
            // integrand: alpha^p (1 + r^2)^{-m p / 2} * surface * r^{n-1}
            let surface = if n == 1 { 2.0 } else { 2.0 * PI };
            let f = |r: f64| -> f64 {
                c.alpha_bar.powf(p) * (1.0 + r * r).powf(-m * p) * surface * r.powi(n as i32 - 1)
            };
            let (rmax, panels) = (4000.0, 2_000_000);
            let h = rmax / panels as f64;
            let mut acc = f(0.0) + f(rmax);
            for i in 1..panels {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            let volbar = acc * h / 3.0;
            let want = c.bubble_volume();
            assert!(
                (volbar - want).abs() < 1e-3 * want,
                "n={n} g={g}: {volbar} vs {want}"
            );
        }
    }

    #[test]
    fn transfer_of_constants_gives_bubble_shape() {
        // v = 1 on the sphere maps to rho(xi), the standard bubble up to
        // the constant factor 2^{(n-2g)/2} / alpha_bar.
        let c = ModelConstants::new(2, 0.5).unwrap();
        let m = (c.n as f64 - 2.0 * c.gamma) / 2.0;
        let factor = 2f64.powf(m) / c.alpha_bar;
        let unit = BubbleParams::new(vec![0.0, 0.0], 1.0, 1.0).unwrap();
        for theta in [0.1, 0.7, 1.3, 2.2, 3.0] {
            let (xi, w) = sphere_to_plane(&c, &[theta, 0.4], 1.0).unwrap();
            let want = factor * bubble_flat(&c, &xi, &unit);
            assert!((w - want).abs() < 1e-12, "theta={theta}: {w} vs {want}");
        }
        assert!(matches!(
            sphere_to_plane(&c, &[PI, 0.0], 1.0),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn transfer_round_trips_away_from_pole() {
        for n in [1usize, 2] {
            let c = ModelConstants::new(n, 0.25).unwrap();
            let points: Vec<Vec<f64>> = if n == 1 {
                vec![vec![0.3], vec![2.0], vec![4.5], vec![6.0]]
            } else {
                vec![vec![0.4, 1.0], vec![1.5, 3.0], vec![2.8, 5.5]]
            };
            for pt in points {
                let v = 1.7;
                let (xi, w) = sphere_to_plane(&c, &pt, v).unwrap();
                let (back, v2) = plane_to_sphere(&c, &xi, w);
                assert!((v2 - v).abs() < 1e-8);
                assert!(geodesic_angle(n, &pt, &back) < 1e-8);
            }
        }
    }

    #[test]
    fn planted_unit_bubble_is_constant() {
        let geom = Geometry::sphere(2, 12, 0.5).unwrap();
        let c = ModelConstants::new(2, 0.5).unwrap();
        let p = BubbleParams::new(vec![1.0, 2.0], 1.0, 1.0).unwrap();
        let u = planted_bubble(&geom, &c, &p).unwrap();
        let want = sphere_multiplier(2, 0.5, 0).powf((2.0 - 1.0) / (4.0 * 0.5));
        for v in u.values() {
            assert!((v - want).abs() < 1e-10, "{v} vs {want}");
        }
    }

    #[test]
    fn quadratic_form_is_preserved_by_transfer() {
        // v = 1 + cos(theta) on S^2 (g = 1/2) maps to
        // w_hat = 2^{3/2} (1 + |xi|^2)^{-3/2}, which decays fast enough
        // to evaluate the flat quadratic form by periodization on a big
        // torus.  The sphere side is exact (two modes).
        let g = 0.5;
        // Sphere side: v = 1 + cos theta = sqrt(4 pi) Y00 + sqrt(4pi/3) Y10.
        let lam1 = sphere_multiplier(2, g, 1);
        let lam0 = sphere_multiplier(2, g, 0);
        let rhs = lam0 * 4.0 * PI + lam1 * (4.0 * PI / 3.0);

        // Plane side on a period-80 torus with 256 modes per axis.
        let period = 80.0;
        let geom = Geometry::torus(2, period, 256, g).unwrap();
        let half = period / 2.0;
        let values: Vec<f64> = (0..geom.node_count())
            .map(|i| {
                let pos = geom.node_position(i).unwrap();
                let (x, y) = (pos[0] - half, pos[1] - half);
                let r2 = x * x + y * y;
                2f64.powf(1.5) * (1.0 + r2).powf(-1.5)
            })
            .collect();
        let w = SpectralField::from_values(&geom, &values).unwrap();
        let lhs = fraclap::quadratic_form(&geom, &w).unwrap();
        assert!(
            (lhs - rhs).abs() < 1e-4 * rhs,
            "flat {lhs} vs sphere {rhs} (rel {:.2e})",
            (lhs - rhs).abs() / rhs
        );
    }

    #[test]
    fn flat_bubble_solves_critical_equation() {
        // (-Delta)^g u_bar = u_bar^{(n+2g)/(n-2g)} checked by spectral
        // periodization: n = 2, g = 1/2, period 40, 128 modes per axis,
        // symmetric image sum over |k| <= 30 per axis.  The torus symbol
        // annihilates constants, so the (divergent) constant part of the
        // periodization is immaterial; the residual is compared against
        // the image sum of the right-hand side.  Achieved residual at
        // this resolution: ~= 4e-4 (truncation-limited).
        let g = 0.5;
        let c = ModelConstants::new(2, g).unwrap();
        let period = 40.0;
        let geom = Geometry::torus(2, period, 128, g).unwrap();
        let half = period / 2.0;
        let images = 30i64;
        let crit = (2.0 + 2.0 * g) / (2.0 - 2.0 * g);

        let positions: Vec<(f64, f64)> = (0..geom.node_count())
            .map(|i| {
                let pos = geom.node_position(i).unwrap();
                (pos[0] - half, pos[1] - half)
            })
            .collect();
        // u values: symmetric image sum, constant part irrelevant.
        let u_vals = par::map_collect(positions.len(), |i| {
            let (x, y) = positions[i];
            let mut acc = 0.0;
            for kx in -images..=images {
                for ky in -images..=images {
                    let dx = x - kx as f64 * period;
                    let dy = y - ky as f64 * period;
                    acc += c.alpha_bar * (1.0 + dx * dx + dy * dy).powf(-0.5);
                }
            }
            acc
        });
        // Right-hand side: image sum of u_bar^crit (fast decay).
        let rhs_vals = par::map_collect(positions.len(), |i| {
            let (x, y) = positions[i];
            let mut acc = 0.0;
            for kx in -images..=images {
                for ky in -images..=images {
                    let dx = x - kx as f64 * period;
                    let dy = y - ky as f64 * period;
                    acc += (c.alpha_bar * (1.0 + dx * dx + dy * dy).powf(-0.5)).powf(crit);
                }
            }
            acc
        });
        let u = SpectralField::from_values(&geom, &u_vals).unwrap();
        let pu = fraclap::apply_p(&geom, &u).unwrap();
        // Compare on the base grid, dropping the constant mode of the
        // right-hand side mismatch is NOT allowed: P annihilates the
        // constant of u, but rhs has a genuine mean.  Accounting: the
        // spectral P u reproduces rhs minus its own mean offset being
        // absorbed -- compare the non-constant parts.
        let rhs = SpectralField::from_values(&geom, &rhs_vals).unwrap();
        let mean_mismatch = (rhs.integral() - pu.integral()) / geom.background_volume();
        let sup_rhs = rhs_vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut sup_err = 0.0f64;
        for (a, b) in pu.values().iter().zip(rhs.values()) {
            sup_err = sup_err.max((a + mean_mismatch - b).abs());
        }
        assert!(
            sup_err / sup_rhs < 1e-3,
            "relative PDE residual {:.2e}",
            sup_err / sup_rhs
        );
    }

    #[test]
    fn planted_bubble_is_detected_with_unit_count() {
        let geom = Geometry::sphere(2, 32, 0.5).unwrap();
        let c = ModelConstants::new(2, 0.5).unwrap();
        let p = BubbleParams::new(vec![1.1, 2.0], 0.12, 1.0).unwrap();
        let u = planted_bubble(&geom, &c, &p).unwrap();
        let rep = detect_concentration(&geom, &u, &c).unwrap();
        assert!(
            rep.l_est > 0.9 && rep.l_est < 1.1,
            "L_est = {}",
            rep.l_est
        );
        assert!(rep.near_integer);
        // The flat-normalized peak-height formula reports 2 eps for a
        // sphere-planted bubble.
        let eps = rep.eps_est.unwrap();
        assert!(eps > 0.12 && eps < 0.5, "eps_est = {eps}");
        let center = rep.center_est.unwrap();
        assert!(
            geodesic_angle(2, &center, &p.center) < 0.2,
            "center {center:?}"
        );
    }

    #[test]
    fn constant_field_reports_zero_bubbles() {
        let geom = Geometry::sphere(2, 10, 0.5).unwrap();
        let c = ModelConstants::new(2, 0.5).unwrap();
        let u = SpectralField::constant(&geom, 1.3);
        let rep = detect_concentration(&geom, &u, &c).unwrap();
        assert!(rep.l_est.abs() < 1e-6, "L_est = {}", rep.l_est);
        assert!(rep.eps_est.is_none());
        assert!(rep.center_est.is_none());
    }

    #[test]
    fn threshold_values() {
        let c = ModelConstants::new(2, 0.5).unwrap();
        // Torus background: Y_M = 0, one term survives.
        assert!((threshold_s0(&c, 0.0) - c.y_sphere).abs() < 1e-14);
        // Equal terms: 2^{2g/n} Y_sphere.
        let want = 2f64.powf(2.0 * 0.5 / 2.0) * c.y_sphere;
        assert!((threshold_s0(&c, c.y_sphere) - want).abs() < 1e-12);
        assert!((want - 2f64.sqrt() * 0.5 * (4.0 * PI).sqrt()).abs() < 1e-12);
        // Aubin slack is positive for admissible estimates.
        assert!(aubin_slack(&c, 0.5 * c.y_sphere) > 0.0);
    }
}
