//! Gauss--Legendre grids and real spherical harmonics on `S^2`.
//!
//! The grid is a tensor product of Gauss--Legendre nodes in `cos(theta)`
//! (colatitude) and a uniform longitude grid.  With `ntheta >= L + 1`
//! Gauss nodes and `nphi >= 2L + 1` longitudes, quadrature integrates
//! products of any two harmonics of degree `<= L` exactly, which makes
//! analysis the exact inverse of synthesis on the truncated band.
//!
//! Real harmonics are indexed by `b = l^2 + (m + l)` with `m < 0` the
//! sine branch, `m = 0` zonal, `m > 0` the cosine branch, all normalized
//! to unit `L^2(S^2)` norm.

use crate::par;

/// Gauss--Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial `P_n`; weights sum to 2
/// and the rule is exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi-type initial guess for the i-th root (descending).
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and its derivative by upward recurrence.
            let (mut p0, mut p1) = (1.0, t);
            for l in 2..=n {
                let lf = l as f64;
                let p2 = ((2.0 * lf - 1.0) * t * p1 - (lf - 1.0) * p0) / lf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        // Weight from the derivative at the converged root.
        let (mut p0, mut p1) = (1.0, t);
        for l in 2..=n {
            let lf = l as f64;
            let p2 = ((2.0 * lf - 1.0) * t * p1 - (lf - 1.0) * p0) / lf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
        x[i] = -t;
        x[n - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Flat index of `(l, m)` with `0 <= m <= l` in the triangular table.
#[inline]
pub fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// All normalized associated Legendre values `Pbar_{l,m}(x)` for
/// `0 <= m <= l <= lmax`, normalized so `int_{-1}^{1} Pbar^2 dx = 1`.
pub fn legendre_table(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; tri(lmax, lmax) + 1];
    let s = (1.0 - x * x).max(0.0).sqrt();
    p[tri(0, 0)] = 0.5f64.sqrt();
    for m in 1..=lmax {
        let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        p[tri(m, m)] = f * s * p[tri(m - 1, m - 1)];
    }
    for m in 0..lmax {
        p[tri(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * p[tri(m, m)];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let lp = lf - 1.0;
            let a_prev = ((4.0 * lp * lp - 1.0) / (lp * lp - mf * mf)).sqrt();
            p[tri(l, m)] = a * (x * p[tri(l - 1, m)] - p[tri(l - 2, m)] / a_prev);
        }
    }
    p
}

/// One Gauss--Legendre x uniform-longitude grid with cached harmonic
/// tables up to degree `lmax`.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub lmax: usize,
    pub ntheta: usize,
    pub nphi: usize,
    /// Gauss nodes `x_i = cos(theta_i)` and weights (sum 2).
    pub costheta: Vec<f64>,
    pub glw: Vec<f64>,
    /// `plm[i * tri_len + tri(l, m)] = Pbar_{l,m}(x_i)`.
    plm: Vec<f64>,
    tri_len: usize,
    /// `cosm[m * nphi + j] = cos(m phi_j)`, likewise `sinm`.
    cosm: Vec<f64>,
    sinm: Vec<f64>,
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

impl SphereGrid {
    pub fn new(lmax: usize, ntheta: usize, nphi: usize) -> Self {
        assert!(ntheta >= lmax + 1 && nphi >= 2 * lmax + 1);
        let (costheta, glw) = gauss_legendre(ntheta);
        let tri_len = tri(lmax, lmax) + 1;
        let plm: Vec<f64> = par::map_collect(ntheta, |i| legendre_table(lmax, costheta[i]))
            .into_iter()
            .flatten()
            .collect();
        let mut cosm = Vec::with_capacity((lmax + 1) * nphi);
        let mut sinm = Vec::with_capacity((lmax + 1) * nphi);
        for m in 0..=lmax {
            for j in 0..nphi {
                let ang = std::f64::consts::TAU * ((m * j) % nphi) as f64 / nphi as f64;
                cosm.push(ang.cos());
                sinm.push(ang.sin());
            }
        }
        SphereGrid {
            lmax,
            ntheta,
            nphi,
            costheta,
            glw,
            plm,
            tri_len,
            cosm,
            sinm,
        }
    }

    pub fn node_count(&self) -> usize {
        self.ntheta * self.nphi
    }

    /// Quadrature weight of node `(i, j)` for the round measure.
    pub fn weight(&self, i: usize) -> f64 {
        self.glw[i] * std::f64::consts::TAU / self.nphi as f64
    }

    /// Colatitude/longitude of node `idx = i * nphi + j`.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let i = idx / self.nphi;
        let j = idx % self.nphi;
        [
            self.costheta[i].acos(),
            std::f64::consts::TAU * j as f64 / self.nphi as f64,
        ]
    }

    /// Number of basis functions up to degree `lmax`.
    pub fn basis_len(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    #[inline]
    fn plm_at(&self, i: usize, l: usize, m: usize) -> f64 {
        self.plm[i * self.tri_len + tri(l, m)]
    }

    /// Synthesis: harmonic coefficients (`b = l^2 + m + l`) -> grid values.
    pub fn synth(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.basis_len());
        let lmax = self.lmax;
        let rows: Vec<Vec<f64>> = par::map_collect(self.ntheta, |i| {
            // Collapse the degree sum per longitudinal order m.
            let mut hc = vec![0.0; lmax + 1];
            let mut hs = vec![0.0; lmax + 1];
            for l in 0..=lmax {
                let base = l * l + l;
                hc[0] += coeffs[base] * self.plm_at(i, l, 0);
                for m in 1..=l {
                    let p = self.plm_at(i, l, m);
                    hc[m] += coeffs[base + m] * p;
                    hs[m] += coeffs[base - m] * p;
                }
            }
            (0..self.nphi)
                .map(|j| {
                    let mut acc = hc[0] * INV_SQRT_2PI;
                    for m in 1..=lmax {
                        acc += INV_SQRT_PI
                            * (hc[m] * self.cosm[m * self.nphi + j]
                                + hs[m] * self.sinm[m * self.nphi + j]);
                    }
                    acc
                })
                .collect()
        });
        rows.into_iter().flatten().collect()
    }

    /// Analysis: grid values -> harmonic coefficients (exact on the band).
    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.node_count());
        let lmax = self.lmax;
        let dphi = std::f64::consts::TAU / self.nphi as f64;
        // Ring-wise Fourier analysis first.
        let rings: Vec<(Vec<f64>, Vec<f64>)> = par::map_collect(self.ntheta, |i| {
            let row = &values[i * self.nphi..(i + 1) * self.nphi];
            let mut gc = vec![0.0; lmax + 1];
            let mut gs = vec![0.0; lmax + 1];
            for m in 0..=lmax {
                let (mut c, mut s) = (0.0, 0.0);
                for (j, v) in row.iter().enumerate() {
                    c += v * self.cosm[m * self.nphi + j];
                    s += v * self.sinm[m * self.nphi + j];
                }
                gc[m] = c * dphi;
                gs[m] = s * dphi;
            }
            (gc, gs)
        });
        // Then the Legendre transform in colatitude.
        par::map_collect(self.basis_len(), |b| {
            let l = (b as f64).sqrt() as usize;
            let m = b as i64 - (l * l + l) as i64;
            let ma = m.unsigned_abs() as usize;
            let norm = if m == 0 { INV_SQRT_2PI } else { INV_SQRT_PI };
            let mut acc = 0.0;
            for i in 0..self.ntheta {
                let ring = if m < 0 { &rings[i].1 } else { &rings[i].0 };
                acc += self.glw[i] * self.plm_at(i, l, ma) * ring[ma];
            }
            acc * norm
        })
    }

    /// Basis function `b` at an arbitrary point `(theta, phi)`.
    pub fn basis_at(&self, b: usize, theta: f64, phi: f64) -> f64 {
        let l = (b as f64).sqrt() as usize;
        let m = b as i64 - (l * l + l) as i64;
        let ma = m.unsigned_abs() as usize;
        let table = legendre_table(l, theta.cos());
        let p = table[tri(l, ma)];
        match m.cmp(&0) {
            std::cmp::Ordering::Equal => p * INV_SQRT_2PI,
            std::cmp::Ordering::Greater => p * (ma as f64 * phi).cos() * INV_SQRT_PI,
            std::cmp::Ordering::Less => p * (ma as f64 * phi).sin() * INV_SQRT_PI,
        }
    }

    /// Evaluate a coefficient vector at an arbitrary point.
    pub fn eval(&self, coeffs: &[f64], theta: f64, phi: f64) -> f64 {
        let lmax = self.lmax;
        let table = legendre_table(lmax, theta.cos());
        let mut acc = 0.0;
        for l in 0..=lmax {
            let base = l * l + l;
            acc += coeffs[base] * table[tri(l, 0)] * INV_SQRT_2PI;
            for m in 1..=l {
                let p = table[tri(l, m)] * INV_SQRT_PI;
                acc += p
                    * (coeffs[base + m] * (m as f64 * phi).cos()
                        + coeffs[base - m] * (m as f64 * phi).sin());
            }
        }
        acc
    }
}
