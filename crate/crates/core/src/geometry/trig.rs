//! Uniform periodic grids and real trigonometric bases.
//!
//! A `TrigGrid` holds one uniform grid of `nodes` points on `[0, period)`
//! together with tables of `cos(2 pi k x_j / period)` and the matching
//! sines for `k = 1..=kmax`.  The orthonormal basis attached to a 1-d
//! periodic geometry is
//!
//! ```text
//! phi_0        = 1 / sqrt(period)
//! phi_{2k-1}   = sqrt(2/period) * cos(2 pi k x / period)
//! phi_{2k}     = sqrt(2/period) * sin(2 pi k x / period)
//! ```
//!
//! Uniform quadrature with `nodes > 2*kmax` points integrates products of
//! any two basis functions exactly, so analysis (projection by
//! quadrature) inverts synthesis exactly on the truncated band.

use crate::par;

/// One uniform periodic grid with precomputed trig tables.
#[derive(Debug, Clone)]
pub struct TrigGrid {
    pub nodes: usize,
    pub period: f64,
    pub kmax: usize,
    /// `cos_t[(k-1) * nodes + j] = cos(2 pi k j / nodes)`, `k = 1..=kmax`.
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
}

impl TrigGrid {
    pub fn new(nodes: usize, period: f64, kmax: usize) -> Self {
        assert!(nodes > 2 * kmax, "grid must oversample the band");
        let mut cos_t = Vec::with_capacity(kmax * nodes);
        let mut sin_t = Vec::with_capacity(kmax * nodes);
        for k in 1..=kmax {
            for j in 0..nodes {
                // Angles from exact rational multiples of 2*pi keep the
                // tables symmetric to the last bit.
                let ang = std::f64::consts::TAU * ((k * j) % nodes) as f64 / nodes as f64;
                cos_t.push(ang.cos());
                sin_t.push(ang.sin());
            }
        }
        TrigGrid {
            nodes,
            period,
            kmax,
            cos_t,
            sin_t,
        }
    }

    /// Number of basis functions on the truncated band.
    pub fn basis_len(&self) -> usize {
        2 * self.kmax + 1
    }

    /// Quadrature weight (uniform).
    pub fn weight(&self) -> f64 {
        self.period / self.nodes as f64
    }

    /// Grid coordinate of node `j`.
    pub fn node(&self, j: usize) -> f64 {
        self.period * j as f64 / self.nodes as f64
    }

    /// Axis wavenumber of basis index `b` (0 for the constant mode).
    pub fn wavenumber(b: usize) -> usize {
        (b + 1) / 2
    }

    #[inline]
    fn cos_at(&self, k: usize, j: usize) -> f64 {
        self.cos_t[(k - 1) * self.nodes + j]
    }

    #[inline]
    fn sin_at(&self, k: usize, j: usize) -> f64 {
        self.sin_t[(k - 1) * self.nodes + j]
    }

    /// Value of orthonormal basis function `b` at node `j`.
    #[inline]
    pub fn basis_at_node(&self, b: usize, j: usize) -> f64 {
        let norm0 = 1.0 / self.period.sqrt();
        let norm = (2.0 / self.period).sqrt();
        if b == 0 {
            norm0
        } else if b % 2 == 1 {
            norm * self.cos_at((b + 1) / 2, j)
        } else {
            norm * self.sin_at(b / 2, j)
        }
    }

    /// Value of orthonormal basis function `b` at an arbitrary coordinate.
    pub fn basis_at(&self, b: usize, x: f64) -> f64 {
        let norm0 = 1.0 / self.period.sqrt();
        let norm = (2.0 / self.period).sqrt();
        if b == 0 {
            return norm0;
        }
        let k = Self::wavenumber(b) as f64;
        let ang = std::f64::consts::TAU * k * x / self.period;
        if b % 2 == 1 {
            norm * ang.cos()
        } else {
            norm * ang.sin()
        }
    }

    /// Synthesis: coefficients -> grid values.
    pub fn synth(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.basis_len());
        let norm0 = 1.0 / self.period.sqrt();
        let norm = (2.0 / self.period).sqrt();
        par::map_collect(self.nodes, |j| {
            let mut acc = coeffs[0] * norm0;
            for k in 1..=self.kmax {
                acc += norm * (coeffs[2 * k - 1] * self.cos_at(k, j) + coeffs[2 * k] * self.sin_at(k, j));
            }
            acc
        })
    }

    /// Analysis: grid values -> coefficients (quadrature projection).
    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nodes);
        let w = self.weight();
        let norm0 = 1.0 / self.period.sqrt();
        let norm = (2.0 / self.period).sqrt();
        par::map_collect(self.basis_len(), |b| {
            let mut acc = 0.0;
            if b == 0 {
                for v in values {
                    acc += v;
                }
                return acc * w * norm0;
            }
            let k = (b + 1) / 2;
            if b % 2 == 1 {
                for (j, v) in values.iter().enumerate() {
                    acc += v * self.cos_at(k, j);
                }
            } else {
                for (j, v) in values.iter().enumerate() {
                    acc += v * self.sin_at(k, j);
                }
            }
            acc * w * norm
        })
    }

    /// Separable 2-d synthesis on the tensor grid `nodes x nodes`,
    /// row-major `ix * nodes + iy`; coefficients `a * blen + b`.
    pub fn synth2(&self, coeffs: &[f64]) -> Vec<f64> {
        let blen = self.basis_len();
        assert_eq!(coeffs.len(), blen * blen);
        let m = self.nodes;
        // First pass: synthesize along y for each x-basis index a.
        let half: Vec<f64> = par::map_collect(blen, |a| self.synth(&coeffs[a * blen..(a + 1) * blen]))
            .into_iter()
            .flatten()
            .collect(); // half[a * m + iy]
        // Second pass: synthesize along x for each grid column iy.
        let cols: Vec<Vec<f64>> = par::map_collect(m, |iy| {
            let col: Vec<f64> = (0..blen).map(|a| half[a * m + iy]).collect();
            self.synth(&col)
        });
        let mut out = vec![0.0; m * m];
        for (iy, col) in cols.iter().enumerate() {
            for ix in 0..m {
                out[ix * m + iy] = col[ix];
            }
        }
        out
    }

    /// Separable 2-d analysis, inverse of [`TrigGrid::synth2`] on the band.
    pub fn analyze2(&self, values: &[f64]) -> Vec<f64> {
        let m = self.nodes;
        assert_eq!(values.len(), m * m);
        let blen = self.basis_len();
        // First pass: analyze along y for each grid row ix.
        let half: Vec<f64> = par::map_collect(m, |ix| self.analyze(&values[ix * m..(ix + 1) * m]))
            .into_iter()
            .flatten()
            .collect(); // half[ix * blen + b]
        // Second pass: analyze along x for each y-basis index b.
        let cols: Vec<Vec<f64>> = par::map_collect(blen, |b| {
            let col: Vec<f64> = (0..m).map(|ix| half[ix * blen + b]).collect();
            self.analyze(&col)
        });
        let mut out = vec![0.0; blen * blen];
        for (b, col) in cols.iter().enumerate() {
            for a in 0..blen {
                out[a * blen + b] = col[a];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_on_the_band() {
        let g = TrigGrid::new(16, std::f64::consts::TAU, 7);
        let coeffs: Vec<f64> = (0..g.basis_len()).map(|b| (b as f64 * 0.7).sin()).collect();
        let vals = g.synth(&coeffs);
        let back = g.analyze(&vals);
        for (c, b) in coeffs.iter().zip(back.iter()) {
            assert!((c - b).abs() < 1e-12, "{c} vs {b}");
        }
    }

    #[test]
    fn two_dimensional_round_trip() {
        let g = TrigGrid::new(8, 3.0, 3);
        let blen = g.basis_len();
        let coeffs: Vec<f64> = (0..blen * blen).map(|b| (b as f64 * 1.3).cos()).collect();
        let vals = g.synth2(&coeffs);
        let back = g.analyze2(&vals);
        for (c, b) in coeffs.iter().zip(back.iter()) {
            assert!((c - b).abs() < 1e-12);
        }
    }
}
