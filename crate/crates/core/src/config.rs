//! Run configuration: a flat TOML file with sections.
//!
//! The grammar is deliberately small — every run is described by a
//! `seed`, a `[geometry]` table, an `[initial]` table, an optional
//! `[integrator]` table (defaults match [`crate::flow::RunOptions`]),
//! an optional `[output]` table and an optional `[sweep]` table:
//!
//! ```toml
//! seed = 42
//!
//! [geometry]
//! kind = "torus"          # "torus" | "sphere"
//! n = 1
//! gamma = 0.3
//! truncation = 64         # modes per axis (torus) / max degree (sphere)
//! period = 6.2831853      # torus only
//!
//! [initial]
//! kind = "cosine"         # "constant" | "cosine" | "bubble" | "file"
//! value = 1.0             # baseline for constant/cosine
//! amplitude = 0.1         # cosine
//! wavevector = [1]        # cosine, torus only (sphere uses cos(theta))
//! eps = 0.1               # bubble (sphere only)
//! center = [0.0, 0.0]     # bubble center in geometry coordinates
//! path = "u0.txt"         # file: one node value per line
//!
//! [integrator]
//! dt0 = 1e-3
//! dt_max = 1e-2
//! t_end = 5.0
//! tol = 1e-6
//! tol_conv = 1e-8
//! normalize_volume = true
//! extra_fq = []
//!
//! [output]
//! stride = 1              # keep every stride-th accepted row
//!
//! [sweep]
//! gamma = [0.25, 0.3, 0.35]
//! ```
//!
//! Parsing failures and semantic violations surface as
//! [`Error::Config`] with a message naming the offending key.

use crate::bubbles::{planted_bubble, BubbleParams, ModelConstants};
use crate::error::{Error, Result};
use crate::flow::RunOptions;
use crate::geometry::{Geometry, GeometryKind, SpectralField};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

/// `[geometry]` section.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// `"torus"` or `"sphere"`.
    pub kind: String,
    /// Dimension, 1 or 2.
    pub n: usize,
    /// Order of the fractional operator.
    pub gamma: f64,
    /// Modes per axis (torus) or maximum harmonic degree (sphere).
    pub truncation: usize,
    /// Torus period (ignored on the sphere; defaults to `2 pi`).
    pub period: Option<f64>,
}

/// `[initial]` section.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// `"constant"`, `"cosine"`, `"bubble"` or `"file"`.
    pub kind: String,
    /// Baseline value for constant and cosine data (default 1).
    pub value: Option<f64>,
    /// Cosine perturbation amplitude.
    pub amplitude: Option<f64>,
    /// Integer wavevector of the cosine perturbation (torus).
    pub wavevector: Option<Vec<i64>>,
    /// Bubble concentration scale.
    pub eps: Option<f64>,
    /// Bubble center in geometry coordinates.
    pub center: Option<Vec<f64>>,
    /// Path to a node-value file (one value per line).
    pub path: Option<String>,
}

/// `[integrator]` section (all fields optional; defaults as in
/// [`RunOptions::default`]).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt0: Option<f64>,
    pub dt_max: Option<f64>,
    pub t_end: Option<f64>,
    pub tol: Option<f64>,
    pub tol_conv: Option<f64>,
    pub normalize_volume: Option<bool>,
    pub extra_fq: Option<Vec<f64>>,
}

/// `[output]` section.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Keep every `stride`-th accepted row in the CSV (default 1).
    pub stride: Option<usize>,
}

/// `[sweep]` section: values fanned out by the sweep subcommand.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Gamma values, one run per entry.
    pub gamma: Option<Vec<f64>>,
}

/// A complete parsed and validated run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every randomized element of the run.
    pub seed: u64,
    pub geometry: GeometrySpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Parse a TOML string.
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse a config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// Semantic validation beyond TOML well-formedness.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        match g.kind.as_str() {
            "torus" | "sphere" => {}
            other => {
                return Err(Error::Config(format!(
                    "geometry.kind must be \"torus\" or \"sphere\", got \"{other}\""
                )))
            }
        }
        if !(g.n == 1 || g.n == 2) {
            return Err(Error::Config(format!("geometry.n must be 1 or 2, got {}", g.n)));
        }
        if !(g.gamma > 0.0 && g.gamma < 1.0 && 2.0 * g.gamma < g.n as f64) {
            return Err(Error::Config(format!(
                "geometry.gamma must satisfy 0 < gamma < 1 and n > 2*gamma, got {}",
                g.gamma
            )));
        }
        if let Some(p) = g.period {
            positive("geometry.period", p)?;
        }
        match self.initial.kind.as_str() {
            "constant" | "cosine" | "bubble" | "file" => {}
            other => {
                return Err(Error::Config(format!(
                    "initial.kind must be one of constant|cosine|bubble|file, got \"{other}\""
                )))
            }
        }
        if self.initial.kind == "file" && self.initial.path.is_none() {
            return Err(Error::Config("initial.path is required for kind = \"file\"".into()));
        }
        if self.initial.kind == "bubble" && self.initial.eps.is_none() {
            return Err(Error::Config("initial.eps is required for kind = \"bubble\"".into()));
        }
        let it = &self.integrator;
        for (name, v) in [
            ("integrator.dt0", it.dt0),
            ("integrator.dt_max", it.dt_max),
            ("integrator.t_end", it.t_end),
            ("integrator.tol", it.tol),
            ("integrator.tol_conv", it.tol_conv),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if let Some(0) = self.output.stride {
            return Err(Error::Config("output.stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Build the geometry described by the `[geometry]` section.
    pub fn build_geometry(&self) -> Result<Arc<Geometry>> {
        let g = &self.geometry;
        match g.kind.as_str() {
            "torus" => Geometry::torus(
                g.n,
                g.period.unwrap_or(std::f64::consts::TAU),
                g.truncation,
                g.gamma,
            ),
            _ => Geometry::sphere(g.n, g.truncation, g.gamma),
        }
    }

    /// Build the initial factor described by the `[initial]` section.
    pub fn initial_field(&self, geom: &Arc<Geometry>) -> Result<SpectralField> {
        let spec = &self.initial;
        let base = spec.value.unwrap_or(1.0);
        match spec.kind.as_str() {
            "constant" => Ok(SpectralField::constant(geom, base)),
            "cosine" => {
                let amp = spec.amplitude.unwrap_or(0.1);
                let kvec = spec.wavevector.clone().unwrap_or_else(|| vec![1; geom.dim()]);
                if geom.kind() == GeometryKind::Torus && kvec.len() != geom.dim() {
                    return Err(Error::Config(format!(
                        "initial.wavevector must have {} entries, got {}",
                        geom.dim(),
                        kvec.len()
                    )));
                }
                let vals: Vec<f64> = (0..geom.node_count())
                    .map(|i| {
                        let x = geom.node_position(i).expect("i < node_count");
                        let phase = match geom.kind() {
                            GeometryKind::Torus => {
                                let f = std::f64::consts::TAU / geom.period();
                                kvec.iter().zip(x.iter()).map(|(k, xi)| *k as f64 * f * xi).sum()
                            }
                            // Zonal degree-1 perturbation on the sphere.
                            GeometryKind::Sphere => x[0],
                        };
                        base + amp * phase.cos()
                    })
                    .collect();
                SpectralField::from_values(geom, &vals)
            }
            "bubble" => {
                let c = ModelConstants::new(geom.dim(), geom.gamma())?;
                let center = spec
                    .center
                    .clone()
                    .unwrap_or_else(|| vec![0.0; geom.dim()]);
                let params = BubbleParams::new(center, spec.eps.expect("validated"), 1.0)?;
                planted_bubble(geom, &c, &params)
            }
            _ => {
                let path = spec.path.as_ref().expect("validated");
                let text = std::fs::read_to_string(path)?;
                let vals: Vec<f64> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
                    .map(|l| {
                        l.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("initial.path: unparseable value line {l:?}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                SpectralField::from_values(geom, &vals)
            }
        }
    }

    /// Integrator options with config overrides applied to the defaults.
    pub fn run_options(&self) -> RunOptions {
        let d = RunOptions::default();
        let it = &self.integrator;
        RunOptions {
            dt0: it.dt0.unwrap_or(d.dt0),
            dt_max: it.dt_max.unwrap_or(d.dt_max),
            t_end: it.t_end.unwrap_or(d.t_end),
            tol: it.tol.unwrap_or(d.tol),
            tol_conv: it.tol_conv.unwrap_or(d.tol_conv),
            normalize_volume: it.normalize_volume.unwrap_or(d.normalize_volume),
            extra_fq: it.extra_fq.clone().unwrap_or_default(),
        }
    }

    /// Row stride for CSV output.
    pub fn stride(&self) -> usize {
        self.output.stride.unwrap_or(1).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 42

[geometry]
kind = "torus"
n = 1
gamma = 0.3
truncation = 64

[initial]
kind = "cosine"
amplitude = 0.1
wavevector = [1]
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_str(BASE).unwrap();
        assert_eq!(cfg.seed, 42);
        let geom = cfg.build_geometry().unwrap();
        assert_eq!(geom.dim(), 1);
        let u0 = cfg.initial_field(&geom).unwrap();
        // 1 + 0.1 cos x: mean 1, max near 1.1.
        assert!((u0.integral() / geom.background_volume() - 1.0).abs() < 1e-12);
        assert!((u0.max_value() - 1.1).abs() < 1e-10);
        let opts = cfg.run_options();
        assert_eq!(opts.t_end, 1.0);
        assert_eq!(cfg.stride(), 1);
    }

    #[test]
    fn missing_gamma_names_the_key() {
        let text = BASE.replace("gamma = 0.3\n", "");
        let err = RunConfig::from_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma"), "message should name the key: {msg}");
    }

    #[test]
    fn semantic_violations_name_the_key() {
        let bad_gamma = BASE.replace("gamma = 0.3", "gamma = 0.6");
        let msg = RunConfig::from_str(&bad_gamma).unwrap_err().to_string();
        assert!(msg.contains("geometry.gamma"), "{msg}");

        let bad_kind = BASE.replace("kind = \"torus\"", "kind = \"plane\"");
        let msg = RunConfig::from_str(&bad_kind).unwrap_err().to_string();
        assert!(msg.contains("geometry.kind"), "{msg}");

        let unknown = format!("{BASE}\n[integrator]\ndt_zero = 1.0\n");
        assert!(RunConfig::from_str(&unknown).is_err());
    }
}
