//! Adaptive IMEX integrator for the normalized fractional Yamabe flow.
//!
//! The flow evolves a positive conformal factor by
//!
//! ```text
//! du/dt = (s(u) - R(u)) u,      u(0) = u_0,
//! ```
//!
//! with `s` the `d mu`-average of `R`, which preserves the conformal
//! volume exactly and dissipates `s` at rate `ds/dt = -2 F_2 / vol`.
//! Runs are performed in the unit-volume gauge by default (the initial
//! factor is rescaled once so `int d mu = 1`), in which the dissipation
//! identity reads exactly `ds/dt = -2 F_2`.
//!
//! One step treats the stiff diffusion implicitly with a frozen scalar
//! coefficient and the rest explicitly with a trapezoidal corrector:
//! writing the right side as `G(u) = -u^{-4g/(n-2g)} P u + s u` and
//! `c_bar` for the `mu_0`-mean of `u^{-4g/(n-2g)}`,
//!
//! ```text
//! u*      = (I + dt c_bar P)^{-1} (u_n + dt (G(u_n) + c_bar P u_n))
//! u_{n+1} = (I + dt/2 c_bar P)^{-1} [ (I - dt/2 c_bar P) u_n
//!                                     + dt/2 (E(u_n) + E(u*)) ]
//! ```
//!
//! with `E(u) = G(u) + c_bar P u` (all diagonal solves in coefficient
//! space), followed by an exact scalar volume renormalization.  Local
//! error is estimated by step doubling; steps also reject if positivity
//! or monotonicity of `s` fail, halving `dt` up to 20 times.

use crate::error::{Error, Result};
use crate::fraclap;
use crate::functionals::{self, Curvature, FunctionalReport};
use crate::geometry::{Geometry, SpectralField};
use crate::par;
use std::sync::Arc;

/// Blow-up guard on `max u`.
pub const BLOWUP_LIMIT: f64 = 1e8;
/// Maximum number of `dt` halvings before a step counts as failed.
pub const MAX_HALVINGS: usize = 20;

/// Integrator state between accepted steps.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub u: SpectralField,
    /// Current step-size proposal.
    pub dt: f64,
    /// Diagnostics of `u` (kept in sync with `u`).
    pub report: FunctionalReport,
    /// Positivity guard: `1e-10 * min u(0)` on the check grid.
    pub positivity_floor: f64,
    /// Conformal volume the run preserves.
    pub target_volume: f64,
}

/// Extra information about a single accepted or attempted step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// |volume drift| before the scalar renormalization.
    pub vol_drift: f64,
}

/// Options for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Initial step size.
    pub dt0: f64,
    /// Hard cap on the step size.
    pub dt_max: f64,
    /// Final time.
    pub t_end: f64,
    /// Local error tolerance: accepted steps satisfy `err <= tol * dt`.
    pub tol: f64,
    /// Convergence threshold on `sup |R - s|`.
    pub tol_conv: f64,
    /// Rescale `u_0` to unit conformal volume before the run (the gauge
    /// in which `ds/dt = -2 F_2` holds without a volume factor).
    pub normalize_volume: bool,
    /// Extra moment orders `q`: `F_q` columns recorded alongside the
    /// standard ones, and `S_{q}` at `t = 0` stored for integral bounds.
    pub extra_fq: Vec<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt0: 1e-3,
            dt_max: 1e-2,
            t_end: 1.0,
            tol: 1e-6,
            tol_conv: 1e-8,
            normalize_volume: true,
            extra_fq: Vec::new(),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    /// `sup |R - s|` dropped below `tol_conv`.
    Converged,
    /// Reached `t_end` without converging.
    ReachedEnd,
}

/// One diagnostics row, recorded at every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub s: f64,
    pub energy: f64,
    pub vol: f64,
    pub f2: f64,
    pub f_crit: f64,
    pub min_r: f64,
    pub max_r: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub dt_used: f64,
    pub step_accepted: bool,
    /// Extra `F_q` values in the order of [`RunOptions::extra_fq`].
    pub extra: Vec<f64>,
}

/// Full diagnostics of a run.
#[derive(Debug, Clone)]
pub struct DiagnosticsSeries {
    pub n: usize,
    pub gamma: f64,
    pub rows: Vec<DiagnosticsRow>,
    pub status: RunStatus,
    /// Moment orders of the extra `F_q` columns.
    pub extra_fq: Vec<f64>,
    /// `S_q(0)` for `q = 1` and each extra order (for integral bounds).
    pub sq0: Vec<(f64, f64)>,
    /// Largest pre-renormalization volume drift seen at accepted steps.
    pub max_vol_drift: f64,
    /// Final factor of the run.
    pub final_u: SpectralField,
}

/// A failed run, carrying the partial series collected so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Option<DiagnosticsSeries>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "flow run failed: {}", self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Initialize a flow state at `t = 0`.
pub fn init(geom: &Arc<Geometry>, u0: &SpectralField, dt0: f64) -> Result<FlowState> {
    u0.check_geometry(geom)?;
    let report = functionals::report(geom, u0)?;
    Ok(FlowState {
        t: 0.0,
        u: u0.clone(),
        dt: dt0,
        report,
        positivity_floor: 1e-10 * report.min_u,
        target_volume: report.volume,
    })
}

/// Frozen diffusion coefficient: the `mu_0`-mean of `u^{-4g/(n-2g)}`.
fn frozen_coefficient(geom: &Geometry, u_over: &[f64]) -> f64 {
    let w = geom.exponents().weight();
    let vals = par::map_collect(u_over.len(), |i| u_over[i].powf(-w));
    geom.integrate_over_values(&vals) / geom.background_volume()
}

/// Explicit part `E(u) = (s - R) u + c_bar P u` in coefficient space.
fn explicit_part(
    geom: &Arc<Geometry>,
    u: &SpectralField,
    c_bar: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    let curv = Curvature::compute(geom, u)?;
    check_floor(&curv.u_over, floor)?;
    let g_over = par::map_collect(curv.u_over.len(), |i| {
        (curv.s - curv.r_over[i]) * curv.u_over[i]
    });
    let mut coeffs = geom.analyze_over(&g_over);
    let table = fraclap::multipliers(geom);
    for (c, (uc, m)) in coeffs.iter_mut().zip(u.coeffs().iter().zip(table.iter())) {
        *c += c_bar * m * uc;
    }
    Ok(coeffs)
}

fn check_floor(u_over: &[f64], floor: f64) -> Result<()> {
    let mut min = f64::INFINITY;
    let mut argmin = 0;
    for (i, v) in u_over.iter().enumerate() {
        if *v < min {
            min = *v;
            argmin = i;
        }
    }
    if min <= floor {
        return Err(Error::Positivity {
            min,
            node: argmin,
            floor,
        });
    }
    Ok(())
}

/// One IMEX step of size `dt` (including the volume renormalization).
pub fn step(geom: &Arc<Geometry>, state: &FlowState, dt: f64) -> Result<(FlowState, StepInfo)> {
    if dt <= 0.0 {
        return Err(Error::Range {
            name: "dt",
            value: dt,
            range: "(0, inf)",
        });
    }
    let table = fraclap::multipliers(geom);
    let u_over = state.u.values_over();
    let c_bar = frozen_coefficient(geom, &u_over);

    // Predictor: backward Euler on the frozen diffusion.
    let e_n = explicit_part(geom, &state.u, c_bar, state.positivity_floor)?;
    let star: Vec<f64> = state
        .u
        .coeffs()
        .iter()
        .zip(e_n.iter())
        .zip(table.iter())
        .map(|((uc, e), m)| (uc + dt * e) / (1.0 + dt * c_bar * m))
        .collect();
    let u_star = SpectralField::from_coeffs(geom, star)?;

    // Corrector: Crank--Nicolson diffusion + explicit trapezoid.
    let e_star = explicit_part(geom, &u_star, c_bar, state.positivity_floor)?;
    let half = 0.5 * dt;
    let next: Vec<f64> = state
        .u
        .coeffs()
        .iter()
        .zip(e_n.iter().zip(e_star.iter()))
        .zip(table.iter())
        .map(|((uc, (en, es)), m)| {
            ((1.0 - half * c_bar * m) * uc + half * (en + es)) / (1.0 + half * c_bar * m)
        })
        .collect();
    let u_next = SpectralField::from_coeffs(geom, next)?;
    check_floor(&u_next.values_over(), state.positivity_floor)?;

    let max_u = u_next.max_value();
    if max_u > BLOWUP_LIMIT {
        return Err(Error::Blowup {
            max: max_u,
            limit: BLOWUP_LIMIT,
            t: state.t + dt,
        });
    }

    // Exact scalar volume renormalization.
    let vol = functionals::conformal_volume(geom, &u_next)?;
    let drift = (vol - state.target_volume).abs();
    let ex = geom.exponents();
    let c = (state.target_volume / vol).powf(1.0 / ex.vol());
    let u_fixed = u_next.scale(c);

    let report = functionals::report(geom, &u_fixed)?;
    Ok((
        FlowState {
            t: state.t + dt,
            u: u_fixed,
            dt,
            report,
            positivity_floor: state.positivity_floor,
            target_volume: state.target_volume,
        },
        StepInfo { vol_drift: drift },
    ))
}

fn row_from(state: &FlowState, geom: &Arc<Geometry>, opts: &RunOptions, dt_used: f64) -> Result<DiagnosticsRow> {
    let r = &state.report;
    let mut extra = Vec::with_capacity(opts.extra_fq.len());
    if !opts.extra_fq.is_empty() {
        let curv = Curvature::compute(geom, &state.u)?;
        for q in &opts.extra_fq {
            extra.push(curv.f_moment(geom, *q));
        }
    }
    Ok(DiagnosticsRow {
        t: state.t,
        s: r.s,
        energy: r.energy,
        vol: r.volume,
        f2: r.f2,
        f_crit: r.f_crit,
        min_r: r.min_r,
        max_r: r.max_r,
        min_u: r.min_u,
        max_u: r.max_u,
        dt_used,
        step_accepted: true,
        extra,
    })
}

/// Integrate the flow from `u0` with adaptive step control.
pub fn run(
    geom: &Arc<Geometry>,
    u0: &SpectralField,
    opts: &RunOptions,
) -> std::result::Result<DiagnosticsSeries, RunFailure> {
    let wrap = |e: Error| RunFailure {
        error: e,
        partial: None,
    };

    // Unit-volume gauge (optional): rescale u0 once.
    let u_start = if opts.normalize_volume {
        let vol = functionals::conformal_volume(geom, u0).map_err(wrap)?;
        u0.scale(vol.powf(-1.0 / geom.exponents().vol()))
    } else {
        u0.clone()
    };

    let mut state = init(geom, &u_start, opts.dt0.min(opts.dt_max)).map_err(wrap)?;

    // Moments at t = 0 for the integral bounds: q = 1 plus extras.
    let mut sq0 = Vec::new();
    for q in std::iter::once(1.0).chain(opts.extra_fq.iter().map(|q| q - 1.0)) {
        if q >= 1.0 {
            let m = functionals::moments(geom, &state.u, q).map_err(wrap)?;
            sq0.push((q, m.s_q));
        }
    }

    let mut rows = vec![row_from(&state, geom, opts, 0.0).map_err(wrap)?];
    let mut max_vol_drift = 0.0f64;
    let mut status = RunStatus::ReachedEnd;

    // Slack for the monotonicity assertion on s at accepted steps.
    let s_slack = 1e-9 * state.report.s.abs().max(1.0);

    let fail = |error: Error, rows: Vec<DiagnosticsRow>, state: &FlowState, sq0: Vec<(f64, f64)>, drift: f64, opts: &RunOptions, geom: &Arc<Geometry>| {
        RunFailure {
            partial: Some(DiagnosticsSeries {
                n: geom.dim(),
                gamma: geom.gamma(),
                rows,
                status: RunStatus::ReachedEnd,
                extra_fq: opts.extra_fq.clone(),
                sq0,
                max_vol_drift: drift,
                final_u: state.u.clone(),
            }),
            error,
        }
    };

    while state.t < opts.t_end {
        if state.report.f2.is_nan() {
            return Err(fail(
                Error::Convergence,
                rows,
                &state,
                sq0,
                max_vol_drift,
                opts,
                geom,
            ));
        }
        // Convergence check on the current state.
        let sup = (state.report.max_r - state.report.s).max(state.report.s - state.report.min_r);
        if sup < opts.tol_conv {
            status = RunStatus::Converged;
            break;
        }

        let mut dt = state.dt.min(opts.dt_max).min(opts.t_end - state.t);
        let mut halvings = 0usize;
        loop {
            // Step doubling: one full step vs two half steps.
            let attempt = step(geom, &state, dt).and_then(|(big, _)| {
                let (h1, i1) = step(geom, &state, 0.5 * dt)?;
                let (h2, i2) = step(geom, &h1, 0.5 * dt)?;
                Ok((big, h2, i1.vol_drift.max(i2.vol_drift)))
            });
            match attempt {
                Ok((big, small, drift)) => {
                    let scale = small
                        .u
                        .coeffs()
                        .iter()
                        .fold(0.0f64, |a, c| a.max(c.abs()))
                        .max(1e-300);
                    let err = big
                        .u
                        .coeffs()
                        .iter()
                        .zip(small.u.coeffs())
                        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
                        / scale;
                    let s_ok = small.report.s <= state.report.s + s_slack;
                    if err <= opts.tol * dt && s_ok {
                        max_vol_drift = max_vol_drift.max(drift);
                        let mut accepted = small;
                        // Step-size proposal for a second-order pair.
                        let grow = if err > 0.0 {
                            (opts.tol * dt / err).powf(0.5).clamp(0.3, 2.0)
                        } else {
                            2.0
                        };
                        accepted.dt = (0.9 * grow * dt).min(opts.dt_max);
                        state = accepted;
                        rows.push(match row_from(&state, geom, opts, dt) {
                            Ok(r) => r,
                            Err(e) => {
                                return Err(fail(e, rows, &state, sq0, max_vol_drift, opts, geom))
                            }
                        });
                        break;
                    }
                }
                Err(e @ Error::Blowup { .. }) => {
                    return Err(fail(e, rows, &state, sq0, max_vol_drift, opts, geom));
                }
                Err(Error::Positivity { .. }) => {} // halve and retry
                Err(e) => {
                    return Err(fail(e, rows, &state, sq0, max_vol_drift, opts, geom));
                }
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                let e = Error::StepFailure {
                    halvings,
                    t: state.t,
                    dt,
                    reason: "local error or monotonicity target unmet".into(),
                };
                return Err(fail(e, rows, &state, sq0, max_vol_drift, opts, geom));
            }
            dt *= 0.5;
        }
    }

    Ok(DiagnosticsSeries {
        n: geom.dim(),
        gamma: geom.gamma(),
        rows,
        status,
        extra_fq: opts.extra_fq.clone(),
        sq0,
        max_vol_drift,
        final_u: state.u,
    })
}

/// Pointwise slack of the exponential positivity floor
/// `min R(t) >= exp(-(4g/(n-2g)) s(0) t) min R(0)`, per recorded row.
///
/// Nonnegative entries certify the bound; callers supply `s(0)` and
/// `min R(0)` (normally from the first row).
pub fn positivity_floor(series: &DiagnosticsSeries, s0: f64, min_r0: f64) -> Vec<f64> {
    let rate = 4.0 * series.gamma / (series.n as f64 - 2.0 * series.gamma);
    series
        .rows
        .iter()
        .map(|row| row.min_r - (-rate * s0 * row.t).exp() * min_r0)
        .collect()
}

/// Time-integral bound on the centered moments: for `1 <= q < n/(2g)`,
///
/// ```text
/// int_0^T F_{q+1} dt <= (n - 2g) / (2 (n - 2 g q)) * S_q(0),
/// ```
///
/// Returns `(lhs, rhs)` with the left side a trapezoidal quadrature of
/// the recorded `F_{q+1}` column.
pub fn fq_integral_bound(series: &DiagnosticsSeries, q: f64) -> Result<(f64, f64)> {
    let n = series.n as f64;
    let g = series.gamma;
    if !(1.0..n / (2.0 * g)).contains(&q) {
        return Err(Error::Range {
            name: "q",
            value: q,
            range: "[1, n / (2 gamma))",
        });
    }
    // Locate the F_{q+1} column: the standard F2 column for q = 1,
    // otherwise one of the extra columns.
    let col: Box<dyn Fn(&DiagnosticsRow) -> f64> = if (q - 1.0).abs() < 1e-12 {
        Box::new(|row: &DiagnosticsRow| row.f2)
    } else {
        let idx = series
            .extra_fq
            .iter()
            .position(|qq| (qq - (q + 1.0)).abs() < 1e-12)
            .ok_or_else(|| Error::InsufficientData {
                reason: format!("run did not record the F_{} column", q + 1.0),
            })?;
        Box::new(move |row: &DiagnosticsRow| row.extra[idx])
    };
    let sq0 = series
        .sq0
        .iter()
        .find(|(qq, _)| (qq - q).abs() < 1e-12)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::InsufficientData {
            reason: format!("run did not record S_q(0) for q = {q}"),
        })?;
    let mut lhs = 0.0;
    for w in series.rows.windows(2) {
        lhs += 0.5 * (col(&w[0]) + col(&w[1])) * (w[1].t - w[0].t);
    }
    let rhs = (n - 2.0 * g) / (2.0 * (n - 2.0 * g * q)) * sq0;
    Ok((lhs, rhs))
}
