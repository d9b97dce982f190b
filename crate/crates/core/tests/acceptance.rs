//! Acceptance battery: one test per headline criterion, each printing a
//! single PASS line with the measured quantity when it succeeds.

use fraclab::bubbles::{
    aubin_slack, detect_concentration, planted_bubble, BubbleParams, ModelConstants,
};
use fraclab::config::RunConfig;
use fraclab::extension::extension_profile;
use fraclab::flow::{fq_integral_bound, positivity_floor, run, RunOptions, RunStatus};
use fraclab::fraclap;
use fraclab::functionals;
use fraclab::geometry::{Geometry, SpectralField};
use fraclab::rng;
use fraclab::stability;
use fraclab::{cli, Error};
use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

fn torus64() -> Arc<Geometry> {
    Geometry::torus(1, TAU, 64, 0.3).unwrap()
}

fn sphere32() -> Arc<Geometry> {
    Geometry::sphere(2, 32, 0.5).unwrap()
}

fn cosine_data(geom: &Arc<Geometry>, amp: f64) -> SpectralField {
    let mut coeffs = vec![0.0; geom.basis_len()];
    coeffs[0] = geom.background_volume().sqrt();
    coeffs[1] = amp * (geom.background_volume() / 2.0).sqrt();
    SpectralField::from_coeffs(geom, coeffs).unwrap()
}

/// The slow torus reference run shared by criteria 4 and 10: the
/// perturbed circle flow to convergence at dt <= 1e-3.
fn torus_reference_run() -> fraclab::flow::DiagnosticsSeries {
    let g = torus64();
    let u0 = cosine_data(&g, 0.1);
    let opts = RunOptions {
        dt0: 1e-3,
        dt_max: 1e-3,
        t_end: 5.0,
        tol: 1e-7,
        tol_conv: 1e-6,
        ..Default::default()
    };
    run(&g, &u0, &opts).unwrap()
}

/// The positive-curvature sphere run shared by criteria 5 and 6.
fn sphere_reference_run() -> fraclab::flow::DiagnosticsSeries {
    let g = Geometry::sphere(2, 8, 0.5).unwrap();
    let u0 = cosine_data(&g, 0.05);
    let opts = RunOptions {
        dt0: 1e-3,
        dt_max: 5e-3,
        t_end: 4.0,
        tol: 1e-6,
        tol_conv: 1e-10,
        ..Default::default()
    };
    run(&g, &u0, &opts).unwrap()
}

#[test]
fn c01_operator_self_adjointness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for g in [torus64(), sphere32()] {
        let mut r = rng::stream(11, g.id());
        for _ in 0..100 {
            let v = rng::random_field(&g, &mut r);
            let w = rng::random_field(&g, &mut r);
            let pv = fraclap::apply_p(&g, &v).unwrap();
            let pw = fraclap::apply_p(&g, &w).unwrap();
            let scale = v.norm_sq().sqrt() * w.norm_sq().sqrt();
            let slack = (pv.inner(&w).unwrap() - pw.inner(&v).unwrap()).abs() / scale;
            worst = worst.max(slack);
        }
    }
    assert!(worst <= 1e-10, "self-adjointness slack {worst:.3e}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "took {secs:.1}s (limit 10s)");
    println!("PASS criterion 1: self-adjointness slack {worst:.3e} <= 1e-10 in {secs:.2}s");
}

#[test]
fn c02_sphere_spectrum_closed_forms() {
    let g = sphere32();
    let mut worst = 0.0f64;
    for k in 0..=20usize {
        let want = k as f64 + 0.5;
        let got = fraclap::multiplier(&g, k).unwrap();
        worst = worst.max((got - want).abs() / want);
        assert!((got - want).abs() <= 1e-12 * want, "k={k}: {got}");
    }
    let mut worst_limit = 0.0f64;
    for k in 1..=10usize {
        let lam = fraclap::sphere_multiplier(2, 1.0 - 1e-6, k);
        let want = (k * (k + 1)) as f64;
        worst_limit = worst_limit.max((lam - want).abs() / want);
        assert!((lam - want).abs() <= 1e-4 * want, "k={k}: {lam} vs {want}");
    }
    println!(
        "PASS criterion 2: lambda(k)=k+1/2 to {worst:.3e}, gamma->1 limit to {worst_limit:.3e}"
    );
}

#[test]
fn c03_extension_dtn_cross_check() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_exact = 0.0f64;
    for gamma in [0.25f64, 0.5, 0.75] {
        let exact = gamma == 0.5;
        let nodes = if exact { 24000 } else { 8000 };
        let tol = if exact { 1e-6 } else { 1e-4 };
        // Calibrate the mode-independent constant on k = 1, then demand
        // the remaining modes reproduce kappa^{2 gamma} within tol.  At
        // gamma = 1/2 the constant is exactly 1, so the raw flux itself
        // is compared.
        let flux = |k: usize| -> f64 {
            let kappa = k as f64;
            extension_profile(gamma, kappa, 25.0 / kappa, nodes).unwrap().flux
        };
        let c_cal = if exact { 1.0 } else { 1f64.powf(2.0 * gamma) / flux(1) };
        for k in 1..=8usize {
            let kappa = k as f64;
            let rel = (c_cal * flux(k) / kappa.powf(2.0 * gamma) - 1.0).abs();
            assert!(rel <= tol, "gamma={gamma} k={k}: rel {rel:.3e} > {tol:.1e}");
            if exact {
                worst_exact = worst_exact.max(rel);
            } else {
                worst = worst.max(rel);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "took {secs:.1}s (limit 30s)");
    println!(
        "PASS criterion 3: calibrated DtN rel err {worst:.3e} <= 1e-4, gamma=1/2 {worst_exact:.3e} <= 1e-6 in {secs:.2}s"
    );
}

#[test]
fn c04_flow_dissipation_laws() {
    let start = Instant::now();
    let series = torus_reference_run();

    // Volume drift at accepted steps.
    assert!(
        series.max_vol_drift <= 1e-6,
        "vol drift {:.3e}",
        series.max_vol_drift
    );
    // s non-increasing and the midpoint dissipation identity.
    let mut worst_mid = 0.0f64;
    for w in series.rows.windows(2) {
        assert!(w[1].s <= w[0].s + 1e-9, "s increased at t = {}", w[0].t);
        let dsdt = (w[1].s - w[0].s) / (w[1].t - w[0].t);
        let f2_mid = 0.5 * (w[0].f2 + w[1].f2);
        let err = (dsdt + 2.0 * f2_mid).abs();
        assert!(err <= 1e-3 * (w[0].s.abs() + f2_mid), "t = {}", w[0].t);
        worst_mid = worst_mid.max(err / (w[0].s.abs() + f2_mid).max(1e-300));
    }
    // Terminal curvature uniformization.
    let last = series.rows.last().unwrap();
    let sup = (last.max_r - last.s).abs().max((last.min_r - last.s).abs());
    assert_eq!(series.status, RunStatus::Converged);
    assert!(sup < 1e-6, "terminal sup|R - s| = {sup:.3e}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "took {secs:.1}s (limit 2min)");
    println!(
        "PASS criterion 4: vol drift {:.3e}, s monotone, midpoint err {worst_mid:.3e}, sup|R-s| {sup:.3e} in {secs:.1}s",
        series.max_vol_drift
    );
}

#[test]
fn c05_curvature_positivity_floor() {
    let series = sphere_reference_run();
    let s0 = series.rows[0].s;
    let min_r0 = series.rows[0].min_r;
    assert!(min_r0 > 0.0, "R(0) must be positive, got {min_r0}");
    let mut worst = f64::INFINITY;
    for slack in positivity_floor(&series, s0, min_r0) {
        worst = worst.min(slack);
        assert!(slack >= -1e-6 * min_r0.abs(), "floor violated by {slack:.3e}");
    }
    println!("PASS criterion 5: positivity floor slack >= {worst:.3e} (limit {:.1e})", -1e-6 * min_r0);
}

#[test]
fn c06_f_decay() {
    let series = sphere_reference_run();
    let (lhs, rhs) = fq_integral_bound(&series, 1.0).unwrap();
    assert!(lhs <= rhs * (1.0 + 1e-3), "int F2 dt = {lhs:.6e} > bound {rhs:.6e}");

    // F2 collapse on the convergent runs.
    for series in [series, torus_reference_run()] {
        if series.status == RunStatus::Converged {
            let f2_0 = series.rows[0].f2;
            let f2_end = series.rows.last().unwrap().f2;
            assert!(f2_end < 0.01 * f2_0, "F2(end) = {f2_end:.3e} vs F2(0) = {f2_0:.3e}");
        }
    }
    println!("PASS criterion 6: int F2 dt {lhs:.6e} <= {rhs:.6e}, F2 collapsed below 1%");
}

#[test]
fn c07_stroock_varopoulos() {
    let mut worst = f64::INFINITY;
    for g in [torus64(), sphere32()] {
        let mut r = rng::stream(13, g.id());
        for _ in 0..100 {
            let f = rng::random_positive_field(&g, &mut r, 0.3).unwrap();
            for p in [1.5, 2.0, 3.0] {
                worst = worst.min(functionals::stroock_varopoulos_slack(&g, &f, p).unwrap());
            }
        }
    }
    assert!(worst >= -1e-10, "S-V slack {worst:.3e}");
    println!("PASS criterion 7: Stroock-Varopoulos min slack {worst:.3e} >= -1e-10");
}

#[test]
fn c08_sphere_gap_inequality() {
    let mut min_margin = f64::INFINITY;
    for n in [1usize, 2] {
        let hi = (n as f64 / 2.0).min(1.0) - 0.05;
        for i in 0..50 {
            let g = 0.05 + (hi - 0.05) * i as f64 / 49.0;
            min_margin = min_margin.min(stability::sphere_gap_margin(n, g).unwrap());
        }
    }
    assert!(min_margin > 0.0, "margin sweep hit {min_margin:.3e}");
    let exact = stability::sphere_gap_margin(2, 0.5).unwrap();
    assert!((exact - 1.0).abs() <= 1e-12, "n=2 gamma=1/2 margin {exact}");
    println!(
        "PASS criterion 8: gap margin > 0 on sweep (min {min_margin:.3e}), (2,1/2) = 1 to {:.1e}",
        (exact - 1.0).abs()
    );
}

#[test]
fn c09_coercivity_gap() {
    let g = Geometry::sphere(2, 8, 0.5).unwrap();
    let u_inf = SpectralField::constant(&g, 1.0);
    let pairs = stability::weighted_eigs(&g, &u_inf, 20).unwrap();
    let s_inf = functionals::mean_curvature_s(&g, &u_inf).unwrap();
    let set = stability::low_mode_set(&g, &pairs, s_inf);
    let c_est = stability::coercivity_gap(&g, &pairs, &set, &u_inf, 20, 17).unwrap();
    assert!(c_est > 0.0, "c_est = {c_est}");
    // Closed-form prediction from the eigenfunction probes: the
    // complement starts at degree 2, so c = 1 - threshold / lambda(2).
    let predicted = 1.0
        - 3.0 * fraclap::sphere_multiplier(2, 0.5, 0)
            / fraclap::sphere_multiplier(2, 0.5, 2);
    assert!(
        (c_est - predicted).abs() <= 1e-10,
        "c_est {c_est} vs predicted {predicted}"
    );
    println!("PASS criterion 9: c_est = {c_est:.12} > 0 matches prediction to {:.1e}", (c_est - predicted).abs());
}

#[test]
fn c10_bubbling_bookkeeping() {
    // Planted single bubble on the sphere.
    let g = sphere32();
    let c = ModelConstants::new(2, 0.5).unwrap();
    let params = BubbleParams::new(vec![1.1, 2.0], 0.12, 1.0).unwrap();
    let u = planted_bubble(&g, &c, &params).unwrap();
    let conc = detect_concentration(&g, &u, &c).unwrap();
    assert!(
        conc.l_est > 0.9 && conc.l_est < 1.1,
        "planted bubble L_est = {}",
        conc.l_est
    );
    assert!(aubin_slack(&c, conc.e_background) >= -1e-8);

    // Convergent background-only run.
    let series = torus_reference_run();
    assert_eq!(series.status, RunStatus::Converged);
    let g_t = series.final_u.geometry().clone();
    let c_t = ModelConstants::new(1, 0.3).unwrap();
    let conc_t = detect_concentration(&g_t, &series.final_u, &c_t).unwrap();
    assert!(
        conc_t.l_est > -0.1 && conc_t.l_est < 0.1,
        "background run L_est = {}",
        conc_t.l_est
    );
    assert!(aubin_slack(&c_t, conc_t.e_background) >= -1e-8);
    println!(
        "PASS criterion 10: planted L_est {:.4}, background L_est {:.2e}, Aubin slack nonnegative",
        conc.l_est, conc_t.l_est
    );
}

#[test]
fn c11_determinism() -> Result<(), Error> {
    let cfg = RunConfig::from_str(
        r#"
seed = 42

[geometry]
kind = "torus"
n = 1
gamma = 0.3
truncation = 32

[initial]
kind = "cosine"
amplitude = 0.1
wavevector = [1]

[integrator]
t_end = 0.5
dt0 = 1e-3
dt_max = 1e-2
"#,
    )?;
    let dir_a = tempfile::TempDir::new()?;
    let dir_b = tempfile::TempDir::new()?;
    cli::cmd_flow(&cfg, dir_a.path(), true)?;
    cli::cmd_flow(&cfg, dir_b.path(), true)?;
    let a = std::fs::read(dir_a.path().join("flow.csv"))?;
    let b = std::fs::read(dir_b.path().join("flow.csv"))?;
    assert_eq!(a, b, "repeat cmd_flow runs differ");
    println!("PASS criterion 11: repeated cmd_flow byte-identical ({} bytes)", a.len());
    Ok(())
}
