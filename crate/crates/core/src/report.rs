//! Deterministic CSV and summary emission.
//!
//! Every diagnostics CSV starts with a `# seed: N` comment, then a
//! header row, then one row per accepted step.  Values are written in
//! scientific decimal notation with 17 significant digits (`{:.16e}`),
//! which round-trips `f64` exactly, and lines end with a bare LF so the
//! same run produces byte-identical files on every platform.

use crate::bubbles::{threshold_s0, ConcentrationReport, ModelConstants};
use crate::error::{Error, Result};
use crate::flow::{DiagnosticsRow, DiagnosticsSeries, RunStatus};
use std::fmt::Write as _;
use std::path::Path;

/// Fixed column names of the diagnostics CSV (extra `F_q` columns are
/// appended after these).
pub const CSV_COLUMNS: [&str; 12] = [
    "t", "s", "E", "vol", "F2", "Fcrit", "minR", "maxR", "minU", "maxU", "dt_used",
    "step_accepted",
];

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a diagnostics series as CSV text, keeping every `stride`-th
/// row plus the final row.
pub fn render_csv(series: &DiagnosticsSeries, seed: u64, stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::new();
    let _ = writeln!(out, "# seed: {seed}");
    let mut header = CSV_COLUMNS.join(",");
    for q in &series.extra_fq {
        let _ = write!(header, ",F{q}");
    }
    out.push_str(&header);
    out.push('\n');
    let last = series.rows.len().saturating_sub(1);
    for (i, row) in series.rows.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        let mut cells = vec![
            fmt(row.t),
            fmt(row.s),
            fmt(row.energy),
            fmt(row.vol),
            fmt(row.f2),
            fmt(row.f_crit),
            fmt(row.min_r),
            fmt(row.max_r),
            fmt(row.min_u),
            fmt(row.max_u),
            fmt(row.dt_used),
            row.step_accepted.to_string(),
        ];
        cells.extend(row.extra.iter().map(|v| fmt(*v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Write a diagnostics CSV to `path`.
pub fn write_csv(path: &Path, series: &DiagnosticsSeries, seed: u64, stride: usize) -> Result<()> {
    std::fs::write(path, render_csv(series, seed, stride))?;
    Ok(())
}

/// A diagnostics CSV read back into memory.
#[derive(Debug, Clone)]
pub struct CsvContents {
    /// Seed recorded in the header comment.
    pub seed: u64,
    /// Extra `F_q` orders parsed from the header row.
    pub extra_fq: Vec<f64>,
    /// Parsed rows.
    pub rows: Vec<DiagnosticsRow>,
}

fn parse_cell<T: std::str::FromStr>(cell: &str, line: usize, col: &str) -> Result<T> {
    cell.parse().map_err(|_| {
        Error::Config(format!("csv line {line}: unparseable {col} value {cell:?}"))
    })
}

/// Parse CSV text emitted by [`render_csv`]; the 17-digit format makes
/// the round trip exact.
pub fn parse_csv(text: &str) -> Result<CsvContents> {
    let mut lines = text.lines().enumerate();
    let (_, seed_line) = lines
        .next()
        .ok_or_else(|| Error::Config("empty csv".into()))?;
    let seed = seed_line
        .strip_prefix("# seed: ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config("csv missing '# seed: N' header comment".into()))?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config("csv missing header row".into()))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() < CSV_COLUMNS.len() || names[..CSV_COLUMNS.len()] != CSV_COLUMNS {
        return Err(Error::Config("csv header row does not match the schema".into()));
    }
    let extra_fq = names[CSV_COLUMNS.len()..]
        .iter()
        .map(|n| {
            n.strip_prefix('F')
                .and_then(|q| q.parse().ok())
                .ok_or_else(|| Error::Config(format!("csv: unexpected extra column {n:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::Config(format!(
                "csv line {lineno}: expected {} cells, got {}",
                names.len(),
                cells.len()
            )));
        }
        let f = |i: usize| parse_cell::<f64>(cells[i], lineno, names[i]);
        rows.push(DiagnosticsRow {
            t: f(0)?,
            s: f(1)?,
            energy: f(2)?,
            vol: f(3)?,
            f2: f(4)?,
            f_crit: f(5)?,
            min_r: f(6)?,
            max_r: f(7)?,
            min_u: f(8)?,
            max_u: f(9)?,
            dt_used: f(10)?,
            step_accepted: parse_cell(cells[11], lineno, names[11])?,
            extra: (12..cells.len()).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(CsvContents {
        seed,
        extra_fq,
        rows,
    })
}

/// End-of-run summary for the plain-text report.
#[derive(Debug, Clone)]
pub struct Summary {
    pub seed: u64,
    pub status: RunStatus,
    /// Final mean curvature, energy and conformal volume of the run.
    pub final_s: f64,
    pub final_energy: f64,
    pub final_vol: f64,
    /// Whether the unit-volume `s` stayed below the one-bubble
    /// threshold `(Y_M^p + Y_sphere^p)^{1/p}`, `p = n/(2 gamma)`.
    pub below_threshold: bool,
    /// Estimated bubble count of the final factor.
    pub l_est: f64,
}

impl Summary {
    /// Assemble the summary from a finished series and its
    /// concentration report.
    pub fn new(
        seed: u64,
        series: &DiagnosticsSeries,
        c: &ModelConstants,
        conc: &ConcentrationReport,
    ) -> Self {
        let last = series.rows.last().expect("series has rows");
        Summary {
            seed,
            status: series.status.clone(),
            final_s: last.s,
            final_energy: last.energy,
            final_vol: last.vol,
            below_threshold: conc.s_fin < threshold_s0(c, conc.e_background),
            l_est: conc.l_est,
        }
    }

    /// Render as `key: value` lines.
    pub fn render(&self) -> String {
        let status = match self.status {
            RunStatus::Converged => "converged",
            RunStatus::ReachedEnd => "reached_t_end",
        };
        format!(
            "seed: {}\nstatus: {}\nfinal_s: {}\nfinal_E: {}\nfinal_vol: {}\nbelow_threshold: {}\nL_est: {}\n",
            self.seed,
            status,
            fmt(self.final_s),
            fmt(self.final_energy),
            fmt(self.final_vol),
            self.below_threshold,
            fmt(self.l_est),
        )
    }

    /// Write the summary report to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, RunOptions};
    use crate::geometry::{Geometry, SpectralField};
    use std::f64::consts::TAU;

    fn short_series() -> DiagnosticsSeries {
        let g = Geometry::torus(1, TAU, 16, 0.3).unwrap();
        let mut coeffs = vec![0.0; g.basis_len()];
        coeffs[0] = g.background_volume().sqrt();
        coeffs[1] = 0.1 * (g.background_volume() / 2.0).sqrt();
        let u0 = SpectralField::from_coeffs(&g, coeffs).unwrap();
        let opts = RunOptions {
            t_end: 0.05,
            extra_fq: vec![1.5],
            ..Default::default()
        };
        run(&g, &u0, &opts).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let series = short_series();
        let text = render_csv(&series, 42, 1);
        assert!(text.starts_with("# seed: 42\n"));
        assert!(!text.contains('\r'));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.extra_fq, series.extra_fq);
        assert_eq!(back.rows.len(), series.rows.len());
        for (a, b) in back.rows.iter().zip(series.rows.iter()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.s, b.s);
            assert_eq!(a.energy, b.energy);
            assert_eq!(a.vol, b.vol);
            assert_eq!(a.f2, b.f2);
            assert_eq!(a.f_crit, b.f_crit);
            assert_eq!(a.min_r, b.min_r);
            assert_eq!(a.max_r, b.max_r);
            assert_eq!(a.min_u, b.min_u);
            assert_eq!(a.max_u, b.max_u);
            assert_eq!(a.dt_used, b.dt_used);
            assert_eq!(a.step_accepted, b.step_accepted);
            assert_eq!(a.extra, b.extra);
        }
    }

    #[test]
    fn stride_keeps_the_final_row() {
        let series = short_series();
        let text = render_csv(&series, 7, 10);
        let back = parse_csv(&text).unwrap();
        let last = series.rows.last().unwrap();
        assert_eq!(back.rows.last().unwrap().t, last.t);
        assert!(back.rows.len() <= series.rows.len() / 10 + 2);
    }

    #[test]
    fn summary_renders_key_value_lines() {
        let series = short_series();
        let c = ModelConstants::new(1, 0.3).unwrap();
        let conc = crate::bubbles::detect_concentration_or_background(
            series.final_u.geometry(),
            &series.final_u,
            &c,
        )
        .unwrap();
        let s = Summary::new(42, &series, &c, &conc);
        let text = s.render();
        for key in [
            "seed:",
            "status:",
            "final_s:",
            "final_E:",
            "final_vol:",
            "below_threshold:",
            "L_est:",
        ] {
            assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
        }
    }
}
