//! CSV serialization with an exact floating-point round trip.
//!
//! All files are plain CSV. Floats are rendered in the shortest of the
//! fixed/scientific styles at a configurable number of significant
//! digits (the `%g` convention); at the default 17 digits the decimal
//! string identifies the `f64` uniquely, so reading a file back
//! reproduces the in-memory values bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::closure;
use crate::convexity::CheckRecord;
use crate::kbkz::{self, KbkzGrid, KbkzParams};
use crate::solver::{Grid1D, StepDiagnostics};
use crate::state::{self, Material};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    /// A cell could not be rendered because its state is outside the
    /// admissible set; callers map this to the inadmissibility exit path.
    #[error("inadmissible cell {index}: {reason}")]
    Inadmissible { index: usize, reason: String },
}

fn inadmissible(index: usize, err: impl std::fmt::Display) -> OutputError {
    OutputError::Inadmissible {
        index,
        reason: err.to_string(),
    }
}

/// Render `x` with `precision` significant digits, fixed or scientific
/// style by the usual `%g` rule (scientific iff the decimal exponent is
/// below -4 or at least `precision`), trailing zeros trimmed.
pub fn format_g(x: f64, precision: usize) -> String {
    let p = precision.clamp(1, 17);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x < 0.0 { "-inf".into() } else { "inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Decimal exponent of x after rounding to p significant digits.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= p as i32 {
        let mantissa = trim_zeros(mantissa);
        let (sign, abs) = if exp < 0 { ('-', -exp) } else { ('+', exp) };
        format!("{mantissa}e{sign}{abs:02}")
    } else {
        let frac = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.frac$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn push_row(out: &mut String, values: &[f64], precision: usize) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_g(*v, precision));
    }
    out.push('\n');
}

/// Column layout shared by both models; the two-network model writes its
/// first family's deformation and conformation fields.
pub const SNAPSHOT_HEADER: &str = "x,rho,eta,q1,q2,q3,v1,v2,v3,\
F11,F12,F13,F21,F22,F23,F31,F32,F33,\
Y11,Y12,Y13,Y22,Y23,Y33,detY,theta,p,sigma";

const SNAPSHOT_COLUMNS: usize = 28;

fn snapshot_body(rows: Vec<Vec<f64>>, precision: usize) -> String {
    let mut out = String::with_capacity(rows.len() * SNAPSHOT_COLUMNS * 12);
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), SNAPSHOT_COLUMNS);
        push_row(&mut out, &row, precision);
    }
    out
}

pub fn write_snapshot(
    path: &Path,
    grid: &Grid1D,
    mat: &Material,
    precision: usize,
) -> Result<(), OutputError> {
    let mut rows = Vec::with_capacity(grid.n());
    for (i, u) in grid.states.iter().enumerate() {
        let pv = state::to_primitive(u, mat).map_err(|e| inadmissible(i, e))?;
        let sigma = closure::entropy_production(&pv, mat).map_err(|e| inadmissible(i, e))?;
        let mut row = Vec::with_capacity(SNAPSHOT_COLUMNS);
        row.push(grid.cell_center(i));
        row.push(pv.rho);
        row.push(pv.eta);
        row.extend_from_slice(&pv.q);
        row.extend_from_slice(&pv.v);
        row.extend_from_slice(&pv.f.e);
        row.extend_from_slice(&pv.y.e);
        row.push(pv.dety);
        row.push(pv.theta);
        row.push(pv.p);
        row.push(sigma);
        rows.push(row);
    }
    fs::write(path, snapshot_body(rows, precision))?;
    Ok(())
}

pub fn write_snapshot_kbkz(
    path: &Path,
    grid: &KbkzGrid,
    params: &KbkzParams,
    mat: &Material,
    precision: usize,
) -> Result<(), OutputError> {
    let mut rows = Vec::with_capacity(grid.n());
    for (i, u) in grid.states.iter().enumerate() {
        let pv = kbkz::to_primitive(u, params, mat).map_err(|e| inadmissible(i, e))?;
        let sigma = kbkz::entropy_production(&pv, params, mat).map_err(|e| inadmissible(i, e))?;
        let mut row = Vec::with_capacity(SNAPSHOT_COLUMNS);
        row.push(grid.cell_center(i));
        row.push(pv.rho);
        row.push(pv.eta);
        row.extend_from_slice(&pv.q);
        row.extend_from_slice(&pv.v);
        row.extend_from_slice(&pv.f.e);
        row.extend_from_slice(&pv.y1.e);
        row.push(pv.dety1);
        row.push(pv.theta);
        row.push(pv.p);
        row.push(sigma);
        rows.push(row);
    }
    fs::write(path, snapshot_body(rows, precision))?;
    Ok(())
}

pub const DIAGNOSTICS_HEADER: &str = "step,time,dt,mass,momentum1,momentum2,momentum3,\
energy,math_entropy,entropy,entropy_production,\
max_residual_dety,max_residual_rho_f,min_theta,min_eig_y";

/// Streaming writer for the per-step diagnostics table.
pub struct DiagnosticsWriter {
    out: BufWriter<fs::File>,
    precision: usize,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, precision: usize) -> std::io::Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{DIAGNOSTICS_HEADER}")?;
        Ok(DiagnosticsWriter { out, precision })
    }

    pub fn append(&mut self, step: usize, d: &StepDiagnostics) -> std::io::Result<()> {
        let mut line = String::new();
        line.push_str(&step.to_string());
        line.push(',');
        let values = [
            d.time,
            d.dt,
            d.mass,
            d.momentum[0],
            d.momentum[1],
            d.momentum[2],
            d.energy,
            d.math_entropy,
            d.entropy,
            d.entropy_production,
            d.max_residual_dety,
            d.max_residual_rho_f,
            d.min_theta,
            d.min_eig_y,
        ];
        push_row(&mut line, &values, self.precision);
        self.out.write_all(line.as_bytes())
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub const TRAJECTORY_HEADER: &str = "time,theta,trC,stress_norm,sigma,ydetY";

/// Homogeneous-relaxation trajectory table: one row per sample time.
pub fn write_trajectory(
    path: &Path,
    rows: &[[f64; 6]],
    precision: usize,
) -> std::io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 6 * 12);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for row in rows {
        push_row(&mut out, row, precision);
    }
    fs::write(path, out)
}

pub const REPORT_HEADER: &str = "label,samples,worst,pass";

/// Verification-report table: one row per check record.
pub fn write_report(path: &Path, records: &[CheckRecord], precision: usize) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for r in records {
        debug_assert!(!r.label.contains(','), "labels must stay comma-free");
        out.push_str(&r.label);
        out.push(',');
        out.push_str(&r.samples.to_string());
        out.push(',');
        out.push_str(&format_g(r.worst, precision));
        out.push(',');
        out.push_str(if r.pass { "true" } else { "false" });
        out.push('\n');
    }
    fs::write(path, out)
}

/// Read a purely numeric CSV produced by this module back into memory.
/// Returns the header fields and one `f64` vector per data row.
pub fn read_csv(path: &Path) -> std::io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "empty CSV"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.parse().map_err(|_| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("row {}: not a number: `{field}`", i + 1),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seventeen_digit_output_round_trips_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cases: Vec<f64> = vec![
            0.0,
            -0.0,
            0.1,
            1.0 / 3.0,
            -2.5e-10,
            1e300,
            -1e-300,
            5e-324,
            f64::MAX,
            f64::MIN_POSITIVE,
            1e17,
            123456789.123456789,
        ];
        for _ in 0..5000 {
            let mantissa: f64 = rng.gen_range(-1.0..1.0);
            let exp: i32 = rng.gen_range(-307..308);
            cases.push(mantissa * 10f64.powi(exp));
        }
        for x in cases {
            let s = format_g(x, 17);
            let back: f64 = s.parse().expect("parse back");
            assert_eq!(back.to_bits(), x.to_bits(), "{x:e} -> {s} -> {back:e}");
        }
    }

    #[test]
    fn g_style_matches_the_reference_fixtures() {
        // (value, precision, expected) checked against the C library's %.*g.
        let fixtures: &[(f64, usize, &str)] = &[
            (0.0001, 6, "0.0001"),
            (0.00001, 6, "1e-05"),
            (123456789.0, 6, "1.23457e+08"),
            (1234.5, 6, "1234.5"),
            (100.0, 6, "100"),
            (-2.5e-10, 3, "-2.5e-10"),
            (1e17, 17, "1e+17"),
            (0.1, 17, "0.10000000000000001"),
            (2.5, 1, "2"),
            (3.5, 1, "4"),
            (9.999999e5, 6, "1e+06"),
            (0.0, 6, "0"),
        ];
        for &(x, p, want) in fixtures {
            assert_eq!(format_g(x, p), want, "value {x:e} at precision {p}");
        }
    }

    #[test]
    fn snapshot_files_round_trip_and_are_quiescent_at_equilibrium() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config("[grid]\nn = 6\n[ic]\ntheta = 1.25\n").unwrap();
        let grid = cfg.initial_grid().unwrap();
        let path = dir.path().join("snapshot_0.csv");
        write_snapshot(&path, &grid, &cfg.material, 17).unwrap();

        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header.join(","), SNAPSHOT_HEADER);
        assert_eq!(rows.len(), 6);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 28);
            assert_eq!(row[0], grid.cell_center(i), "x column");
            assert_eq!(row[1], 1.0, "density column");
            let pv = state::to_primitive(&grid.states[i], &cfg.material).unwrap();
            assert_eq!(row[2], pv.eta, "entropy column survives the round trip");
            assert_eq!(row[24], pv.dety, "detY column carries the evolved variable");
            assert_eq!(row[25], pv.theta);
            assert_eq!(row[27], 0.0, "equilibrium has zero entropy production");
        }
    }

    #[test]
    fn kbkz_snapshots_write_first_family_fields_under_the_same_header() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config("[model]\nmodel = kbkz\n[grid]\nn = 4\n").unwrap();
        let grid = cfg.initial_grid_kbkz().unwrap();
        let path = dir.path().join("snapshot_0.csv");
        write_snapshot_kbkz(&path, &grid, &cfg.kbkz_params, &cfg.material, 17).unwrap();

        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header.join(","), SNAPSHOT_HEADER);
        let pv = kbkz::to_primitive(&grid.states[0], &cfg.kbkz_params, &cfg.material).unwrap();
        assert_eq!(rows[0][9], pv.f.get(0, 0), "F11 column");
        assert_eq!(rows[0][18], pv.y1.get(0, 0), "Y11 column is the first family");
        assert_eq!(rows[0][24], pv.dety1);
    }

    #[test]
    fn diagnostics_rows_append_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diagnostics.csv");
        let mut w = DiagnosticsWriter::create(&path, 17).unwrap();
        let mut d = StepDiagnostics {
            time: 0.0,
            dt: 0.0,
            mass: 1.5,
            momentum: [0.1, 0.0, -0.2],
            energy: 2.25,
            math_entropy: -0.5,
            entropy: 0.75,
            entropy_production: 0.0,
            max_residual_dety: 1e-16,
            max_residual_rho_f: 0.0,
            min_theta: 1.0,
            min_eig_y: 0.9,
        };
        w.append(0, &d).unwrap();
        d.time = 0.125;
        d.dt = 0.125;
        w.append(1, &d).unwrap();
        w.finish().unwrap();

        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header.join(","), DIAGNOSTICS_HEADER);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][0], 0.0);
        assert_eq!(rows[1][0], 1.0);
        assert_eq!(rows[1][1], 0.125);
        assert_eq!(rows[0][3], 1.5);
        assert_eq!(rows[1].len(), 15);
    }

    #[test]
    fn trajectory_and_report_tables_have_their_documented_headers() {
        let dir = tempfile::tempdir().unwrap();
        let tpath = dir.path().join("trajectory.csv");
        write_trajectory(&tpath, &[[0.0, 1.0, 6.0, 0.5, 0.25, 1.0]], 17).unwrap();
        let (theader, trows) = read_csv(&tpath).unwrap();
        assert_eq!(theader.join(","), TRAJECTORY_HEADER);
        assert_eq!(trows[0][2], 6.0);

        let rpath = dir.path().join("report.csv");
        let records = vec![CheckRecord {
            label: "demo check".into(),
            samples: 10,
            worst: 0.125,
            pass: true,
        }];
        write_report(&rpath, &records, 17).unwrap();
        let text = fs::read_to_string(&rpath).unwrap();
        assert_eq!(text, "label,samples,worst,pass\ndemo check,10,0.125,true\n");
    }
}
