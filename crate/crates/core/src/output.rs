//! File formats: CSV tables with a versioned comment line, and legacy VTK
//! snapshots.
//!
//! Floats are written in Rust's shortest round-trip exponent form, so files
//! are byte-stable and reading them back reproduces the values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::{energy_is_monitor_only, DiagnosticsRecord};
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::solver::ModelConfig;

pub const DIAGNOSTICS_VERSION: u32 = 1;
pub const DIAGNOSTICS_COLUMNS: &str = "step,t,mass,energy,dissipation,u_min,u_max,a_x,iterations,residual";
pub const LEVEL_SET_COLUMNS: &str = "index,x,y";
pub const TRAJECTORY_COLUMNS: &str = "t,index,x,y";
pub const SHARP_AX_COLUMNS: &str = "t,a_x,a_y,area,perimeter";

/// Shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// First line of a diagnostics file.
pub fn diagnostics_preamble(config: &ModelConfig) -> String {
    let energy = if energy_is_monitor_only(config.kind) {
        "monitor-only"
    } else {
        "dissipated"
    };
    format!(
        "# surfdiff diagnostics v{DIAGNOSTICS_VERSION} model={} p={} epsilon={} alpha={} tau={} energy={energy}",
        config.kind,
        fmt_f64(config.p),
        fmt_f64(config.epsilon),
        fmt_f64(config.alpha),
        fmt_f64(config.tau),
    )
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.step,
        fmt_f64(r.t),
        fmt_f64(r.mass),
        fmt_f64(r.energy),
        fmt_f64(r.dissipation),
        fmt_f64(r.u_min),
        fmt_f64(r.u_max),
        fmt_opt(r.a_x),
        r.iterations,
        fmt_f64(r.residual),
    )
}

/// Streams diagnostics rows; every row is flushed so a failing run leaves a
/// complete prefix on disk.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, config: &ModelConfig) -> Result<Self> {
        let mut out = create(path)?;
        writeln!(out, "{}", diagnostics_preamble(config))?;
        writeln!(out, "{DIAGNOSTICS_COLUMNS}")?;
        Ok(DiagnosticsWriter { out })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", diagnostics_row(record))?;
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a diagnostics file back into records.
pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: 1,
        message: msg.to_string(),
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == DIAGNOSTICS_COLUMNS => {}
        Some((i, _)) => return Err(bad(i + 1, "unexpected header")),
        None => return Err(bad(1, "missing header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad(i + 1, "expected 10 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad integer"));
        out.push(DiagnosticsRecord {
            step: int(f[0])?,
            t: num(f[1])?,
            mass: num(f[2])?,
            energy: num(f[3])?,
            dissipation: num(f[4])?,
            u_min: num(f[5])?,
            u_max: num(f[6])?,
            a_x: if f[7].is_empty() { None } else { Some(num(f[7])?) },
            iterations: int(f[8])?,
            residual: num(f[9])?,
        });
    }
    Ok(out)
}

/// Legacy ASCII VTK structured-points snapshot with point scalars `u` and `w`
/// sampled at the cell centers.
pub fn write_vtk(path: &Path, u: &ScalarField, w: &ScalarField, step: usize, t: f64) -> Result<()> {
    if u.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    let g = u.grid();
    let mut out = create(path)?;
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "surfdiff snapshot step={step} t={}", fmt_f64(t))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} 1", g.nx, g.ny)?;
    let c = g.center(0, 0);
    writeln!(out, "ORIGIN {} {} 0", fmt_f64(c[0]), fmt_f64(c[1]))?;
    writeln!(out, "SPACING {} {} 1", fmt_f64(g.hx()), fmt_f64(g.hy()))?;
    writeln!(out, "POINT_DATA {}", g.len())?;
    for (name, field) in [("u", u), ("w", w)] {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in field.values() {
            writeln!(out, "{}", fmt_f64(*v))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads the named scalar from a snapshot written by [`write_vtk`].
pub fn read_vtk_scalar(path: &Path, name: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: msg.to_string(),
    };
    let count: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("POINT_DATA "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad("missing POINT_DATA"))?;
    let mut lines = text.lines();
    let header = format!("SCALARS {name} double 1");
    lines
        .by_ref()
        .find(|l| *l == header)
        .ok_or_else(|| bad("scalar not found"))?;
    lines.next();
    lines
        .take(count)
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad value")))
        .collect()
}

pub fn write_level_set(path: &Path, curve: &Curve, level: f64, step: usize, t: f64) -> Result<()> {
    let mut out = create(path)?;
    writeln!(
        out,
        "# surfdiff levelset v1 level={} step={step} t={}",
        fmt_f64(level),
        fmt_f64(t)
    )?;
    writeln!(out, "{LEVEL_SET_COLUMNS}")?;
    for (k, p) in curve.points().iter().enumerate() {
        writeln!(out, "{k},{},{}", fmt_f64(p[0]), fmt_f64(p[1]))?;
    }
    out.flush()?;
    Ok(())
}

/// One observation of the sharp-interface curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpSample {
    pub t: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub area: f64,
    pub perimeter: f64,
}

impl SharpSample {
    pub fn of(t: f64, curve: &Curve) -> Self {
        let c = curve.centroid();
        let (mut ax, mut ay) = (0.0f64, 0.0f64);
        for p in curve.points() {
            ax = ax.max((p[0] - c[0]).abs());
            ay = ay.max((p[1] - c[1]).abs());
        }
        SharpSample {
            t,
            a_x: ax,
            a_y: ay,
            area: curve.area(),
            perimeter: curve.perimeter(),
        }
    }
}

pub fn write_sharp_ax(path: &Path, samples: &[SharpSample]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# surfdiff sharp v1")?;
    writeln!(out, "{SHARP_AX_COLUMNS}")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.a_x),
            fmt_f64(s.a_y),
            fmt_f64(s.area),
            fmt_f64(s.perimeter)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Appends one curve to a trajectory file.
pub(crate) fn write_trajectory_rows<W: Write>(out: &mut W, t: f64, curve: &Curve) -> Result<()> {
    let ts = fmt_f64(t);
    for (k, p) in curve.points().iter().enumerate() {
        writeln!(out, "{ts},{k},{},{}", fmt_f64(p[0]), fmt_f64(p[1]))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::solver::ModelKind;

    fn record(step: usize, a_x: Option<f64>) -> DiagnosticsRecord {
        DiagnosticsRecord {
            step,
            t: step as f64 * 2e-6,
            mass: 1.234_567_890_123_456_7,
            energy: 4.84,
            dissipation: 0.1 + 1e-17,
            u_min: -1e-300,
            u_max: 0.9999,
            a_x,
            iterations: 55,
            residual: 3.2e-10,
        }
    }

    #[test]
    fn diagnostics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let cfg = ModelConfig::new(ModelKind::NV, 0.2, 1.0).unwrap();
        let mut w = DiagnosticsWriter::create(&path, &cfg).unwrap();
        let recs = [record(0, Some(0.9998)), record(1, None)];
        for r in &recs {
            w.write(r).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(read_diagnostics(&path).unwrap(), recs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().ends_with("energy=monitor-only"));
    }

    #[test]
    fn vtk_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vtk");
        let g = GridSpec::centered_square(9, 4.0).unwrap();
        let u = ScalarField::from_fn(g, |x, y| (x * 1.3).sin() * y.exp() / 3.0);
        let w = u.map(|v| -v * 1e-9);
        write_vtk(&path, &u, &w, 3, 6e-6).unwrap();
        assert_eq!(read_vtk_scalar(&path, "u").unwrap(), u.values());
        assert_eq!(read_vtk_scalar(&path, "w").unwrap(), w.values());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DIMENSIONS 9 9 1"));
        assert!(text.contains("POINT_DATA 81"));
    }

    #[test]
    fn shortest_float_format() {
        assert_eq!(fmt_f64(2e-6), "2e-6");
        assert_eq!(fmt_f64(0.1), "1e-1");
        assert_eq!(fmt_f64(-3.25), "-3.25e0");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}
