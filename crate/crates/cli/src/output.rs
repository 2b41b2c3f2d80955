//! Run reports and output files. Every file is written to a temporary sibling
//! and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{Map, Value};

use scatter_core::em::{CVec3, Point};
use scatter_core::ensemble::RegimeReport;
use scatter_core::linalg::SolveReport;

#[derive(Debug, Clone, Serialize)]
pub struct InputEcho {
    pub scene_path: String,
    /// The scene file exactly as read.
    pub scene_text: Option<String>,
    pub arguments: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub input: InputEcho,
    pub threads: usize,
    pub regime: Option<RegimeReport>,
    pub solver: Option<SolveReport>,
    pub diagnostics: Map<String, Value>,
    pub timings: Vec<Timing>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(subcommand: &str, input: InputEcho, threads: usize) -> Self {
        Self {
            subcommand: subcommand.into(),
            status: "running".into(),
            exit_code: 0,
            error: None,
            input,
            threads,
            regime: None,
            solver: None,
            diagnostics: Map::new(),
            timings: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        self.diagnostics
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Output directory plus the manifest of what has been written to it.
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, report: &mut RunReport, name: &str, contents: &[u8]) -> anyhow::Result<()> {
        write_atomic(&self.root.join(name), contents)?;
        report.outputs.push(name.into());
        Ok(())
    }

    pub fn write_report(&self, report: &RunReport) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        write_atomic(&self.root.join("report.json"), text.as_bytes())
    }
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write into {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot move output into place at {}", path.display()))?;
    Ok(())
}

/// 17 significant digits, so values round-trip exactly.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn complex_cols(c: Complex64) -> [String; 2] {
    [num(c.re), num(c.im)]
}

/// Columns `re_<p>x, im_<p>x, …` for a complex vector named `p`.
pub fn vector_header(p: &str) -> Vec<String> {
    ["x", "y", "z"]
        .iter()
        .flat_map(|c| [format!("re_{p}{c}"), format!("im_{p}{c}")])
        .collect()
}

/// Fixed-format CSV: one row per point with the point coordinates and the
/// real/imaginary parts of each attached vector.
pub fn vector_csv(names: &[&str], points: &[Point], columns: &[&[CVec3]]) -> String {
    let mut header = vec!["x".to_string(), "y".into(), "z".into()];
    for n in names {
        header.extend(vector_header(n));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| num(*v)).collect();
        for col in columns {
            for c in col[i].iter() {
                row.extend(complex_cols(*c));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Plain numeric table with a given header.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02e23, 5e-324, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn vector_csv_layout() {
        let p = [Point::new(1.0, 2.0, 3.0)];
        let v = [CVec3::new(Complex64::new(1.0, -1.0), Complex64::new(0.0, 0.0), Complex64::new(0.5, 2.0))];
        let csv = vector_csv(&["E"], &p, &[&v]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,z,re_Ex,im_Ex,re_Ey,im_Ey,re_Ez,im_Ez");
        assert_eq!(lines[1].split(',').count(), 9);
        assert_eq!(lines[1].split(',').nth(4).unwrap().parse::<f64>().unwrap(), -1.0);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
