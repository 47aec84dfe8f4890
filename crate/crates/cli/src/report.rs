//! `report.json` records and CSV emission.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

/// One invariant or assumption verdict.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    /// The statement being checked, in words.
    pub paper_ref: String,
    pub pass: bool,
    /// Signed slack: nonnegative when the check holds.
    pub margin: f64,
    pub tolerance: f64,
    /// Whether a failure affects the exit code.
    pub enforced: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckRecord {
    /// Passing when `margin ≥ −tolerance`.
    pub fn from_margin(name: &str, paper_ref: &str, margin: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            paper_ref: paper_ref.into(),
            pass: margin >= -tolerance,
            margin,
            tolerance,
            enforced: true,
            seed: None,
            detail: None,
        }
    }

    pub fn failed(name: &str, paper_ref: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            paper_ref: paper_ref.into(),
            pass: false,
            margin: f64::NAN,
            tolerance: 0.0,
            enforced: true,
            seed: None,
            detail: Some(detail),
        }
    }

    pub fn advisory(mut self) -> Self {
        self.enforced = false;
        self
    }

    pub fn enforced_if(mut self, enforced: bool) -> Self {
        self.enforced = enforced;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// A suite that was requested or defaulted but could not apply.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Skipped {
    pub suite: String,
    pub reason: String,
}

/// Where a run stopped, with the module and operation that raised it.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ErrorRecord {
    pub module: String,
    pub operation: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: String,
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub strict_assumptions: bool,
    pub y0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0_standard_error: Option<f64>,
    pub checks: Vec<CheckRecord>,
    pub skipped: Vec<Skipped>,
    pub error: Option<ErrorRecord>,
    pub exit_code: i32,
}

impl Report {
    pub fn new(subcommand: &str, config: &Path, strict: bool) -> Self {
        Self {
            tool: "rbsde-lab",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.into(),
            config: config.display().to_string(),
            name: None,
            seed: None,
            backend: None,
            strict_assumptions: strict,
            y0: None,
            y0_standard_error: None,
            checks: Vec::new(),
            skipped: Vec::new(),
            error: None,
            exit_code: 0,
        }
    }

    /// Enforced checks that failed.
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.enforced && !c.pass)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header and rows; `None` cells are left empty.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Option<f64>>]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.map(fmt_f64).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.382_924_922_548_026, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1.0), "1.0");
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, &["t", "y"], &[vec![Some(0.0), Some(0.25)], vec![Some(1.0), None]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,y\n0.0,0.25\n1.0,\n");
    }

    #[test]
    fn margin_verdicts() {
        assert!(CheckRecord::from_margin("a", "", -1e-13, 1e-12).pass);
        assert!(!CheckRecord::from_margin("a", "", -1e-11, 1e-12).pass);
        assert!(!CheckRecord::from_margin("a", "", f64::NAN, 1.0).pass);
    }
}
