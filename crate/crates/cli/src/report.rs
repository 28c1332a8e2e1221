//! Report bundle and CSV tables, and where they land on disk.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::config::RunConfig;
use crate::pipeline::Certificate;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Write { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// resolution pair behind each section's numbers
    pub resolutions: BTreeMap<String, [usize; 2]>,
    /// file names of the CSV tables written next to the bundle
    pub tables: Vec<String>,
    /// seconds per section; only present when requested, since it breaks
    /// byte-identical reruns
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub config: RunConfig,
    pub sections: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
}

impl ReportBundle {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Self {
            provenance: Provenance {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                resolutions: BTreeMap::new(),
                tables: Vec::new(),
                wall_clock: None,
            },
            config,
            sections: BTreeMap::new(),
            certificate: None,
        }
    }

    pub fn add(&mut self, name: &str, resolutions: [usize; 2], section: &impl Serialize) {
        let v = serde_json::to_value(section).expect("sections serialize");
        self.provenance.resolutions.insert(name.to_string(), resolutions);
        self.sections.insert(name.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes") + "\n"
    }
}

pub fn save_report(bundle: &ReportBundle, path: &Path) -> Result<(), ReportError> {
    fs::write(path, bundle.to_json()).map_err(|e| write_err(path, e))
}

/// Named numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
        w.write_record(&self.header).map_err(|e| write_err(path, e))?;
        for row in &self.rows {
            // shortest round-trip formatting keeps reruns byte-identical
            w.write_record(row.iter().map(|x| x.to_string())).map_err(|e| write_err(path, e))?;
        }
        w.flush().map_err(|e| write_err(path, e))
    }
}

/// Resolved destinations for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPlan {
    /// `None` prints the bundle to stdout
    pub bundle: Option<PathBuf>,
    pub tables: Vec<PathBuf>,
}

/// `--out x.csv`: first table there, others at `x_<name>.csv`, bundle at
/// `x.json`. `--out x.json`: bundle there, tables at `x_<name>.csv`.
/// Any other path is a directory holding `bundle.json` and `<name>.csv`.
/// Without `--out` only the bundle is produced, on stdout.
pub fn plan_outputs(out: Option<&Path>, tables: &[Table]) -> OutputPlan {
    let Some(out) = out else {
        return OutputPlan { bundle: None, tables: Vec::new() };
    };
    let ext = out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let sibling = |suffix: &str| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}{suffix}"))
    };
    match ext.as_deref() {
        Some("csv") => OutputPlan {
            bundle: Some(out.with_extension("json")),
            tables: tables
                .iter()
                .enumerate()
                .map(|(k, t)| if k == 0 { out.to_path_buf() } else { sibling(&format!("_{}.csv", t.name)) })
                .collect(),
        },
        Some("json") => {
            OutputPlan { bundle: Some(out.to_path_buf()), tables: tables.iter().map(|t| sibling(&format!("_{}.csv", t.name))).collect() }
        }
        _ => OutputPlan {
            bundle: Some(out.join("bundle.json")),
            tables: tables.iter().map(|t| out.join(format!("{}.csv", t.name))).collect(),
        },
    }
}

/// Writes the tables and the bundle according to [`plan_outputs`].
pub fn emit(bundle: &mut ReportBundle, tables: &[Table], out: Option<&Path>) -> Result<OutputPlan, ReportError> {
    let plan = plan_outputs(out, tables);
    if let Some(b) = &plan.bundle {
        if let Some(dir) = b.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
        }
    }
    for (t, path) in tables.iter().zip(&plan.tables) {
        t.write_csv(path)?;
    }
    bundle.provenance.tables =
        plan.tables.iter().map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    match &plan.bundle {
        Some(path) => save_report(bundle, path)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bundle.to_json().as_bytes()).map_err(|e| write_err(Path::new("<stdout>"), e))?;
        }
    }
    Ok(plan)
}
