//! Report files and the text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spinglass_core::identity::{BetaSpec, Report};

use crate::error::{LabError, Result};
use crate::run::{beta_label, RunOutput, RunRecord, Timing};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const IDENTITIES_CSV: &str = "identities.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub runs: Vec<RunRecord>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub config_echo: serde_json::Value,
    pub reports: Vec<Report>,
    pub provenance: Provenance,
}

impl ReportFile {
    /// `echo` is the configuration as run; `workers` and `output_dir` are
    /// dropped so that the file does not depend on how it was produced.
    pub fn new(echo: serde_json::Value, out: &RunOutput) -> Self {
        let mut echo = echo;
        if let Some(map) = echo.as_object_mut() {
            map.remove("workers");
            map.remove("output_dir");
        }
        Self {
            schema_version: SCHEMA_VERSION,
            config_echo: echo,
            reports: out.reports.clone(),
            provenance: Provenance {
                crate_version: env!("CARGO_PKG_VERSION").into(),
                runs: out.records.clone(),
                warnings: out.warnings.clone(),
            },
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Writes `report.json`, `timings.json` and the CSV tables into `dir`.
pub fn write_outputs(dir: &Path, file: &ReportFile, timings: &[Timing]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    write(&dir.join(REPORT_FILE), &serde_json::to_string_pretty(file)?)?;
    write(&dir.join(TIMINGS_FILE), &serde_json::to_string_pretty(timings)?)?;
    write_identity_csv(&dir.join(IDENTITIES_CSV), &file.reports)?;
    let mut k = 0;
    for r in &file.reports {
        if let Report::Scaling(s) = r {
            let path = dir.join(format!("scan-{k:02}-{}.csv", s.identity));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["N", "value", "stderr"])?;
            for (n, v, e) in s.rows() {
                w.write_record([n.to_string(), v.to_string(), e.to_string()])?;
            }
            w.flush().map_err(|e| LabError::io(&path, e))?;
            k += 1;
        }
    }
    Ok(())
}

fn write_identity_csv(path: &Path, reports: &[Report]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "identity", "model", "N", "beta", "engine", "lhs", "rhs", "residual", "stderr", "tier", "passed",
    ])?;
    for r in reports {
        if let Report::Identity(r) = r {
            w.write_record([
                r.identity.clone(),
                r.model.family.name().into(),
                r.n_sites.to_string(),
                beta_label(&r.beta),
                r.engine.clone(),
                r.lhs.mean.to_string(),
                r.rhs.mean.to_string(),
                r.residual.to_string(),
                r.residual_stderr.to_string(),
                format!("{:?}", r.tier).to_lowercase(),
                passed(r.passed).into(),
            ])?;
        }
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

fn passed(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "-",
    }
}

fn beta_text(b: &BetaSpec) -> String {
    match b {
        BetaSpec::Fixed { beta } => format!("{beta}"),
        BetaSpec::Interval { lo, hi, .. } => format!("[{lo},{hi}]"),
    }
}

/// Plain-text table, one line per report.
pub fn summary(file: &ReportFile) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<26} {:<4} {:>6} {:>10} {:>14} {:>12} {:>14} {:>6}",
        "identity", "mdl", "N", "beta", "value", "stderr", "tier", "status"
    );
    for r in &file.reports {
        match r {
            Report::Identity(r) => {
                let _ = writeln!(
                    out,
                    "{:<26} {:<4} {:>6} {:>10} {:>14.6e} {:>12.3e} {:>14} {:>6}",
                    r.identity,
                    r.model.family.name(),
                    r.n_sites,
                    beta_text(&r.beta),
                    r.residual,
                    r.residual_stderr,
                    format!("{:?}", r.tier).to_lowercase(),
                    passed(r.passed)
                );
            }
            Report::Scaling(s) => {
                let fit = match s.fitted_exponent() {
                    Some(e) => format!("exponent {e:.3}"),
                    None => format!("slope {:.4e}", s.fit.slope),
                };
                let ns = s.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
                let _ = writeln!(
                    out,
                    "{:<26} {:<4} {:>6} {:>10} {:>27} {:>14} {:>6}",
                    s.identity,
                    s.model.family.name(),
                    "scan",
                    beta_text(&s.beta),
                    fit,
                    format!("{:?}", s.tier).to_lowercase(),
                    passed(s.passed)
                );
                let _ = writeln!(out, "{:<26} N = {ns}", "");
            }
            Report::Ultrametric(u) => {
                let v = u
                    .violation
                    .iter()
                    .map(|v| format!("{:.4}", v.mean))
                    .collect::<Vec<_>>()
                    .join(",");
                let _ = writeln!(
                    out,
                    "{:<26} {:<4} {:>6} {:>10} {:>27} {:>14} {:>6}",
                    u.identity,
                    u.model.family.name(),
                    u.n_sites,
                    format!("{}", u.beta),
                    v,
                    format!("{:?}", u.tier).to_lowercase(),
                    "-"
                );
            }
        }
    }
    for w in &file.provenance.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
