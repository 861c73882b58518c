//! Result files. Curves share one CSV schema:
//!
//! ```text
//! series,x,ser,errors,trials,ci_low,ci_high
//! ```
//!
//! one row per point, `ci_*` the 95% Clopper-Pearson bounds. Threshold tables
//! use `distance,concentration,tau1,tau2,tau3` (`tau2`, `tau3` empty for
//! binary CSK).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mcrelay_core::{SerCurve, Thresholds};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const CSV_SCHEMA_VERSION: i64 = 1;
pub const CURVE_HEADER: &str = "series,x,ser,errors,trials,ci_low,ci_high";
pub const THRESHOLD_HEADER: &str = "distance,concentration,tau1,tau2,tau3";

pub fn curves_csv(curves: &[SerCurve]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for c in curves {
        assert!(!c.series.contains([',', '"', '\n']), "series names are plain labels");
        for p in &c.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.series,
                p.x,
                p.ser(),
                p.errors,
                p.trials,
                p.ci_low,
                p.ci_high
            ));
        }
    }
    out
}

pub fn thresholds_csv(rows: &[(f64, u64, Thresholds)]) -> String {
    let mut out = String::from(THRESHOLD_HEADER);
    out.push('\n');
    for (d, n, t) in rows {
        let taus: Vec<String> = (0..3)
            .map(|i| t.as_slice().get(i).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        out.push_str(&format!("{d},{n},{}\n", taus.join(",")));
    }
    out
}

/// One parsed curve row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub series: String,
    pub x: f64,
    pub ser: f64,
    pub errors: u64,
    pub trials: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CurveRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVE_HEADER => {}
        Some(h) => return Err(format!("unexpected header {h:?}, expected {CURVE_HEADER:?}")),
        None => return Err("empty file".into()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("line {}: expected 7 fields, found {}", i + 2, f.len()));
            }
            let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| format!("line {}: field {}: {e}", i + 2, k + 1));
            let int = |k: usize| f[k].trim().parse::<u64>().map_err(|e| format!("line {}: field {}: {e}", i + 2, k + 1));
            Ok(CurveRow {
                series: f[0].to_string(),
                x: num(1)?,
                ser: num(2)?,
                errors: int(3)?,
                trials: int(4)?,
                ci_low: num(5)?,
                ci_high: num(6)?,
            })
        })
        .collect()
}

pub fn config_digest(config: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(config.to_toml().as_bytes()))
}

/// Resolved configuration followed by a `[manifest]` run record. The file
/// loads back as a configuration.
pub fn manifest_toml(config: &ExperimentConfig, subcommand: &str, outputs: &[String], results: toml::Table) -> String {
    let mut m = toml::Table::new();
    m.insert("schema_version".into(), CSV_SCHEMA_VERSION.into());
    m.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    m.insert("subcommand".into(), subcommand.into());
    m.insert("config_digest".into(), config_digest(config).into());
    m.insert("seed".into(), toml::Value::String(config.seed.to_string()));
    m.insert(
        "outputs".into(),
        toml::Value::Array(outputs.iter().map(|o| toml::Value::String(o.clone())).collect()),
    );
    m.insert("results".into(), toml::Value::Table(results));
    let mut wrapper = toml::Table::new();
    wrapper.insert("manifest".into(), toml::Value::Table(m));
    format!("{}\n{}", config.to_toml(), toml::to_string(&wrapper).expect("manifest serializes"))
}

/// Writes every file to a temporary sibling first and renames it into place.
pub fn write_all_atomic(dir: &Path, files: &[(String, String)]) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dst) in &staged {
        fs::rename(tmp, dst)?;
    }
    Ok(staged.into_iter().map(|(_, d)| d).collect())
}
