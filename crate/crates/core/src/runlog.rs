//! Run manifests, per-theorem run logs and batch summaries.
//!
//! A run directory holds `manifest.json`, `runs.jsonl` (one [`RunRecord`] per
//! theorem, in input order) and `logs/<theorem>.jsonl` (one line per search
//! layer, then the final record). Nothing time-dependent is written, so
//! identical inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::prompt::{InfoConfiguration, TEMPLATE_VERSION};
use crate::search::{Outcome, ProofResult, SearchParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub template_version: String,
    pub seed: u64,
    pub info_config: InfoConfiguration,
    pub backend: String,
    pub gateway: String,
    pub params: SearchParams,
    pub entities: Option<String>,
    pub proofs: Option<String>,
    pub theorems: Vec<String>,
}

impl RunManifest {
    pub fn new(seed: u64, info_config: InfoConfiguration, backend: &str, gateway: &str, params: &SearchParams) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            template_version: TEMPLATE_VERSION.to_string(),
            seed,
            info_config,
            backend: backend.to_string(),
            gateway: gateway.to_string(),
            params: params.clone(),
            entities: None,
            proofs: None,
            theorems: Vec::new(),
        }
    }
}

/// Outcome of one theorem, as stored in `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub theorem: String,
    pub config: InfoConfiguration,
    /// `proved`, `failure`, `budget_exhausted` or `error`.
    pub outcome: String,
    pub depth: usize,
    pub evaluations: usize,
    #[serde(default)]
    pub trace: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn from_result(theorem: &str, config: InfoConfiguration, result: &ProofResult) -> Self {
        RunRecord {
            theorem: theorem.to_string(),
            config,
            outcome: result.outcome_label().to_string(),
            depth: result.depth_reached,
            evaluations: result.tactic_evaluations_used,
            trace: match &result.outcome {
                Outcome::Proved(t) => t.iter().map(|e| e.tactic.clone()).collect(),
                _ => Vec::new(),
            },
            error: None,
        }
    }

    pub fn from_error(theorem: &str, config: InfoConfiguration, error: &str) -> Self {
        RunRecord {
            theorem: theorem.to_string(),
            config,
            outcome: "error".into(),
            depth: 0,
            evaluations: 0,
            trace: Vec::new(),
            error: Some(error.to_string()),
        }
    }

    pub fn proved(&self) -> bool {
        self.outcome == "proved"
    }
}

/// File-name-safe version of a theorem name.
pub fn log_file_name(theorem: &str) -> String {
    let safe: String =
        theorem.chars().map(|c| if c.is_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect();
    format!("{safe}.jsonl")
}

/// Layer lines followed by the final record.
pub fn write_run_log<W: Write>(mut out: W, record: &RunRecord, result: Option<&ProofResult>) -> std::io::Result<()> {
    if let Some(result) = result {
        for layer in &result.layers {
            serde_json::to_writer(&mut out, &serde_json::json!({ "layer": layer }))?;
            writeln!(out)?;
        }
    }
    serde_json::to_writer(&mut out, &serde_json::json!({ "result": record }))?;
    writeln!(out)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> std::io::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    std::fs::write(path, text)
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no run summaries found under {0}")]
    Empty(String),
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Every `runs.jsonl` under `path` (or `path` itself if it is a file).
pub fn find_run_files(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(path)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let p = entry.path();
        if p.is_dir() {
            out.extend(find_run_files(&p)?);
        } else if p.file_name().is_some_and(|n| n == "runs.jsonl") {
            out.push(p);
        }
    }
    Ok(out)
}

pub fn load_records(paths: &[PathBuf]) -> Result<Vec<RunRecord>, ReportError> {
    let mut files = Vec::new();
    for p in paths {
        files.extend(find_run_files(p)?);
    }
    let mut out = Vec::new();
    for file in &files {
        for (i, line) in BufReader::new(std::fs::File::open(file)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: RunRecord = serde_json::from_str(&line).map_err(|e| ReportError::Format {
                path: file.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(record);
        }
    }
    if out.is_empty() {
        let shown: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        return Err(ReportError::Empty(shown.join(", ")));
    }
    Ok(out)
}

/// Per-configuration aggregate of run records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: InfoConfiguration,
    pub runs: usize,
    pub proved: usize,
    pub success_rate: f64,
    /// Mean proof length over proved theorems.
    pub avg_depth: Option<f64>,
    /// Mean tactic evaluations over all runs.
    pub avg_tactics: f64,
}

pub fn summarize(records: &[RunRecord]) -> Vec<RunSummary> {
    let mut groups: BTreeMap<InfoConfiguration, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.config).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(config, rs)| {
            let proved: Vec<&&RunRecord> = rs.iter().filter(|r| r.proved()).collect();
            let n = rs.len() as f64;
            RunSummary {
                config,
                runs: rs.len(),
                proved: proved.len(),
                success_rate: proved.len() as f64 / n,
                avg_depth: (!proved.is_empty())
                    .then(|| proved.iter().map(|r| r.trace.len() as f64).sum::<f64>() / proved.len() as f64),
                avg_tactics: rs.iter().map(|r| r.evaluations as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn render_summary_table(rows: &[RunSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>5} {:>7} {:>9} {:>10} {:>11}",
        "Configuration", "Runs", "Proved", "Success", "Avg Depth", "Avg Tactics"
    );
    for r in rows {
        let depth = r.avg_depth.map_or("n/a".to_string(), |d| format!("{d:.2}"));
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>7} {:>8.1}% {:>10} {:>11.1}",
            r.config.label(),
            r.runs,
            r.proved,
            100.0 * r.success_rate,
            depth,
            r.avg_tactics
        );
    }
    out
}
