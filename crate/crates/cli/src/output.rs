//! Files written by the commands: field files with JSON sidecars, a manifest
//! per output directory, JSON reports and CSV tables.

use std::path::{Path, PathBuf};

use epsharm::energy::EnergyReport;
use epsharm::geometry::{ConformalChart, MapField};
use epsharm::io::{load_field, save_field, FieldFile};
use epsharm::solver::{SolveResult, StopReason};
use epsharm::synth::GlueTruth;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Solve,
    Sequence,
    Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub k: usize,
    pub epsilon: f64,
    /// Paths relative to the manifest.
    pub field: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: RunKind,
    pub fields: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub initial_residual: f64,
    pub residual: f64,
    pub constraint_violation: f64,
    pub energy: EnergyReport,
}

impl SolveSummary {
    pub fn new(r: &SolveResult) -> Self {
        Self {
            epsilon: r.epsilon,
            iterations: r.iterations,
            converged: r.converged,
            stop_reason: r.stop_reason,
            initial_residual: r.residual_history[0],
            residual: *r.residual_history.last().unwrap(),
            constraint_violation: r.field.constraint_violation(),
            energy: r.report.clone(),
        }
    }
}

/// Annotations stored next to each field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub k: usize,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GlueTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSummary>,
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>], keys: &[usize]) -> Result<(), CliError> {
    let mut text = header.join(",");
    text.push('\n');
    for (row, k) in rows.iter().zip(keys) {
        text.push_str(&k.to_string());
        for v in row {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn field_entry(dir: &Path, k: usize, epsilon: f64) -> (ManifestEntry, PathBuf, PathBuf) {
    let entry = ManifestEntry {
        k,
        epsilon,
        field: PathBuf::from(format!("k{k:03}.ehmf")),
        sidecar: PathBuf::from(format!("k{k:03}.json")),
    };
    let (f, s) = (dir.join(&entry.field), dir.join(&entry.sidecar));
    (entry, f, s)
}

pub fn write_field(
    dir: &Path,
    field: &MapField,
    chart: &ConformalChart,
    sidecar: &Sidecar,
) -> Result<ManifestEntry, CliError> {
    let (entry, f, s) = field_entry(dir, sidecar.k, sidecar.epsilon);
    save_field(&f, field, chart)?;
    write_json(&s, sidecar)?;
    Ok(entry)
}

pub struct LoadedField {
    pub entry: ManifestEntry,
    pub file: FieldFile,
    pub sidecar: Option<Sidecar>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    read_json(&dir.join(MANIFEST))
}

pub fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<LoadedField, CliError> {
    let file = load_field(dir.join(&entry.field))?;
    let s = dir.join(&entry.sidecar);
    let sidecar = if s.exists() { Some(read_json(&s)?) } else { None };
    Ok(LoadedField { entry: entry.clone(), file, sidecar })
}
