//! Result records, CSV series and atomic output.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use chanmix::circuit::ResourceCount;
use chanmix::json::{CircuitJson, MatrixJson};
use chanmix::pec::QuasiProbRep;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::config::{ExperimentConfig, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub core: String,
    pub cli: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            core: chanmix::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Everything needed to reproduce and read a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub versions: Versions,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Outputs,
}

impl ResultRecord {
    pub fn new(config: ExperimentConfig, outputs: Outputs, started_unix_ms: u64, wall_clock_seconds: f64) -> Self {
        Self {
            versions: Versions::default(),
            seed: config.seed,
            config,
            started_unix_ms,
            wall_clock_seconds,
            outputs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outputs {
    Decompose(DecomposeOutput),
    Pec(PecOutput),
    Ccc(CccOutput),
    Lindblad(LindbladOutput),
    Resources(ResourcesOutput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeOutput {
    pub target: String,
    pub labels: Vec<String>,
    pub gamma: f64,
    pub rep: QuasiProbRep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSummary {
    pub qubits: usize,
    pub coeff_qubits: usize,
    pub env_qubits: usize,
    pub items: usize,
    /// Counts after compilation to CNOT and single-qubit gates, if requested.
    pub compiled: Option<ResourceCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PecRun {
    pub k: usize,
    pub absorbed: Vec<usize>,
    pub estimate: f64,
    pub stderr: f64,
    pub residual_negativity: f64,
    pub logical_qubits_used: usize,
    pub circuit_evaluations: usize,
    pub circuits: Vec<CircuitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PecOutput {
    /// Product of the layer negativities.
    pub gamma: f64,
    pub layer_gammas: Vec<f64>,
    pub ideal_value: f64,
    /// Full tuple sum; absent when the enumeration guard trips.
    pub exact_value: Option<f64>,
    pub runs: Vec<PecRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CccOutput {
    pub sys_qubits: usize,
    pub qubits: usize,
    pub coeff_qubits: usize,
    pub env_qubits: usize,
    pub items: usize,
    pub non_unitary_items: usize,
    pub output_state: MatrixJson,
    pub trace_distance_to_mixture: f64,
    pub circuit: Option<CircuitJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladOutput {
    pub method: Method,
    pub steps: usize,
    pub dt: f64,
    pub final_time: f64,
    pub final_state: MatrixJson,
    pub final_z: f64,
    pub final_x: f64,
    pub final_excited_population: f64,
    /// Against exact propagation at the same time.
    pub final_trace_distance: f64,
    pub max_trace_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepResources {
    pub per_step: ResourceCount,
    pub steps: usize,
    pub total_two_qubit_gates: usize,
    pub total_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum ResourcesOutput {
    Rabi {
        ccc: StepResources,
        forking_shared: StepResources,
        forking_unshared: StepResources,
        cnot_ratio_shared: Option<f64>,
        cnot_ratio_unshared: Option<f64>,
    },
    Circuit {
        resources: ResourceCount,
    },
}

/// A numeric table written as comma-separated values.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Csv {
    pub fn new(header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        }
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn staged(path: &Path, contents: &str) -> Result<NamedTempFile> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    Ok(tmp)
}

/// Write every `(path, contents)` pair, or none of them: all contents are
/// staged in temporary files beside their targets before any is renamed
/// into place.
pub fn write_atomic(files: &[(&Path, String)]) -> Result<()> {
    let staged = files
        .iter()
        .map(|(path, contents)| Ok((*path, staged(path, contents)?)))
        .collect::<Result<Vec<_>>>()?;
    for (path, tmp) in staged {
        tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
