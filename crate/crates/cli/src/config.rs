//! Experiment configuration: strict JSON, defaults and range checks.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chanmix::circuit::ForkingMode;
use chanmix::json::{ChannelJson, CircuitJson, MatrixJson};
use chanmix::pec::DEFAULT_TOL;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn range(name: &'static str, reason: String) -> anyhow::Error {
    chanmix::Error::OutOfRange { name, reason }.into()
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(range(name, format!("{v} not in [0, 1]")));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(range(name, format!("{v} is not positive")));
    }
    Ok(())
}

fn check_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(range(name, format!("{v} is negative")));
    }
    Ok(())
}

fn check_at_least(name: &'static str, v: usize, min: usize) -> Result<()> {
    if v < min {
        return Err(range(name, format!("{v} is below {min}")));
    }
    Ok(())
}

/// Read and strictly parse a JSON file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub path: PathBuf,
}

/// A value given inline or as `{"path": ...}` pointing to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    File(FileRef),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn path(path: PathBuf) -> Self {
        Self::File(FileRef { path })
    }

    pub fn load(&self) -> Result<T> {
        match self {
            Self::File(f) => read_json(&f.path),
            Self::Inline(v) => Ok(v.clone()),
        }
    }

    fn check_exists(&self, field: &str) -> Result<()> {
        if let Self::File(f) = self {
            if !f.path.is_file() {
                bail!("`{field}` refers to {}, which does not exist", f.path.display());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GateName {
    I,
    X,
    Y,
    Z,
    H,
    S,
    T,
    Cnot,
    Cz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sampled,
    #[default]
    Ccc,
    Forking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Ground,
    #[default]
    Excited,
    Plus,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ForkingLayout {
    #[default]
    Shared,
    Unshared,
}

impl From<ForkingLayout> for ForkingMode {
    fn from(l: ForkingLayout) -> Self {
        match l {
            ForkingLayout::Shared => ForkingMode::Shared,
            ForkingLayout::Unshared => ForkingMode::Unshared,
        }
    }
}

/// Quasiprobability decomposition of one target over a basis.
///
/// Either a named gate with a Pauli-corrected basis under depolarizing
/// noise `noise_p`, or an explicit `target` channel with an explicit
/// `basis`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Source<ChannelJson>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Source<Vec<ChannelJson>>>,
}

impl DecomposeParams {
    pub const DEFAULT_GATE: GateName = GateName::X;
    pub const DEFAULT_NOISE: f64 = 0.1;

    fn validate(&self) -> Result<()> {
        match (&self.target, &self.basis) {
            (Some(t), Some(b)) => {
                if self.gate.is_some() || self.noise_p.is_some() {
                    bail!("give either `gate`/`noise_p` or `target`/`basis`, not both");
                }
                t.check_exists("target")?;
                b.check_exists("basis")
            }
            (None, None) => check_unit("noise_p", self.noise_p.unwrap_or(Self::DEFAULT_NOISE)),
            _ => bail!("`target` and `basis` must be given together"),
        }
    }
}

/// Layered circuit under depolarizing noise, estimated with the hybrid
/// protocol for one `k` or for every `k` in `0..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PecParams {
    /// Layer count of the single-qubit standard circuit.
    pub layers: usize,
    /// Custom layer unitaries (one or two qubits); overrides `layers`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unitaries: Option<Source<Vec<MatrixJson>>>,
    pub p: f64,
    /// Absorbed block size; all sizes when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub block_start: usize,
    pub samples: usize,
    /// Compile the mixture circuits and report CNOT counts.
    pub compile_resources: bool,
}

impl Default for PecParams {
    fn default() -> Self {
        Self {
            layers: 4,
            unitaries: None,
            p: 0.1,
            k: None,
            block_start: 0,
            samples: 1000,
            compile_resources: false,
        }
    }
}

impl PecParams {
    fn validate(&self) -> Result<()> {
        check_unit("p", self.p)?;
        check_at_least("samples", self.samples, 1)?;
        let layers = match &self.unitaries {
            Some(src) => {
                src.check_exists("unitaries")?;
                src.load()?.len()
            }
            None => self.layers,
        };
        check_at_least("layers", layers, 1)?;
        if self.block_start > layers {
            return Err(range("block_start", format!("{} exceeds the {layers} layers", self.block_start)));
        }
        if let Some(k) = self.k {
            if self.block_start + k > layers {
                return Err(range("k", format!("block {}..{} exceeds the {layers} layers", self.block_start, self.block_start + k)));
            }
        }
        Ok(())
    }
}

/// A convex mixture of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureJson {
    pub channels: Vec<ChannelJson>,
    pub probs: Vec<f64>,
}

/// Mixture circuit for a channel mixture; the damped-Rabi step when no
/// mixture is given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CccParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Source<MixtureJson>>,
    /// Input system state; `|0…0⟩` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0: Option<MatrixJson>,
    /// Include the circuit itself in the record.
    pub emit_circuit: bool,
}

impl CccParams {
    fn validate(&self) -> Result<()> {
        if let Some(m) = &self.mixture {
            m.check_exists("mixture")?;
        }
        Ok(())
    }
}

/// Damped-Rabi rates and time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiFields {
    pub omega0: f64,
    pub omega: f64,
    pub gamma: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Default for RabiFields {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            omega: 0.5,
            gamma: 0.1,
            dt: 0.05,
            steps: 200,
        }
    }
}

impl RabiFields {
    fn validate(&self) -> Result<()> {
        check_nonnegative("omega0", self.omega0)?;
        check_nonnegative("omega", self.omega)?;
        check_nonnegative("gamma", self.gamma)?;
        check_positive("omega0 + omega + gamma", self.omega0 + self.omega + self.gamma)?;
        check_positive("dt", self.dt)
    }

    pub fn params(&self) -> Result<chanmix::lindblad::RabiParams> {
        Ok(chanmix::lindblad::RabiParams::new(self.omega0, self.omega, self.gamma, self.dt, self.steps)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LindbladParams {
    pub rabi: RabiFields,
    pub method: Method,
    /// Trajectories averaged by the sampled method.
    pub trajectories: usize,
    pub initial: InitialState,
    pub forking_layout: ForkingLayout,
}

impl Default for LindbladParams {
    fn default() -> Self {
        Self {
            rabi: RabiFields::default(),
            method: Method::Ccc,
            trajectories: 1000,
            initial: InitialState::Excited,
            forking_layout: ForkingLayout::Shared,
        }
    }
}

impl LindbladParams {
    fn validate(&self) -> Result<()> {
        self.rabi.validate()?;
        check_at_least("trajectories", self.trajectories, 1)
    }
}

/// Per-step and total resources of the Rabi step circuits, or of a given
/// circuit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourcesParams {
    pub rabi: RabiFields,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circuit: Option<Source<CircuitJson>>,
}

impl ResourcesParams {
    fn validate(&self) -> Result<()> {
        self.rabi.validate()?;
        if let Some(c) = &self.circuit {
            c.check_exists("circuit")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Decompose(DecomposeParams),
    Pec(PecParams),
    Ccc(CccParams),
    Lindblad(LindbladParams),
    Resources(ResourcesParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Decompose(_) => "decompose",
            Self::Pec(_) => "pec",
            Self::Ccc(_) => "ccc",
            Self::Lindblad(_) => "lindblad",
            Self::Resources(_) => "resources",
        }
    }
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 0,
            tol: DEFAULT_TOL,
            output: None,
            csv: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Range and consistency checks; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        check_positive("tol", self.tol)?;
        match &self.experiment {
            Experiment::Decompose(p) => p.validate(),
            Experiment::Pec(p) => p.validate(),
            Experiment::Ccc(p) => p.validate(),
            Experiment::Lindblad(p) => p.validate(),
            Experiment::Resources(p) => p.validate(),
        }
    }
}
