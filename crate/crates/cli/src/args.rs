//! Command-line flags and their merge into a config.
//!
//! A `--config` file supplies the starting point (defaults otherwise);
//! any flag given explicitly overrides the corresponding field.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{
    CccParams, DecomposeParams, Experiment, ExperimentConfig, ForkingLayout, GateName, InitialState, LindbladParams, Method, PecParams, RabiFields,
    ResourcesParams, Source,
};

#[derive(Debug, Parser)]
#[command(name = "chanmix", version, about = "Mixture-of-channels circuits, error cancellation and Lindblad evolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Strict JSON experiment config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the JSON record; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where to write the CSV series, for experiments that have one.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// RNG seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decomposition residual tolerance (default 1e-8).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RabiFlags {
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

impl RabiFlags {
    fn apply(&self, r: &mut RabiFields) {
        set(&mut r.omega0, self.omega0);
        set(&mut r.omega, self.omega);
        set(&mut r.gamma, self.gamma);
        set(&mut r.dt, self.dt);
        set(&mut r.steps, self.steps);
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quasiprobability decomposition of a target over a noisy basis.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Named ideal gate with a Pauli-corrected depolarized basis.
        #[arg(long, value_enum)]
        gate: Option<GateName>,
        #[arg(long)]
        noise_p: Option<f64>,
        /// Target channel JSON file.
        #[arg(long, requires = "basis")]
        target: Option<PathBuf>,
        /// Basis JSON file: a list of channels.
        #[arg(long, requires = "target")]
        basis: Option<PathBuf>,
    },
    /// Error-cancelled estimate with a block of layers absorbed into
    /// mixture circuits.
    Pec {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        layers: Option<usize>,
        /// JSON file with a list of layer unitaries.
        #[arg(long)]
        unitaries: Option<PathBuf>,
        /// Depolarizing strength per layer.
        #[arg(long)]
        p: Option<f64>,
        /// Absorbed block size; every size when absent.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        block_start: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        compile_resources: bool,
    },
    /// Build and check the mixture circuit of a channel mixture.
    Ccc {
        #[command(flatten)]
        common: Common,
        /// Mixture JSON file: `{"channels": [...], "probs": [...]}`.
        #[arg(long)]
        mixture: Option<PathBuf>,
        #[arg(long)]
        emit_circuit: bool,
    },
    /// Damped Rabi evolution.
    Lindblad {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rabi: RabiFlags,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long, value_enum)]
        initial: Option<InitialState>,
        #[arg(long, value_enum)]
        forking_layout: Option<ForkingLayout>,
    },
    /// Compiled resource counts of the Rabi step circuits or of a circuit.
    Resources {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rabi: RabiFlags,
        /// Circuit JSON file to count instead.
        #[arg(long)]
        circuit: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Decompose { common, .. }
            | Self::Pec { common, .. }
            | Self::Ccc { common, .. }
            | Self::Lindblad { common, .. }
            | Self::Resources { common, .. } => common,
        }
    }

    fn default_experiment(&self) -> Experiment {
        match self {
            Self::Decompose { .. } => Experiment::Decompose(DecomposeParams::default()),
            Self::Pec { .. } => Experiment::Pec(PecParams::default()),
            Self::Ccc { .. } => Experiment::Ccc(CccParams::default()),
            Self::Lindblad { .. } => Experiment::Lindblad(LindbladParams::default()),
            Self::Resources { .. } => Experiment::Resources(ResourcesParams::default()),
        }
    }

    fn apply(&self, exp: &mut Experiment) -> Result<()> {
        match (self, exp) {
            (Self::Decompose { gate, noise_p, target, basis, .. }, Experiment::Decompose(p)) => {
                set_opt(&mut p.gate, *gate);
                set_opt(&mut p.noise_p, *noise_p);
                set_opt(&mut p.target, target.clone().map(Source::path));
                set_opt(&mut p.basis, basis.clone().map(Source::path));
            }
            (
                Self::Pec {
                    layers,
                    unitaries,
                    p: noise,
                    k,
                    block_start,
                    samples,
                    compile_resources,
                    ..
                },
                Experiment::Pec(p),
            ) => {
                set(&mut p.layers, *layers);
                set_opt(&mut p.unitaries, unitaries.clone().map(Source::path));
                set(&mut p.p, *noise);
                set_opt(&mut p.k, *k);
                set(&mut p.block_start, *block_start);
                set(&mut p.samples, *samples);
                p.compile_resources |= compile_resources;
            }
            (Self::Ccc { mixture, emit_circuit, .. }, Experiment::Ccc(p)) => {
                set_opt(&mut p.mixture, mixture.clone().map(Source::path));
                p.emit_circuit |= emit_circuit;
            }
            (
                Self::Lindblad {
                    rabi,
                    method,
                    trajectories,
                    initial,
                    forking_layout,
                    ..
                },
                Experiment::Lindblad(p),
            ) => {
                rabi.apply(&mut p.rabi);
                set(&mut p.method, *method);
                set(&mut p.trajectories, *trajectories);
                set(&mut p.initial, *initial);
                set(&mut p.forking_layout, *forking_layout);
            }
            (Self::Resources { rabi, circuit, .. }, Experiment::Resources(p)) => {
                rabi.apply(&mut p.rabi);
                set_opt(&mut p.circuit, circuit.clone().map(Source::path));
            }
            (cmd, exp) => bail!("config describes a `{}` experiment, not `{}`", exp.name(), cmd.default_experiment().name()),
        }
        Ok(())
    }
}

/// Merge the config file (if any) with explicit flags and validate.
pub fn parse_config(cli: &Cli) -> Result<ExperimentConfig> {
    let common = cli.command.common();
    let mut cfg = match &common.config {
        Some(path) => crate::config::read_json(path)?,
        None => ExperimentConfig::new(cli.command.default_experiment()),
    };
    cli.command.apply(&mut cfg.experiment)?;
    set(&mut cfg.seed, common.seed);
    set(&mut cfg.tol, common.tol);
    set_opt(&mut cfg.output, common.output.clone());
    set_opt(&mut cfg.csv, common.csv.clone());
    cfg.validate()?;
    Ok(cfg)
}
