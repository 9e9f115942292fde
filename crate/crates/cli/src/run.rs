//! Dispatch from a validated config to the library.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use chanmix::channels::{apply_channel, convex_combination, depolarizing_channel, ConvexCombination, KrausChannel};
use chanmix::circuit::{build_ccc_circuit, build_forking_circuit, compile_to_basis, count_resources, evolve_system, Circuit, ForkingMode};
use chanmix::json::{CircuitJson, MatrixJson};
use chanmix::lindblad::{ccc_series, exact_series, forking_series, rabi_channel_set, sampled_series, trace_distance, RabiParams};
use chanmix::pec::{depolarized_layers, exact_cancellation_value, hybrid_protocol, ideal_value, quasiprob_decompose, standard_layer_unitary, LayeredDecomposition, NoisyBasis};
use chanmix::qops::{expectation, DensityMatrix, Operator};
use chanmix::{Error, C64};

use crate::config::{CccParams, DecomposeParams, Experiment, ExperimentConfig, GateName, InitialState, LindbladParams, Method, PecParams, ResourcesParams};
use crate::record::{CccOutput, CircuitSummary, Csv, DecomposeOutput, LindbladOutput, Outputs, PecOutput, PecRun, ResourcesOutput, ResultRecord, StepResources};

/// Run the experiment and build its record plus an optional time series.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(ResultRecord, Option<Csv>)> {
    config.validate()?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    let clock = Instant::now();
    let run = || -> Result<(Outputs, Option<Csv>)> {
        Ok(match &config.experiment {
            Experiment::Decompose(p) => (Outputs::Decompose(decompose(p, config.tol)?), None),
            Experiment::Pec(p) => {
                let (out, csv) = pec(p, config.seed, config.tol)?;
                (Outputs::Pec(out), Some(csv))
            }
            Experiment::Ccc(p) => (Outputs::Ccc(ccc(p)?), None),
            Experiment::Lindblad(p) => {
                let (out, csv) = lindblad(p, config.seed)?;
                (Outputs::Lindblad(out), Some(csv))
            }
            Experiment::Resources(p) => (Outputs::Resources(resources(p)?), None),
        })
    };
    let (outputs, csv) = run().with_context(|| format!("running `{}`", config.experiment.name()))?;
    let record = ResultRecord::new(config.clone(), outputs, started, clock.elapsed().as_secs_f64());
    Ok((record, csv))
}

fn phase_gate(theta: f64) -> Operator {
    let zero = C64::new(0.0, 0.0);
    Operator::from_rows(&[vec![C64::new(1.0, 0.0), zero], vec![zero, C64::from_polar(1.0, theta)]]).expect("2x2")
}

fn gate(name: GateName) -> Operator {
    match name {
        GateName::I => Operator::identity(2),
        GateName::X => Operator::pauli_x(),
        GateName::Y => Operator::pauli_y(),
        GateName::Z => Operator::pauli_z(),
        GateName::H => Operator::hadamard(),
        GateName::S => phase_gate(std::f64::consts::FRAC_PI_2),
        GateName::T => phase_gate(std::f64::consts::FRAC_PI_4),
        GateName::Cnot => Operator::cnot(),
        GateName::Cz => Operator::cz(),
    }
}

fn qubits_of(dim: usize) -> Result<usize> {
    if !dim.is_power_of_two() || dim < 2 {
        bail!("dimension {dim} is not a qubit register");
    }
    Ok(dim.trailing_zeros() as usize)
}

fn decompose(p: &DecomposeParams, tol: f64) -> Result<DecomposeOutput> {
    let (target, basis) = match (&p.target, &p.basis) {
        (Some(t), Some(b)) => {
            let target = KrausChannel::try_from(&t.load()?)?;
            let ops = b.load()?.iter().map(KrausChannel::try_from).collect::<chanmix::Result<Vec<_>>>()?;
            (target, NoisyBasis::new(ops)?)
        }
        _ => {
            let name = p.gate.unwrap_or(DecomposeParams::DEFAULT_GATE);
            let u = gate(name);
            let noise = depolarizing_channel(p.noise_p.unwrap_or(DecomposeParams::DEFAULT_NOISE), qubits_of(u.dim())?)?;
            let basis = NoisyBasis::pauli_corrected(&u, &noise)?;
            (KrausChannel::unitary(format!("{name:?}").to_lowercase(), u), basis)
        }
    };
    let rep = quasiprob_decompose(&target, &basis, tol)?;
    Ok(DecomposeOutput {
        target: target.label().to_string(),
        labels: basis.labels().into_iter().map(String::from).collect(),
        gamma: rep.gamma,
        rep,
    })
}

fn z_string(n: usize) -> Result<Operator> {
    (1..n).try_fold(Operator::pauli_z(), |acc, _| Ok(acc.kron(&Operator::pauli_z())?))
}

fn pec_circuit(p: &PecParams, tol: f64) -> Result<LayeredDecomposition> {
    let unitaries = match &p.unitaries {
        Some(src) => src.load()?.iter().map(Operator::try_from).collect::<chanmix::Result<Vec<_>>>()?,
        None => vec![standard_layer_unitary(); p.layers],
    };
    let n = qubits_of(unitaries[0].dim())?;
    Ok(depolarized_layers(&unitaries, p.p, DensityMatrix::zero_qubits(n)?, z_string(n)?, tol)?)
}

fn summarize(c: &Circuit, compile: bool) -> Result<CircuitSummary> {
    Ok(CircuitSummary {
        qubits: c.n_qubits(),
        coeff_qubits: c.layout().coeff_qubits(),
        env_qubits: c.layout().env_qubits(),
        items: c.len(),
        compiled: compile.then(|| compile_to_basis(c).and_then(|cc| count_resources(&cc))).transpose()?,
    })
}

fn pec(p: &PecParams, seed: u64, tol: f64) -> Result<(PecOutput, Csv)> {
    let decomp = pec_circuit(p, tol)?;
    let layers = decomp.num_layers();
    let ks: Vec<usize> = match p.k {
        Some(k) => vec![k],
        None => (0..=layers - p.block_start).collect(),
    };
    let mut runs = Vec::with_capacity(ks.len());
    for k in ks {
        let absorbed: Vec<usize> = (p.block_start..p.block_start + k).collect();
        let h = hybrid_protocol(&decomp, &absorbed, p.samples, seed)?;
        runs.push(PecRun {
            k,
            absorbed,
            estimate: h.estimate,
            stderr: h.stderr,
            residual_negativity: h.residual_negativity,
            logical_qubits_used: h.logical_qubits_used,
            circuit_evaluations: h.circuit_evaluations,
            circuits: h.circuits.iter().map(|c| summarize(c, p.compile_resources)).collect::<Result<_>>()?,
        });
    }
    let exact_value = match exact_cancellation_value(&decomp) {
        Ok(v) => Some(v),
        Err(Error::EnumerationGuard { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let csv = Csv::new(
        &["k", "estimate", "stderr", "residual_negativity", "logical_qubits_used", "circuit_evaluations"],
        runs.iter()
            .map(|r| vec![r.k as f64, r.estimate, r.stderr, r.residual_negativity, r.logical_qubits_used as f64, r.circuit_evaluations as f64])
            .collect(),
    );
    let out = PecOutput {
        gamma: decomp.gamma(),
        layer_gammas: decomp.layers().iter().map(|l| l.rep.gamma).collect(),
        ideal_value: ideal_value(&decomp)?,
        exact_value,
        runs,
    };
    Ok((out, csv))
}

fn default_rabi() -> RabiParams {
    crate::config::RabiFields::default().params().expect("valid defaults")
}

fn ccc(p: &CccParams) -> Result<CccOutput> {
    let cc = match &p.mixture {
        Some(src) => {
            let m = src.load()?;
            let channels = m.channels.iter().map(KrausChannel::try_from).collect::<chanmix::Result<Vec<_>>>()?;
            ConvexCombination::new(channels, m.probs)?
        }
        None => rabi_channel_set(&default_rabi())?.mixture()?,
    };
    let dim = cc.dim();
    let n_sys = qubits_of(dim)?;
    let circuit = build_ccc_circuit(&cc, n_sys)?;
    let rho0 = match &p.rho0 {
        Some(m) => DensityMatrix::new(vec![dim], Operator::try_from(m)?.into_matrix())?,
        None => DensityMatrix::basis_state(vec![dim], 0)?,
    };
    let out = evolve_system(&circuit, &rho0)?.with_dims(vec![dim])?;
    let analytic = apply_channel(&convex_combination(&cc)?, &rho0)?;
    Ok(CccOutput {
        sys_qubits: n_sys,
        qubits: circuit.n_qubits(),
        coeff_qubits: circuit.layout().coeff_qubits(),
        env_qubits: circuit.layout().env_qubits(),
        items: circuit.len(),
        non_unitary_items: circuit.items().iter().filter(|i| !matches!(i.op, chanmix::circuit::Op::Unitary(_))).count(),
        output_state: MatrixJson::from(out.matrix()),
        trace_distance_to_mixture: trace_distance(&out, &analytic)?,
        circuit: p.emit_circuit.then(|| CircuitJson::from(&circuit)),
    })
}

fn initial_state(s: InitialState) -> Result<DensityMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ok(match s {
        InitialState::Ground => DensityMatrix::basis_state(vec![2], 0)?,
        InitialState::Excited => DensityMatrix::basis_state(vec![2], 1)?,
        InitialState::Plus => DensityMatrix::pure(vec![2], &[C64::new(h, 0.0); 2])?,
        InitialState::Mixed => DensityMatrix::maximally_mixed(vec![2])?,
    })
}

fn lindblad(p: &LindbladParams, seed: u64) -> Result<(LindbladOutput, Csv)> {
    let params = p.rabi.params()?;
    let rho0 = initial_state(p.initial)?;
    let exact = exact_series(&params, &rho0)?;
    let series = match p.method {
        Method::Exact => exact.clone(),
        Method::Sampled => sampled_series(&params, &rho0, p.trajectories, seed)?,
        Method::Ccc => ccc_series(&params, &rho0)?,
        Method::Forking => forking_series(&params, &rho0, ForkingMode::from(p.forking_layout))?,
    };
    let (z, x) = (Operator::pauli_z(), Operator::pauli_x());
    let rows = series
        .iter()
        .zip(&exact)
        .enumerate()
        .map(|(k, (rho, reference))| {
            Ok(vec![
                k as f64 * params.dt,
                expectation(rho, &z)?,
                expectation(rho, &x)?,
                rho.matrix()[(1, 1)].re,
                trace_distance(rho, reference)?,
            ])
        })
        .collect::<chanmix::Result<Vec<_>>>()?;
    let last = rows.last().expect("nonempty").clone();
    let out = LindbladOutput {
        method: p.method,
        steps: params.steps,
        dt: params.dt,
        final_time: params.total_time(),
        final_state: MatrixJson::from(series.last().expect("nonempty").matrix()),
        final_z: last[1],
        final_x: last[2],
        final_excited_population: last[3],
        final_trace_distance: last[4],
        max_trace_distance: rows.iter().map(|r| r[4]).fold(0.0, f64::max),
    };
    Ok((out, Csv::new(&["t", "z", "x", "excited_population", "trace_distance"], rows)))
}

fn step_resources(circuit: &Circuit, steps: usize) -> Result<StepResources> {
    let per_step = count_resources(&compile_to_basis(circuit)?)?;
    Ok(StepResources {
        per_step,
        steps,
        total_two_qubit_gates: per_step.two_qubit_gates * steps,
        total_depth: per_step.depth * steps,
    })
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn resources(p: &ResourcesParams) -> Result<ResourcesOutput> {
    if let Some(src) = &p.circuit {
        let circuit = Circuit::try_from(&src.load()?)?;
        return Ok(ResourcesOutput::Circuit {
            resources: count_resources(&compile_to_basis(&circuit)?)?,
        });
    }
    let params = p.rabi.params()?;
    let cc = rabi_channel_set(&params)?.mixture()?;
    let ccc = step_resources(&build_ccc_circuit(&cc, 1)?, params.steps)?;
    let shared = step_resources(&build_forking_circuit(&cc, 1, ForkingMode::Shared)?, params.steps)?;
    let unshared = step_resources(&build_forking_circuit(&cc, 1, ForkingMode::Unshared)?, params.steps)?;
    Ok(ResourcesOutput::Rabi {
        cnot_ratio_shared: ratio(shared.per_step.two_qubit_gates, ccc.per_step.two_qubit_gates),
        cnot_ratio_unshared: ratio(unshared.per_step.two_qubit_gates, ccc.per_step.two_qubit_gates),
        ccc,
        forking_shared: shared,
        forking_unshared: unshared,
    })
}
