//! Markovian open-system evolution of a driven, damped qubit.
//!
//! Three propagators are provided: the exact Liouvillian exponential, a
//! stochastic product formula that draws one channel per step, and the
//! deterministic mixture circuit applied step by step. The excited state is
//! `|1⟩` and the lowering operator is `σ⁻ = |0⟩⟨1|`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{amplitude_damping_channel, apply_channel, ConvexCombination, KrausChannel};
use crate::circuit::{build_ccc_circuit, build_forking_circuit, evolve_system, Circuit, ForkingMode, GateItem, Register, RegisterLayout, Role};
use crate::error::{Error, Result};
use crate::qops::{check_dims, DensityMatrix, Operator, Superoperator};
use crate::{CMatrix, C64, HERMITIAN_TOL};

/// Hamiltonian, jump operators and their rates.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSpec {
    hamiltonian: Operator,
    jump_ops: Vec<Operator>,
    rates: Vec<f64>,
}

impl LindbladSpec {
    pub fn new(hamiltonian: Operator, jump_ops: Vec<Operator>, rates: Vec<f64>) -> Result<Self> {
        let res = hamiltonian.hermitian_residual();
        if res > HERMITIAN_TOL {
            return Err(Error::NotHermitian(res));
        }
        if jump_ops.len() != rates.len() {
            return Err(Error::DimMismatch {
                expected: jump_ops.len(),
                actual: rates.len(),
            });
        }
        for l in &jump_ops {
            check_dims(hamiltonian.dim(), l.dim())?;
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::OutOfRange {
                name: "rates",
                reason: format!("{r} is not a nonnegative rate"),
            });
        }
        Ok(Self { hamiltonian, jump_ops, rates })
    }

    /// `H = ω₀Z + ΩX` with decay `σ⁻` at rate `γ`.
    pub fn damped_rabi(params: &RabiParams) -> Result<Self> {
        let h = Operator::pauli_z()
            .scale(C64::new(params.omega0, 0.0))
            .matrix()
            + Operator::pauli_x().scale(C64::new(params.omega, 0.0)).matrix();
        Self::new(Operator::new(h)?, vec![Operator::ket_bra(2, 0, 1)], vec![params.gamma])
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[Operator] {
        &self.jump_ops
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
}

/// Damped-Rabi rates and the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiParams {
    pub omega0: f64,
    pub omega: f64,
    pub gamma: f64,
    pub dt: f64,
    pub steps: usize,
}

impl RabiParams {
    pub fn new(omega0: f64, omega: f64, gamma: f64, dt: f64, steps: usize) -> Result<Self> {
        let p = Self { omega0, omega, gamma, dt, steps };
        p.validate()?;
        Ok(p)
    }

    /// Same rates, `steps` steps spanning `total_time`.
    pub fn over(omega0: f64, omega: f64, gamma: f64, total_time: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::OutOfRange {
                name: "steps",
                reason: "need at least one step to fix dt".into(),
            });
        }
        Self::new(omega0, omega, gamma, total_time / steps as f64, steps)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega0", self.omega0), ("omega", self.omega), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    reason: format!("{v} is not a nonnegative rate"),
                });
            }
        }
        if !(self.lambda() > 0.0) {
            return Err(Error::OutOfRange {
                name: "lambda",
                reason: "omega0 + omega + gamma must be positive".into(),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::OutOfRange {
                name: "dt",
                reason: format!("{} is not a positive step", self.dt),
            });
        }
        Ok(())
    }

    /// `λ = ω₀ + Ω + γ`.
    pub fn lambda(&self) -> f64 {
        self.omega0 + self.omega + self.gamma
    }

    /// `τ = λ·δt`.
    pub fn tau(&self) -> f64 {
        self.lambda() * self.dt
    }

    /// Damping strength of the third channel, `1 − e^{−τ}`.
    ///
    /// The damping channel fires with probability `γ/λ`, so its strength has
    /// to scale with `τ` for the step to match the generator to first order.
    pub fn beta(&self) -> f64 {
        -(-self.tau()).exp_m1()
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }
}

/// The per-step channels with their probabilities. Channels with zero rate
/// are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiChannelSet {
    channels: Vec<KrausChannel>,
    probs: Vec<f64>,
}

impl RabiChannelSet {
    pub fn channels(&self) -> &[KrausChannel] {
        &self.channels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mixture(&self) -> Result<ConvexCombination> {
        ConvexCombination::new(self.channels.clone(), self.probs.clone())
    }
}

/// Lindbladian generator under column stacking, `vec(AρB) = (Bᵀ⊗A)vec(ρ)`.
pub fn liouvillian_superop(spec: &LindbladSpec) -> Result<Superoperator> {
    let d = spec.dim();
    let id = CMatrix::identity(d, d);
    let h = spec.hamiltonian.matrix();
    let i = C64::new(0.0, 1.0);
    let mut gen = (id.kronecker(h) - h.transpose().kronecker(&id)) * -i;
    for (l, &rate) in spec.jump_ops.iter().zip(&spec.rates) {
        let l = l.matrix();
        let ldl = l.adjoint() * l;
        let d_l = l.conjugate().kronecker(l) - id.kronecker(&ldl) * C64::new(0.5, 0.0) - ldl.transpose().kronecker(&id) * C64::new(0.5, 0.0);
        gen += d_l * C64::new(rate, 0.0);
    }
    Superoperator::new(d, gen)
}

/// `exp(tL)` applied to `ρ₀`.
pub fn exact_evolve(spec: &LindbladSpec, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange {
            name: "t",
            reason: format!("{t} is not a nonnegative time"),
        });
    }
    check_dims(spec.dim(), rho0.dim())?;
    let gen = liouvillian_superop(spec)?;
    let prop = Superoperator::new(spec.dim(), (gen.matrix() * C64::new(t, 0.0)).exp())?;
    hermitian_part(prop.apply(rho0)?)
}

/// Exact states at `t = k·δt`, `k = 0..=steps`.
pub fn exact_series(params: &RabiParams, rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    params.validate()?;
    let spec = LindbladSpec::damped_rabi(params)?;
    check_dims(2, rho0.dim())?;
    let gen = liouvillian_superop(&spec)?;
    // one exponential per point keeps the oracle free of accumulated drift
    (0..=params.steps)
        .map(|k| {
            let prop = Superoperator::new(2, (gen.matrix() * C64::new(params.dt * k as f64, 0.0)).exp())?;
            hermitian_part(prop.apply(rho0)?)
        })
        .collect()
}

fn hermitian_part(rho: DensityMatrix) -> Result<DensityMatrix> {
    let dims = rho.dims().to_vec();
    let m = rho.into_matrix();
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::from_parts(dims, h)
}

/// `Rz(2τ)`, `Rx(2τ)` and amplitude damping `β`, weighted `(ω₀, Ω, γ)/λ`.
pub fn rabi_channel_set(params: &RabiParams) -> Result<RabiChannelSet> {
    params.validate()?;
    let (lam, tau) = (params.lambda(), params.tau());
    let candidates = [
        (params.omega0, KrausChannel::unitary("rz", Operator::rz(2.0 * tau))),
        (params.omega, KrausChannel::unitary("rx", Operator::rx(2.0 * tau))),
        (params.gamma, amplitude_damping_channel(params.beta())?),
    ];
    let (probs, channels) = candidates
        .into_iter()
        .filter(|(rate, _)| *rate > 0.0)
        .map(|(rate, ch)| (rate / lam, ch))
        .unzip();
    Ok(RabiChannelSet { channels, probs })
}

fn trajectory(set: &RabiChannelSet, steps: usize, rho0: &DensityMatrix, seed: u64, stream: u64) -> Result<Vec<DensityMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dist = WeightedIndex::new(set.probs()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(rho0.clone());
    for _ in 0..steps {
        let ch = &set.channels[dist.sample(&mut rng)];
        let next = apply_channel(ch, states.last().expect("nonempty"))?;
        states.push(next);
    }
    Ok(states)
}

/// One stochastic trajectory: a channel is drawn per step and applied.
pub fn sampled_evolve(params: &RabiParams, rho0: &DensityMatrix, seed: u64) -> Result<DensityMatrix> {
    check_dims(2, rho0.dim())?;
    let set = rabi_channel_set(params)?;
    Ok(trajectory(&set, params.steps, rho0, seed, 0)?.pop().expect("nonempty"))
}

/// Average over `trajectories` runs; run `j` uses stream `j` of `seed`, so
/// run 0 equals [`sampled_evolve`] with the same seed.
pub fn sampled_series(params: &RabiParams, rho0: &DensityMatrix, trajectories: usize, seed: u64) -> Result<Vec<DensityMatrix>> {
    check_dims(2, rho0.dim())?;
    if trajectories == 0 {
        return Err(Error::OutOfRange {
            name: "trajectories",
            reason: "need at least one trajectory".into(),
        });
    }
    let set = rabi_channel_set(params)?;
    let runs = (0..trajectories as u64)
        .into_par_iter()
        .map(|j| trajectory(&set, params.steps, rho0, seed, j))
        .collect::<Result<Vec<_>>>()?;
    let scale = C64::new(1.0 / trajectories as f64, 0.0);
    (0..=params.steps)
        .map(|k| {
            let sum = runs
                .iter()
                .fold(CMatrix::zeros(2, 2), |acc, run| acc + run[k].matrix());
            DensityMatrix::from_parts(vec![2], sum * scale)
        })
        .collect()
}

/// Deterministic evolution: each step runs the mixture circuit on the
/// system and discards the coefficient and environment registers.
pub fn ccc_evolve(params: &RabiParams, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    Ok(ccc_series(params, rho0)?.pop().expect("nonempty"))
}

/// Every intermediate state of [`ccc_evolve`], starting with `ρ₀`.
pub fn ccc_series(params: &RabiParams, rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    check_dims(2, rho0.dim())?;
    let circuit = build_ccc_circuit(&rabi_channel_set(params)?.mixture()?, 1)?;
    circuit_series(&circuit, params.steps, rho0)
}

/// As [`ccc_series`] with the forking comparator circuit per step.
pub fn forking_series(params: &RabiParams, rho0: &DensityMatrix, mode: ForkingMode) -> Result<Vec<DensityMatrix>> {
    check_dims(2, rho0.dim())?;
    let circuit = build_forking_circuit(&rabi_channel_set(params)?.mixture()?, 1, mode)?;
    circuit_series(&circuit, params.steps, rho0)
}

fn circuit_series(circuit: &Circuit, steps: usize, rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(rho0.clone());
    for _ in 0..steps {
        let next = evolve_system(circuit, states.last().expect("nonempty"))?.with_dims(vec![2])?;
        states.push(next);
    }
    Ok(states)
}

/// Amplitude damping as a two-qubit unitary circuit. Qubit 0 is the
/// ancilla (environment register) and qubit 1 the system: a `Ry` on the
/// ancilla controlled by the system being excited, then an ancilla-controlled
/// `X` on the system.
pub fn amplitude_damping_subcircuit(beta: f64) -> Result<Circuit> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::OutOfRange {
            name: "beta",
            reason: format!("{beta} not in [0, 1]"),
        });
    }
    let layout = RegisterLayout::new(vec![
        Register { role: Role::Env, qubits: 1 },
        Register { role: Role::Sys, qubits: 1 },
    ])?;
    let theta = 2.0 * beta.sqrt().asin();
    Circuit::from_items(
        layout,
        vec![
            GateItem::unitary("ry", Operator::ry(theta), vec![0]).controlled(vec![1], 1),
            GateItem::cnot(0, 1),
        ],
    )
}

/// `½‖a − b‖₁`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let diff = a.matrix() - b.matrix();
    Ok(0.5 * diff.singular_values().iter().sum::<f64>())
}
