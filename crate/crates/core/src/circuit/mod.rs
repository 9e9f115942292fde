//! Circuit IR over named qubit registers.
//!
//! Qubit 0 is the most significant bit of the global basis index. An
//! operator acting on `targets` reads `targets[0]` as its most significant
//! qubit; a control value is read the same way over `controls`.

mod build;
mod compile;
mod resources;
mod sim;

pub use build::{
    build_ccc_circuit, build_forking_circuit, index_qubits, prep_unitary, ForkingMode,
};
pub use compile::{compile_to_basis, is_cnot, phase_distance};
pub use resources::{count_resources, ResourceCount};
pub use sim::{circuit_unitary, embed_system, evolve_system, simulate_circuit, system_marginal};

use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::qops::Operator;

/// Largest number of qubits a layout may declare.
pub const MAX_QUBITS: usize = 12;

/// Unitarity tolerance for unitary items.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Coeff,
    Flag,
    Env,
    Sys,
    Work(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Register {
    pub role: Role,
    pub qubits: usize,
}

/// Ordered list of registers; qubit indices run through them in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterLayout {
    registers: Vec<Register>,
}

impl RegisterLayout {
    pub fn new(registers: Vec<Register>) -> Result<Self> {
        let layout = Self { registers };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.total_qubits();
        if total > MAX_QUBITS {
            return Err(Error::RegisterCap(total));
        }
        for (i, r) in self.registers.iter().enumerate() {
            if self.registers[..i].iter().any(|o| o.role == r.role) {
                return Err(Error::MalformedItem {
                    index: i,
                    reason: format!("register {:?} declared twice", r.role),
                });
            }
        }
        Ok(())
    }

    /// Coefficient, environment and system registers, in that order.
    pub fn ccc(coeff: usize, env: usize, sys: usize) -> Result<Self> {
        Self::new(vec![
            Register { role: Role::Coeff, qubits: coeff },
            Register { role: Role::Env, qubits: env },
            Register { role: Role::Sys, qubits: sys },
        ])
    }

    /// A layout holding only a system register.
    pub fn system(sys: usize) -> Result<Self> {
        Self::new(vec![Register { role: Role::Sys, qubits: sys }])
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn total_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.qubits).sum()
    }

    pub fn dim(&self) -> usize {
        1 << self.total_qubits()
    }

    /// Width of the register with `role`, zero when absent.
    pub fn width(&self, role: Role) -> usize {
        self.registers
            .iter()
            .find(|r| r.role == role)
            .map_or(0, |r| r.qubits)
    }

    pub fn coeff_qubits(&self) -> usize {
        self.width(Role::Coeff)
    }

    pub fn env_qubits(&self) -> usize {
        self.width(Role::Env)
    }

    pub fn sys_qubits(&self) -> usize {
        self.width(Role::Sys)
    }

    /// Global qubit indices of a register, empty when absent.
    pub fn qubits(&self, role: Role) -> Vec<usize> {
        let mut start = 0;
        for r in &self.registers {
            if r.role == role {
                return (start..start + r.qubits).collect();
            }
            start += r.qubits;
        }
        Vec::new()
    }
}

/// The operation carried by a circuit item.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Unitary(Operator),
    Channel(KrausChannel),
    /// Trace out each target and reinitialise it to `|0⟩`.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Unitary,
    Channel,
    Reset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateItem {
    pub name: String,
    pub op: Op,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
    pub control_value: usize,
}

impl GateItem {
    pub fn unitary(name: impl Into<String>, op: Operator, targets: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            op: Op::Unitary(op),
            targets,
            controls: Vec::new(),
            control_value: 0,
        }
    }

    pub fn channel(name: impl Into<String>, channel: KrausChannel, targets: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            op: Op::Channel(channel),
            targets,
            controls: Vec::new(),
            control_value: 0,
        }
    }

    pub fn reset(targets: Vec<usize>) -> Self {
        Self {
            name: "reset".into(),
            op: Op::Reset,
            targets,
            controls: Vec::new(),
            control_value: 0,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::unitary("cx", Operator::pauli_x(), vec![target]).controlled(vec![control], 1)
    }

    /// Condition the item on `controls` holding `value` (MSB first).
    pub fn controlled(mut self, controls: Vec<usize>, value: usize) -> Self {
        self.controls = controls;
        self.control_value = value;
        self
    }

    pub fn kind(&self) -> ItemKind {
        match self.op {
            Op::Unitary(_) => ItemKind::Unitary,
            Op::Channel(_) => ItemKind::Channel,
            Op::Reset => ItemKind::Reset,
        }
    }

    /// Every qubit the item touches.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.controls.iter().chain(&self.targets).copied()
    }

    fn validate(&self, index: usize, n_qubits: usize) -> Result<()> {
        let bad = |reason: String| Error::MalformedItem { index, reason };
        if self.targets.is_empty() {
            return Err(bad("no targets".into()));
        }
        let mut seen = vec![false; n_qubits];
        for q in self.qubits() {
            if q >= n_qubits {
                return Err(bad(format!("qubit {q} out of range for {n_qubits} qubits")));
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(bad(format!("qubit {q} used twice")));
            }
        }
        if self.controls.len() >= usize::BITS as usize || self.control_value >> self.controls.len() != 0 {
            return Err(bad(format!(
                "control value {} does not fit {} controls",
                self.control_value,
                self.controls.len()
            )));
        }
        let dim = 1usize << self.targets.len();
        match &self.op {
            Op::Unitary(u) => {
                if u.dim() != dim {
                    return Err(bad(format!("operator dim {} for {} targets", u.dim(), self.targets.len())));
                }
                let res = u.unitarity_residual();
                if res > UNITARY_TOL {
                    return Err(bad(format!("unitarity residual {res:.3e}")));
                }
            }
            Op::Channel(ch) => {
                if ch.dim() != dim {
                    return Err(bad(format!("channel dim {} for {} targets", ch.dim(), self.targets.len())));
                }
            }
            Op::Reset => {
                if !self.controls.is_empty() {
                    return Err(bad("reset cannot be controlled".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    layout: RegisterLayout,
    items: Vec<GateItem>,
}

impl Circuit {
    pub fn new(layout: RegisterLayout) -> Self {
        Self { layout, items: Vec::new() }
    }

    pub fn from_items(layout: RegisterLayout, items: Vec<GateItem>) -> Result<Self> {
        layout.validate()?;
        let mut c = Self::new(layout);
        for item in items {
            c.push(item)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, item: GateItem) -> Result<()> {
        item.validate(self.items.len(), self.n_qubits())?;
        self.items.push(item);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let n = self.n_qubits();
        self.items
            .iter()
            .enumerate()
            .try_for_each(|(i, item)| item.validate(i, n))
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn items(&self) -> &[GateItem] {
        &self.items
    }

    pub fn n_qubits(&self) -> usize {
        self.layout.total_qubits()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// True when every item is a (possibly controlled) unitary.
    pub fn is_unitary(&self) -> bool {
        self.items.iter().all(|i| i.kind() == ItemKind::Unitary)
    }
}
