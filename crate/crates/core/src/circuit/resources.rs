use serde::{Deserialize, Serialize};

use super::compile::{is_cnot, is_single_qubit};
use super::{Circuit, Op};
use crate::error::{Error, Result};

/// Qubits, CNOT count and greedy layered depth of a compiled circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCount {
    pub qubits: usize,
    pub two_qubit_gates: usize,
    pub depth: usize,
}

/// Count resources of a compiled circuit. Resets count as single-qubit
/// operations for depth.
pub fn count_resources(circuit: &Circuit) -> Result<ResourceCount> {
    circuit.validate()?;
    let mut level = vec![0usize; circuit.n_qubits()];
    let mut two_qubit_gates = 0;
    for (index, item) in circuit.items().iter().enumerate() {
        if is_cnot(item) {
            two_qubit_gates += 1;
        } else if !(is_single_qubit(item) || matches!(item.op, Op::Reset)) {
            return Err(Error::NotCompiled {
                index,
                name: item.name.clone(),
            });
        }
        if matches!(item.op, Op::Reset) {
            for &q in &item.targets {
                level[q] += 1;
            }
            continue;
        }
        let layer = item.qubits().map(|q| level[q]).max().unwrap_or(0) + 1;
        for q in item.qubits() {
            level[q] = layer;
        }
    }
    Ok(ResourceCount {
        qubits: circuit.n_qubits(),
        two_qubit_gates,
        depth: level.into_iter().max().unwrap_or(0),
    })
}
