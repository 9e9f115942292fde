//! Mixture circuits: the coefficient-register construction and the
//! forking comparator.

use super::{Circuit, GateItem, Register, RegisterLayout, Role, MAX_QUBITS};
use crate::channels::{householder_completion, stinespring_dilation, validate_distribution, ConvexCombination, DilatedUnitary};
use crate::error::{Error, Result};
use crate::qops::{check_dims, Operator};
use crate::{CMatrix, C64};

/// Qubits needed to index `count` values.
pub fn index_qubits(count: usize) -> usize {
    count.next_power_of_two().trailing_zeros() as usize
}

/// Unitary `V` on `⌈log₂ N⌉` qubits with `V|0⟩ = Σ_α √p_α |α⟩`.
pub fn prep_unitary(probs: &[f64]) -> Result<Operator> {
    validate_distribution(probs)?;
    let qubits = index_qubits(probs.len());
    if qubits > MAX_QUBITS {
        return Err(Error::RegisterCap(qubits));
    }
    let dim = 1usize << qubits;
    let first = CMatrix::from_fn(dim, 1, |i, _| C64::new(probs.get(i).map_or(0.0, |p| p.sqrt()), 0.0));
    let q = householder_completion(&first);
    let mut v = q;
    v.set_column(0, &first.column(0));
    Operator::new(v)
}

fn check_system(cc: &ConvexCombination, n_sys: usize) -> Result<()> {
    if n_sys == 0 || n_sys > MAX_QUBITS {
        return Err(Error::OutOfRange {
            name: "n_sys",
            reason: format!("{n_sys} not in 1..={MAX_QUBITS}"),
        });
    }
    check_dims(1 << n_sys, cc.dim())
}

fn dilate_all(cc: &ConvexCombination) -> Result<Vec<DilatedUnitary>> {
    cc.channels().iter().map(stinespring_dilation).collect()
}

fn dilation_item(name: &str, d: &DilatedUnitary, sys: &[usize], env: &[usize]) -> GateItem {
    let targets = sys.iter().chain(&env[..d.env_qubits()]).copied().collect();
    GateItem::unitary(name, d.unitary().clone(), targets)
}

/// Coefficient register prepared by `V`, then each component's dilation on
/// `env ⊗ sys` controlled on the coefficient register holding `α`. The
/// environment register is shared: branches other than `α` leave it in
/// `|0⟩`.
pub fn build_ccc_circuit(cc: &ConvexCombination, n_sys: usize) -> Result<Circuit> {
    check_system(cc, n_sys)?;
    let dilations = dilate_all(cc)?;
    let coeff = index_qubits(cc.len());
    let env = dilations.iter().map(DilatedUnitary::env_qubits).max().unwrap_or(0);
    let layout = RegisterLayout::ccc(coeff, env, n_sys)?;
    let coeff_q = layout.qubits(Role::Coeff);
    let env_q = layout.qubits(Role::Env);
    let sys_q = layout.qubits(Role::Sys);

    let mut circuit = Circuit::new(layout);
    if coeff > 0 {
        circuit.push(GateItem::unitary("prep", prep_unitary(cc.probs())?, coeff_q.clone()))?;
    }
    for (alpha, (d, ch)) in dilations.iter().zip(cc.channels()).enumerate() {
        let item = dilation_item(&format!("dil[{}]", ch.label()), d, &sys_q, &env_q);
        circuit.push(if coeff > 0 { item.controlled(coeff_q.clone(), alpha) } else { item })?;
    }
    Ok(circuit)
}

/// How the forking comparator obtains the flag qubit that drives its
/// controlled swaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForkingMode {
    /// The dilation ancilla doubles as the flag.
    #[default]
    Shared,
    /// A dedicated flag qubit.
    Unshared,
}

/// Forking comparator: the system is swapped into work register `α`
/// conditioned on the coefficient register, every dilation is applied
/// unconditionally to its own work register, and the swaps are undone.
///
/// Each controlled swap goes through a flag qubit: `X` on the flag
/// conditioned on `coeff = α`, a flag-controlled swap, and the flag
/// uncomputed.
pub fn build_forking_circuit(cc: &ConvexCombination, n_sys: usize, mode: ForkingMode) -> Result<Circuit> {
    check_system(cc, n_sys)?;
    let dilations = dilate_all(cc)?;
    let n = cc.len();
    let env = dilations.iter().map(DilatedUnitary::env_qubits).max().unwrap_or(0);

    if n == 1 {
        let layout = RegisterLayout::new(vec![
            Register { role: Role::Env, qubits: env },
            Register { role: Role::Sys, qubits: n_sys },
        ])?;
        let (env_q, sys_q) = (layout.qubits(Role::Env), layout.qubits(Role::Sys));
        let mut circuit = Circuit::new(layout);
        circuit.push(dilation_item("dil", &dilations[0], &sys_q, &env_q))?;
        return Ok(circuit);
    }

    let coeff = index_qubits(n);
    let separate_flag = mode == ForkingMode::Unshared || env == 0;
    let mut registers = vec![Register { role: Role::Coeff, qubits: coeff }];
    if separate_flag {
        registers.push(Register { role: Role::Flag, qubits: 1 });
    }
    registers.push(Register { role: Role::Env, qubits: env });
    registers.push(Register { role: Role::Sys, qubits: n_sys });
    registers.extend((0..n).map(|a| Register { role: Role::Work(a), qubits: n_sys }));
    let total: usize = registers.iter().map(|r| r.qubits).sum();
    if total > MAX_QUBITS {
        return Err(Error::RegisterCap(total));
    }
    let layout = RegisterLayout::new(registers)?;
    let coeff_q = layout.qubits(Role::Coeff);
    let env_q = layout.qubits(Role::Env);
    let sys_q = layout.qubits(Role::Sys);
    let flag = if separate_flag { layout.qubits(Role::Flag)[0] } else { env_q[0] };
    let work: Vec<Vec<usize>> = (0..n).map(|a| layout.qubits(Role::Work(a))).collect();

    let mut circuit = Circuit::new(layout);
    circuit.push(GateItem::unitary("prep", prep_unitary(cc.probs())?, coeff_q.clone()))?;

    let swap_network = |circuit: &mut Circuit| -> Result<()> {
        for (alpha, w) in work.iter().enumerate() {
            let set = GateItem::unitary("flag", Operator::pauli_x(), vec![flag]).controlled(coeff_q.clone(), alpha);
            circuit.push(set.clone())?;
            for (&s, &t) in sys_q.iter().zip(w) {
                circuit.push(GateItem::unitary("swap", Operator::swap(1), vec![s, t]).controlled(vec![flag], 1))?;
            }
            circuit.push(set)?;
        }
        Ok(())
    };

    swap_network(&mut circuit)?;
    let mut env_dirty = false;
    for ((d, ch), w) in dilations.iter().zip(cc.channels()).zip(&work) {
        if d.env_qubits() > 0 {
            if env_dirty {
                circuit.push(GateItem::reset(env_q.clone()))?;
            }
            env_dirty = true;
        }
        circuit.push(dilation_item(&format!("dil[{}]", ch.label()), d, w, &env_q))?;
    }
    if env_dirty && !separate_flag {
        circuit.push(GateItem::reset(env_q.clone()))?;
    }
    swap_network(&mut circuit)?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{amplitude_damping_channel, convex_combination, apply_channel, KrausChannel};
    use crate::circuit::{embed_system, simulate_circuit, system_marginal, ItemKind};
    use crate::qops::{max_abs, DensityMatrix};

    fn first_column(v: &Operator) -> Vec<f64> {
        v.matrix().column(0).iter().map(|z| {
            assert!(z.im.abs() < 1e-15);
            z.re
        }).collect()
    }

    #[test]
    fn prep_examples() {
        let v = prep_unitary(&[1.0]).unwrap();
        assert_eq!(v.dim(), 1);
        let v = prep_unitary(&[0.25; 4]).unwrap();
        assert!(v.is_unitary(1e-14));
        for x in first_column(&v) {
            assert!((x - 0.5).abs() < 1e-15);
        }
        let lam = 1.6;
        let v = prep_unitary(&[1.0 / lam, 0.5 / lam, 0.1 / lam]).unwrap();
        assert_eq!(v.dim(), 4);
        assert!(v.is_unitary(1e-14));
        let col = first_column(&v);
        let expected = [(1.0 / lam).sqrt(), (0.5 / lam).sqrt(), (0.1 / lam).sqrt(), 0.0];
        for (a, b) in col.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(prep_unitary(&[0.5, 0.6]).is_err());
    }

    fn id_x_mix() -> ConvexCombination {
        ConvexCombination::new(
            vec![KrausChannel::identity(2), KrausChannel::unitary("x", Operator::pauli_x())],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    fn run(c: &Circuit, rho: &DensityMatrix) -> DensityMatrix {
        let full = embed_system(c.layout(), rho).unwrap();
        system_marginal(c.layout(), &simulate_circuit(c, &full).unwrap()).unwrap()
    }

    #[test]
    fn ccc_single_identity() {
        let cc = ConvexCombination::new(vec![KrausChannel::identity(2)], vec![1.0]).unwrap();
        let c = build_ccc_circuit(&cc, 1).unwrap();
        assert_eq!(c.n_qubits(), 1);
        let rho = DensityMatrix::pure(vec![2], &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        assert!(max_abs(&(run(&c, &rho).matrix() - rho.matrix())) < 1e-15);
    }

    #[test]
    fn ccc_identity_x_half() {
        let c = build_ccc_circuit(&id_x_mix(), 1).unwrap();
        assert_eq!(c.n_qubits(), 2);
        let out = run(&c, &DensityMatrix::zero_qubits(1).unwrap());
        let half = DensityMatrix::maximally_mixed(vec![2]).unwrap();
        assert!(max_abs(&(out.matrix() - half.matrix())) < 1e-15);
    }

    #[test]
    fn ccc_layout_counts() {
        let cc = ConvexCombination::new(
            vec![
                KrausChannel::unitary("z", Operator::rz(0.3)),
                KrausChannel::unitary("x", Operator::rx(0.2)),
                amplitude_damping_channel(0.1).unwrap(),
            ],
            vec![0.5, 0.3, 0.2],
        )
        .unwrap();
        let c = build_ccc_circuit(&cc, 1).unwrap();
        assert_eq!(c.n_qubits(), 4);
        assert_eq!(c.layout().coeff_qubits(), 2);
        assert_eq!(c.layout().env_qubits(), 1);
        assert!(c.items().iter().all(|i| i.kind() == ItemKind::Unitary));
        let rho = DensityMatrix::basis_state(vec![2], 1).unwrap();
        let expected = apply_channel(&convex_combination(&cc).unwrap(), &rho).unwrap();
        assert!(max_abs(&(run(&c, &rho).matrix() - expected.matrix())) < 1e-14);
    }

    #[test]
    fn forking_matches_ccc() {
        let cc = ConvexCombination::new(
            vec![
                KrausChannel::unitary("z", Operator::rz(0.3)),
                KrausChannel::unitary("x", Operator::rx(0.2)),
                amplitude_damping_channel(0.1).unwrap(),
            ],
            vec![0.5, 0.3, 0.2],
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rho = DensityMatrix::pure(vec![2], &[C64::new(s, 0.0), C64::new(0.0, s)]).unwrap();
        let ccc = run(&build_ccc_circuit(&cc, 1).unwrap(), &rho);
        for (mode, qubits) in [(ForkingMode::Shared, 7), (ForkingMode::Unshared, 8)] {
            let f = build_forking_circuit(&cc, 1, mode).unwrap();
            assert_eq!(f.n_qubits(), qubits);
            assert!(max_abs(&(run(&f, &rho).matrix() - ccc.matrix())) < 1e-14);
        }
    }

    #[test]
    fn forking_small_cases() {
        let cc = ConvexCombination::new(vec![amplitude_damping_channel(0.4).unwrap()], vec![1.0]).unwrap();
        let f = build_forking_circuit(&cc, 1, ForkingMode::Shared).unwrap();
        assert!(f.items().iter().all(|i| i.name != "swap"));
        let rho = DensityMatrix::basis_state(vec![2], 1).unwrap();
        let direct = apply_channel(&cc.channels()[0], &rho).unwrap();
        assert!(max_abs(&(run(&f, &rho).matrix() - direct.matrix())) < 1e-15);

        let f = build_forking_circuit(&id_x_mix(), 1, ForkingMode::Shared).unwrap();
        let out = run(&f, &DensityMatrix::zero_qubits(1).unwrap());
        let half = DensityMatrix::maximally_mixed(vec![2]).unwrap();
        assert!(max_abs(&(out.matrix() - half.matrix())) < 1e-15);
    }

    #[test]
    fn register_cap_enforced() {
        let chans = (0..5).map(|_| KrausChannel::identity(4)).collect();
        let cc = ConvexCombination::new(chans, vec![0.2; 5]).unwrap();
        assert!(build_ccc_circuit(&cc, 2).is_ok());
        assert!(matches!(
            build_forking_circuit(&cc, 2, ForkingMode::Shared),
            Err(Error::RegisterCap(_))
        ));
        assert!(matches!(build_ccc_circuit(&cc, 1), Err(Error::DimMismatch { .. })));
    }
}
