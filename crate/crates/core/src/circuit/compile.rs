//! Compilation to CNOT and single-qubit gates by recursive
//! cosine-sine / demultiplexing decomposition.

use super::{Circuit, GateItem, Op};
use crate::channels::householder_completion;
use crate::error::{Error, Result};
use crate::qops::{max_abs, Operator};
use crate::{CMatrix, C64};

/// Entries below this are treated as exact zeros when detecting structure.
const STRUCT_TOL: f64 = 1e-12;

/// Rotation angles below this are dropped.
const ANGLE_TOL: f64 = 1e-13;

/// `‖A − e^{iφ}B‖_F` minimised over the global phase `φ`.
pub fn phase_distance(a: &Operator, b: &Operator) -> f64 {
    let (a, b) = (a.matrix(), b.matrix());
    let overlap: C64 = (b.adjoint() * a).trace();
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { C64::new(1.0, 0.0) };
    (a - b * phase).norm()
}

/// An `X` on one target with one control at value 1.
pub fn is_cnot(item: &GateItem) -> bool {
    match &item.op {
        Op::Unitary(u) => {
            item.targets.len() == 1
                && item.controls.len() == 1
                && item.control_value == 1
                && max_abs(&(u.matrix() - Operator::pauli_x().matrix())) == 0.0
        }
        _ => false,
    }
}

pub(crate) fn is_single_qubit(item: &GateItem) -> bool {
    item.targets.len() == 1 && item.controls.is_empty()
}

/// Rewrite every unitary item as CNOTs and single-qubit unitaries. Resets
/// pass through; channel items are rejected.
pub fn compile_to_basis(circuit: &Circuit) -> Result<Circuit> {
    circuit.validate()?;
    let mut out = Circuit::new(circuit.layout().clone());
    let mut gates = Vec::new();
    for (index, item) in circuit.items().iter().enumerate() {
        match &item.op {
            Op::Channel(_) => {
                return Err(Error::ChannelInCompile {
                    index,
                    name: item.name.clone(),
                })
            }
            Op::Reset => gates.push(item.clone()),
            Op::Unitary(u) => compile_unitary_item(item, u, &mut gates),
        }
    }
    for g in gates {
        out.push(g)?;
    }
    Ok(out)
}

fn compile_unitary_item(item: &GateItem, u: &Operator, out: &mut Vec<GateItem>) {
    if is_cnot(item) || is_single_qubit(item) && !is_identity_up_to_phase(u.matrix()) {
        out.push(item.clone());
        return;
    }
    if is_single_qubit(item) {
        return;
    }
    let x = Operator::pauli_x();
    if item.targets.len() == 1 && item.controls.len() == 1 && max_abs(&(u.matrix() - x.matrix())) < STRUCT_TOL {
        let (c, t) = (item.controls[0], item.targets[0]);
        let flip = item.control_value == 0;
        if flip {
            out.push(GateItem::unitary("x", x.clone(), vec![c]));
        }
        out.push(GateItem::cnot(c, t));
        if flip {
            out.push(GateItem::unitary("x", x, vec![c]));
        }
        return;
    }
    let qubits: Vec<usize> = item.controls.iter().chain(&item.targets).copied().collect();
    let t_dim = u.dim();
    let dim = t_dim << item.controls.len();
    let mut full = CMatrix::identity(dim, dim);
    let off = item.control_value * t_dim;
    full.view_mut((off, off), (t_dim, t_dim)).copy_from(u.matrix());
    let mut generic = Vec::new();
    qsd(&full, &qubits, &mut generic);
    if !item.controls.is_empty() {
        let mut spectral = Vec::new();
        controlled_spectral(item, u.matrix(), &mut spectral);
        let cnots = |gates: &[GateItem]| gates.iter().filter(|g| is_cnot(g)).count();
        if cnots(&spectral) < cnots(&generic) {
            out.extend(spectral);
            return;
        }
    }
    out.extend(generic);
}

/// Controlled `U = W D W†`: `W†` on the targets, the controlled diagonal as
/// a cascade of multiplexed `Rz`, then `W`.
fn controlled_spectral(item: &GateItem, u: &CMatrix, out: &mut Vec<GateItem>) {
    let (w, t) = u.clone().schur().unpack();
    let t_dim = u.nrows();
    let qubits: Vec<usize> = item.controls.iter().chain(&item.targets).copied().collect();
    let mut phases = vec![0.0; t_dim << item.controls.len()];
    for (i, z) in t.diagonal().iter().enumerate() {
        phases[item.control_value * t_dim + i] = z.arg();
    }
    qsd(&w.adjoint(), &item.targets, out);
    diagonal(&phases, &qubits, out);
    qsd(&w, &item.targets, out);
}

/// `diag(e^{iφ_j})` on `qubits` up to global phase: peel off the least
/// significant qubit as a multiplexed `Rz`, recurse on the pair averages.
fn diagonal(phases: &[f64], qubits: &[usize], out: &mut Vec<GateItem>) {
    let Some((&target, rest)) = qubits.split_last() else {
        return;
    };
    let thetas: Vec<f64> = phases.chunks(2).map(|p| p[1] - p[0]).collect();
    let means: Vec<f64> = phases.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    multiplexed_rotation(Axis::Z, &thetas, target, rest, out);
    diagonal(&means, rest, out);
}

fn is_identity_up_to_phase(m: &CMatrix) -> bool {
    let phase = m[(0, 0)];
    phase.norm() > 0.5 && max_abs(&(m - CMatrix::identity(m.nrows(), m.ncols()) * phase)) < STRUCT_TOL
}

#[derive(Clone, Copy)]
enum Axis {
    Y,
    Z,
}

fn rotation(axis: Axis, theta: f64, qubit: usize) -> GateItem {
    match axis {
        Axis::Y => GateItem::unitary("ry", Operator::ry(theta), vec![qubit]),
        Axis::Z => GateItem::unitary("rz", Operator::rz(theta), vec![qubit]),
    }
}

fn gray(k: usize) -> usize {
    k ^ (k >> 1)
}

/// `Σ_r |r⟩⟨r| ⊗ R(θ_r)` with `r` read over `controls` (MSB first) and the
/// rotation on `target`, as a Gray-code sequence of rotations and CNOTs.
fn multiplexed_rotation(axis: Axis, thetas: &[f64], target: usize, controls: &[usize], out: &mut Vec<GateItem>) {
    let m = controls.len();
    let count = 1usize << m;
    debug_assert_eq!(thetas.len(), count);
    let phi: Vec<f64> = (0..count)
        .map(|k| {
            let g = gray(k);
            thetas
                .iter()
                .enumerate()
                .map(|(r, t)| if (r & g).count_ones() % 2 == 0 { *t } else { -*t })
                .sum::<f64>()
                / count as f64
        })
        .collect();
    if phi[1..].iter().all(|p| p.abs() < ANGLE_TOL) {
        if phi[0].abs() >= ANGLE_TOL {
            out.push(rotation(axis, phi[0], target));
        }
        return;
    }
    for (k, &p) in phi.iter().enumerate() {
        if p.abs() >= ANGLE_TOL {
            out.push(rotation(axis, p, target));
        }
        let bit = (gray(k) ^ gray((k + 1) % count)).trailing_zeros() as usize;
        out.push(GateItem::cnot(controls[m - 1 - bit], target));
    }
}

/// Decompose the unitary `g` acting on `qubits` (MSB first).
fn qsd(g: &CMatrix, qubits: &[usize], out: &mut Vec<GateItem>) {
    if qubits.len() == 1 {
        if !is_identity_up_to_phase(g) {
            out.push(GateItem::unitary("u", Operator::new(g.clone()).expect("square"), vec![qubits[0]]));
        }
        return;
    }
    let h = g.nrows() / 2;
    let g00 = g.view((0, 0), (h, h)).into_owned();
    let g01 = g.view((0, h), (h, h)).into_owned();
    let g10 = g.view((h, 0), (h, h)).into_owned();
    let g11 = g.view((h, h), (h, h)).into_owned();
    let block_diag = max_abs(&g01) < STRUCT_TOL && max_abs(&g10) < STRUCT_TOL;
    if block_diag && max_abs(&(&g00 - &g11)) < STRUCT_TOL {
        qsd(&g00, &qubits[1..], out);
    } else if block_diag {
        demultiplex(&g00, &g11, qubits, out);
    } else {
        let csd = cosine_sine(&g00, &g01, &g10, &g11);
        demultiplex(&csd.b0, &csd.b1, qubits, out);
        multiplexed_rotation(Axis::Y, &csd.thetas, qubits[0], &qubits[1..], out);
        demultiplex(&csd.a0, &csd.a1, qubits, out);
    }
}

/// `U₀ ⊕ U₁ = (I⊗V)(D⊕D†)(I⊗W)` with the top qubit selecting the block.
fn demultiplex(u0: &CMatrix, u1: &CMatrix, qubits: &[usize], out: &mut Vec<GateItem>) {
    let x = u0 * u1.adjoint();
    let (v, t) = x.schur().unpack();
    let d: Vec<C64> = t.diagonal().iter().map(|z| (z / z.norm()).sqrt()).collect();
    let dmat = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));
    let w = &dmat * v.adjoint() * u1;
    qsd(&w, &qubits[1..], out);
    let thetas: Vec<f64> = d.iter().map(|z| -2.0 * z.arg()).collect();
    multiplexed_rotation(Axis::Z, &thetas, qubits[0], &qubits[1..], out);
    qsd(&v, &qubits[1..], out);
}

struct Csd {
    a0: CMatrix,
    a1: CMatrix,
    b0: CMatrix,
    b1: CMatrix,
    thetas: Vec<f64>,
}

/// `G = (A₀⊕A₁) [[C,−S],[S,C]] (B₀⊕B₁)` with `C = cos(θ/2)`, `S = sin(θ/2)`.
fn cosine_sine(g00: &CMatrix, g01: &CMatrix, g10: &CMatrix, g11: &CMatrix) -> Csd {
    let h = g00.nrows();
    let svd = g00.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let a0 = CMatrix::from_fn(h, h, |r, c| u[(r, order[c])]);
    let b0 = CMatrix::from_fn(h, h, |r, c| vt[(order[r], c)]);
    let cos: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].min(1.0)).collect();

    let x = g10 * b0.adjoint();
    let q = householder_completion(&x);
    let r = q.adjoint() * &x;
    let mut a1 = q;
    let mut sin = vec![0.0; h];
    for j in 0..h {
        let rjj = r[(j, j)];
        sin[j] = rjj.norm();
        if sin[j] > 0.0 {
            let phase = rjj / sin[j];
            let col = a1.column(j) * phase;
            a1.set_column(j, &col);
        }
    }
    let cmat = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(h, cos.iter().map(|&c| C64::new(c, 0.0))));
    let smat = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(h, sin.iter().map(|&s| C64::new(s, 0.0))));
    let b1 = &cmat * a1.adjoint() * g11 - &smat * a0.adjoint() * g01;
    let thetas = cos.iter().zip(&sin).map(|(c, s)| 2.0 * s.atan2(*c)).collect();
    Csd { a0, a1, b0, b1, thetas }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{circuit_unitary, RegisterLayout};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_unitary(dim: usize, rng: &mut ChaCha8Rng) -> Operator {
        let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        Operator::new(g.qr().q()).unwrap()
    }

    fn check(circ: &Circuit) -> Circuit {
        let compiled = compile_to_basis(circ).unwrap();
        for item in compiled.items() {
            assert!(is_cnot(item) || is_single_qubit(item), "{item:?}");
        }
        let d = phase_distance(&circuit_unitary(circ).unwrap(), &circuit_unitary(&compiled).unwrap());
        assert!(d < 1e-8, "distance {d}");
        compiled
    }

    fn cnots(c: &Circuit) -> usize {
        c.items().iter().filter(|i| is_cnot(i)).count()
    }

    #[test]
    fn single_cnot_is_unchanged() {
        let c = Circuit::from_items(RegisterLayout::system(2).unwrap(), vec![GateItem::cnot(0, 1)]).unwrap();
        let compiled = check(&c);
        assert_eq!(compiled.items(), c.items());
    }

    #[test]
    fn cz_compiles_to_hadamard_sandwich() {
        let c = Circuit::from_items(
            RegisterLayout::system(2).unwrap(),
            vec![GateItem::unitary("cz", Operator::cz(), vec![0, 1])],
        )
        .unwrap();
        let compiled = check(&c);
        assert!(cnots(&compiled) >= 1);
        let h = Operator::hadamard();
        let ih = Operator::identity(2).kron(&h).unwrap();
        let oracle = ih.compose(&Operator::cnot()).unwrap().compose(&ih).unwrap();
        assert!(phase_distance(&circuit_unitary(&compiled).unwrap(), &oracle) < 1e-8);
    }

    #[test]
    fn random_unitaries_compile() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=4 {
            for _ in 0..3 {
                let u = random_unitary(1 << n, &mut rng);
                let targets: Vec<usize> = (0..n).rev().collect();
                let c = Circuit::from_items(RegisterLayout::system(n).unwrap(), vec![GateItem::unitary("u", u, targets)]).unwrap();
                check(&c);
            }
        }
    }

    #[test]
    fn doubly_controlled_dilation_compiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for value in 0..4 {
            let u = random_unitary(4, &mut rng);
            let c = Circuit::from_items(
                RegisterLayout::system(4).unwrap(),
                vec![GateItem::unitary("u", u, vec![2, 3]).controlled(vec![0, 1], value)],
            )
            .unwrap();
            check(&c);
        }
    }

    #[test]
    fn structured_gates_compile() {
        let n = 3;
        let items = vec![
            GateItem::unitary("x", Operator::pauli_x(), vec![2]).controlled(vec![0, 1], 0b01),
            GateItem::unitary("swap", Operator::swap(1), vec![0, 2]).controlled(vec![1], 1),
            GateItem::unitary("x", Operator::pauli_x(), vec![1]).controlled(vec![2], 0),
            GateItem::unitary("h", Operator::hadamard(), vec![1]),
            GateItem::unitary("id", Operator::identity(4), vec![1, 2]),
        ];
        let c = Circuit::from_items(RegisterLayout::system(n).unwrap(), items).unwrap();
        check(&c);
    }

    #[test]
    fn multiplexor_matches_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let thetas: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
        let mut items = Vec::new();
        multiplexed_rotation(Axis::Y, &thetas, 0, &[1, 2], &mut items);
        let c = Circuit::from_items(RegisterLayout::system(3).unwrap(), items).unwrap();
        let u = circuit_unitary(&c).unwrap();
        let mut expected = CMatrix::zeros(8, 8);
        for (r, &t) in thetas.iter().enumerate() {
            let ry = Operator::ry(t);
            for a in 0..2 {
                for b in 0..2 {
                    expected[(a * 4 + r, b * 4 + r)] = ry.matrix()[(a, b)];
                }
            }
        }
        assert!(max_abs(&(u.matrix() - expected)) < 1e-14);
    }

    #[test]
    fn channel_items_rejected() {
        let c = Circuit::from_items(
            RegisterLayout::system(1).unwrap(),
            vec![GateItem::channel("ad", crate::channels::amplitude_damping_channel(0.2).unwrap(), vec![0])],
        )
        .unwrap();
        assert!(matches!(compile_to_basis(&c), Err(Error::ChannelInCompile { index: 0, .. })));
    }
}
