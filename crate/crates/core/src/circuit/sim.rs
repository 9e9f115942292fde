//! Dense density-matrix simulation of circuits.

use rayon::prelude::*;

use super::{Circuit, GateItem, Op, RegisterLayout, Role};
use crate::error::{Error, Result};
use crate::qops::{check_dims, partial_trace, DensityMatrix, Operator};
use crate::{CMatrix, C64};

/// Column count above which the column loop runs on the rayon pool.
const PAR_THRESHOLD: usize = 128;

/// Where an item's operator lands in the global index space.
struct Placement {
    /// `offsets[t]` is the global index contribution of local index `t`.
    offsets: Vec<usize>,
    /// Base indices: free bits enumerated, control bits fixed to the value.
    bases: Vec<usize>,
    ctrl_mask: usize,
    ctrl_bits: usize,
}

impl Placement {
    fn new(n: usize, item: &GateItem) -> Self {
        let bit = |q: usize| 1usize << (n - 1 - q);
        let k = item.targets.len();
        let offsets = (0..1usize << k)
            .map(|t| {
                item.targets
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| t >> (k - 1 - i) & 1 == 1)
                    .map(|(_, &q)| bit(q))
                    .sum()
            })
            .collect();
        let c = item.controls.len();
        let ctrl_mask: usize = item.controls.iter().map(|&q| bit(q)).sum();
        let ctrl_bits: usize = item
            .controls
            .iter()
            .enumerate()
            .filter(|(i, _)| item.control_value >> (c - 1 - i) & 1 == 1)
            .map(|(_, &q)| bit(q))
            .sum();
        let target_mask: usize = item.targets.iter().map(|&q| bit(q)).sum();
        let free_mask = ((1usize << n) - 1) & !ctrl_mask & !target_mask;
        // enumerate all submasks of free_mask
        let mut bases = Vec::with_capacity(1 << (n - k - c));
        let mut sub = 0usize;
        loop {
            bases.push(sub | ctrl_bits);
            if sub == free_mask {
                break;
            }
            sub = (sub.wrapping_sub(free_mask)) & free_mask;
        }
        Self {
            offsets,
            bases,
            ctrl_mask,
            ctrl_bits,
        }
    }

    fn matches(&self, index: usize) -> bool {
        index & self.ctrl_mask == self.ctrl_bits
    }
}

/// Gather `src(j)` for the local indices into `v` and record the nonzero
/// positions in `nz`.
fn gather(v: &mut [C64], nz: &mut Vec<usize>, src: impl Fn(usize) -> C64) {
    nz.clear();
    for (j, slot) in v.iter_mut().enumerate() {
        *slot = src(j);
        if *slot != C64::new(0.0, 0.0) {
            nz.push(j);
        }
    }
}

/// `m ← (op on placement) · m`, rows outside the control subspace untouched.
/// Exact zeros are skipped, which leaves the summation order fixed.
fn left_apply(m: &mut CMatrix, op: &CMatrix, pl: &Placement) {
    let rows = m.nrows();
    let k = pl.offsets.len();
    let init = || (vec![C64::new(0.0, 0.0); k], Vec::with_capacity(k));
    let kernel = |(v, nz): &mut (Vec<C64>, Vec<usize>), col: &mut [C64]| {
        for &b in &pl.bases {
            gather(v, nz, |j| col[b + pl.offsets[j]]);
            if nz.is_empty() {
                continue;
            }
            for (i, &o) in pl.offsets.iter().enumerate() {
                col[b + o] = nz.iter().map(|&j| op[(i, j)] * v[j]).sum();
            }
        }
    };
    let data = m.as_mut_slice();
    if rows >= PAR_THRESHOLD {
        data.par_chunks_mut(rows).for_each_init(init, kernel);
    } else {
        let mut bufs = init();
        data.chunks_mut(rows).for_each(|col| kernel(&mut bufs, col));
    }
}

/// `m ← m · (op on placement)†`, whole columns at a time.
fn right_apply_adjoint(m: &mut CMatrix, op: &CMatrix, pl: &Placement) {
    let rows = m.nrows();
    let k = pl.offsets.len();
    let data = m.as_mut_slice();
    let mut buf = vec![C64::new(0.0, 0.0); k * rows];
    let mut live = Vec::with_capacity(k);
    for &b in &pl.bases {
        live.clear();
        for (j, &o) in pl.offsets.iter().enumerate() {
            let src = &data[(b + o) * rows..(b + o + 1) * rows];
            if src.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                buf[j * rows..(j + 1) * rows].copy_from_slice(src);
                live.push(j);
            }
        }
        if live.is_empty() {
            continue;
        }
        for (i, &o) in pl.offsets.iter().enumerate() {
            let dst = &mut data[(b + o) * rows..(b + o + 1) * rows];
            dst.fill(C64::new(0.0, 0.0));
            for &j in &live {
                let w = op[(i, j)].conj();
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let src = &buf[j * rows..(j + 1) * rows];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s * w);
            }
        }
    }
}

fn conjugate(m: &mut CMatrix, op: &CMatrix, pl: &Placement) {
    left_apply(m, op, pl);
    right_apply_adjoint(m, op, pl);
}

/// Zero rows (and columns) outside the control subspace, or inside it when
/// `inside` is false.
fn project(m: &mut CMatrix, pl: &Placement, inside: bool) {
    let d = m.nrows();
    for c in 0..d {
        let keep_col = pl.matches(c) == inside;
        for r in 0..d {
            if !(keep_col && pl.matches(r) == inside) {
                m[(r, c)] = C64::new(0.0, 0.0);
            }
        }
    }
}

fn apply_channel_item(m: &CMatrix, ch_kraus: &[(CMatrix, f64)], pl: &Placement, controlled: bool) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    let base = if controlled {
        let mut p = m.clone();
        project(&mut p, pl, true);
        let mut q = m.clone();
        project(&mut q, pl, false);
        out += q;
        p
    } else {
        m.clone()
    };
    for (k, w) in ch_kraus {
        let mut t = base.clone();
        conjugate(&mut t, k, pl);
        out += t * C64::new(*w, 0.0);
    }
    out
}

fn reset_kraus() -> Vec<(CMatrix, f64)> {
    vec![
        (Operator::ket_bra(2, 0, 0).into_matrix(), 1.0),
        (Operator::ket_bra(2, 0, 1).into_matrix(), 1.0),
    ]
}

fn apply_item(m: &mut CMatrix, n: usize, item: &GateItem) {
    match &item.op {
        Op::Unitary(u) => conjugate(m, u.matrix(), &Placement::new(n, item)),
        Op::Channel(ch) => {
            let kraus: Vec<_> = ch
                .kraus()
                .iter()
                .zip(ch.weights())
                .map(|(k, &w)| (k.matrix().clone(), w))
                .collect();
            *m = apply_channel_item(m, &kraus, &Placement::new(n, item), !item.controls.is_empty());
        }
        Op::Reset => {
            let kraus = reset_kraus();
            for &q in &item.targets {
                let single = GateItem::reset(vec![q]);
                *m = apply_channel_item(m, &kraus, &Placement::new(n, &single), false);
            }
        }
    }
}

/// Apply the items in order to `rho_in`, whose dimension must match the
/// layout. The result has one qubit per subsystem.
pub fn simulate_circuit(circuit: &Circuit, rho_in: &DensityMatrix) -> Result<DensityMatrix> {
    // items are checked on push; only the layout can arrive unchecked
    circuit.layout().validate()?;
    let n = circuit.n_qubits();
    check_dims(1 << n, rho_in.dim())?;
    let mut m = rho_in.matrix().clone();
    for item in circuit.items() {
        apply_item(&mut m, n, item);
    }
    DensityMatrix::from_parts(vec![2; n], m)
}

/// Composite unitary of a circuit made only of unitary items.
pub fn circuit_unitary(circuit: &Circuit) -> Result<Operator> {
    circuit.layout().validate()?;
    let n = circuit.n_qubits();
    let mut m = CMatrix::identity(1 << n, 1 << n);
    for (index, item) in circuit.items().iter().enumerate() {
        match &item.op {
            Op::Unitary(u) => left_apply(&mut m, u.matrix(), &Placement::new(n, item)),
            _ => {
                return Err(Error::MalformedItem {
                    index,
                    reason: format!("`{}` is not unitary", item.name),
                })
            }
        }
    }
    Operator::new(m)
}

/// `|0…0⟩⟨0…0| ⊗ ρ ⊗ |0…0⟩⟨0…0|` with `ρ` on the system register.
pub fn embed_system(layout: &RegisterLayout, rho_sys: &DensityMatrix) -> Result<DensityMatrix> {
    let sys = layout.qubits(Role::Sys);
    check_dims(1 << sys.len(), rho_sys.dim())?;
    let n = layout.total_qubits();
    let before = sys.first().copied().unwrap_or(n);
    let after = n - before - sys.len();
    let (d, ds) = (1usize << n, rho_sys.dim());
    let mut m = CMatrix::zeros(d, d);
    for c in 0..ds {
        for r in 0..ds {
            m[(r << after, c << after)] = rho_sys.matrix()[(r, c)];
        }
    }
    DensityMatrix::from_parts(vec![2; n], m)
}

/// Reduced state of the system register.
pub fn system_marginal(layout: &RegisterLayout, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let sys = layout.qubits(Role::Sys);
    let n = layout.total_qubits();
    check_dims(1 << n, rho.dim())?;
    let qubit_dims = vec![2; n];
    if rho.dims() != qubit_dims {
        let full = DensityMatrix::from_parts(qubit_dims, rho.matrix().clone())?;
        return system_marginal(layout, &full);
    }
    if sys.len() == n {
        return Ok(rho.clone());
    }
    partial_trace(rho, &sys)
}

/// Embed `rho_sys`, run the circuit and return the system marginal.
///
/// Unitary circuits evolve a factor `F` with `ρ = F F†`, one column per
/// nonzero eigenvalue of `rho_sys`, which avoids the full density matrix.
pub fn evolve_system(circuit: &Circuit, rho_sys: &DensityMatrix) -> Result<DensityMatrix> {
    let layout = circuit.layout();
    if !circuit.is_unitary() {
        let out = simulate_circuit(circuit, &embed_system(layout, rho_sys)?)?;
        return system_marginal(layout, &out);
    }
    layout.validate()?;
    let sys = layout.qubits(Role::Sys);
    let ds = 1usize << sys.len();
    check_dims(ds, rho_sys.dim())?;
    let n = layout.total_qubits();
    let after = n - sys.first().copied().unwrap_or(n) - sys.len();
    let eig = rho_sys.matrix().clone().symmetric_eigen();
    let cols: Vec<usize> = (0..ds).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    let mut f = CMatrix::zeros(1 << n, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        let w = eig.eigenvalues[i].sqrt();
        for a in 0..ds {
            f[(a << after, c)] = eig.eigenvectors[(a, i)] * w;
        }
    }
    for item in circuit.items() {
        if let Op::Unitary(u) = &item.op {
            left_apply(&mut f, u.matrix(), &Placement::new(n, item));
        }
    }
    let lo = 1usize << after;
    let hi = 1usize << (n - after - sys.len());
    let at = |h: usize, a: usize, l: usize| (h * ds + a) * lo + l;
    let mut out = CMatrix::zeros(ds, ds);
    for c in 0..f.ncols() {
        for h in 0..hi {
            for l in 0..lo {
                for a in 0..ds {
                    let fa = f[(at(h, a, l), c)];
                    if fa == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..ds {
                        out[(a, b)] += fa * f[(at(h, b, l), c)].conj();
                    }
                }
            }
        }
    }
    DensityMatrix::from_parts(vec![2; sys.len()], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{amplitude_damping_channel, depolarizing_channel, KrausChannel};
    use crate::circuit::GateItem;
    use crate::qops::{max_abs, Tensor};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    /// Full-space operator by explicit permutation of basis indices.
    fn embed_op(n: usize, op: &CMatrix, targets: &[usize], controls: &[usize], value: usize) -> CMatrix {
        let d = 1 << n;
        let bit = |i: usize, q: usize| (i >> (n - 1 - q)) & 1;
        let local = |i: usize, qs: &[usize]| qs.iter().fold(0, |acc, &q| acc << 1 | bit(i, q));
        CMatrix::from_fn(d, d, |r, col| {
            let others_equal = (0..n)
                .filter(|q| !targets.contains(q))
                .all(|q| bit(r, q) == bit(col, q));
            if !others_equal {
                return c(0.0);
            }
            if local(col, controls) != value {
                return if r == col { c(1.0) } else { c(0.0) };
            }
            op[(local(r, targets), local(col, targets))]
        })
    }

    #[test]
    fn empty_circuit_is_identity() {
        let circ = Circuit::new(RegisterLayout::system(2).unwrap());
        let rho = DensityMatrix::maximally_mixed(vec![4]).unwrap();
        let out = simulate_circuit(&circ, &rho).unwrap();
        assert_eq!(out.matrix(), rho.matrix());
    }

    #[test]
    fn controlled_unitary_matches_embedding() {
        let n = 4;
        let u = Operator::ry(0.4).kron(&Operator::rx(1.3)).unwrap();
        let item = GateItem::unitary("u", u.clone(), vec![3, 1]).controlled(vec![2, 0], 0b10);
        let circ = Circuit::from_items(RegisterLayout::system(n).unwrap(), vec![item]).unwrap();
        let got = circuit_unitary(&circ).unwrap();
        let expected = embed_op(n, u.matrix(), &[3, 1], &[2, 0], 0b10);
        assert!(max_abs(&(got.matrix() - expected)) < 1e-15);
    }

    #[test]
    fn cnot_on_basis_states() {
        let circ = Circuit::from_items(RegisterLayout::system(2).unwrap(), vec![GateItem::cnot(0, 1)]).unwrap();
        let u = circuit_unitary(&circ).unwrap();
        assert_eq!(u, Operator::cnot());
        let flipped = Circuit::from_items(RegisterLayout::system(2).unwrap(), vec![GateItem::cnot(1, 0)]).unwrap();
        let u = circuit_unitary(&flipped).unwrap();
        let expected = Operator::swap(1).compose(&Operator::cnot()).unwrap().compose(&Operator::swap(1)).unwrap();
        assert_eq!(u, expected);
    }

    #[test]
    fn channel_item_on_subsystem() {
        let ad = amplitude_damping_channel(0.3).unwrap();
        let circ = Circuit::from_items(
            RegisterLayout::system(2).unwrap(),
            vec![GateItem::channel("ad", ad.clone(), vec![1])],
        )
        .unwrap();
        let rho = DensityMatrix::basis_state(vec![4], 0b11).unwrap();
        let out = simulate_circuit(&circ, &rho).unwrap();
        let expected = DensityMatrix::basis_state(vec![2], 1)
            .unwrap()
            .tensor(&crate::channels::apply_channel(&ad, &DensityMatrix::basis_state(vec![2], 1).unwrap()).unwrap())
            .unwrap();
        assert!(max_abs(&(out.matrix() - expected.matrix())) < 1e-15);
    }

    #[test]
    fn controlled_channel_semantics() {
        // {P⊗K_j} ∪ {Q⊗I}
        let dep = depolarizing_channel(0.4, 1).unwrap();
        let item = GateItem::channel("dep", dep.clone(), vec![1]).controlled(vec![0], 1);
        let circ = Circuit::from_items(RegisterLayout::system(2).unwrap(), vec![item]).unwrap();
        let p = Operator::projector(2, 1);
        let q = Operator::projector(2, 0);
        let mut kraus: Vec<Operator> = dep.kraus().iter().map(|k| p.kron(k).unwrap()).collect();
        kraus.push(q.kron(&Operator::identity(2)).unwrap());
        let oracle = KrausChannel::new("oracle", kraus).unwrap();
        let plus = crate::C64::new(0.5, 0.0);
        let amps = [plus, plus, plus, C64::new(0.0, 0.5)];
        let rho = DensityMatrix::pure(vec![4], &amps).unwrap();
        let out = simulate_circuit(&circ, &rho).unwrap();
        let expected = crate::channels::apply_channel(&oracle, &rho).unwrap();
        assert!(max_abs(&(out.matrix() - expected.matrix())) < 1e-15);
    }

    #[test]
    fn reset_reinitialises() {
        let circ = Circuit::from_items(RegisterLayout::system(2).unwrap(), vec![GateItem::reset(vec![0])]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // Bell state: resetting qubit 0 leaves |0⟩⟨0| ⊗ I/2
        let bell = DensityMatrix::pure(vec![4], &[c(s), c(0.0), c(0.0), c(s)]).unwrap();
        let out = simulate_circuit(&circ, &bell).unwrap();
        let expected = DensityMatrix::zero_qubits(1)
            .unwrap()
            .tensor(&DensityMatrix::maximally_mixed(vec![2]).unwrap())
            .unwrap();
        assert!(max_abs(&(out.matrix() - expected.matrix())) < 1e-15);
    }

    #[test]
    fn embed_and_marginal_round_trip() {
        let layout = RegisterLayout::ccc(1, 1, 1).unwrap();
        let rho = DensityMatrix::maximally_mixed(vec![2]).unwrap();
        let full = embed_system(&layout, &rho).unwrap();
        assert_eq!(full.dim(), 8);
        assert!((full.matrix()[(0, 0)] - c(0.5)).norm() < 1e-15);
        assert!((full.matrix()[(1, 1)] - c(0.5)).norm() < 1e-15);
        let back = system_marginal(&layout, &full).unwrap();
        assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-15);
    }

    #[test]
    fn evolve_system_matches_dense_path() {
        let layout = RegisterLayout::ccc(1, 1, 2).unwrap();
        let u = Operator::ry(0.7).kron(&Operator::rx(0.3)).unwrap();
        let items = vec![
            GateItem::unitary("h", Operator::hadamard(), vec![0]),
            GateItem::unitary("u", u, vec![3, 1]).controlled(vec![0], 1),
            GateItem::cnot(1, 2),
            GateItem::unitary("rz", Operator::rz(0.9), vec![2]),
        ];
        let circ = Circuit::from_items(layout.clone(), items).unwrap();
        let amps = [c(0.6), C64::new(0.0, 0.48), c(0.0), c(0.64)];
        let pure = DensityMatrix::pure(vec![2, 2], &amps).unwrap();
        let mixed = DensityMatrix::from_parts(
            vec![2, 2],
            pure.matrix() * c(0.7) + DensityMatrix::maximally_mixed(vec![2, 2]).unwrap().matrix() * c(0.3),
        )
        .unwrap();
        for rho in [pure, mixed] {
            let fast = evolve_system(&circ, &rho).unwrap();
            let dense = system_marginal(&layout, &simulate_circuit(&circ, &embed_system(&layout, &rho).unwrap()).unwrap()).unwrap();
            assert!(max_abs(&(fast.matrix() - dense.matrix())) < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let circ = Circuit::new(RegisterLayout::system(2).unwrap());
        let rho = DensityMatrix::zero_qubits(1).unwrap();
        assert!(matches!(simulate_circuit(&circ, &rho), Err(Error::DimMismatch { .. })));
    }
}
