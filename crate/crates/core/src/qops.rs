//! Operator and state algebra: tensor products, partial traces,
//! expectation values, superoperators and Choi matrices.
//!
//! Vectorization is column-stacking throughout: `vec(ρ)[j·d + i] = ρ[i, j]`,
//! so that `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)` and a Kraus operator `K` acts as
//! `conj(K) ⊗ K`.

use nalgebra::DVector;

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::{CMatrix, C64, EIGEN_FLOOR, HERMITIAN_TOL, MAX_DIM};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// A dense square operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: CMatrix,
}

impl Operator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        check_square(&mat)?;
        if mat.nrows() > MAX_DIM {
            return Err(Error::TooLarge(mat.nrows()));
        }
        Ok(Self { mat })
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::NotSquare {
                rows: d,
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        Self::new(CMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: CMatrix::zeros(dim, dim),
        }
    }

    /// `|row⟩⟨col|` in dimension `dim`.
    pub fn ket_bra(dim: usize, row: usize, col: usize) -> Self {
        let mut mat = CMatrix::zeros(dim, dim);
        mat[(row, col)] = ONE;
        Self { mat }
    }

    pub fn projector(dim: usize, index: usize) -> Self {
        Self::ket_bra(dim, index, index)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
        }
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            mat: &self.mat * &other.mat,
        })
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            mat: self.mat.map(|x| x * factor),
        }
    }

    pub fn hermitian_residual(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_residual() <= tol
    }

    /// Largest entry of `U†U − I`.
    pub fn unitarity_residual(&self) -> f64 {
        let d = self.dim();
        max_abs(&(self.mat.adjoint() * &self.mat - CMatrix::identity(d, d)))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_residual() <= tol
    }

    pub fn kron(&self, other: &Operator) -> Result<Self> {
        let d = self.dim() * other.dim();
        if d > MAX_DIM {
            return Err(Error::TooLarge(d));
        }
        Ok(Self {
            mat: self.mat.kronecker(&other.mat),
        })
    }

    pub fn pauli_x() -> Self {
        real2(0.0, 1.0, 1.0, 0.0)
    }

    pub fn pauli_y() -> Self {
        Self {
            mat: CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        }
    }

    pub fn pauli_z() -> Self {
        real2(1.0, 0.0, 0.0, -1.0)
    }

    pub fn hadamard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        real2(s, s, s, -s)
    }

    /// `exp(−iθX/2)`.
    pub fn rx(theta: f64) -> Self {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Self {
            mat: CMatrix::from_row_slice(
                2,
                2,
                &[C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)],
            ),
        }
    }

    /// `exp(−iθY/2)`.
    pub fn ry(theta: f64) -> Self {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        real2(c, -s, s, c)
    }

    /// `exp(−iθZ/2)`.
    pub fn rz(theta: f64) -> Self {
        let e = C64::from_polar(1.0, -theta / 2.0);
        Self {
            mat: CMatrix::from_row_slice(2, 2, &[e, ZERO, ZERO, e.conj()]),
        }
    }

    /// CNOT with the control on the first (most significant) qubit.
    pub fn cnot() -> Self {
        let mut mat = CMatrix::zeros(4, 4);
        for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            mat[(r, c)] = ONE;
        }
        Self { mat }
    }

    pub fn cz() -> Self {
        let mut mat = CMatrix::identity(4, 4);
        mat[(3, 3)] = -ONE;
        Self { mat }
    }

    /// Swap of two registers of `qubits` qubits each.
    pub fn swap(qubits: usize) -> Self {
        let half = 1usize << qubits;
        let d = half * half;
        let mut mat = CMatrix::zeros(d, d);
        for a in 0..half {
            for b in 0..half {
                mat[(b * half + a, a * half + b)] = ONE;
            }
        }
        Self { mat }
    }

    /// The `index`-th `n`-qubit Pauli string, base-4 digits `0..4 ↦ I,X,Y,Z`
    /// with qubit 0 the most significant digit.
    pub fn pauli_string(index: usize, n_qubits: usize) -> Self {
        let singles = [
            Self::identity(2),
            Self::pauli_x(),
            Self::pauli_y(),
            Self::pauli_z(),
        ];
        let mut mat = CMatrix::identity(1, 1);
        for q in 0..n_qubits {
            let digit = (index >> (2 * (n_qubits - 1 - q))) & 3;
            mat = mat.kronecker(&singles[digit].mat);
        }
        Self { mat }
    }
}

fn real2(a: f64, b: f64, c: f64, d: f64) -> Operator {
    Operator {
        mat: CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(a, 0.0), C64::new(b, 0.0), C64::new(c, 0.0), C64::new(d, 0.0)],
        ),
    }
}

/// A density matrix over an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validated constructor: Hermitian and unit trace within 1e-10, minimum
    /// eigenvalue at least −1e-9.
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        let rho = Self::from_parts(dims, mat)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape checks only; no positivity or trace test. Used for states that
    /// come out of trusted maps and for signed intermediate results.
    pub fn from_parts(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        check_square(&mat)?;
        let d: usize = dims.iter().product();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidState(format!("bad subsystem dims {dims:?}")));
        }
        if d > MAX_DIM {
            return Err(Error::TooLarge(d));
        }
        check_dims(d, mat.nrows())?;
        Ok(Self { dims, mat })
    }

    pub fn validate(&self) -> Result<()> {
        let herm = max_abs(&(&self.mat - self.mat.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("Hermiticity residual {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < EIGEN_FLOOR {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// `|ψ⟩⟨ψ|` for a normalised amplitude vector.
    pub fn pure(dims: Vec<usize>, amplitudes: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if (norm - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("state vector norm {norm}")));
        }
        Self::new(dims, &v * v.adjoint())
    }

    pub fn basis_state(dims: Vec<usize>, index: usize) -> Result<Self> {
        let d: usize = dims.iter().product();
        if index >= d {
            return Err(Error::InvalidState(format!("basis index {index} >= {d}")));
        }
        Self::from_parts(dims, Operator::projector(d, index).into_matrix())
    }

    /// `|0…0⟩⟨0…0|` on `n` qubits.
    pub fn zero_qubits(n: usize) -> Result<Self> {
        Self::basis_state(vec![2; n], 0)
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        Self::from_parts(dims, CMatrix::identity(d, d).map(|x| x / d as f64))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    /// Real part of the trace.
    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.mat)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Same matrix viewed with a different subsystem split.
    pub fn with_dims(self, dims: Vec<usize>) -> Result<Self> {
        Self::from_parts(dims, self.mat)
    }
}

/// Kronecker product that keeps track of subsystem structure.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        self.kron(other)
    }
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let d = self.dim() * other.dim();
        if d > MAX_DIM {
            return Err(Error::TooLarge(d));
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(Self {
            dims,
            mat: self.mat.kronecker(&other.mat),
        })
    }
}

/// `a ⊗ b`. Both arguments must be the same kind; the trait bound enforces it.
pub fn tensor_product<T: Tensor>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

/// Reduced state on the subsystems in `keep`, returned in ascending
/// subsystem order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidSubsystems("keep set is empty".into()));
    }
    let n = rho.dims.len();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    if keep.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSubsystems(format!("duplicate index in {keep:?}")));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= n) {
        return Err(Error::InvalidSubsystems(format!(
            "index {bad} out of range for {n} subsystems"
        )));
    }
    let traced: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let kept_dims: Vec<usize> = keep.iter().map(|&k| rho.dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| rho.dims[k]).collect();
    let dk: usize = kept_dims.iter().product();
    let dt: usize = traced_dims.iter().product();

    // stride of each subsystem in the full row index (last subsystem fastest)
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * rho.dims[i + 1];
    }
    let offsets = |sel: &[usize], sel_dims: &[usize], index: usize| -> usize {
        let mut rem = index;
        let mut off = 0;
        for (pos, &sub) in sel.iter().enumerate().rev() {
            let digit = rem % sel_dims[pos];
            rem /= sel_dims[pos];
            off += digit * strides[sub];
        }
        off
    };
    let kept_off: Vec<usize> = (0..dk).map(|i| offsets(&keep, &kept_dims, i)).collect();
    let traced_off: Vec<usize> = (0..dt).map(|i| offsets(&traced, &traced_dims, i)).collect();

    let mut out = CMatrix::zeros(dk, dk);
    for c in 0..dk {
        for r in 0..dk {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += rho.mat[(kept_off[r] + t, kept_off[c] + t)];
            }
            out[(r, c)] = acc;
        }
    }
    DensityMatrix::from_parts(kept_dims, out)
}

/// `Tr[ρA]` for Hermitian `A`.
pub fn expectation(rho: &DensityMatrix, observable: &Operator) -> Result<f64> {
    check_dims(rho.dim(), observable.dim())?;
    let herm = observable.hermitian_residual();
    if herm > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm));
    }
    let value = trace_of_product(&rho.mat, &observable.mat);
    if value.im.abs() > HERMITIAN_TOL * (1.0 + value.re.abs()) {
        return Err(Error::InvalidState(format!(
            "Tr[ρA] has imaginary part {:.3e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// `Tr[AB]` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Column-stacking vectorisation.
pub fn vectorize(m: &CMatrix) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Linear map on `d×d` matrices stored as a `d²×d²` matrix acting on
/// column-stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    mat: CMatrix,
}

impl Superoperator {
    pub fn new(dim: usize, mat: CMatrix) -> Result<Self> {
        check_square(&mat)?;
        check_dims(dim * dim, mat.nrows())?;
        Ok(Self { dim, mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            mat: CMatrix::identity(dim * dim, dim * dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            mat: CMatrix::zeros(dim * dim, dim * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn apply_matrix(&self, m: &CMatrix) -> Result<CMatrix> {
        check_dims(self.dim, m.nrows())?;
        Ok(unvectorize(&(&self.mat * vectorize(m)), self.dim))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_matrix(&rho.mat)?;
        DensityMatrix::from_parts(rho.dims.clone(), out)
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn after(&self, inner: &Superoperator) -> Result<Self> {
        check_dims(self.dim, inner.dim)?;
        Ok(Self {
            dim: self.dim,
            mat: &self.mat * &inner.mat,
        })
    }

    /// `self + factor · other`.
    pub fn add_scaled(&self, other: &Superoperator, factor: f64) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            mat: &self.mat + other.mat.map(|x| x * factor),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            mat: self.mat.map(|x| x * factor),
        }
    }

    /// Largest absolute entry of `self − other`.
    pub fn distance(&self, other: &Superoperator) -> f64 {
        max_abs(&(&self.mat - &other.mat))
    }
}

/// `Σ_i w_i conj(K_i) ⊗ K_i`.
pub fn channel_to_superoperator(channel: &KrausChannel) -> Superoperator {
    let d = channel.dim();
    let mut mat = CMatrix::zeros(d * d, d * d);
    for (k, &w) in channel.kraus().iter().zip(channel.weights()) {
        mat += k.matrix().map(|x| x.conj()).kronecker(k.matrix()) * C64::new(w, 0.0);
    }
    Superoperator { dim: d, mat }
}

/// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ E(|i⟩⟨j|)` with the input factor first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    dim: usize,
    mat: CMatrix,
}

impl ChoiMatrix {
    pub fn from_channel(channel: &KrausChannel) -> Self {
        let d = channel.dim();
        let mut mat = CMatrix::zeros(d * d, d * d);
        for (k, &w) in channel.kraus().iter().zip(channel.weights()) {
            let v = vectorize(k.matrix());
            mat += (&v * v.adjoint()) * C64::new(w, 0.0);
        }
        Self { dim: d, mat }
    }

    pub fn from_superoperator(s: &Superoperator) -> Self {
        let d = s.dim;
        let mut mat = CMatrix::zeros(d * d, d * d);
        for j in 0..d {
            for jp in 0..d {
                for i in 0..d {
                    for ip in 0..d {
                        mat[(j * d + i, jp * d + ip)] = s.mat[(ip * d + i, jp * d + j)];
                    }
                }
            }
        }
        Self { dim: d, mat }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.mat)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Trace over the output factor; the identity for trace-preserving maps.
    pub fn output_trace(&self) -> CMatrix {
        let d = self.dim;
        CMatrix::from_fn(d, d, |j, jp| {
            (0..d).map(|i| self.mat[(j * d + i, jp * d + i)]).sum()
        })
    }
}

/// Outcome of [`cptp_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptpReport {
    pub is_tp: bool,
    pub is_cp: bool,
    /// Largest entry of `Σ w K†K − I`.
    pub tp_residual: f64,
    pub choi_min_eig: f64,
}

impl CptpReport {
    pub fn is_cptp(&self) -> bool {
        self.is_tp && self.is_cp
    }
}

pub fn cptp_check(channel: &KrausChannel, tol: f64) -> CptpReport {
    let d = channel.dim();
    let mut sum = CMatrix::zeros(d, d);
    for (k, &w) in channel.kraus().iter().zip(channel.weights()) {
        sum += k.matrix().adjoint() * k.matrix() * C64::new(w, 0.0);
    }
    let tp_residual = max_abs(&(sum - CMatrix::identity(d, d)));
    let choi_min_eig = ChoiMatrix::from_channel(channel).min_eigenvalue();
    CptpReport {
        is_tp: tp_residual <= tol,
        is_cp: choi_min_eig >= -tol,
        tp_residual,
        choi_min_eig,
    }
}

/// Eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()).map(|x| x * 0.5);
    h.symmetric_eigenvalues().iter().copied().collect()
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub(crate) fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimMismatch { expected, actual });
    }
    Ok(())
}
