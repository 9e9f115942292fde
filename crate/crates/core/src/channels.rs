//! Kraus channels and the transformations built on them.

use crate::error::{Error, Result};
use crate::qops::{
    check_dims, cptp_check, max_abs, partial_trace, unvectorize, ChoiMatrix, CptpReport,
    DensityMatrix, Operator, Tensor,
};
use crate::{CMatrix, C64, MAX_DIM};

/// Tolerance used when a channel must be CPTP before it can be dilated or mixed.
pub const CPTP_TOL: f64 = 1e-9;

/// A map `ρ ↦ Σ_i w_i K_i ρ K_i†`.
///
/// Weights are `+1` for ordinary Kraus channels. Signed weights let
/// non-physical maps (differences of channels) be represented and tested;
/// such maps are never accepted where a CPTP channel is required.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    label: String,
    kraus: Vec<Operator>,
    weights: Vec<f64>,
}

impl KrausChannel {
    pub fn new(label: impl Into<String>, kraus: Vec<Operator>) -> Result<Self> {
        let weights = vec![1.0; kraus.len()];
        Self::signed(label, kraus, weights)
    }

    pub fn signed(label: impl Into<String>, kraus: Vec<Operator>, weights: Vec<f64>) -> Result<Self> {
        let first = kraus.first().ok_or(Error::EmptyChannel)?;
        let d = first.dim();
        for k in &kraus {
            check_dims(d, k.dim())?;
        }
        check_dims(kraus.len(), weights.len())?;
        Ok(Self {
            label: label.into(),
            kraus,
            weights,
        })
    }

    pub fn unitary(label: impl Into<String>, u: Operator) -> Self {
        Self {
            label: label.into(),
            kraus: vec![u],
            weights: vec![1.0],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::unitary("id", Operator::identity(dim))
    }

    /// `ρ ↦ Tr[ρ] |index⟩⟨index|`.
    pub fn replacement(dim: usize, index: usize) -> Self {
        Self {
            label: format!("replace|{index}>"),
            kraus: (0..dim).map(|j| Operator::ket_bra(dim, index, j)).collect(),
            weights: vec![1.0; dim],
        }
    }

    /// The single-qubit map `E₀ − E₁` with `E_α(ρ) = Tr[ρ]|α⟩⟨α|`: a
    /// difference of two channels that is not positive.
    pub fn difference_of_replacements() -> Self {
        let plus = Self::replacement(2, 0);
        let minus = Self::replacement(2, 1);
        let mut kraus = plus.kraus;
        kraus.extend(minus.kraus);
        Self {
            label: "E0-E1".into(),
            kraus,
            weights: vec![1.0, 1.0, -1.0, -1.0],
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    pub fn kraus(&self) -> &[Operator] {
        &self.kraus
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_kraus(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_signed(&self) -> bool {
        self.weights.iter().any(|&w| w != 1.0)
    }

    pub fn check(&self, tol: f64) -> CptpReport {
        cptp_check(self, tol)
    }

    pub(crate) fn require_cptp(&self) -> Result<()> {
        let report = cptp_check(self, CPTP_TOL);
        if self.is_signed() || !report.is_cptp() {
            return Err(Error::NotCptp {
                label: self.label.clone(),
                tp_residual: report.tp_residual,
                choi_min_eig: report.choi_min_eig,
            });
        }
        Ok(())
    }

    /// Equivalent channel with the minimal number of Kraus operators,
    /// obtained from the eigendecomposition of the Choi matrix.
    pub fn canonical(&self) -> Result<Self> {
        let d = self.dim();
        let choi = ChoiMatrix::from_channel(self);
        let h = choi.matrix();
        let eig = ((h + h.adjoint()) * C64::new(0.5, 0.0)).symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut kraus = Vec::new();
        for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < -1e-9 * scale.max(1.0) {
                return Err(Error::NotCptp {
                    label: self.label.clone(),
                    tp_residual: f64::NAN,
                    choi_min_eig: lambda,
                });
            }
            if lambda > 1e-13 * scale {
                let v = eig.eigenvectors.column(idx).into_owned();
                kraus.push(Operator::new(unvectorize(&v, d).map(|x| x * lambda.sqrt()))?);
            }
        }
        if kraus.is_empty() {
            kraus.push(Operator::zeros(d));
        }
        Self::new(self.label.clone(), kraus)
    }
}

/// `E(ρ) = Σ_i w_i K_i ρ K_i†`.
pub fn apply_channel(channel: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_dims(channel.dim(), rho.dim())?;
    let m = rho.matrix();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for (k, &w) in channel.kraus.iter().zip(&channel.weights) {
        out += k.matrix() * m * k.matrix().adjoint() * C64::new(w, 0.0);
    }
    DensityMatrix::from_parts(rho.dims().to_vec(), out)
}

/// `outer ∘ inner`, with Kraus operators `K_out · K_in`.
pub fn compose_channels(outer: &KrausChannel, inner: &KrausChannel) -> Result<KrausChannel> {
    check_dims(outer.dim(), inner.dim())?;
    let mut kraus = Vec::with_capacity(outer.num_kraus() * inner.num_kraus());
    let mut weights = Vec::with_capacity(kraus.capacity());
    for (ko, &wo) in outer.kraus.iter().zip(&outer.weights) {
        for (ki, &wi) in inner.kraus.iter().zip(&inner.weights) {
            kraus.push(ko.compose(ki)?);
            weights.push(wo * wi);
        }
    }
    KrausChannel::signed(format!("{}*{}", outer.label, inner.label), kraus, weights)
}

/// Probability-weighted list of channels on a common space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCombination {
    channels: Vec<KrausChannel>,
    probs: Vec<f64>,
}

impl ConvexCombination {
    /// Zero-probability components are kept so register layouts built from
    /// the mixture do not depend on the weights.
    pub fn new(channels: Vec<KrausChannel>, probs: Vec<f64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidDistribution("no channels".into()));
        }
        if channels.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} channels but {} probabilities",
                channels.len(),
                probs.len()
            )));
        }
        validate_distribution(&probs)?;
        let d = channels[0].dim();
        for ch in &channels {
            check_dims(d, ch.dim())?;
        }
        Ok(Self { channels, probs })
    }

    pub fn channels(&self) -> &[KrausChannel] {
        &self.channels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.channels[0].dim()
    }

    /// Largest Kraus count among the components.
    pub fn max_kraus(&self) -> usize {
        self.channels.iter().map(KrausChannel::num_kraus).max().unwrap_or(1)
    }
}

/// Nonnegative entries summing to one within 1e-12.
pub fn validate_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("probs[{i}] = {p} is negative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// Analytic mixture `Σ_α p_α E_α` with Kraus set `{√p_α K_{j,α}}`.
pub fn convex_combination(cc: &ConvexCombination) -> Result<KrausChannel> {
    let mut kraus = Vec::new();
    for (ch, &p) in cc.channels.iter().zip(&cc.probs) {
        ch.require_cptp()?;
        let s = C64::new(p.sqrt(), 0.0);
        kraus.extend(ch.kraus.iter().map(|k| k.scale(s)));
    }
    let label = cc
        .channels
        .iter()
        .map(|c| c.label.as_str())
        .collect::<Vec<_>>()
        .join("+");
    KrausChannel::new(format!("mix({label})"), kraus)
}

/// Unitary `U` on `system ⊗ environment` with `⟨a,i|U|b,0⟩ = ⟨a|K_i|b⟩`.
///
/// The Kraus list is zero-padded to `env_dim = 2^⌈log₂ M⌉` so the
/// environment is a whole number of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedUnitary {
    unitary: Operator,
    sys_dim: usize,
    env_dim: usize,
}

impl DilatedUnitary {
    /// Matrix in `system ⊗ environment` order.
    pub fn unitary(&self) -> &Operator {
        &self.unitary
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn env_qubits(&self) -> usize {
        self.env_dim.trailing_zeros() as usize
    }

    /// `Tr_env[U (ρ ⊗ |0⟩⟨0|) U†]`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dims(self.sys_dim, rho.dim())?;
        let env0 = DensityMatrix::basis_state(vec![self.env_dim], 0)?;
        let joint = DensityMatrix::from_parts(vec![self.sys_dim], rho.matrix().clone())?.tensor(&env0)?;
        let u = self.unitary.matrix();
        let evolved = u * joint.matrix() * u.adjoint();
        let out = partial_trace(
            &DensityMatrix::from_parts(vec![self.sys_dim, self.env_dim], evolved)?,
            &[0],
        )?;
        out.with_dims(rho.dims().to_vec())
    }
}

/// Stinespring dilation with a Householder completion of the stacked-Kraus
/// isometry.
pub fn stinespring_dilation(channel: &KrausChannel) -> Result<DilatedUnitary> {
    channel.require_cptp()?;
    let d = channel.dim();
    let m = channel.num_kraus();
    let env_dim = m.next_power_of_two();
    let n = d * env_dim;
    if n > MAX_DIM {
        return Err(Error::TooLarge(n));
    }
    // isometry column b: entries (a, i) ↦ K_i[a, b], row index a·env_dim + i
    let iso = CMatrix::from_fn(n, d, |row, b| {
        let (a, i) = (row / env_dim, row % env_dim);
        if i < m {
            channel.kraus[i].matrix()[(a, b)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let q = householder_completion(&iso);

    let mut u = CMatrix::zeros(n, n);
    let mut fill = d;
    for col in 0..n {
        if col % env_dim == 0 {
            u.set_column(col, &iso.column(col / env_dim));
        } else {
            u.set_column(col, &q.column(fill));
            fill += 1;
        }
    }
    Ok(DilatedUnitary {
        unitary: Operator::new(u)?,
        sys_dim: d,
        env_dim,
    })
}

/// Full unitary `Q` from the Householder QR of an `n×k` matrix; columns
/// `k..n` span the orthogonal complement of the input columns.
pub(crate) fn householder_completion(a: &CMatrix) -> CMatrix {
    let (n, k) = a.shape();
    let mut r = a.clone();
    let mut q = CMatrix::identity(n, n);
    for j in 0..k.min(n) {
        let x: Vec<C64> = (j..n).map(|i| r[(i, j)]).collect();
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
        let mut v = x.clone();
        v[0] += phase * norm;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in &mut v {
            *z /= vnorm;
        }
        // r ← (I − 2vv†) r on rows j..n
        for col in 0..k {
            let dot: C64 = (j..n).map(|i| v[i - j].conj() * r[(i, col)]).sum();
            for i in j..n {
                r[(i, col)] -= v[i - j] * dot * 2.0;
            }
        }
        // q ← q (I − 2vv†)
        for row in 0..n {
            let dot: C64 = (j..n).map(|i| q[(row, i)] * v[i - j]).sum();
            for i in j..n {
                q[(row, i)] -= dot * v[i - j].conj() * 2.0;
            }
        }
    }
    q
}

/// `(1−p)ρ + p/(4ⁿ−1) Σ_{P≠I} PρP`.
pub fn depolarizing_channel(p: f64, n_qubits: usize) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange {
            name: "p",
            reason: format!("{p} not in [0, 1]"),
        });
    }
    if n_qubits == 0 || n_qubits > 5 {
        return Err(Error::OutOfRange {
            name: "n_qubits",
            reason: format!("{n_qubits} not in 1..=5"),
        });
    }
    let count = 1usize << (2 * n_qubits);
    let others = (p / (count - 1) as f64).sqrt();
    let kraus = (0..count)
        .map(|idx| {
            let s = if idx == 0 { (1.0 - p).sqrt() } else { others };
            Operator::pauli_string(idx, n_qubits).scale(C64::new(s, 0.0))
        })
        .collect();
    KrausChannel::new(format!("depol({p})"), kraus)
}

/// `E₀ = [[1,0],[0,√(1−β)]]`, `E₁ = [[0,√β],[0,0]]`.
pub fn amplitude_damping_channel(beta: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::OutOfRange {
            name: "beta",
            reason: format!("{beta} not in [0, 1]"),
        });
    }
    let e0 = Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, (1.0 - beta).sqrt()]])?;
    let e1 = Operator::from_real_rows(&[&[0.0, beta.sqrt()], &[0.0, 0.0]])?;
    KrausChannel::new(format!("amp_damp({beta})"), vec![e0, e1])
}

/// Controlled version of a noisy operation on `C ⊗ S` under the model in
/// which the control register is noiseless: the ideal unitary is applied
/// when the control holds `control_value`, then the system noise
/// `N = E ∘ U†` acts on `S` whatever the control value.
pub fn controlled_extension(
    channel: &KrausChannel,
    control_dim: usize,
    control_value: usize,
    ideal_unitary: &Operator,
) -> Result<KrausChannel> {
    if control_value >= control_dim {
        return Err(Error::OutOfRange {
            name: "control_value",
            reason: format!("{control_value} >= control_dim {control_dim}"),
        });
    }
    check_dims(channel.dim(), ideal_unitary.dim())?;
    let res = ideal_unitary.unitarity_residual();
    if res > 1e-10 {
        return Err(Error::NotUnitary(res));
    }
    let ds = channel.dim();
    let proj = Operator::projector(control_dim, control_value);
    let rest = CMatrix::identity(control_dim, control_dim) - proj.matrix();
    let controlled = proj.kron(ideal_unitary)?.into_matrix()
        + rest.kronecker(&CMatrix::identity(ds, ds));
    let u_dag = ideal_unitary.adjoint();
    let id_c = Operator::identity(control_dim);
    let kraus = channel
        .kraus
        .iter()
        .map(|k| {
            let noise = k.compose(&u_dag)?;
            Operator::new(id_c.kron(&noise)?.into_matrix() * &controlled)
        })
        .collect::<Result<Vec<_>>>()?;
    KrausChannel::signed(
        format!("c[{control_value}]{}", channel.label),
        kraus,
        channel.weights.clone(),
    )
}

/// Largest entry of the difference of two channels' superoperators.
pub fn action_distance(a: &KrausChannel, b: &KrausChannel) -> f64 {
    let sa = crate::qops::channel_to_superoperator(a);
    let sb = crate::qops::channel_to_superoperator(b);
    max_abs(&(sa.matrix() - sb.matrix()))
}
