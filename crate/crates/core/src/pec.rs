//! Probabilistic error cancellation and its hybrid with mixture circuits.
//!
//! A layer's ideal operation is written as `Σ_α c_α O_α` over implementable
//! noisy operations. With `γ = Σ|c_α|`, `σ_α = sgn c_α` and `p_α = |c_α|/γ`
//! the circuit becomes `Γ Σ_𝛂 σ_𝛂 p_𝛂 O_𝛂` over tuples `𝛂` of per-layer
//! indices, `Γ = Π γ`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_channel, compose_channels, convex_combination, ConvexCombination, KrausChannel};
use crate::circuit::{build_ccc_circuit, evolve_system, Circuit};
use crate::error::{Error, Result};
use crate::qops::{channel_to_superoperator, check_dims, expectation, DensityMatrix, Operator, Superoperator};

/// Coefficients below this magnitude get probability zero and sign `+1`.
pub const ZERO_COEFF: f64 = 1e-12;

/// Largest tuple count enumerated exactly.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Largest absorbed-block tuple count turned into mixture circuits.
pub const BLOCK_LIMIT: u128 = 10_000;

/// Default least-squares residual threshold.
pub const DEFAULT_TOL: f64 = 1e-8;

/// The implementable operations `{O_α}` for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyBasis {
    ops: Vec<KrausChannel>,
}

impl NoisyBasis {
    pub fn new(ops: Vec<KrausChannel>) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptyChannel)?;
        for op in &ops {
            check_dims(first.dim(), op.dim())?;
        }
        Ok(Self { ops })
    }

    /// `{P ∘ N ∘ U : P an n-qubit Pauli}` for a noisy implementation
    /// `N ∘ U` of the ideal gate `U`.
    pub fn pauli_corrected(ideal: &Operator, noise: &KrausChannel) -> Result<Self> {
        check_dims(ideal.dim(), noise.dim())?;
        let n = qubits_of(ideal.dim())?;
        let noisy = compose_channels(noise, &KrausChannel::unitary("U", ideal.clone()))?;
        let ops = (0..1usize << (2 * n))
            .map(|i| {
                let p = KrausChannel::unitary(pauli_label(i, n), Operator::pauli_string(i, n));
                compose_channels(&p, &noisy).map(|c| c.with_label(format!("{}.noisy(U)", pauli_label(i, n))))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ops)
    }

    pub fn ops(&self) -> &[KrausChannel] {
        &self.ops
    }

    pub fn labels(&self) -> Vec<&str> {
        self.ops.iter().map(KrausChannel::label).collect()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }
}

fn qubits_of(dim: usize) -> Result<usize> {
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::OutOfRange {
            name: "dim",
            reason: format!("{dim} is not a qubit dimension"),
        });
    }
    Ok(dim.trailing_zeros() as usize)
}

fn pauli_label(index: usize, n: usize) -> String {
    (0..n).map(|q| ['I', 'X', 'Y', 'Z'][(index >> (2 * (n - 1 - q))) & 3]).collect()
}

/// `c_α`, `γ = Σ|c_α|`, `σ_α`, `p_α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiProbRep {
    pub coeffs: Vec<f64>,
    pub gamma: f64,
    pub signs: Vec<i8>,
    pub probs: Vec<f64>,
    /// Frobenius residual of the superoperator fit; zero when built directly.
    pub residual: f64,
}

impl QuasiProbRep {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite coefficient".into()));
        }
        let gamma: f64 = coeffs.iter().filter(|c| c.abs() >= ZERO_COEFF).map(|c| c.abs()).sum();
        if gamma == 0.0 {
            return Err(Error::InvalidDistribution("all coefficients vanish".into()));
        }
        let signs = coeffs.iter().map(|&c| if c <= -ZERO_COEFF { -1 } else { 1 }).collect();
        let probs = coeffs
            .iter()
            .map(|c| if c.abs() < ZERO_COEFF { 0.0 } else { c.abs() / gamma })
            .collect();
        Ok(Self {
            coeffs,
            gamma,
            signs,
            probs,
            residual: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Least-squares real coefficients with `Σ_α c_α S(O_α) ≈ S(target)`.
pub fn quasiprob_decompose(target: &KrausChannel, basis: &NoisyBasis, tol: f64) -> Result<QuasiProbRep> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange {
            name: "tol",
            reason: format!("{tol} must be positive"),
        });
    }
    check_dims(basis.dim(), target.dim())?;
    let columns: Vec<Superoperator> = basis.ops.iter().map(channel_to_superoperator).collect();
    let t = channel_to_superoperator(target);
    let rows = t.matrix().len();
    let a = DMatrix::from_fn(2 * rows, columns.len(), |r, c| {
        let z = columns[c].matrix().as_slice()[r % rows];
        if r < rows { z.re } else { z.im }
    });
    let b = DVector::from_fn(2 * rows, |r, _| {
        let z = t.matrix().as_slice()[r % rows];
        if r < rows { z.re } else { z.im }
    });
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    let coeffs = svd
        .solve(&b, eps)
        .map_err(|e| Error::InvalidDistribution(format!("least squares failed: {e}")))?;
    let residual = (&a * &coeffs - &b).norm();
    if residual > tol {
        return Err(Error::BasisIncomplete { residual, tol });
    }
    let mut rep = QuasiProbRep::from_coeffs(coeffs.iter().copied().collect())?;
    rep.residual = residual;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub target: KrausChannel,
    pub basis: NoisyBasis,
    pub rep: QuasiProbRep,
}

impl Layer {
    pub fn new(target: KrausChannel, basis: NoisyBasis, rep: QuasiProbRep) -> Result<Self> {
        check_dims(basis.dim(), target.dim())?;
        check_dims(basis.len(), rep.len())?;
        Ok(Self { target, basis, rep })
    }

    /// Decompose `target` over `basis`.
    pub fn decompose(target: KrausChannel, basis: NoisyBasis, tol: f64) -> Result<Self> {
        let rep = quasiprob_decompose(&target, &basis, tol)?;
        Ok(Self { target, basis, rep })
    }
}

/// Per-layer representations of a circuit applied to `ρ₀` and measured
/// with `A`. Layer 0 acts first.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredDecomposition {
    layers: Vec<Layer>,
    gamma: f64,
    rho0: DensityMatrix,
    observable: Operator,
}

impl LayeredDecomposition {
    pub fn new(layers: Vec<Layer>, rho0: DensityMatrix, observable: Operator) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::InvalidBlock {
            layers: 0,
            reason: "no layers".into(),
        })?;
        let d = first.target.dim();
        for l in &layers {
            check_dims(d, l.target.dim())?;
        }
        check_dims(d, rho0.dim())?;
        check_dims(d, observable.dim())?;
        let res = observable.hermitian_residual();
        if res > crate::HERMITIAN_TOL {
            return Err(Error::NotHermitian(res));
        }
        let gamma = layers.iter().map(|l| l.rep.gamma).product();
        Ok(Self {
            layers,
            gamma,
            rho0,
            observable,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `Γ = Π γ^[i]`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn observable(&self) -> &Operator {
        &self.observable
    }

    pub fn dim(&self) -> usize {
        self.rho0.dim()
    }

    fn tuple_count(&self, layers: &[Layer]) -> u128 {
        layers.iter().map(|l| l.basis.len() as u128).product()
    }

    /// `Tr[O_𝛂(ρ) A]` for a full tuple.
    pub fn tuple_value(&self, tuple: &[usize]) -> Result<f64> {
        check_dims(self.layers.len(), tuple.len())?;
        let rho = run_layers(&self.layers, tuple, self.rho0.clone())?;
        expectation(&rho, &self.observable)
    }
}

/// Decompose each `(target, basis)` pair and collect the layers.
pub fn layered_decomposition(
    layers: Vec<(KrausChannel, NoisyBasis)>,
    rho0: DensityMatrix,
    observable: Operator,
    tol: f64,
) -> Result<LayeredDecomposition> {
    let layers = layers
        .into_iter()
        .map(|(t, b)| Layer::decompose(t, b, tol))
        .collect::<Result<Vec<_>>>()?;
    LayeredDecomposition::new(layers, rho0, observable)
}

/// Layers `U_i` each implemented as `D_p ∘ U_i` with depolarizing noise of
/// strength `p`, over the Pauli-corrected basis.
pub fn depolarized_layers(
    unitaries: &[Operator],
    p: f64,
    rho0: DensityMatrix,
    observable: Operator,
    tol: f64,
) -> Result<LayeredDecomposition> {
    let layers = unitaries
        .iter()
        .map(|u| {
            let n = qubits_of(u.dim())?;
            let noise = crate::channels::depolarizing_channel(p, n)?;
            let basis = NoisyBasis::pauli_corrected(u, &noise)?;
            Ok((KrausChannel::unitary("U", u.clone()), basis))
        })
        .collect::<Result<Vec<_>>>()?;
    layered_decomposition(layers, rho0, observable, tol)
}

/// Unitary of each layer in [`standard_test_circuit`].
pub fn standard_layer_unitary() -> Operator {
    Operator::ry(0.6).compose(&Operator::rz(0.9)).expect("same dims")
}

/// One qubit, `n_layers` copies of `Ry(0.6)·Rz(0.9)` under depolarizing
/// noise `p`, started in `|0⟩` and measured in `Z`.
pub fn standard_test_circuit(n_layers: usize, p: f64) -> Result<LayeredDecomposition> {
    depolarized_layers(
        &vec![standard_layer_unitary(); n_layers],
        p,
        DensityMatrix::zero_qubits(1)?,
        Operator::pauli_z(),
        DEFAULT_TOL,
    )
}

fn run_layers(layers: &[Layer], tuple: &[usize], mut rho: DensityMatrix) -> Result<DensityMatrix> {
    for (layer, &a) in layers.iter().zip(tuple) {
        rho = apply_channel(&layer.basis.ops[a], &rho)?;
    }
    Ok(rho)
}

/// `Tr[C(ρ₀) A]` with the ideal targets.
pub fn ideal_value(decomp: &LayeredDecomposition) -> Result<f64> {
    let mut rho = decomp.rho0.clone();
    for l in &decomp.layers {
        rho = apply_channel(&l.target, &rho)?;
    }
    expectation(&rho, &decomp.observable)
}

fn guard(count: u128, limit: u128) -> Result<()> {
    if count > limit {
        return Err(Error::EnumerationGuard { count, limit });
    }
    Ok(())
}

/// Exact tuple sum `Γ Σ_𝛂 σ_𝛂 p_𝛂 Tr[O_𝛂(ρ) A]`.
pub fn exact_cancellation_value(decomp: &LayeredDecomposition) -> Result<f64> {
    guard(decomp.tuple_count(&decomp.layers), ENUMERATION_LIMIT)?;
    fn walk(d: &LayeredDecomposition, depth: usize, rho: &DensityMatrix, weight: f64) -> Result<f64> {
        let Some(layer) = d.layers.get(depth) else {
            return Ok(weight * expectation(rho, &d.observable)?);
        };
        let mut total = 0.0;
        for (a, op) in layer.basis.ops.iter().enumerate() {
            let p = layer.rep.probs[a];
            if p == 0.0 {
                continue;
            }
            let next = apply_channel(op, rho)?;
            total += walk(d, depth + 1, &next, weight * f64::from(layer.rep.signs[a]) * p)?;
        }
        Ok(total)
    }
    Ok(decomp.gamma * walk(decomp, 0, &decomp.rho0, 1.0)?)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl Estimate {
    /// Mean and `std/√N` with the unbiased variance; `stderr = 0` for one
    /// sample.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            estimate: mean,
            stderr,
            n_samples: n,
        }
    }
}

/// Draw one index per layer from the sample's own substream.
fn draw_tuples(layers: &[&Layer], n_samples: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let dists = layers
        .iter()
        .map(|l| WeightedIndex::new(&l.rep.probs).map_err(|e| Error::InvalidDistribution(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n_samples)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            dists.iter().map(|d| d.sample(&mut rng)).collect()
        })
        .collect())
}

fn sign_of(layers: &[&Layer], tuple: &[usize]) -> f64 {
    layers.iter().zip(tuple).map(|(l, &a)| f64::from(l.rep.signs[a])).product()
}

/// Evaluate `f` once per distinct tuple (in parallel), then read the
/// values back in sample order.
fn memoized_values<F>(tuples: &[Vec<usize>], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    let unique: Vec<&Vec<usize>> = tuples.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let values = unique.par_iter().map(|t| f(t)).collect::<Result<Vec<_>>>()?;
    let table: BTreeMap<&Vec<usize>, f64> = unique.into_iter().zip(values).collect();
    Ok(tuples.iter().map(|t| table[t]).collect())
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::OutOfRange {
            name: "n_samples",
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

/// Monte Carlo PEC: sample `𝛂 ~ p_𝛂` and average `Γ σ_𝛂 Tr[O_𝛂(ρ) A]`.
///
/// Sample `s` draws from the ChaCha8 stream `s` of `seed`, so results do
/// not depend on the thread count.
pub fn pec_estimate(decomp: &LayeredDecomposition, n_samples: usize, seed: u64) -> Result<Estimate> {
    Ok(Estimate::from_values(&pec_sample_values(decomp, n_samples, seed)?))
}

/// The per-sample values behind [`pec_estimate`].
pub fn pec_sample_values(decomp: &LayeredDecomposition, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    check_samples(n_samples)?;
    let layers: Vec<&Layer> = decomp.layers.iter().collect();
    let tuples = draw_tuples(&layers, n_samples, seed)?;
    let values = memoized_values(&tuples, |t| decomp.tuple_value(t))?;
    Ok(tuples
        .iter()
        .zip(values)
        .map(|(t, v)| decomp.gamma * sign_of(&layers, t) * v)
        .collect())
}

/// `⌈Γ²/δ²⌉` circuits for accuracy `δ`.
pub fn sample_budget(gamma: f64, delta: f64) -> Result<u64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::OutOfRange {
            name: "delta",
            reason: format!("{delta} must be positive"),
        });
    }
    if !(gamma >= 1.0 - 1e-12) || !gamma.is_finite() {
        return Err(Error::OutOfRange {
            name: "gamma",
            reason: format!("{gamma} must be at least 1"),
        });
    }
    let ratio = (gamma / delta).powi(2);
    // absorb a few ulps of overshoot so exact integers are not rounded up
    Ok((ratio * (1.0 - 4.0 * f64::EPSILON)).ceil() as u64)
}

/// Tuples of one sign class with their within-class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SignClass {
    pub tuples: Vec<Vec<usize>>,
    pub mixture: ConvexCombination,
}

/// Tuple sum grouped by global sign:
/// `C = Γ (q₊ E₊ − q₋ E₋)` with `E±` normalized mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoShotSplit {
    pub pos: Option<SignClass>,
    pub neg: Option<SignClass>,
    pub q_plus: f64,
    pub q_minus: f64,
    pub gamma: f64,
}

impl TwoShotSplit {
    /// `Γ (q₊ S(E₊) − q₋ S(E₋))`.
    pub fn reconstruction(&self) -> Result<Superoperator> {
        let dim = self.dim();
        let mut s = Superoperator::zeros(dim);
        for (class, q, sign) in [(&self.pos, self.q_plus, 1.0), (&self.neg, self.q_minus, -1.0)] {
            if let Some(c) = class {
                let e = channel_to_superoperator(&convex_combination(&c.mixture)?);
                s = s.add_scaled(&e, sign * self.gamma * q)?;
            }
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.pos
            .as_ref()
            .or(self.neg.as_ref())
            .map_or(0, |c| c.mixture.dim())
    }

    /// `Γ (q₊ Tr[E₊(ρ)A] − q₋ Tr[E₋(ρ)A])` from the analytic mixtures.
    pub fn expectation(&self, rho: &DensityMatrix, observable: &Operator) -> Result<f64> {
        let mut total = 0.0;
        for (class, q, sign) in [(&self.pos, self.q_plus, 1.0), (&self.neg, self.q_minus, -1.0)] {
            if let Some(c) = class {
                let out = apply_channel(&convex_combination(&c.mixture)?, rho)?;
                total += sign * q * expectation(&out, observable)?;
            }
        }
        Ok(self.gamma * total)
    }

    pub fn logical_qubits(&self) -> usize {
        [&self.pos, &self.neg]
            .iter()
            .filter_map(|c| c.as_ref())
            .map(|c| crate::circuit::index_qubits(c.tuples.len()))
            .max()
            .unwrap_or(0)
    }
}

fn tuple_channel(layers: &[Layer], tuple: &[usize]) -> Result<KrausChannel> {
    let mut ch = layers[0].basis.ops[tuple[0]].clone();
    for (layer, &a) in layers.iter().zip(tuple).skip(1) {
        ch = compose_channels(&layer.basis.ops[a], &ch)?.canonical()?;
    }
    let label = tuple.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    Ok(ch.canonical()?.with_label(format!("({label})")))
}

fn split_layers(layers: &[Layer], limit: u128) -> Result<TwoShotSplit> {
    let count: u128 = layers.iter().map(|l| l.basis.len() as u128).product();
    guard(count, limit)?;
    let gamma: f64 = layers.iter().map(|l| l.rep.gamma).product();
    let mut classes: [Vec<(Vec<usize>, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut tuple = vec![0usize; layers.len()];
    'outer: loop {
        let p: f64 = layers.iter().zip(&tuple).map(|(l, &a)| l.rep.probs[a]).product();
        if p > 0.0 {
            let negative = layers.iter().zip(&tuple).filter(|(l, &a)| l.rep.signs[a] < 0).count() % 2 == 1;
            classes[usize::from(negative)].push((tuple.clone(), p));
        }
        for i in (0..layers.len()).rev() {
            tuple[i] += 1;
            if tuple[i] < layers[i].basis.len() {
                continue 'outer;
            }
            tuple[i] = 0;
        }
        break;
    }
    let build = |members: &[(Vec<usize>, f64)]| -> Result<(Option<SignClass>, f64)> {
        if members.is_empty() {
            return Ok((None, 0.0));
        }
        let q: f64 = members.iter().map(|(_, p)| p).sum();
        let channels = members
            .par_iter()
            .map(|(t, _)| tuple_channel(layers, t))
            .collect::<Result<Vec<_>>>()?;
        let mut probs: Vec<f64> = members.iter().map(|(_, p)| p / q).collect();
        // renormalize away rounding so the distribution check is exact
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let mixture = ConvexCombination::new(channels, probs)?;
        let tuples = members.iter().map(|(t, _)| t.clone()).collect();
        Ok((Some(SignClass { tuples, mixture }), q))
    };
    let (pos, q_plus) = build(&classes[0])?;
    let (neg, q_minus) = build(&classes[1])?;
    Ok(TwoShotSplit {
        pos,
        neg,
        q_plus,
        q_minus,
        gamma,
    })
}

/// Group all tuples of `decomp` by global sign.
pub fn two_shot_split(decomp: &LayeredDecomposition) -> Result<TwoShotSplit> {
    split_layers(&decomp.layers, ENUMERATION_LIMIT)
}

/// Outcome of [`hybrid_protocol`].
#[derive(Debug, Clone)]
pub struct HybridResult {
    pub estimate: f64,
    pub stderr: f64,
    /// `Π γ^[i]` over the layers still sampled.
    pub residual_negativity: f64,
    /// Coefficient-register width of the mixture circuits.
    pub logical_qubits_used: usize,
    /// Mixture circuits for the positive and negative classes.
    pub circuits: Vec<Circuit>,
    /// Per-sample values; a single exact value when nothing is sampled.
    pub values: Vec<f64>,
    /// Number of mixture-circuit simulations performed.
    pub circuit_evaluations: usize,
}

fn check_block(absorbed: &[usize], layers: usize) -> Result<std::ops::Range<usize>> {
    let Some(&start) = absorbed.first() else {
        return Ok(0..0);
    };
    let bad = |reason: String| Error::InvalidBlock { layers, reason };
    for (i, &l) in absorbed.iter().enumerate() {
        if l != start + i {
            return Err(bad(format!("{absorbed:?} is not contiguous and increasing")));
        }
    }
    let end = start + absorbed.len();
    if end > layers {
        return Err(bad(format!("{absorbed:?} exceeds the layer count")));
    }
    Ok(start..end)
}

/// Absorb the contiguous block `absorbed` into two mixture circuits and
/// sample the remaining layers.
///
/// The block's tuples are split by sign; each class is realized as a
/// coefficient-register circuit whose branch `𝛂` applies the composed
/// block operation `O_𝛂`. Per sample,
/// `value = (Π_unabs γ) σ Γ_blk (q₊⟨A⟩₊ − q₋⟨A⟩₋)`. With an empty block
/// this is [`pec_estimate`]; with every layer absorbed nothing is sampled
/// and the two circuits are simulated once.
pub fn hybrid_protocol(
    decomp: &LayeredDecomposition,
    absorbed: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<HybridResult> {
    let l = decomp.num_layers();
    let block = check_block(absorbed, l)?;
    if block.is_empty() {
        let values = pec_sample_values(decomp, n_samples, seed)?;
        let est = Estimate::from_values(&values);
        return Ok(HybridResult {
            estimate: est.estimate,
            stderr: est.stderr,
            residual_negativity: decomp.gamma,
            logical_qubits_used: 0,
            circuits: Vec::new(),
            values,
            circuit_evaluations: 0,
        });
    }

    let split = split_layers(&decomp.layers[block.clone()], BLOCK_LIMIT)?;
    let n_sys = qubits_of(decomp.dim())?;
    let mut classes = Vec::new();
    let mut circuits = Vec::new();
    for (class, q, sign) in [(&split.pos, split.q_plus, 1.0), (&split.neg, split.q_minus, -1.0)] {
        if let Some(c) = class {
            let circuit = build_ccc_circuit(&c.mixture, n_sys)?;
            circuits.push(circuit.clone());
            classes.push((circuit, sign * q));
        }
    }

    let prefix: Vec<&Layer> = decomp.layers[..block.start].iter().collect();
    let suffix: Vec<&Layer> = decomp.layers[block.end..].iter().collect();
    let unabsorbed: Vec<&Layer> = prefix.iter().chain(&suffix).copied().collect();
    let residual_negativity: f64 = unabsorbed.iter().map(|l| l.rep.gamma).product();
    let gamma_blk = split.gamma;

    // block value for the unabsorbed tuple: Γ_blk Σ± (±q) ⟨A⟩±
    let evaluate = |tuple: &[usize]| -> Result<f64> {
        let (pre, post) = tuple.split_at(prefix.len());
        let mut rho = decomp.rho0.clone();
        for (layer, &a) in prefix.iter().zip(pre) {
            rho = apply_channel(&layer.basis.ops[a], &rho)?;
        }
        let mut total = 0.0;
        for (circuit, weight) in &classes {
            let mut sys = evolve_system(circuit, &rho)?.with_dims(vec![decomp.dim()])?;
            for (layer, &a) in suffix.iter().zip(post) {
                sys = apply_channel(&layer.basis.ops[a], &sys)?;
            }
            total += weight * expectation(&sys, &decomp.observable)?;
        }
        Ok(gamma_blk * total)
    };

    if unabsorbed.is_empty() {
        let value = evaluate(&[])?;
        return Ok(HybridResult {
            estimate: value,
            stderr: 0.0,
            residual_negativity,
            logical_qubits_used: split.logical_qubits(),
            circuit_evaluations: classes.len(),
            circuits,
            values: vec![value],
        });
    }

    check_samples(n_samples)?;
    let tuples = draw_tuples(&unabsorbed, n_samples, seed)?;
    let unique = tuples.iter().collect::<std::collections::BTreeSet<_>>().len();
    let block_values = memoized_values(&tuples, evaluate)?;
    let values: Vec<f64> = tuples
        .iter()
        .zip(block_values)
        .map(|(t, v)| residual_negativity * sign_of(&unabsorbed, t) * v)
        .collect();
    let est = Estimate::from_values(&values);
    Ok(HybridResult {
        estimate: est.estimate,
        stderr: est.stderr,
        residual_negativity,
        logical_qubits_used: split.logical_qubits(),
        circuits,
        values,
        circuit_evaluations: unique * classes.len(),
    })
}
