//! Randomized invariants across the modules.

mod common;

use chanmix::channels::{
    apply_channel, controlled_extension, convex_combination, depolarizing_channel, stinespring_dilation, ConvexCombination, KrausChannel,
};
use chanmix::circuit::{
    build_ccc_circuit, build_forking_circuit, circuit_unitary, compile_to_basis, count_resources, evolve_system, index_qubits, phase_distance,
    ForkingMode,
};
use chanmix::lindblad::{ccc_evolve, exact_evolve, rabi_channel_set, trace_distance, LindbladSpec, RabiParams};
use chanmix::pec::{
    hybrid_protocol, quasiprob_decompose, standard_layer_unitary, two_shot_split, Layer, LayeredDecomposition, NoisyBasis,
};
use chanmix::qops::{channel_to_superoperator, cptp_check, expectation, partial_trace, tensor_product, DensityMatrix, Operator};
use chanmix::{CMatrix, C64};
use common::{random_channel, random_probs, random_state, random_unitary, rng};
use proptest::prelude::*;
use rand::Rng;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_mixture(dim: usize, n: usize, seed: u64) -> ConvexCombination {
    let mut r = rng(seed);
    let channels = (0..n)
        .map(|_| {
            let m = r.gen_range(1..=4);
            random_channel(dim, m, &mut r)
        })
        .collect();
    ConvexCombination::new(channels, random_probs(n, &mut r)).unwrap()
}

fn random_hermitian(dim: usize, seed: u64) -> Operator {
    let u = random_unitary(dim, &mut rng(seed));
    let m = u.matrix();
    Operator::new((m + m.adjoint()).map(|z| z * 0.5)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_trace_inverts_tensor(da in 2usize..=3, db in 2usize..=3, seed: u64) {
        let mut r = rng(seed);
        let (a, b) = (random_state(da, &mut r), random_state(db, &mut r));
        let joint = tensor_product(&a, &b).unwrap();
        let back = partial_trace(&joint, &[0]).unwrap();
        prop_assert!(max_abs(&(back.matrix() - a.matrix())) <= 1e-12);
    }

    #[test]
    fn superoperator_matches_kraus(dim in prop::sample::select(vec![2usize, 4]), m in 1usize..=4, seed: u64) {
        let mut r = rng(seed);
        let ch = random_channel(dim, m, &mut r);
        let s = channel_to_superoperator(&ch);
        for _ in 0..100 {
            let rho = random_state(dim, &mut r);
            let via_s = s.apply(&rho).unwrap();
            let via_k = apply_channel(&ch, &rho).unwrap();
            prop_assert!(max_abs(&(via_s.matrix() - via_k.matrix())) <= 1e-11);
        }
    }

    #[test]
    fn expectation_is_linear(seed: u64, c in -2.0f64..2.0, w in 0.0f64..1.0) {
        let mut r = rng(seed);
        let (rho, sigma) = (random_state(4, &mut r), random_state(4, &mut r));
        let (a, b) = (random_hermitian(4, seed ^ 1), random_hermitian(4, seed ^ 2));
        let combo = Operator::new(a.matrix() + b.matrix() * C64::new(c, 0.0)).unwrap();
        let lhs = expectation(&rho, &combo).unwrap();
        let rhs = expectation(&rho, &a).unwrap() + c * expectation(&rho, &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11);

        let mixed = DensityMatrix::new(vec![4], rho.matrix() * C64::new(w, 0.0) + sigma.matrix() * C64::new(1.0 - w, 0.0)).unwrap();
        let lhs = expectation(&mixed, &a).unwrap();
        let rhs = w * expectation(&rho, &a).unwrap() + (1.0 - w) * expectation(&sigma, &a).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11);
    }

    #[test]
    fn convex_combination_stays_cptp(dim in prop::sample::select(vec![2usize, 4]), n in 1usize..=4, seed: u64) {
        let report = cptp_check(&convex_combination(&random_mixture(dim, n, seed)).unwrap(), 1e-9);
        prop_assert!(report.is_cptp(), "{:?}", report);
    }

    #[test]
    fn dilation_reproduces_channel(dim in prop::sample::select(vec![2usize, 4]), m in 1usize..=4, seed: u64) {
        let mut r = rng(seed);
        let ch = random_channel(dim, m, &mut r);
        let rho = random_state(dim, &mut r);
        let dil = stinespring_dilation(&ch).unwrap();
        let out = dil.apply(&rho).unwrap();
        prop_assert!(max_abs(&(out.matrix() - apply_channel(&ch, &rho).unwrap().matrix())) <= 1e-10);
        prop_assert!(dil.unitary().unitarity_residual() <= 1e-10);
    }

    #[test]
    fn noiseless_controlled_extension_is_unitary(control_dim in 2usize..=4, value_seed: usize, seed: u64) {
        let u = random_unitary(2, &mut rng(seed));
        let value = value_seed % control_dim;
        let ext = controlled_extension(&KrausChannel::unitary("u", u.clone()), control_dim, value, &u).unwrap();
        prop_assert_eq!(ext.num_kraus(), 1);
        prop_assert!(ext.kraus()[0].unitarity_residual() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn mixture_circuit_is_deterministic(n_sys in 1usize..=2, n in 1usize..=4, seed: u64) {
        let cc = random_mixture(1 << n_sys, n, seed);
        let rho = random_state(1 << n_sys, &mut rng(seed ^ 7));
        let circuit = build_ccc_circuit(&cc, n_sys).unwrap();
        prop_assert!(circuit.is_unitary());
        let out = evolve_system(&circuit, &rho).unwrap().with_dims(vec![1 << n_sys]).unwrap();
        let analytic = apply_channel(&convex_combination(&cc).unwrap(), &rho).unwrap();
        prop_assert!(trace_distance(&out, &analytic).unwrap() <= 1e-10);
    }

    #[test]
    fn forking_agrees_with_mixture_circuit(n in 2usize..=3, unshared: bool, seed: u64) {
        let cc = random_mixture(2, n, seed);
        let rho = random_state(2, &mut rng(seed ^ 3));
        let mode = if unshared { ForkingMode::Unshared } else { ForkingMode::Shared };
        let ccc = evolve_system(&build_ccc_circuit(&cc, 1).unwrap(), &rho).unwrap().with_dims(vec![2]).unwrap();
        let fork = evolve_system(&build_forking_circuit(&cc, 1, mode).unwrap(), &rho).unwrap().with_dims(vec![2]).unwrap();
        prop_assert!(trace_distance(&ccc, &fork).unwrap() <= 1e-10);
    }

    #[test]
    fn mixture_circuit_width(n_sys in 1usize..=2, n in 1usize..=4, seed: u64) {
        let cc = random_mixture(1 << n_sys, n, seed);
        let circuit = build_ccc_circuit(&cc, n_sys).unwrap();
        let expected = n_sys + index_qubits(cc.len()) + index_qubits(cc.max_kraus());
        prop_assert_eq!(count_resources(&compile_to_basis(&circuit).unwrap()).unwrap().qubits, expected);
    }

    #[test]
    fn compiler_preserves_unitary(n in 2usize..=3, seed: u64) {
        let cc = random_mixture(2, n, seed);
        let circuit = build_ccc_circuit(&cc, 1).unwrap();
        let compiled = compile_to_basis(&circuit).unwrap();
        let d = phase_distance(&circuit_unitary(&circuit).unwrap(), &circuit_unitary(&compiled).unwrap());
        prop_assert!(d <= 1e-8, "phase distance {}", d);
    }

    #[test]
    fn trace_preserving_targets_have_unit_negativity_floor(p in 0.001f64..0.5, seed: u64) {
        let u = random_unitary(2, &mut rng(seed));
        let basis = NoisyBasis::pauli_corrected(&u, &depolarizing_channel(p, 1).unwrap()).unwrap();
        let rep = quasiprob_decompose(&KrausChannel::unitary("u", u), &basis, 1e-8).unwrap();
        prop_assert!(rep.gamma >= 1.0 - 1e-12);
        prop_assert!((rep.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn residual_negativity_is_unabsorbed_product(
        ps in prop::collection::vec(0.01f64..0.2, 3),
        start in 0usize..3,
        len in 0usize..=3,
    ) {
        let u = standard_layer_unitary();
        let layers: Vec<Layer> = ps
            .iter()
            .map(|&p| {
                let basis = NoisyBasis::pauli_corrected(&u, &depolarizing_channel(p, 1).unwrap()).unwrap();
                Layer::decompose(KrausChannel::unitary("u", u.clone()), basis, 1e-8).unwrap()
            })
            .collect();
        let d = LayeredDecomposition::new(layers, DensityMatrix::zero_qubits(1).unwrap(), Operator::pauli_z()).unwrap();
        let end = (start + len).min(3);
        let block: Vec<usize> = (start..end).collect();
        let h = hybrid_protocol(&d, &block, 20, 0).unwrap();
        let expected: f64 = d.layers().iter().enumerate().filter(|(i, _)| !block.contains(i)).map(|(_, l)| l.rep.gamma).product();
        prop_assert!((h.residual_negativity - expected).abs() <= 1e-14 * expected);
        let split = two_shot_split(&d).unwrap();
        prop_assert!((split.gamma * (split.q_plus - split.q_minus) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn exact_evolution_stays_physical(t in 0.0f64..20.0, omega0 in 0.0f64..2.0, omega in 0.0f64..2.0, gamma in 0.0f64..1.0, seed: u64) {
        prop_assume!(omega0 + omega + gamma > 0.0);
        let params = RabiParams::new(omega0, omega, gamma, 0.1, 1).unwrap();
        let spec = LindbladSpec::damped_rabi(&params).unwrap();
        let rho = exact_evolve(&spec, &random_state(2, &mut rng(seed)), t).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() <= 1e-10);
        prop_assert!(max_abs(&(rho.matrix() - rho.matrix().adjoint())) <= 1e-10);
        prop_assert!(rho.min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn rabi_probabilities_normalized(omega0 in 0.0f64..2.0, omega in 0.0f64..2.0, gamma in 0.0f64..1.0, dt in 0.001f64..0.5) {
        prop_assume!(omega0 + omega + gamma > 1e-3);
        let set = rabi_channel_set(&RabiParams::new(omega0, omega, gamma, dt, 1).unwrap()).unwrap();
        prop_assert!((set.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(set.channels().iter().all(|c| cptp_check(c, 1e-10).is_cptp()));
    }
}

#[test]
fn first_order_convergence() {
    let excited = DensityMatrix::basis_state(vec![2], 1).unwrap();
    let lambda: f64 = 1.6;
    let distances: Vec<f64> = [0.1f64, 0.05, 0.025]
        .iter()
        .map(|f| {
            let steps = (10.0 * lambda / f).round() as usize;
            let params = RabiParams::over(1.0, 0.5, 0.1, 10.0, steps).unwrap();
            let exact = exact_evolve(&LindbladSpec::damped_rabi(&params).unwrap(), &excited, 10.0).unwrap();
            trace_distance(&ccc_evolve(&params, &excited).unwrap(), &exact).unwrap()
        })
        .collect();
    for w in distances.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=2.5).contains(&ratio), "distances {distances:?}");
    }
}
