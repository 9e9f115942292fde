//! Random corpora and reporting shared by the integration suites.
#![allow(dead_code)]

use std::io::Write;

use chanmix::channels::KrausChannel;
use chanmix::qops::{DensityMatrix, Operator};
use chanmix::{CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn entry(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
}

/// `G G† / Tr` for a matrix of uniform complex entries.
pub fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| entry(rng));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(vec![dim], m.map(|x| x / tr)).unwrap()
}

/// CPTP channel with `m` Kraus operators cut from a random isometry.
pub fn random_channel(dim: usize, m: usize, rng: &mut ChaCha8Rng) -> KrausChannel {
    let g = CMatrix::from_fn(dim * m, dim, |_, _| entry(rng));
    let q = g.qr().q();
    let kraus = (0..m)
        .map(|i| Operator::new(q.rows(i * dim, dim).into_owned()).unwrap())
        .collect();
    KrausChannel::new("rand", kraus).unwrap()
}

pub fn random_unitary(dim: usize, rng: &mut ChaCha8Rng) -> Operator {
    let g = CMatrix::from_fn(dim, dim, |_, _| entry(rng));
    Operator::new(g.qr().q()).unwrap()
}

/// Strictly positive probabilities summing to one.
pub fn random_probs(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|p| p / total).collect()
}

/// Print a verdict line past the test harness's output capture.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id:>2} [{name}]: {verdict} ({detail})");
    let _ = out.flush();
}
