#![allow(dead_code)]

use declab::hilbert::{CMatrix, DensityMatrix, Operator, SpaceTag};
use declab::random::{complex_gaussian, stream_rng};
use num_complex::Complex64;

/// Random mixed state `G G† / Tr` from a Ginibre matrix of the given rank.
pub fn random_density(space: SpaceTag, rank: usize, seed: u64) -> DensityMatrix {
    let d = space.dim();
    let mut rng = stream_rng(seed, 77);
    let g = CMatrix::from_fn(d, rank, |_, _| complex_gaussian(&mut rng));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(Operator::new(space, m / tr).unwrap()).unwrap()
}

pub fn random_pure(space: SpaceTag, seed: u64) -> DensityMatrix {
    random_density(space, 1, seed)
}

pub fn random_operator(space: SpaceTag, seed: u64) -> Operator {
    let d = space.dim();
    let mut rng = stream_rng(seed, 78);
    Operator::new(space, CMatrix::from_fn(d, d, |_, _| complex_gaussian(&mut rng))).unwrap()
}

pub fn random_hermitian_op(space: SpaceTag, seed: u64) -> Operator {
    random_operator(space, seed).hermitian_part()
}

/// `(tr_E M)_{kl} = Σ_e M_{(k,e),(l,e)}` by explicit index summation.
pub fn trace_env_oracle(m: &CMatrix, dk: usize, de: usize) -> CMatrix {
    CMatrix::from_fn(dk, dk, |k, l| (0..de).map(|e| m[(k * de + e, l * de + e)]).sum())
}

/// `(tr_K M)_{ef} = Σ_k M_{(k,e),(k,f)}`.
pub fn trace_collective_oracle(m: &CMatrix, dk: usize, de: usize) -> CMatrix {
    CMatrix::from_fn(de, de, |e, f| (0..dk).map(|k| m[(k * de + e, k * de + f)]).sum())
}

/// `(A ⊗ B)_{(i,e),(j,f)} = A_{ij} B_{ef}` entry by entry.
pub fn kron_oracle(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (da, db) = (a.nrows(), b.nrows());
    CMatrix::from_fn(da * db, da * db, |r, c| a[(r / db, c / db)] * b[(r % db, c % db)])
}

pub fn entry_max(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}
