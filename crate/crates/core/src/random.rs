//! Seeded random streams and random matrix ensembles.
//!
//! Every stochastic quantity in the crate is drawn from a ChaCha8 stream
//! selected by `(seed, stream)`, so results never depend on scheduling.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hilbert::{hermitize, CMatrix};

/// Independent generator for stream `stream` of the master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// splitmix64 finalizer, used to derive sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// GUE-like Hermitian matrix with entry variance `1/dim`, so the spectrum
/// stays within roughly `[-2, 2]`.
pub fn random_hermitian<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let raw = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    hermitize(&raw) * Complex64::new((2.0 / dim as f64).sqrt(), 0.0)
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal absorbed into `Q`.
pub fn haar_unitary<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_real_symmetric<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    (&raw + raw.transpose()) * 0.5
}
