//! Seeded synthetic specifications for tests and benchmarks.
//!
//! Generated specifications are always valid: the tensors are built as
//! Gram products plus a diagonal floor, so `v_prime` and `v - v_prime` are
//! comfortably positive definite and the resulting Gram systems stay well
//! conditioned. Deterministic for a fixed seed.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exchangeable::{ExchangeableSpec, SlotTensor};
use crate::matrix::slot_count;

fn random_psd(rng: &mut ChaCha8Rng, size: usize, floor: f64) -> DMatrix<f64> {
    let factor = DMatrix::from_fn(size, size, |_, _| rng.random_range(-1.0..1.0));
    let mut out = &factor * factor.transpose();
    for k in 0..size {
        out[(k, k)] += floor;
    }
    (&out + out.transpose()) * 0.5
}

fn random_symmetric(rng: &mut ChaCha8Rng, size: usize, scale: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(size, size, |_, _| rng.random_range(-scale..scale));
    (&raw + raw.transpose()) * 0.5
}

/// A random valid specification of dimension `r`, deterministic in `seed`.
pub fn random_spec(r: usize, seed: u64) -> ExchangeableSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = slot_count(r);
    let v_prime = random_psd(&mut rng, m, 0.3);
    let u = random_psd(&mut rng, m, 0.3);
    let v = &v_prime + &u;
    let e_v = random_psd(&mut rng, r, 0.5);
    ExchangeableSpec {
        r,
        mu: (0..r).map(|_| rng.random_range(-2.0..2.0)).collect(),
        c: None,
        c_prime: None,
        e_v: Some(e_v),
        v: SlotTensor::from_matrix(r, v).expect("sized to m"),
        v_prime: SlotTensor::from_matrix(r, v_prime).expect("sized to m"),
    }
}

/// A random symmetric observation matrix near the spec's expected scale.
pub fn random_observation(r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    random_symmetric(&mut rng, r, 3.0)
}

/// A random sample size in a desk-scale range, deterministic in `seed`.
pub fn random_sample_size(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    rng.random_range(2..200)
}
