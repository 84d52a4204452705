//! Deterministic random streams.
//!
//! Every random draw in training comes from ChaCha8 (`rand_chacha`),
//! seeded with `ChaCha8Rng::seed_from_u64(seed)` and split into independent
//! substreams with `set_stream`:
//!
//! * stream 0 initializes weights,
//! * stream `1 + e` shuffles the training set in epoch `e`.
//!
//! The generator, the stream layout and the float conversion in
//! [`open_unit`] are part of the reproducibility contract. Changing any of
//! them changes every trained network.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INIT_STREAM: u64 = 0;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn init_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, INIT_STREAM)
}

pub fn epoch_stream(seed: u64, epoch: u64) -> ChaCha8Rng {
    stream(seed, epoch.wrapping_add(1))
}

/// Uniform draw in the open interval (0, 1) from the top 53 bits.
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in (-scale, scale).
pub fn symmetric(rng: &mut impl RngCore, scale: f64) -> f64 {
    scale * (2.0 * open_unit(rng) - 1.0)
}

/// Visitation order of `n` examples in `epoch`.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut epoch_stream(seed, epoch));
    order
}
