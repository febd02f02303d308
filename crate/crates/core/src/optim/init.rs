use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bytes of a serialized generator state.
pub const RNG_STATE_LEN: usize = 56;

/// Seed, stream and word position, enough to resume the exact sequence.
pub fn rng_state(rng: &ChaCha8Rng) -> [u8; RNG_STATE_LEN] {
    let mut out = [0u8; RNG_STATE_LEN];
    out[..32].copy_from_slice(&rng.get_seed());
    out[32..40].copy_from_slice(&rng.get_stream().to_le_bytes());
    out[40..].copy_from_slice(&rng.get_word_pos().to_le_bytes());
    out
}

pub fn rng_from_state(state: &[u8]) -> Result<ChaCha8Rng> {
    if state.len() != RNG_STATE_LEN {
        return Err(Error::Parse(alloc::format!("rng state has {} bytes, expected {}", state.len(), RNG_STATE_LEN)));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&state[..32]);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(u64::from_le_bytes(state[32..40].try_into().expect("8 bytes")));
    rng.set_word_pos(u128::from_le_bytes(state[40..].try_into().expect("16 bytes")));
    Ok(rng)
}

/// `sqrt(6 / (fan_in + fan_out))` with `fan_in = in * k * k` and
/// `fan_out = out * k * k` for an `(out, in, k, k)` weight.
pub fn glorot_bound(shape: Shape) -> f64 {
    let receptive = shape.h() * shape.w();
    let fan_in = shape.c() * receptive;
    let fan_out = shape.n() * receptive;
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Uniform samples in `[-bound, bound]`.
pub fn glorot_init<T: Scalar, R: Rng>(shape: Shape, rng: &mut R) -> Tensor<T> {
    let bound = glorot_bound(shape);
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..=bound)))
}
