//! Counter-based random streams keyed by simulation coordinates.
//!
//! The ChaCha key is derived from the seed alone and the stream id from the
//! coordinates, so every (seed, subject, trial, channel, ...) tuple owns an
//! independent sequence that does not depend on generation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds coordinates into a 64-bit stream id.
pub fn stream_id(coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |h, &c| splitmix64(h ^ splitmix64(c)))
}

/// Independent generator for one coordinate tuple.
pub fn keyed_rng(seed: u64, coords: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id(coords));
    rng
}
