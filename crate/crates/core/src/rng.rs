//! Deterministic random streams.
//!
//! Every trial draws from its own ChaCha8 stream keyed by
//! `(seed, experiment label)` with the trial index as the stream number.
//! ChaCha is counter based, so a trial's numbers never depend on which
//! worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a hash of an experiment label.
pub fn label_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `index` of the generator keyed by `(seed, experiment)`.
pub fn stream(seed: u64, experiment: u64, index: u64) -> StreamRng {
    let mut state = seed ^ experiment.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Convenience wrapper keyed by a string label.
pub fn labeled_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    stream(seed, label_id(label), index)
}
