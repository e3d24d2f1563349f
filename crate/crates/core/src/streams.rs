//! Deterministic per-replicate random streams.
//!
//! Every random draw in this crate comes from a ChaCha8 stream keyed by
//! `(master seed, purpose, indices...)` through a SplitMix64 chain. Distinct
//! key vectors give statistically independent streams, so parallel execution
//! over replicates is schedule-independent: results depend only on the key,
//! never on which worker ran the replicate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes; keep values stable, they are part of the determinism contract.
pub mod purpose {
    pub const FUSION: u64 = 1;
    pub const REFERENCE: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const ESTIMATE_PICK: u64 = 4;
    pub const MAE_PICK: u64 = 5;
    pub const BATCH: u64 = 6;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 256-bit ChaCha key from the key vector.
pub fn derive_key(parts: &[u64]) -> [u8; 32] {
    let mut state: u64 = 0x243f_6a88_85a3_08d3; // pi fractional bits
    for &p in parts {
        let mixed = {
            let mut s = p;
            splitmix64(&mut s)
        };
        state ^= mixed;
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// RNG for one replicate, keyed by `(master, purpose, indices...)`.
pub fn stream_rng(master: u64, purpose: u64, indices: &[u64]) -> ChaCha8Rng {
    let mut parts = Vec::with_capacity(2 + indices.len());
    parts.push(master);
    parts.push(purpose);
    parts.extend_from_slice(indices);
    ChaCha8Rng::from_seed(derive_key(&parts))
}

/// A 64-bit sub-seed derived from the key vector; used where a component
/// needs its own master seed (for example per-batch fusion configs).
pub fn derive_subseed(master: u64, purpose: u64, indices: &[u64]) -> u64 {
    let mut parts = Vec::with_capacity(2 + indices.len());
    parts.push(master);
    parts.push(purpose);
    parts.extend_from_slice(indices);
    let key = derive_key(&parts);
    u64::from_le_bytes(key[..8].try_into().unwrap())
}
