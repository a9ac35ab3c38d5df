//! Deterministic random number streams.
//!
//! Every replication draws from its own ChaCha12 stream derived from
//! `(seed, stream_id)`: the master seed keys the generator and the stream
//! id selects a disjoint counter stream. Values are therefore independent
//! of scheduling and worker-thread count. Sub-experiments derive their
//! master seeds with [`mix`] so that, e.g., every `h` in an h-sweep gets a
//! disjoint seed space.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG for one replication: stream `stream_id` of the `seed`-keyed
/// generator.
pub fn replication_rng(seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Derive a sub-experiment seed from a master seed and a context tag
/// (splitmix64 finalizer).
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_disjoint() {
        let mut a = replication_rng(7, 3);
        let mut b = replication_rng(7, 3);
        let mut c = replication_rng(7, 4);
        let xa: f64 = a.gen();
        let xb: f64 = b.gen();
        let xc: f64 = c.gen();
        assert_eq!(xa.to_bits(), xb.to_bits());
        assert_ne!(xa.to_bits(), xc.to_bits());
    }

    #[test]
    fn mix_changes_with_tag() {
        assert_ne!(mix(1, 0), mix(1, 1));
        assert_eq!(mix(42, 9), mix(42, 9));
    }
}
