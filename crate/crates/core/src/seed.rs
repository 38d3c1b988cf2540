//! Deterministic per-component random streams.
//!
//! Each consumer of randomness draws from its own ChaCha stream keyed by the
//! experiment seed and a component name, so adding draws in one component
//! never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(base: u64, component: &str) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(component)))
}

pub fn component_rng(base: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base, component))
}
