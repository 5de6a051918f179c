//! Seeded random substreams.
//!
//! Every consumer draws from a ChaCha8 generator keyed by the 64-bit run seed
//! and positioned on its own 64-bit stream id. The stream id is a SplitMix64
//! fold over a domain tag and the caller's coordinates (task, class, split,
//! epoch, ...), so draws in one substream never depend on how many values
//! another substream consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating the generator's consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    ClassMean = 1,
    TrainSamples = 2,
    TestSamples = 3,
    TrainShuffle = 4,
    TestOrder = 5,
    Replay = 6,
    Probe = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for `(domain, coords...)`.
pub fn stream_id(domain: Domain, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(domain as u64), |h, &c| splitmix64(h ^ splitmix64(c)))
}

pub fn substream(seed: u64, domain: Domain, coords: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, coords));
    rng
}
