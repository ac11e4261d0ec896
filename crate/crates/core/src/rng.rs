//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! keyed by an explicit seed and a stream tag; there is no global RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Geometry = 1,
    Materials = 2,
    Directivity = 3,
    Speech = 4,
    Noise = 5,
    Auxiliary = 6,
    Crop = 7,
    Split = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` under `master`.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Independent generator for one purpose within a sample.
pub fn stream(seed: u64, tag: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, Stream::Geometry).random();
        let b: u64 = stream(7, Stream::Geometry).random();
        let c: u64 = stream(7, Stream::Noise).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(sample_seed(1, 0), sample_seed(1, 1));
        assert_ne!(sample_seed(1, 0), sample_seed(2, 0));
    }
}
