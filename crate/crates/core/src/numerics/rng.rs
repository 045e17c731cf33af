use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator handed out for one purpose and key.
pub type StreamRng = ChaCha8Rng;

/// Purposes a random stream can be drawn for. Each one carries a fixed
/// 64-bit label mixed into the master seed, so streams never overlap and
/// adding a new purpose never shifts an existing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Weight initialization; keyed by layer index.
    WeightInit,
    /// Poisson input spikes; keyed by (episode, sample id).
    Poisson,
    /// Minibatch order; keyed by epoch.
    Shuffle,
    /// Additive Gaussian input noise; keyed by sample id.
    Noise,
    /// Random crop and flip; keyed by (epoch, sample id).
    Augment,
}

impl Stream {
    pub const fn label(self) -> u64 {
        u64::from_le_bytes(match self {
            Stream::WeightInit => *b"wt-init\0",
            Stream::Poisson => *b"poisson\0",
            Stream::Shuffle => *b"shuffle\0",
            Stream::Noise => *b"noise\0\0\0",
            Stream::Augment => *b"augment\0",
        })
    }
}

/// Master seed from which every random stream of a run is derived.
///
/// A stream is a ChaCha8 generator whose 256-bit key is the SplitMix64 chain
/// `seed ^ label`, then `^ key[0]`, `^ key[1]`, ...; identical inputs give
/// identical streams on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub const fn new(seed: u64) -> Self {
        Rng { seed }
    }

    pub const fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Stream, key: &[u64]) -> StreamRng {
        let mut h = splitmix64(self.seed ^ purpose.label());
        for &k in key {
            h = splitmix64(h ^ k);
        }
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

/// Uniform draw on `[0, 1)` from a single 32-bit word.
#[inline]
pub(crate) fn unit_from_u32(word: u32) -> f64 {
    word as f64 * (1.0 / 4_294_967_296.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(7).stream(Stream::Poisson, &[1, 2]).next_u64();
        let b = Rng::new(7).stream(Stream::Poisson, &[1, 2]).next_u64();
        assert_eq!(a, b);
    }

    #[test]
    fn purposes_and_keys_separate_streams() {
        let r = Rng::new(7);
        let base = r.stream(Stream::Poisson, &[1, 2]).next_u64();
        assert_ne!(base, r.stream(Stream::Noise, &[1, 2]).next_u64());
        assert_ne!(base, r.stream(Stream::Poisson, &[2, 1]).next_u64());
        assert_ne!(base, Rng::new(8).stream(Stream::Poisson, &[1, 2]).next_u64());
    }

    #[test]
    fn stream_value_is_pinned() {
        // Guards the documented derivation against accidental change.
        let v = Rng::new(0).stream(Stream::WeightInit, &[]).next_u32();
        let again = Rng::new(0).stream(Stream::WeightInit, &[]).next_u32();
        assert_eq!(v, again);
        assert_eq!(v, 250_762_959);
        assert_eq!(unit_from_u32(0), 0.0);
        assert!(unit_from_u32(u32::MAX) < 1.0);
    }
}
