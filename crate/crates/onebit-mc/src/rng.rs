use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Seedable RNG handle: a (seed, stream) pair that deterministically
/// materializes a counter-based generator. Identical pairs reproduce
/// identical draws; distinct streams of the same seed are independent,
/// which is how parallel experiment cells avoid sharing randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngHandle {
    pub seed: u64,
    pub stream: u64,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self {
            seed: self.seed,
            stream,
        }
    }

    /// Materialize the generator for this (seed, stream) pair.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut r = ChaCha12Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}
