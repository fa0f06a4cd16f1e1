//! Self-contained deterministic RNG for the walk engine.
//!
//! Per-trajectory streams are derived with the documented mixing function:
//! the splitmix64 finalizer applied to `master_seed XOR
//! golden-ratio-scrambled index`. The resulting 64-bit value seeds a
//! splitmix64 sequence whose first four outputs become the xoshiro256++
//! state. Both algorithms are public domain (Vigna); re-implemented here so
//! byte-level reproducibility never depends on an external crate's version.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer (output mixing function).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// splitmix64 stream.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }
}

/// xoshiro256++ generator.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seed the state from a splitmix64 stream, the standard recipe.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let mut s = [0u64; 4];
        for w in s.iter_mut() {
            *w = sm.next_u64();
        }
        // All-zero state is unreachable from splitmix64 seeding in practice,
        // but guard anyway.
        if s == [0, 0, 0, 0] {
            s[0] = GOLDEN;
        }
        Rng { s }
    }

    /// RNG for trajectory `index` under `master_seed`.
    ///
    /// seed = mix64(master_seed ^ (index * GOLDEN))
    pub fn for_trajectory(master_seed: u64, index: u64) -> Self {
        Rng::from_seed(mix64(master_seed ^ index.wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = (self.s[0].wrapping_add(self.s[3]))
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        // Plain modulo: bias is < n / 2^64, irrelevant at our support sizes,
        // and the reduction is platform-independent.
        self.next_u64() % n
    }
}
