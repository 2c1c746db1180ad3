/// Counter-based deterministic generator (SplitMix64 mixing over a keyed
/// counter). Streams are split by id instead of sharing mutable state, so
/// results never depend on execution order across consumers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x5851_F42D_4C95_7F2D;
const SPLIT_SALT: u64 = 0xD6E8_FEB8_6659_FD93;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng { key: mix64(seed ^ SEED_SALT), counter: 0 }
    }

    /// Derives an independent stream; does not consume state of `self`.
    pub fn split(&self, stream_id: u64) -> Rng {
        Rng { key: mix64(self.key ^ mix64(stream_id ^ SPLIT_SALT)), counter: 0 }
    }

    /// Serializable state for checkpoint/resume.
    pub fn state(&self) -> (u64, u64) {
        (self.key, self.counter)
    }

    pub fn from_state(state: (u64, u64)) -> Self {
        Rng { key: state.0, counter: state.1 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in [0, 1) with 53 random bits; bit-identical across platforms.
    #[inline]
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_f64()
    }

    /// Uniform index in [0, n) via multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller. Stateless apart from the counter, so
    /// checkpointed state stays a (key, counter) pair.
    pub fn gaussian_f64(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// k distinct indices drawn from [0, m), in draw order (partial
    /// Fisher-Yates).
    pub fn choose_k(&mut self, m: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= m);
        let mut pool: Vec<usize> = (0..m).collect();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + self.below(m - i);
            pool.swap(i, j);
            out.push(pool[i]);
        }
        out
    }
}
