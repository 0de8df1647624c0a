//! Counter-based keyed pseudorandom streams.
//!
//! Every draw is a pure function of `(key, counter)`: the `n`-th output of a
//! stream keyed by `k` is `mix64(k + (n + 1) * GOLDEN_GAMMA)`, i.e. the
//! SplitMix64 sequence started from `k`. Keys are derived from tuples such as
//! `(rng_seed, layer, node)` by folding each component through `mix64`, so
//! streams for different tuples are unrelated and the order in which they are
//! consumed does not matter.
//!
//! Constants (Steele, Lea & Flood, "Fast splittable pseudorandom number
//! generators"; finalizer variant 13 from Stafford):
//!
//! | name           | value                |
//! |----------------|----------------------|
//! | `GOLDEN_GAMMA` | `0x9e3779b97f4a7c15` |
//! | `MIX_MUL_1`    | `0xbf58476d1ce4e5b9` |
//! | `MIX_MUL_2`    | `0x94d049bb133111eb` |

pub const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
pub const MIX_MUL_1: u64 = 0xbf58_476d_1ce4_e5b9;
pub const MIX_MUL_2: u64 = 0x94d0_49bb_1331_11eb;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Folds a tuple of words into a single stream key.
pub fn derive_key(parts: &[u64]) -> u64 {
    parts.iter().fold(GOLDEN_GAMMA, |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(GOLDEN_GAMMA)))
    })
}

#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn keyed(parts: &[u64]) -> Self {
        Self::new(derive_key(parts))
    }

    /// Output at an arbitrary position without advancing.
    #[inline]
    pub fn at(&self, counter: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform integer in `[0, n)` by Lemire's multiply-and-reject method.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher-Yates over the first `k` positions: afterwards `items[..k]` is a
    /// uniformly random `k`-subset in random order.
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], k: usize) {
        let n = items.len();
        for j in 0..k.min(n) {
            let r = j + self.below((n - j) as u64) as usize;
            items.swap(j, r);
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        self.partial_shuffle(items, n);
    }
}
