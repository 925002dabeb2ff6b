//! Seed policy and frozen samplers.
//!
//! Every random quantity in a run is drawn from a named substream derived
//! from one master seed, so results are bit-reproducible across runs,
//! platforms, and thread counts:
//!
//! * `("data", i)` carries user i's sample draws,
//! * `("select", t)` carries round t's client selection,
//! * `("noise", t)` carries round t's privacy noise.
//!
//! Substream seeds are expanded from `(master_seed, label, index)` with
//! splitmix64 into a 32-byte ChaCha12 key. The Gaussian sampler is plain
//! Box-Muller over 53-bit uniforms (cosine branch only, the sine partner is
//! discarded); both choices are frozen, changing either would silently break
//! recorded traces.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Concrete generator used by all substreams.
pub type SubRng = ChaCha12Rng;

/// Derives named, independent substreams from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPolicy {
    master_seed: u64,
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        RngPolicy { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Stream feeding user `i`'s sample draws.
    pub fn data_stream(&self, user: usize) -> SubRng {
        self.labeled_stream("data", user as u64)
    }

    /// Stream feeding round `t`'s client selection.
    pub fn selection_stream(&self, round: usize) -> SubRng {
        self.labeled_stream("select", round as u64)
    }

    /// Stream feeding round `t`'s privacy noise draw.
    pub fn noise_stream(&self, round: usize) -> SubRng {
        self.labeled_stream("noise", round as u64)
    }

    /// Generic named substream; distinct `(label, index)` pairs give
    /// independent generators.
    pub fn labeled_stream(&self, label: &str, index: u64) -> SubRng {
        let mut state = self.master_seed ^ 0x6A09E667F3BCC908; // sqrt(2) bits
        for &b in label.as_bytes() {
            state = splitmix64(state ^ u64::from(b));
        }
        state = splitmix64(state ^ index);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        SubRng::from_seed(key)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Standard normal draw via Box-Muller. Consumes exactly two uniforms per
/// value; `u1` is reflected into `(0, 1]` so the log never sees zero.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - unit_f64(rng);
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Bernoulli draw with success probability `q`; `q = 1` always succeeds.
pub fn bernoulli(rng: &mut impl RngCore, q: f64) -> bool {
    unit_f64(rng) < q
}

/// Unbiased uniform integer in `[0, n)` by rejection.
pub fn uniform_below(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "uniform_below requires n > 0");
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

/// Draws `k` distinct indices from `[0, n)` by partial Fisher-Yates and
/// returns them sorted ascending (aggregation is keyed by client index, so
/// the selection order itself carries no information).
pub fn choose_without_replacement(rng: &mut impl RngCore, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot choose {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_below(rng, n - i);
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}
