//! Seed-addressable random sampling primitives.
//!
//! Every random draw in the crate comes from a [`Stream`] obtained through
//! [`SeedSpec::stream`]. A stream is a ChaCha8 keystream whose key is derived
//! from the root seed and whose 64-bit stream id packs the replicate index `r`
//! (high 32 bits) and resample index `b` (low 32 bits). Distinct `(r, b)` pairs
//! therefore address disjoint keystreams, and any worker may re-derive any
//! stream without shared state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator algorithm, recorded in experiment metadata.
pub const GENERATOR: &str = "chacha8 (rand_chacha 0.9); key = splitmix64(root_seed), stream id = r << 32 | b";

/// Multinomial construction, recorded in experiment metadata.
pub const MULTINOMIAL_METHOD: &str = "binomial-chain (rand_distr 0.5 Binomial, cells in index order)";

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Root of a family of reproducible random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root_seed: u64,
}

impl SeedSpec {
    pub fn new(root_seed: u64) -> Self {
        Self { root_seed }
    }

    /// The stream for replicate `r`, resample `b`.
    ///
    /// Panics if either index does not fit in 32 bits; no engine comes close.
    pub fn stream(&self, r: u64, b: u64) -> Stream {
        assert!(r <= u64::from(u32::MAX) && b <= u64::from(u32::MAX), "stream index out of range");
        let mut key = [0u8; 32];
        let mut state = self.root_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((r << 32) | b);
        Stream(rng)
    }

    /// A child seed for an independent purpose (dataset replicate, pilot fit, ...).
    pub fn child(&self, label: &str, index: u64) -> SeedSpec {
        let tag = fnv1a(label.as_bytes());
        let mixed = mix64(self.root_seed ^ mix64(tag.wrapping_add(mix64(index.wrapping_add(GOLDEN_GAMMA)))));
        SeedSpec::new(mixed)
    }
}

/// A single deterministic random stream.
#[derive(Clone, Debug)]
pub struct Stream(ChaCha8Rng);

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Row indices drawn with replacement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSample(pub Vec<usize>);

impl IndexSample {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Multinomial resample multiplicities over `n` subsample cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightVector(pub Vec<u64>);

impl WeightVector {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

/// Simple random sampling with replacement: `m` uniform draws on `0..population`.
pub fn srswr(population: usize, m: usize, stream: &mut Stream) -> Result<IndexSample> {
    let mut out = Vec::with_capacity(m);
    srswr_into(population, m, stream, &mut out)?;
    Ok(IndexSample(out))
}

/// Buffer-reusing form of [`srswr`]; `out` is cleared first.
pub fn srswr_into(population: usize, m: usize, stream: &mut Stream, out: &mut Vec<usize>) -> Result<()> {
    if population == 0 {
        return Err(Error::InvalidPopulation);
    }
    out.clear();
    out.extend((0..m).map(|_| stream.random_range(0..population)));
    Ok(())
}

/// Multinomial(`total`; 1/n, ..., 1/n) counts via the conditional binomial chain.
pub fn multinomial_weights(n: usize, total: usize, stream: &mut Stream) -> Result<WeightVector> {
    let mut out = Vec::with_capacity(n);
    multinomial_into(n, total, stream, &mut out)?;
    Ok(WeightVector(out))
}

/// Buffer-reusing form of [`multinomial_weights`].
pub fn multinomial_into(n: usize, total: usize, stream: &mut Stream, out: &mut Vec<u64>) -> Result<()> {
    if n == 0 || n > total {
        return Err(Error::InvalidShape(format!("multinomial needs 1 <= n <= N, got n = {n}, N = {total}")));
    }
    out.clear();
    let mut remaining = total as u64;
    for cell in 0..n - 1 {
        if remaining == 0 {
            out.push(0);
            continue;
        }
        let p = 1.0 / (n - cell) as f64;
        let draw = Binomial::new(remaining, p).expect("valid binomial parameters").sample(stream);
        out.push(draw);
        remaining -= draw;
    }
    out.push(remaining);
    debug_assert_eq!(out.iter().sum::<u64>(), total as u64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_draws_is_empty() {
        let mut s = SeedSpec::new(1).stream(0, 0);
        assert!(srswr(10, 0, &mut s).unwrap().is_empty());
    }

    #[test]
    fn single_element_population() {
        let mut s = SeedSpec::new(1).stream(0, 0);
        assert_eq!(srswr(1, 5, &mut s).unwrap().0, vec![0; 5]);
    }

    #[test]
    fn empty_population_rejected() {
        let mut s = SeedSpec::new(1).stream(0, 0);
        assert!(matches!(srswr(0, 3, &mut s), Err(Error::InvalidPopulation)));
    }

    #[test]
    fn uniform_frequencies() {
        let mut s = SeedSpec::new(42).stream(3, 7);
        let draws = srswr(4, 1_000_000, &mut s).unwrap();
        let mut counts = [0usize; 4];
        for &i in draws.as_slice() {
            counts[i] += 1;
        }
        for c in counts {
            let f = c as f64 / 1e6;
            assert!((f - 0.25).abs() < 0.002, "frequency {f}");
        }
    }

    #[test]
    fn one_cell_absorbs_all() {
        let mut s = SeedSpec::new(5).stream(0, 1);
        assert_eq!(multinomial_weights(1, 7, &mut s).unwrap().0, vec![7]);
    }

    #[test]
    fn multinomial_conserves_mass() {
        let mut s = SeedSpec::new(5).stream(0, 1);
        let w = multinomial_weights(5, 100, &mut s).unwrap();
        assert_eq!(w.0.len(), 5);
        assert_eq!(w.total(), 100);
    }

    #[test]
    fn multinomial_shape_errors() {
        let mut s = SeedSpec::new(5).stream(0, 1);
        assert!(matches!(multinomial_weights(0, 10, &mut s), Err(Error::InvalidShape(_))));
        assert!(matches!(multinomial_weights(11, 10, &mut s), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn multinomial_cell_moments() {
        // Multinomial(1000; 1/4 x 4): mean 250, variance 1000 * 1/4 * 3/4 = 187.5.
        let seed = SeedSpec::new(99);
        let reps = 10_000;
        let mut sum = [0f64; 4];
        let mut sum_sq = [0f64; 4];
        for rep in 0..reps {
            let mut s = seed.stream(rep, 1);
            let w = multinomial_weights(4, 1000, &mut s).unwrap();
            for (j, &c) in w.as_slice().iter().enumerate() {
                sum[j] += c as f64;
                sum_sq[j] += (c * c) as f64;
            }
        }
        for j in 0..4 {
            let mean = sum[j] / reps as f64;
            let var = sum_sq[j] / reps as f64 - mean * mean;
            assert!((mean - 250.0).abs() < 2.0, "cell {j} mean {mean}");
            assert!((var / 187.5 - 1.0).abs() < 0.05, "cell {j} variance {var}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let seed = SeedSpec::new(2024);
        let take = |r, b| {
            let mut s = seed.stream(r, b);
            (0..8).map(|_| s.next_u64()).collect::<Vec<_>>()
        };
        let (a, b, c) = (take(1, 2), take(1, 2), take(2, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn cross_stream_correlation_is_negligible() {
        let seed = SeedSpec::new(7);
        let m = 200_000;
        let mut s1 = seed.stream(0, 1);
        let mut s2 = seed.stream(1, 0);
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..m {
            let x: f64 = s1.random();
            let y: f64 = s2.random();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let mf = m as f64;
        let cov = sxy / mf - (sx / mf) * (sy / mf);
        let corr = cov / ((sxx / mf - (sx / mf).powi(2)) * (syy / mf - (sy / mf).powi(2))).sqrt();
        // 4 standard errors of a null correlation.
        assert!(corr.abs() < 4.0 / mf.sqrt(), "corr {corr}");
    }

    #[test]
    fn child_seeds_differ_by_label_and_index() {
        let s = SeedSpec::new(11);
        assert_ne!(s.child("data", 0), s.child("data", 1));
        assert_ne!(s.child("data", 0), s.child("pilot", 0));
        assert_eq!(s.child("data", 3), s.child("data", 3));
    }
}
