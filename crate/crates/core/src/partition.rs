//! Assignment of Pauli strings to logical workers.
//!
//! The owner of an index is the sum of its `k`-bit blocks (counted from the
//! least significant bit), optionally shifted by `h(I) mod s`, reduced modulo
//! the worker count. Because XOR with a generator only changes the blocks the
//! generator touches, the set of workers a shard can send updates to for one
//! gate stays small: at most `2^{2|J|} + 1` for a weight-`|J|` generator.

use std::collections::BTreeSet;

use log::warn;

use crate::error::PartitionError;
use crate::pauli::{MultiIndex, WORDS};

/// Name of the perturbation hash, recorded in run metadata.
pub const PERTURBATION_HASH: &str = "splitmix64-fold";

/// Patterns above this many flippable bits are not enumerated.
const MAX_ENUMERATED_BITS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionSpec {
    workers: usize,
    block_bits: u32,
    perturbation: u64,
}

impl PartitionSpec {
    /// Unperturbed map with block size `ceil(log2 workers)` (at least 1).
    pub fn new(workers: usize) -> Result<Self, PartitionError> {
        Self::with_params(workers, default_block_bits(workers), 1)
    }

    pub fn with_params(
        workers: usize,
        block_bits: u32,
        perturbation: u64,
    ) -> Result<Self, PartitionError> {
        if workers == 0 {
            return Err(PartitionError::NoWorkers);
        }
        if !(1..=64).contains(&block_bits) {
            return Err(PartitionError::BlockSize(block_bits));
        }
        if perturbation == 0 {
            return Err(PartitionError::Perturbation);
        }
        Ok(PartitionSpec {
            workers,
            block_bits,
            perturbation,
        })
    }

    pub fn single() -> Self {
        PartitionSpec {
            workers: 1,
            block_bits: 1,
            perturbation: 1,
        }
    }

    #[inline]
    pub fn workers(&self) -> usize {
        self.workers
    }

    #[inline]
    pub fn block_bits(&self) -> u32 {
        self.block_bits
    }

    #[inline]
    pub fn perturbation(&self) -> u64 {
        self.perturbation
    }

    /// Sum of the `k`-bit blocks of `index`.
    #[inline]
    pub fn block_sum(&self, index: &MultiIndex) -> u128 {
        block_sum(index.words(), self.block_bits)
    }

    /// Worker that owns `index`.
    #[inline]
    pub fn owner(&self, index: &MultiIndex) -> usize {
        if self.workers == 1 {
            return 0;
        }
        let n = self.workers as u128;
        let mut sum = self.block_sum(index) % n;
        if self.perturbation > 1 {
            sum += (perturbation_hash(index) % self.perturbation) as u128;
        }
        (sum % n) as usize
    }

    /// Every worker that can receive an update from worker `m` when a gate
    /// with generator `generator` acts on an `n_qubits`-wide operator.
    ///
    /// Exact for the unperturbed map when the generator has at most 20 set
    /// bits; otherwise (and for `s > 1`) all workers.
    pub fn destination_set(
        &self,
        m: usize,
        generator: &MultiIndex,
        n_qubits: usize,
    ) -> BTreeSet<usize> {
        self.destination_pattern(generator, n_qubits).destinations(m)
    }

    /// Precomputes what [`destination_set`](Self::destination_set) needs for one
    /// generator so that it can be evaluated cheaply for every worker.
    pub fn destination_pattern(&self, generator: &MultiIndex, n_qubits: usize) -> DestinationPattern {
        let n = self.workers;
        if n == 1 {
            return DestinationPattern::Everyone(1);
        }
        if self.perturbation > 1 || generator.bit_count() > MAX_ENUMERATED_BITS {
            return DestinationPattern::Everyone(n);
        }
        let k = self.block_bits;
        let width_bits = 2 * n_qubits;
        // Per-bit weight 2^(position mod k) within its block.
        let weight = |bit: usize| -> usize { ((1u128 << (bit as u32 % k)) % n as u128) as usize };

        // Residues reachable from the bits the generator leaves alone.
        let mut free = vec![false; n];
        free[0] = true;
        let mut saturated = false;
        let mut touched = Vec::new();
        for bit in 0..width_bits {
            let set = (generator.words()[bit / 64] >> (bit % 64)) & 1 == 1;
            if set {
                touched.push(weight(bit));
                continue;
            }
            let w = weight(bit);
            if saturated || w == 0 {
                continue;
            }
            let mut next = free.clone();
            for r in 0..n {
                if free[r] {
                    next[(r + w) % n] = true;
                }
            }
            free = next;
            saturated = free.iter().all(|&b| b);
        }
        // Pairs (owner contribution of the touched bits, owner shift after XOR).
        let mut pairs = BTreeSet::new();
        for pattern in 0u32..(1u32 << touched.len()) {
            let mut base = 0usize;
            let mut shift = 0usize;
            for (b, &w) in touched.iter().enumerate() {
                if pattern >> b & 1 == 1 {
                    base = (base + w) % n;
                    shift = (shift + n - w) % n;
                } else {
                    shift = (shift + w) % n;
                }
            }
            pairs.insert((base, shift));
        }
        DestinationPattern::Enumerated {
            workers: n,
            free,
            pairs: pairs.into_iter().collect(),
        }
    }
}

/// Result of [`PartitionSpec::destination_pattern`].
#[derive(Clone, Debug)]
pub enum DestinationPattern {
    Everyone(usize),
    Enumerated {
        workers: usize,
        free: Vec<bool>,
        pairs: Vec<(usize, usize)>,
    },
}

impl DestinationPattern {
    pub fn destinations(&self, m: usize) -> BTreeSet<usize> {
        match self {
            DestinationPattern::Everyone(n) => (0..*n).collect(),
            DestinationPattern::Enumerated {
                workers,
                free,
                pairs,
            } => {
                let n = *workers;
                pairs
                    .iter()
                    .filter(|(base, _)| free[(m % n + n - base) % n])
                    .map(|(_, shift)| (m % n + shift) % n)
                    .collect()
            }
        }
    }
}

/// `ceil(log2 workers)`, at least 1.
pub fn default_block_bits(workers: usize) -> u32 {
    if workers <= 2 {
        1
    } else {
        usize::BITS - (workers - 1).leading_zeros()
    }
}

#[inline]
fn block_sum(words: &[u64; WORDS], k: u32) -> u128 {
    if 64 % k == 0 {
        let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        let per_word = 64 / k;
        let mut sum = 0u128;
        for &w in words {
            if w == 0 {
                continue;
            }
            let mut v = w;
            for _ in 0..per_word {
                sum += (v & mask) as u128;
                v = if k == 64 { 0 } else { v >> k };
            }
        }
        sum
    } else {
        let Some(top) = words.iter().rposition(|&w| w != 0) else {
            return 0;
        };
        let total = ((top + 1) * 64) as u32;
        let mask = (1u64 << k) - 1;
        let mut sum = 0u128;
        let mut start = 0u32;
        while start < total {
            let word = (start / 64) as usize;
            let off = start % 64;
            let mut block = words[word] >> off;
            if off + k > 64 && word + 1 < WORDS {
                block |= words[word + 1] << (64 - off);
            }
            sum += (block & mask) as u128;
            start += k;
        }
        sum
    }
}

/// Deterministic 64-bit hash of the index words: each word is folded into a
/// running state through the splitmix64 finalizer.
#[inline]
pub fn perturbation_hash(index: &MultiIndex) -> u64 {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for &w in index.words() {
        state = splitmix64_mix(state ^ w).wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
    splitmix64_mix(state)
}

#[inline]
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `max / min` of the shard sizes. A zero-sized shard makes the ratio
/// undefined; that case returns infinity and logs a warning.
pub fn uniformity_ratio(sizes: &[usize]) -> f64 {
    let Some(&min) = sizes.iter().min() else {
        return f64::INFINITY;
    };
    let max = *sizes.iter().max().unwrap();
    if min == 0 {
        warn!("uniformity ratio undefined: at least one shard is empty");
        return f64::INFINITY;
    }
    max as f64 / min as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;

    #[test]
    fn owner_examples() {
        let spec = PartitionSpec::with_params(4, 2, 1).unwrap();
        let s = MultiIndex::from_words([0b1100_1100, 0, 0, 0]);
        assert_eq!(spec.owner(&s), 2);
        assert_eq!(spec.owner(&MultiIndex::IDENTITY), 0);
        let one = PartitionSpec::new(1).unwrap();
        assert_eq!(one.owner(&s), 0);
    }

    #[test]
    fn odd_block_sizes_agree_with_bit_walk() {
        let index = MultiIndex::from_words([0xdead_beef_0123_4567, 0x89ab_cdef, 0, 1 << 61]);
        for k in 1..=64u32 {
            let mut expected = 0u128;
            let mut block = 0u128;
            for bit in 0..256usize {
                let b = (index.words()[bit / 64] >> (bit % 64)) & 1;
                block |= (b as u128) << (bit as u32 % k);
                if (bit as u32 + 1) % k == 0 || bit == 255 {
                    expected += block;
                    block = 0;
                }
            }
            assert_eq!(block_sum(index.words(), k), expected, "k = {k}");
        }
    }

    #[test]
    fn default_block_size() {
        assert_eq!(default_block_bits(1), 1);
        assert_eq!(default_block_bits(2), 1);
        assert_eq!(default_block_bits(8), 3);
        assert_eq!(default_block_bits(9), 4);
        assert_eq!(default_block_bits(256), 8);
    }

    #[test]
    fn spec_validation() {
        assert!(PartitionSpec::new(0).is_err());
        assert!(PartitionSpec::with_params(4, 0, 1).is_err());
        assert!(PartitionSpec::with_params(4, 65, 1).is_err());
        assert!(PartitionSpec::with_params(4, 2, 0).is_err());
    }

    #[test]
    fn perturbed_map_stays_in_range() {
        let spec = PartitionSpec::with_params(7, 3, 5).unwrap();
        for s in 0..127 {
            let owner = spec.owner(&MultiIndex::single(s, Pauli::Y));
            assert!(owner < 7);
        }
        let unperturbed = PartitionSpec::with_params(7, 3, 1).unwrap();
        let idx = MultiIndex::single(40, Pauli::Z);
        assert_eq!(
            unperturbed.owner(&idx),
            (unperturbed.block_sum(&idx) % 7) as usize
        );
    }

    #[test]
    fn destination_examples() {
        let spec = PartitionSpec::with_params(64, 2, 1).unwrap();
        let id = spec.destination_set(5, &MultiIndex::IDENTITY, 4);
        assert_eq!(id.into_iter().collect::<Vec<_>>(), vec![5]);
        let j = MultiIndex::from_words([0b1100_1100, 0, 0, 0]);
        assert!(spec.destination_set(3, &j, 4).len() <= 17);
        let big = PartitionSpec::with_params(1 << 12, 2, 1).unwrap();
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            assert!(big.destination_set(0, &MultiIndex::single(9, p), 127).len() <= 5);
        }
        let perturbed = PartitionSpec::with_params(16, 4, 3).unwrap();
        assert_eq!(perturbed.destination_set(0, &j, 4).len(), 16);
    }

    #[test]
    fn uniformity_examples() {
        assert_eq!(uniformity_ratio(&[10, 10, 10]), 1.0);
        assert_eq!(uniformity_ratio(&[100, 400]), 4.0);
        assert!(uniformity_ratio(&[0, 3]).is_infinite());
    }
}
