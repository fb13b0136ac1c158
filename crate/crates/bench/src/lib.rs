//! Synthetic workloads shared by the benchmarks.

use pauliprop_core::{MultiIndex, Pauli, SparseOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniformly random string on `n` qubits.
pub fn random_index<R: Rng>(rng: &mut R, n: usize) -> MultiIndex {
    MultiIndex::from_sites((0..n).map(|s| (s, Pauli::from_code(rng.gen_range(0..4)))))
}

/// `terms` distinct random strings with coefficients in `[-1, 1]`.
pub fn random_operator(n: usize, terms: usize, seed: u64) -> SparseOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut op = SparseOperator::with_capacity(n, terms);
    while op.len() < terms {
        let index = random_index(&mut rng, n);
        let c: f64 = rng.gen_range(-1.0..1.0);
        if c != 0.0 && !op.contains(&index) {
            op.upsert(index, c);
        }
    }
    op
}
