#![allow(dead_code)]

use pauliprop_core::{Circuit, Gate, MultiIndex, Pauli, SparseOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly random 2n-bit index.
pub fn random_index<R: Rng>(rng: &mut R, n: usize) -> MultiIndex {
    let mut words = [0u64; 4];
    for (i, w) in words.iter_mut().enumerate() {
        let bits = (2 * n).saturating_sub(64 * i).min(64);
        if bits > 0 {
            let v: u64 = rng.gen();
            *w = if bits == 64 { v } else { v & ((1u64 << bits) - 1) };
        }
    }
    MultiIndex::from_words(words)
}

/// Random non-identity string of weight at most `max_weight`.
pub fn random_generator<R: Rng>(rng: &mut R, n: usize, max_weight: usize) -> MultiIndex {
    loop {
        let w = rng.gen_range(1..=max_weight.min(n));
        let sites: Vec<(usize, Pauli)> = (0..w)
            .map(|_| (rng.gen_range(0..n), Pauli::from_code(rng.gen_range(1..4))))
            .collect();
        let mut index = MultiIndex::IDENTITY;
        for (s, p) in sites {
            index.set(s, p);
        }
        if !index.is_identity() {
            return index;
        }
    }
}

/// Random layered circuit with `depth` gates spread over up to four layers.
pub fn random_circuit<R: Rng>(rng: &mut R, n: usize, depth: usize) -> Circuit {
    let n_layers = rng.gen_range(1..=4usize.min(depth.max(1)));
    let mut layers = vec![Vec::new(); n_layers];
    for g in 0..depth {
        let generator = if rng.gen_bool(0.3) {
            random_index(rng, n)
        } else {
            random_generator(rng, n, 3)
        };
        let angle = match rng.gen_range(0..5) {
            0 => std::f64::consts::FRAC_PI_2 * rng.gen_range(-2i32..=2) as f64,
            _ => rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        };
        layers[g % n_layers].push(Gate::new(generator, angle));
    }
    layers.retain(|l| !l.is_empty());
    Circuit::from_layers(n, layers).unwrap()
}

/// Random operator with `terms` distinct strings, capped at `4^n`.
pub fn random_operator<R: Rng>(rng: &mut R, n: usize, terms: usize) -> SparseOperator {
    let terms = if n < 16 { terms.min(1 << (2 * n)) } else { terms };
    let mut op = SparseOperator::with_capacity(n, terms);
    while op.len() < terms {
        let c: f64 = rng.gen_range(-1.0..1.0);
        let index = random_index(rng, n);
        if c != 0.0 && !op.contains(&index) {
            op.upsert(index, c);
        }
    }
    op
}
