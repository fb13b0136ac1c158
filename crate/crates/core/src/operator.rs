//! Sparse Pauli-sum storage for one worker's share of the evolved operator.

use std::hash::BuildHasherDefault;
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use rustc_hash::FxHasher;

use crate::error::OperatorError;
use crate::pauli::MultiIndex;

type TermMap = IndexMap<MultiIndex, f64, BuildHasherDefault<FxHasher>>;

/// Real-coefficient Pauli sum `sum_I c_I sigma_I` on a fixed number of qubits.
///
/// Entries live in one contiguous vector behind an open-addressing index
/// table, so a full pass over the terms is a linear scan. Entries that
/// cancel to exactly zero stay stored until the next [`truncate`](Self::truncate).
#[derive(Clone, Debug, Default)]
pub struct SparseOperator {
    n_qubits: usize,
    terms: TermMap,
}

impl SparseOperator {
    pub fn new(n_qubits: usize) -> Self {
        SparseOperator {
            n_qubits,
            terms: TermMap::default(),
        }
    }

    pub fn with_capacity(n_qubits: usize, capacity: usize) -> Self {
        SparseOperator {
            n_qubits,
            terms: TermMap::with_capacity_and_hasher(capacity, Default::default()),
        }
    }

    /// Builds an operator from terms, summing duplicates.
    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self, OperatorError>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut op = SparseOperator::new(n_qubits);
        for (index, coeff) in terms {
            index.check_width(n_qubits)?;
            op.upsert(index, coeff);
        }
        Ok(op)
    }

    #[inline]
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Number of stored terms, including not-yet-removed exact zeros.
    #[inline]
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn get(&self, index: &MultiIndex) -> Option<f64> {
        self.terms.get(index).copied()
    }

    /// Coefficient of `index`, zero when absent.
    #[inline]
    pub fn coefficient(&self, index: &MultiIndex) -> f64 {
        self.get(index).unwrap_or(0.0)
    }

    #[inline]
    pub fn contains(&self, index: &MultiIndex) -> bool {
        self.terms.contains_key(index)
    }

    /// Like [`upsert`](Self::upsert), but an absent `index` with
    /// `|delta| <= floor` is not inserted. Returns whether it was skipped.
    #[inline]
    pub(crate) fn upsert_above(&mut self, index: MultiIndex, delta: f64, floor: f64) -> bool {
        match self.terms.entry(index) {
            indexmap::map::Entry::Occupied(mut e) => {
                *e.get_mut() += delta;
                false
            }
            indexmap::map::Entry::Vacant(e) => {
                if delta == 0.0 || delta.abs() <= floor {
                    true
                } else {
                    e.insert(delta);
                    false
                }
            }
        }
    }

    /// Adds `delta` to the coefficient at `index`, inserting it when absent.
    #[inline]
    pub fn upsert(&mut self, index: MultiIndex, delta: f64) {
        *self.terms.entry(index).or_insert(0.0) += delta;
    }

    pub fn scale_in_place(&mut self, index: &MultiIndex, factor: f64) -> Result<(), OperatorError> {
        match self.terms.get_mut(index) {
            Some(c) => {
                *c *= factor;
                Ok(())
            }
            None => Err(OperatorError::MissingTerm(index.to_sparse_label())),
        }
    }

    pub fn try_reserve(&mut self, additional: usize) -> Result<(), indexmap::TryReserveError> {
        self.terms.try_reserve(additional)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&MultiIndex, &f64)> + '_ {
        self.terms.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&MultiIndex, &mut f64)> + '_ {
        self.terms.iter_mut()
    }

    /// `max_I |c_I|`, zero for the empty operator.
    pub fn local_max_abs(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// `max_I |c_I|` in one pass, or `None` if any coefficient is NaN or infinite.
    pub fn max_abs_checked(&self) -> Option<f64> {
        let mut max = 0.0f64;
        let mut finite = true;
        for c in self.terms.values() {
            finite &= c.is_finite();
            max = max.max(c.abs());
        }
        finite.then_some(max)
    }

    #[inline]
    pub(crate) fn value_at(&self, position: usize) -> f64 {
        self.terms[position]
    }

    /// Removes the terms at `positions` (strictly ascending). Few removals
    /// are done by swap-removal from the back; many by one compaction.
    pub(crate) fn remove_positions(&mut self, positions: &[usize]) {
        if positions.len() * 8 < self.terms.len() {
            for &p in positions.iter().rev() {
                self.terms.swap_remove_index(p);
            }
        } else {
            let mut doomed = vec![false; self.terms.len()];
            for &p in positions {
                doomed[p] = true;
            }
            let mut i = 0;
            self.terms.retain(|_, _| {
                let keep = !doomed[i];
                i += 1;
                keep
            });
        }
    }

    /// Whether any stored coefficient is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.terms.values().any(|c| !c.is_finite())
    }

    /// Removes every term with `|c_I| <= epsilon0 * global_max` plus all exact
    /// zeros. Returns the number of removed terms.
    pub fn truncate(&mut self, global_max: f64, epsilon0: f64) -> Result<usize, OperatorError> {
        if !(global_max >= 0.0) || !global_max.is_finite() {
            return Err(OperatorError::InvalidGlobalMax(global_max));
        }
        if !(epsilon0 >= 0.0) || !epsilon0.is_finite() {
            return Err(OperatorError::InvalidEpsilon(epsilon0));
        }
        let threshold = epsilon0 * global_max;
        let doomed: Vec<usize> = self
            .terms
            .values()
            .enumerate()
            .filter(|(_, c)| **c == 0.0 || c.abs() <= threshold)
            .map(|(i, _)| i)
            .collect();
        self.remove_positions(&doomed);
        Ok(doomed.len())
    }

    /// `<0...0| O |0...0>`: sum of coefficients of strings built from I and Z only.
    pub fn expectation_zero_state(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(i, _)| i.is_diagonal())
            .map(|(_, c)| *c)
            .sum()
    }

    /// `sum_I c_I^2`, which equals `Tr(O^2) / 2^n`.
    pub fn norm_sq(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum()
    }

    /// Set of sites touched by at least one term.
    pub fn support_sites(&self) -> Vec<usize> {
        let mut mask = [0u64; crate::pauli::WORDS];
        for index in self.terms.keys() {
            for (m, w) in mask.iter_mut().zip(index.words()) {
                *m |= w;
            }
        }
        let merged = MultiIndex::from_words(mask);
        merged.support().map(|(s, _)| s).collect()
    }

    /// Moves all terms out of `other` into `self`, summing overlaps.
    pub fn absorb(&mut self, other: SparseOperator) {
        self.terms.reserve(other.terms.len());
        for (index, coeff) in other.terms {
            self.upsert(index, coeff);
        }
    }

    /// Terms ordered by index, for comparisons and stable dumps.
    pub fn sorted_terms(&self) -> Vec<(MultiIndex, f64)> {
        let mut terms: Vec<_> = self.terms.iter().map(|(i, c)| (*i, *c)).collect();
        terms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        terms
    }

    /// Writes one `index-hex coefficient` line per term, in storage order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (index, coeff) in &self.terms {
            writeln!(out, "{} {:e}", index.to_hex(self.n_qubits), coeff)?;
        }
        out.flush()
    }

    /// Reads the format produced by [`write_dump`](Self::write_dump). Blank lines
    /// and `#` comments are skipped; repeated indices are summed.
    pub fn read_dump<R: BufRead>(input: R, n_qubits: usize) -> Result<Self, OperatorError> {
        let mut op = SparseOperator::new(n_qubits);
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut fields = body.split_whitespace();
            let (Some(hex), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(OperatorError::Parse {
                    line: lineno + 1,
                    message: format!("expected `index-hex coefficient`, got {body:?}"),
                });
            };
            let index = MultiIndex::from_hex(hex, n_qubits).map_err(|e| OperatorError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let coeff: f64 = value.parse().map_err(|_| OperatorError::Parse {
                line: lineno + 1,
                message: format!("bad coefficient {value:?}"),
            })?;
            op.upsert(index, coeff);
        }
        Ok(op)
    }
}

/// When truncation passes run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Cadence {
    #[default]
    PerGate,
    PerLayer,
}

impl std::str::FromStr for Cadence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "per-gate" | "gate" => Ok(Cadence::PerGate),
            "per-layer" | "layer" => Ok(Cadence::PerLayer),
            other => Err(format!("unknown cadence {other:?} (expected per-gate or per-layer)")),
        }
    }
}

/// Relative amplitude truncation: drop `|c_I| <= epsilon0 * max_J |c_J|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub epsilon0: f64,
    pub cadence: Cadence,
}

impl TruncationPolicy {
    pub fn new(epsilon0: f64, cadence: Cadence) -> Result<Self, OperatorError> {
        if !(epsilon0 >= 0.0) || !epsilon0.is_finite() {
            return Err(OperatorError::InvalidEpsilon(epsilon0));
        }
        Ok(TruncationPolicy { epsilon0, cadence })
    }

    /// Only exact zeros are ever removed.
    pub fn exact() -> Self {
        TruncationPolicy {
            epsilon0: 0.0,
            cadence: Cadence::PerGate,
        }
    }

    pub fn relative(epsilon0: f64) -> Self {
        TruncationPolicy {
            epsilon0,
            cadence: Cadence::PerGate,
        }
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy::exact()
    }
}

/// Log-binned histogram of `x = c_I / max|c|`, split by sign.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityHistogram {
    /// Bin edges, `bins + 1` log-spaced values from `lower` to 1.
    pub edges: Vec<f64>,
    pub positive: Vec<u64>,
    pub negative: Vec<u64>,
    pub total: u64,
}

/// Lower edge used when no truncation threshold bounds `|x|` from below.
pub const DEFAULT_HISTOGRAM_FLOOR: f64 = 1e-16;

impl DensityHistogram {
    /// Builds the histogram over all shards. Bins span `[lower, 1]` where
    /// `lower` is `epsilon0` when positive, otherwise [`DEFAULT_HISTOGRAM_FLOOR`];
    /// values below `lower` are counted in the first bin.
    pub fn build<'a, I>(
        shards: I,
        global_max: f64,
        epsilon0: f64,
        bins: usize,
    ) -> Result<Self, OperatorError>
    where
        I: IntoIterator<Item = &'a SparseOperator>,
    {
        if bins == 0 {
            return Err(OperatorError::NoBins);
        }
        if !(global_max >= 0.0) || !global_max.is_finite() {
            return Err(OperatorError::InvalidGlobalMax(global_max));
        }
        let lower = if epsilon0 > 0.0 && epsilon0 < 1.0 {
            epsilon0
        } else {
            DEFAULT_HISTOGRAM_FLOOR
        };
        let log_lo = lower.log10();
        let edges: Vec<f64> = (0..=bins)
            .map(|b| 10f64.powf(log_lo * (1.0 - b as f64 / bins as f64)))
            .collect();
        let mut hist = DensityHistogram {
            edges,
            positive: vec![0; bins],
            negative: vec![0; bins],
            total: 0,
        };
        for shard in shards {
            if shard.is_empty() {
                continue;
            }
            if global_max == 0.0 {
                return Err(OperatorError::InvalidGlobalMax(global_max));
            }
            for (_, &c) in shard.iter() {
                let x = c / global_max;
                let mag = x.abs();
                let bin = if mag <= lower {
                    0
                } else {
                    let pos = (mag.log10() - log_lo) / (-log_lo) * bins as f64;
                    (pos.floor() as usize).min(bins - 1)
                };
                if x < 0.0 {
                    hist.negative[bin] += 1;
                } else {
                    hist.positive[bin] += 1;
                }
                hist.total += 1;
            }
        }
        Ok(hist)
    }

    pub fn bins(&self) -> usize {
        self.positive.len()
    }

    /// Counts divided by the total, zero when empty.
    pub fn normalized(&self, count: u64) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            count as f64 / self.total as f64
        }
    }

    /// Mass in bins whose upper edge lies at or below `threshold`.
    pub fn mass_below(&self, threshold: f64) -> u64 {
        (0..self.bins())
            .filter(|&b| self.edges[b + 1] <= threshold)
            .map(|b| self.positive[b] + self.negative[b])
            .sum()
    }

    /// TSV with header `bin_low bin_high sign normalized_count`; negative
    /// rows run from `-1` up, positive rows from the floor up.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_low\tbin_high\tsign\tnormalized_count")?;
        for b in (0..self.bins()).rev() {
            writeln!(
                out,
                "{:e}\t{:e}\t-\t{:e}",
                self.edges[b],
                self.edges[b + 1],
                self.normalized(self.negative[b])
            )?;
        }
        for b in 0..self.bins() {
            writeln!(
                out,
                "{:e}\t{:e}\t+\t{:e}",
                self.edges[b],
                self.edges[b + 1],
                self.normalized(self.positive[b])
            )?;
        }
        out.flush()
    }
}
