//! Bit-encoded Pauli strings.
//!
//! A string on `n` qubits is a `2n`-bit multi-index. Site `i` occupies bits
//! `2i` (low) and `2i + 1` (high), counted from the least significant end of
//! the first word. The 2-bit local codes are
//!
//! | code | operator |
//! |------|----------|
//! | `00` | identity |
//! | `01` | X        |
//! | `10` | Y        |
//! | `11` | Z        |
//!
//! This layout is normative: the hex dump format and the distribution map in
//! [`crate::partition`] both read the raw bits.
//!
//! Products reduce to an XOR of the indices plus a phase `i^B` with `B`
//! accumulated from per-site structure constants, see [`MultiIndex::product`].

use std::fmt;
use std::ops::{Add, BitXor, BitXorAssign};

use crate::error::PauliError;

/// Number of 64-bit words backing a [`MultiIndex`].
pub const WORDS: usize = 4;
/// Largest supported qubit count.
pub const MAX_QUBITS: usize = WORDS * 32;

const LOW_BITS: u64 = 0x5555_5555_5555_5555;

/// Single-site Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Pauli {
    I = 0b00,
    X = 0b01,
    Y = 0b10,
    Z = 0b11,
}

impl Pauli {
    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn from_code(code: u8) -> Pauli {
        match code & 0b11 {
            0b00 => Pauli::I,
            0b01 => Pauli::X,
            0b10 => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' | 'i' => Some(Pauli::I),
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Local phase table indexed by `(a << 2) | b` for 2-bit codes `a`, `b`.
///
/// Entry is the Levi-Civita sum `sum_k eps_{a b k}`, zero when either side is
/// the identity or both sides agree.
const LOCAL_PHASE: [i8; 16] = [
    0, 0, 0, 0, // I · _
    0, 0, 1, -1, // X · (I, X, Y, Z)
    0, -1, 0, 1, // Y · (I, X, Y, Z)
    0, 1, -1, 0, // Z · (I, X, Y, Z)
];

/// Structure constant of the local product `sigma_a sigma_b = i^{b(a,b)} sigma_{a^b}`.
///
/// Total on the 4×4 code domain; the upper bits of the arguments are ignored.
#[inline]
pub fn local_phase(a: u8, b: u8) -> i8 {
    LOCAL_PHASE[(((a & 0b11) << 2) | (b & 0b11)) as usize]
}

/// Exponent of `i` in a Pauli product, kept modulo 4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PhaseExponent(u8);

impl PhaseExponent {
    pub const ZERO: PhaseExponent = PhaseExponent(0);

    pub fn new(value: i64) -> Self {
        PhaseExponent(value.rem_euclid(4) as u8)
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    /// Odd exponent means the two strings anticommute.
    #[inline]
    pub fn is_odd(self) -> bool {
        self.0 & 1 == 1
    }

    #[inline]
    pub fn negate(self) -> Self {
        PhaseExponent((4 - self.0) & 3)
    }
}

impl Add for PhaseExponent {
    type Output = PhaseExponent;

    fn add(self, rhs: Self) -> Self {
        PhaseExponent((self.0 + rhs.0) & 3)
    }
}

/// A Pauli string encoded as a fixed-width multi-index, 2 bits per site.
///
/// The width `n` is a property of the simulation, not of the value: an index
/// is valid for width `n` when every site at or above `n` is the identity.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    words: [u64; WORDS],
}

impl MultiIndex {
    pub const IDENTITY: MultiIndex = MultiIndex { words: [0; WORDS] };

    #[inline]
    pub const fn from_words(words: [u64; WORDS]) -> Self {
        MultiIndex { words }
    }

    #[inline]
    pub fn words(&self) -> &[u64; WORDS] {
        &self.words
    }

    /// Single non-identity site.
    pub fn single(site: usize, pauli: Pauli) -> Self {
        let mut index = MultiIndex::IDENTITY;
        index.set(site, pauli);
        index
    }

    /// Builds an index from `(site, operator)` pairs; later pairs overwrite.
    pub fn from_sites<I: IntoIterator<Item = (usize, Pauli)>>(sites: I) -> Self {
        let mut index = MultiIndex::IDENTITY;
        for (site, pauli) in sites {
            index.set(site, pauli);
        }
        index
    }

    #[inline]
    pub fn get(&self, site: usize) -> Pauli {
        debug_assert!(site < MAX_QUBITS);
        let bit = 2 * site;
        Pauli::from_code((self.words[bit / 64] >> (bit % 64)) as u8)
    }

    #[inline]
    pub fn set(&mut self, site: usize, pauli: Pauli) {
        assert!(site < MAX_QUBITS, "site {site} exceeds capacity {MAX_QUBITS}");
        let bit = 2 * site;
        let w = &mut self.words[bit / 64];
        *w &= !(0b11 << (bit % 64));
        *w |= (pauli.code() as u64) << (bit % 64);
    }

    #[inline]
    pub fn is_identity(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Number of non-identity sites.
    #[inline]
    pub fn weight(&self) -> u32 {
        self.words
            .iter()
            .map(|&w| ((w | (w >> 1)) & LOW_BITS).count_ones())
            .sum()
    }

    /// Number of set bits in the raw encoding (1 per X/Y site, 2 per Z site).
    #[inline]
    pub fn bit_count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// True when every site is the identity or Z, i.e. `<0|sigma|0> = 1`.
    #[inline]
    pub fn is_diagonal(&self) -> bool {
        // Off-diagonal codes 01 and 10 are exactly the sites where the two
        // bits differ.
        self.words
            .iter()
            .all(|&w| (w ^ (w >> 1)) & LOW_BITS == 0)
    }

    /// Highest non-identity site, if any.
    pub fn max_site(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| (i * 64 + 63 - w.leading_zeros() as usize) / 2)
    }

    /// True when the string has no support at or above site `n`.
    pub fn fits(&self, n: usize) -> bool {
        self.max_site().map_or(true, |s| s < n)
    }

    pub fn check_width(&self, n: usize) -> Result<(), PauliError> {
        if self.fits(n) {
            Ok(())
        } else {
            Err(PauliError::WidthMismatch {
                site: self.max_site().unwrap_or(0),
                qubits: n,
            })
        }
    }

    /// Iterator over `(site, operator)` for non-identity sites, ascending.
    pub fn support(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        (0..MAX_QUBITS)
            .map(move |s| (s, self.get(s)))
            .filter(|(_, p)| *p != Pauli::I)
    }

    /// `B(self, other) mod 4`, the exponent in `sigma_self sigma_other = i^B sigma_{self ^ other}`.
    #[inline]
    pub fn phase_exponent(&self, other: &MultiIndex) -> PhaseExponent {
        let mut plus = 0u32;
        let mut minus = 0u32;
        for (&a, &b) in self.words.iter().zip(other.words.iter()) {
            let (ap, am) = cyclic_masks(a, b);
            plus += ap.count_ones();
            minus += am.count_ones();
        }
        PhaseExponent(((plus + 4 * 64 - minus) & 3) as u8)
    }

    /// Reference implementation of [`phase_exponent`](Self::phase_exponent)
    /// through the per-site lookup table.
    pub fn phase_exponent_by_table(&self, other: &MultiIndex) -> PhaseExponent {
        let sum: i64 = (0..MAX_QUBITS)
            .map(|s| local_phase(self.get(s).code(), other.get(s).code()) as i64)
            .sum();
        PhaseExponent::new(sum)
    }

    /// Whether the two strings anticommute (odd phase exponent).
    #[inline]
    pub fn anticommutes(&self, other: &MultiIndex) -> bool {
        let mut parity = 0u32;
        for (&a, &b) in self.words.iter().zip(other.words.iter()) {
            let (ap, am) = cyclic_masks(a, b);
            parity ^= (ap | am).count_ones();
        }
        parity & 1 == 1
    }

    /// `sigma_self sigma_other = i^B sigma_{self ^ other}`.
    #[inline]
    pub fn product(&self, other: &MultiIndex) -> (MultiIndex, PhaseExponent) {
        (*self ^ *other, self.phase_exponent(other))
    }

    /// Lowercase hex of the `2n`-bit value, zero padded to `ceil(2n / 4)` digits.
    pub fn to_hex(&self, n: usize) -> String {
        let digits = ((2 * n).div_ceil(4)).max(1);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = 4 * d;
            let nibble = (self.words[bit / 64] >> (bit % 64)) & 0xf;
            out.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        out
    }

    pub fn from_hex(text: &str, n: usize) -> Result<MultiIndex, PauliError> {
        let text = text.trim();
        if text.is_empty() || text.len() > WORDS * 16 {
            return Err(PauliError::InvalidHex(text.to_string()));
        }
        let mut words = [0u64; WORDS];
        for (d, c) in text.chars().rev().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| PauliError::InvalidHex(text.to_string()))?;
            let bit = 4 * d;
            words[bit / 64] |= (nibble as u64) << (bit % 64);
        }
        let index = MultiIndex { words };
        index.check_width(n)?;
        Ok(index)
    }

    /// Dense label of length `n`, highest site first.
    pub fn to_dense_label(&self, n: usize) -> String {
        (0..n).rev().map(|s| self.get(s).as_char()).collect()
    }

    /// Sparse label such as `"Z13 Z14"`, sites ascending; `"I"` for the identity.
    pub fn to_sparse_label(&self) -> String {
        if self.is_identity() {
            return "I".to_string();
        }
        let parts: Vec<String> = self
            .support()
            .map(|(s, p)| format!("{}{}", p.as_char(), s))
            .collect();
        parts.join(" ")
    }

    /// Parses a dense label (`"XIZZ"`, leftmost is the highest site) or a
    /// sparse label (`"Z62"`, `"Z13 Z14"`, optionally comma separated).
    pub fn parse_label(text: &str, n: usize) -> Result<MultiIndex, PauliError> {
        let text = text.trim();
        if n > MAX_QUBITS {
            return Err(PauliError::TooManyQubits(n));
        }
        if text.is_empty() {
            return Err(PauliError::EmptyLabel);
        }
        if text.chars().any(|c| c.is_ascii_digit()) {
            Self::parse_sparse(text, n)
        } else if text.eq_ignore_ascii_case("i") && n != 1 {
            Ok(MultiIndex::IDENTITY)
        } else {
            Self::parse_dense(text, n)
        }
    }

    fn parse_dense(text: &str, n: usize) -> Result<MultiIndex, PauliError> {
        let chars: Vec<char> = text.chars().collect();
        if chars.len() != n {
            return Err(PauliError::LabelLength {
                expected: n,
                found: chars.len(),
            });
        }
        let mut index = MultiIndex::IDENTITY;
        for (pos, &c) in chars.iter().enumerate() {
            let p = Pauli::from_char(c).ok_or(PauliError::InvalidChar(c))?;
            index.set(n - 1 - pos, p);
        }
        Ok(index)
    }

    fn parse_sparse(text: &str, n: usize) -> Result<MultiIndex, PauliError> {
        let mut index = MultiIndex::IDENTITY;
        let mut seen = [false; MAX_QUBITS];
        for token in text.split(|c: char| c.is_whitespace() || c == ',') {
            if token.is_empty() {
                continue;
            }
            let mut chars = token.chars();
            let head = chars.next().unwrap();
            let p = Pauli::from_char(head).ok_or(PauliError::InvalidChar(head))?;
            let digits = chars.as_str();
            if let Some(bad) = digits.chars().find(|c| !c.is_ascii_digit()) {
                return Err(PauliError::InvalidChar(bad));
            }
            let site: usize = digits
                .parse()
                .map_err(|_| PauliError::InvalidSite(token.to_string()))?;
            if site >= n {
                return Err(PauliError::SiteOutOfRange { site, qubits: n });
            }
            if seen[site] {
                return Err(PauliError::DuplicateSite(site));
            }
            seen[site] = true;
            index.set(site, p);
        }
        Ok(index)
    }
}

/// Per-word masks (on the low bit of each site) of sites whose local phase is
/// `+1` and `-1` respectively.
#[inline]
fn cyclic_masks(a: u64, b: u64) -> (u64, u64) {
    let (al, ah) = (a & LOW_BITS, (a >> 1) & LOW_BITS);
    let (bl, bh) = (b & LOW_BITS, (b >> 1) & LOW_BITS);
    let ax = al & !ah;
    let ay = !al & ah;
    let az = al & ah;
    let bx = bl & !bh;
    let by = !bl & bh;
    let bz = bl & bh;
    let plus = (ax & by) | (ay & bz) | (az & bx);
    let minus = (ay & bx) | (az & by) | (ax & bz);
    (plus, minus)
}

impl BitXor for MultiIndex {
    type Output = MultiIndex;

    #[inline]
    fn bitxor(mut self, rhs: Self) -> Self {
        self ^= rhs;
        self
    }
}

impl BitXorAssign for MultiIndex {
    #[inline]
    fn bitxor_assign(&mut self, rhs: Self) {
        for (a, b) in self.words.iter_mut().zip(rhs.words.iter()) {
            *a ^= b;
        }
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiIndex({})", self.to_sparse_label())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sparse_label())
    }
}

/// Phase exponent `B(I, J)` for a fixed right factor `J`, evaluated only on
/// the sites or words where `J` is not the identity.
#[derive(Clone, Debug)]
pub enum PhaseKernel {
    /// Per non-identity site of `J`: word, shift and the 4-entry phase row.
    Sites(Vec<(usize, u32, [u8; 4])>),
    /// Nonzero words of `J`.
    Words(Vec<(usize, u64)>),
}

const KERNEL_SITE_LIMIT: u32 = 8;

impl PhaseKernel {
    pub fn new(generator: &MultiIndex) -> Self {
        if generator.weight() <= KERNEL_SITE_LIMIT {
            let sites = generator
                .support()
                .map(|(site, p)| {
                    let mut row = [0u8; 4];
                    for (a, r) in row.iter_mut().enumerate() {
                        *r = (local_phase(a as u8, p.code()) + 4) as u8 & 3;
                    }
                    (site / 32, 2 * (site % 32) as u32, row)
                })
                .collect();
            PhaseKernel::Sites(sites)
        } else {
            PhaseKernel::Words(
                generator
                    .words
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0)
                    .map(|(i, &w)| (i, w))
                    .collect(),
            )
        }
    }

    /// `B(index, J)` modulo 4.
    #[inline]
    pub fn phase(&self, index: &MultiIndex) -> PhaseExponent {
        match self {
            PhaseKernel::Sites(sites) => {
                let mut b = 0u8;
                for &(word, shift, row) in sites {
                    b += row[((index.words[word] >> shift) & 3) as usize];
                }
                PhaseExponent(b & 3)
            }
            PhaseKernel::Words(words) => {
                let mut plus = 0u32;
                let mut minus = 0u32;
                for &(i, w) in words {
                    let (ap, am) = cyclic_masks(index.words[i], w);
                    plus += ap.count_ones();
                    minus += am.count_ones();
                }
                PhaseExponent(((plus + 4 * 64 - minus) & 3) as u8)
            }
        }
    }
}
