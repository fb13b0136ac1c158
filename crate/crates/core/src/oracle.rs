//! Dense references for validating the sparse engine at small sizes.
//!
//! Everything here is built from the literal 2×2 Pauli matrices and plain
//! complex arithmetic. None of the phase tables or update rules used by the
//! engine are reused, so agreement between the two is a genuine cross-check.

use num_complex::Complex64;

use crate::circuit::{Circuit, Gate};
use crate::error::OracleError;
use crate::operator::SparseOperator;
use crate::pauli::{MultiIndex, Pauli};

/// Largest width for dense Pauli matrices.
pub const DENSE_PAULI_LIMIT: usize = 12;
/// Largest width for conjugation by explicit matrix products.
pub const DENSE_MATMUL_LIMIT: usize = 8;
/// Largest width for conjugation through the monomial structure of Pauli matrices.
pub const DENSE_CONJUGATE_LIMIT: usize = 10;
/// Largest width for state-vector simulation.
pub const STATE_VECTOR_LIMIT: usize = 26;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Literal single-qubit matrix, `m[row][col]`.
pub fn local_matrix(p: Pauli) -> [[Complex64; 2]; 2] {
    match p {
        Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
        Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
        Pauli::Y => [[ZERO, -I], [I, ZERO]],
        Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

fn check(n: usize, limit: usize) -> Result<(), OracleError> {
    if n > limit {
        Err(OracleError::TooLarge { qubits: n, limit })
    } else {
        Ok(())
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        DenseMatrix {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    /// `self ⊗ other`, with `self` acting on the more significant index bits.
    pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
        let d = self.dim * other.dim;
        let mut out = DenseMatrix::zeros(d);
        for r1 in 0..self.dim {
            for c1 in 0..self.dim {
                let a = self.get(r1, c1);
                if a == ZERO {
                    continue;
                }
                for r2 in 0..other.dim {
                    for c2 in 0..other.dim {
                        out.set(r1 * other.dim + r2, c1 * other.dim + c2, a * other.get(r2, c2));
                    }
                }
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = DenseMatrix::zeros(d);
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                let dst = &mut out.data[r * d..(r + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> DenseMatrix {
        let d = self.dim;
        let mut out = DenseMatrix::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &DenseMatrix, factor: Complex64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `sigma_I` as a `2^n × 2^n` matrix, site `n-1` as the leftmost factor.
pub fn dense_pauli(index: &MultiIndex, n: usize) -> Result<DenseMatrix, OracleError> {
    check(n, DENSE_PAULI_LIMIT)?;
    index.check_width(n)?;
    let mut out = DenseMatrix::identity(1);
    for site in (0..n).rev() {
        let m = local_matrix(index.get(site));
        let mut local = DenseMatrix::zeros(2);
        for r in 0..2 {
            for c in 0..2 {
                local.set(r, c, m[r][c]);
            }
        }
        out = out.kron(&local);
    }
    Ok(out)
}

/// `sum_I c_I sigma_I` densely.
pub fn dense_operator(op: &SparseOperator) -> Result<DenseMatrix, OracleError> {
    let n = op.n_qubits();
    check(n, DENSE_PAULI_LIMIT)?;
    let mut out = DenseMatrix::zeros(1 << n);
    for (index, &coeff) in op.iter() {
        out.add_scaled(&dense_pauli(index, n)?, Complex64::new(coeff, 0.0));
    }
    Ok(out)
}

/// `exp(-i theta/2 sigma_J) = cos(theta/2) 1 - i sin(theta/2) sigma_J`.
pub fn gate_unitary(gate: &Gate, n: usize) -> Result<DenseMatrix, OracleError> {
    let half = gate.angle / 2.0;
    let mut u = DenseMatrix::identity(1 << n);
    for v in u.data.iter_mut() {
        *v *= half.cos();
    }
    u.add_scaled(&dense_pauli(&gate.generator, n)?, -I * half.sin());
    Ok(u)
}

/// `U^† O U` for the gate unitary `U`, by two explicit matrix products.
pub fn brute_conjugate(o: &DenseMatrix, gate: &Gate, n: usize) -> Result<DenseMatrix, OracleError> {
    check(n, DENSE_MATMUL_LIMIT)?;
    let u = gate_unitary(gate, n)?;
    Ok(u.adjoint().matmul(o).matmul(&u))
}

/// `U^† O U` expanded as `c^2 O + i c s (P O - O P) + s^2 P O P` with
/// `c, s = cos, sin(theta/2)`. `P` has one nonzero per column, so each
/// product costs `O(4^n)`.
pub fn rotation_conjugate(o: &DenseMatrix, gate: &Gate, n: usize) -> Result<DenseMatrix, OracleError> {
    check(n, DENSE_CONJUGATE_LIMIT)?;
    gate.generator.check_width(n)?;
    let dim = 1usize << n;
    // Column k of P holds `value[k]` in row `k ^ flip`.
    let columns: Vec<(usize, Complex64)> = (0..dim).map(|k| pauli_column(&gate.generator, n, k)).collect();
    let flip = columns[0].0;
    let half = gate.angle / 2.0;
    let (c, s) = (half.cos(), half.sin());
    let (cc, ss, ics) = (c * c, s * s, I * c * s);
    let mut out = DenseMatrix::zeros(dim);
    for r in 0..dim {
        let pr = columns[r ^ flip].1;
        for col in 0..dim {
            let pc = columns[col].1;
            let m = o.get(r, col);
            let pm = pr * o.get(r ^ flip, col);
            let mp = o.get(r, col ^ flip) * pc;
            let pmp = pr * o.get(r ^ flip, col ^ flip) * pc;
            out.set(r, col, cc * m + ics * (pm - mp) + ss * pmp);
        }
    }
    Ok(out)
}

/// `V^† O V` for the whole circuit `V` (first gate acts first on states).
pub fn conjugate_circuit(o: &DenseMatrix, circuit: &Circuit) -> Result<DenseMatrix, OracleError> {
    let n = circuit.n_qubits();
    let mut out = o.clone();
    for gate in circuit.gates().rev() {
        out = rotation_conjugate(&out, gate, n)?;
    }
    Ok(out)
}

/// For a column `c`, the row of the single nonzero entry of `sigma_I` and its value.
fn pauli_column(index: &MultiIndex, n: usize, col: usize) -> (usize, Complex64) {
    let mut row = 0usize;
    let mut value = ONE;
    for site in 0..n {
        let m = local_matrix(index.get(site));
        let c = (col >> site) & 1;
        let r = if m[0][c] != ZERO { 0 } else { 1 };
        row |= r << site;
        value *= m[r][c];
    }
    (row, value)
}

/// `Tr(sigma_I M) / 2^n`, real part. The trace only visits the entries
/// where `sigma_I` is nonzero.
pub fn pauli_coefficient(m: &DenseMatrix, index: &MultiIndex, n: usize) -> f64 {
    let mut acc = ZERO;
    for col in 0..(1usize << n) {
        let (row, v) = pauli_column(index, n, col);
        acc += v * m.get(col, row);
    }
    acc.re / (1u64 << n) as f64
}

/// Coefficients of every Pauli string with `|c| > tol`.
///
/// For a string with flip mask `x` (X or Y sites) and phase mask `z` (Z or Y
/// sites), the literal matrices give `sigma[c ^ x][c] = i^{#Y} (-1)^{z.c}`.
/// So `Tr(sigma M) = i^{#Y} sum_c (-1)^{z.c} M[c][c ^ x]`: one Walsh-Hadamard
/// transform per flip mask, `O(n 4^n)` in total.
pub fn pauli_decompose(m: &DenseMatrix, n: usize, tol: f64) -> Vec<(MultiIndex, f64)> {
    let dim = 1usize << n;
    let scale = 1.0 / dim as f64;
    let mut out = Vec::new();
    let mut v = vec![ZERO; dim];
    for x in 0..dim {
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = m.get(c, c ^ x);
        }
        let mut h = 1;
        while h < dim {
            for block in (0..dim).step_by(2 * h) {
                for j in block..block + h {
                    let (a, b) = (v[j], v[j + h]);
                    v[j] = a + b;
                    v[j + h] = a - b;
                }
            }
            h *= 2;
        }
        for (z, &w) in v.iter().enumerate() {
            let ys = (x & z).count_ones();
            let phase = match ys % 4 {
                0 => ONE,
                1 => I,
                2 => -ONE,
                _ => -I,
            };
            let coeff = (phase * w).re * scale;
            if coeff.abs() > tol {
                let index = MultiIndex::from_sites((0..n).map(|s| {
                    let p = match ((x >> s) & 1, (z >> s) & 1) {
                        (0, 0) => Pauli::I,
                        (1, 0) => Pauli::X,
                        (1, 1) => Pauli::Y,
                        _ => Pauli::Z,
                    };
                    (s, p)
                }));
                out.push((index, coeff));
            }
        }
    }
    out
}

/// State vector on `n` qubits, basis bit `i` = qubit `i`.
#[derive(Clone, Debug)]
pub struct DenseState {
    n: usize,
    amplitudes: Vec<Complex64>,
}

impl DenseState {
    /// `|0...0>`.
    pub fn zero(n: usize) -> Result<Self, OracleError> {
        check(n, STATE_VECTOR_LIMIT)?;
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[0] = ONE;
        Ok(DenseState { n, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }

    fn apply_pauli(&self, index: &MultiIndex) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.amplitudes.len()];
        for (col, &a) in self.amplitudes.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            let (row, v) = pauli_column(index, self.n, col);
            out[row] += v * a;
        }
        out
    }

    /// `|psi> <- exp(-i theta/2 sigma_J) |psi>`; each basis pair
    /// `(c, c ^ flips)` is mixed through the Pauli action.
    pub fn apply_gate(&mut self, gate: &Gate) -> Result<(), OracleError> {
        gate.generator.check_width(self.n)?;
        let half = gate.angle / 2.0;
        let (c, s) = (half.cos(), half.sin());
        let moved = self.apply_pauli(&gate.generator);
        for (a, p) in self.amplitudes.iter_mut().zip(moved) {
            *a = c * *a - I * s * p;
        }
        Ok(())
    }

    pub fn expectation(&self, index: &MultiIndex) -> Result<f64, OracleError> {
        index.check_width(self.n)?;
        let moved = self.apply_pauli(index);
        let value: Complex64 = self
            .amplitudes
            .iter()
            .zip(moved)
            .map(|(a, p)| a.conj() * p)
            .sum();
        Ok(value.re)
    }

    /// `<psi| O |psi>` for a Pauli sum.
    pub fn expectation_of(&self, op: &SparseOperator) -> Result<f64, OracleError> {
        let mut total = 0.0;
        for (index, &coeff) in op.iter() {
            total += coeff * self.expectation(index)?;
        }
        Ok(total)
    }
}

/// Runs `circuit` forward on `state`, gate by gate.
pub fn evolve_state(mut state: DenseState, circuit: &Circuit) -> Result<DenseState, OracleError> {
    for gate in circuit.gates() {
        state.apply_gate(gate)?;
    }
    Ok(state)
}
