//! Gates, layered circuits and the line-oriented circuit file format.
//!
//! ```text
//! # comment
//! X0 0.5pi        <- label, then angle in radians ("pi" suffix allowed)
//! Z0 Z1 -0.5pi
//!                 <- blank line ends a layer
//! X1 0.3
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::CircuitError;
use crate::pauli::MultiIndex;

const QUADRANT_SNAP: f64 = 1e-12;

/// Rotation `exp(-i angle/2 sigma_generator)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub generator: MultiIndex,
    pub angle: f64,
}

impl Gate {
    pub fn new(generator: MultiIndex, angle: f64) -> Self {
        Gate { generator, angle }
    }

    /// `(cos angle, sin angle)`, exact at integer multiples of `pi/2` so that
    /// Clifford rotations map one string to one string without leaving
    /// `1e-17`-sized residues behind.
    pub fn cos_sin(&self) -> (f64, f64) {
        exact_cos_sin(self.angle)
    }
}

pub fn exact_cos_sin(angle: f64) -> (f64, f64) {
    let quarters = angle / (PI / 2.0);
    let nearest = quarters.round();
    if (quarters - nearest).abs() <= QUADRANT_SNAP * nearest.abs().max(1.0) {
        match (nearest as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (angle.cos(), angle.sin())
    }
}

/// Parses a radian value, accepting a `pi` suffix as in `"-0.5pi"` or `"pi/4"`.
/// `pi` forms are evaluated as a multiple of `std::f64::consts::PI`.
pub fn parse_angle(text: &str) -> Result<f64, CircuitError> {
    let t = text.trim();
    let err = || CircuitError::Angle(text.to_string());
    let lower = t.to_ascii_lowercase();
    if let Some(pos) = lower.find("pi") {
        let (head, tail) = (&lower[..pos], &lower[pos + 2..]);
        let head = head.trim_end_matches('*');
        let factor = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.parse::<f64>().map_err(|_| err())?,
        };
        let divisor = match tail {
            "" => 1.0,
            d => d
                .strip_prefix('/')
                .ok_or_else(err)?
                .parse::<f64>()
                .map_err(|_| err())?,
        };
        let value = factor * PI / divisor;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(err())
        }
    } else {
        let value = t.parse::<f64>().map_err(|_| err())?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(err())
        }
    }
}

/// Ordered layers of ordered gates on `n_qubits` qubits. Gates are listed in
/// circuit (Schrödinger) time order.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    layers: Vec<Vec<Gate>>,
    pub label: String,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            layers: Vec::new(),
            label: String::new(),
        }
    }

    pub fn from_layers(n_qubits: usize, layers: Vec<Vec<Gate>>) -> Result<Self, CircuitError> {
        let mut circuit = Circuit::new(n_qubits);
        for layer in layers {
            circuit.push_layer(layer)?;
        }
        Ok(circuit)
    }

    pub fn push_layer(&mut self, layer: Vec<Gate>) -> Result<(), CircuitError> {
        for gate in &layer {
            gate.generator.check_width(self.n_qubits)?;
            if !gate.angle.is_finite() {
                return Err(CircuitError::Angle(gate.angle.to_string()));
            }
        }
        if !layer.is_empty() {
            self.layers.push(layer);
        }
        Ok(())
    }

    #[inline]
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> &[Vec<Gate>] {
        &self.layers
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// All gates in circuit order.
    pub fn gates(&self) -> impl DoubleEndedIterator<Item = &Gate> + '_ {
        self.layers.iter().flatten()
    }

    pub fn parse(text: &str, n_qubits: usize) -> Result<Self, CircuitError> {
        let mut circuit = Circuit::new(n_qubits);
        let mut layer = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                // A line holding only a comment does not end a layer.
                if raw.trim().is_empty() && !layer.is_empty() {
                    circuit.push_layer(std::mem::take(&mut layer))?;
                }
                continue;
            }
            let parse_err = |message: String| CircuitError::Parse {
                line: lineno + 1,
                message,
            };
            let (label, angle) = line
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| parse_err(format!("expected `label angle`, got {line:?}")))?;
            let angle = parse_angle(angle).map_err(|e| parse_err(e.to_string()))?;
            let generator =
                MultiIndex::parse_label(label, n_qubits).map_err(|e| parse_err(e.to_string()))?;
            layer.push(Gate::new(generator, angle));
        }
        if !layer.is_empty() {
            circuit.push_layer(layer)?;
        }
        if circuit.is_empty() {
            return Err(CircuitError::Empty);
        }
        Ok(circuit)
    }

    /// Writes the circuit file format, one layer per blank-separated block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.label.is_empty() {
            let _ = writeln!(out, "# {}", self.label);
        }
        let _ = writeln!(out, "# qubits {}", self.n_qubits);
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for gate in layer {
                let _ = writeln!(out, "{} {:e}", gate.generator.to_sparse_label(), gate.angle);
            }
        }
        out
    }
}
