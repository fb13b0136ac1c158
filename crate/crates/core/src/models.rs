//! Benchmark circuits: coupling geometries and the kicked Ising model.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use crate::circuit::{Circuit, Gate};
use crate::error::{CircuitError, GeometryError};
use crate::pauli::{MultiIndex, Pauli, MAX_QUBITS};

/// Edge list of the 127-qubit heavy-hexagon processor with a 3-coloring.
pub const HEAVY_HEX_127: &str = include_str!("../data/heavy_hex_127.txt");

/// CLI preset name of the 127-qubit kicked Ising benchmark.
pub const EAGLE_PRESET: &str = "kicked-ising-eagle127";
/// Site of the magnetization observable in the 127-qubit benchmark.
pub const EAGLE_OBSERVABLE_SITE: usize = 62;
/// Default two-qubit angle.
pub const DEFAULT_THETA_ZZ: f64 = -PI / 2.0;

/// Qubit count, edges and an optional edge coloring.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    n_qubits: usize,
    edges: Vec<(usize, usize)>,
    /// Edge indices per color, colors in order of first appearance.
    colors: Option<Vec<Vec<usize>>>,
}

impl Geometry {
    pub fn new(
        n_qubits: usize,
        edges: Vec<(usize, usize)>,
        colors: Option<Vec<Vec<usize>>>,
    ) -> Result<Self, GeometryError> {
        if n_qubits > MAX_QUBITS {
            return Err(GeometryError::OutOfRange {
                qubit: n_qubits - 1,
                qubits: MAX_QUBITS,
            });
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &edges {
            if a == b {
                return Err(GeometryError::SelfLoop(a));
            }
            for q in [a, b] {
                if q >= n_qubits {
                    return Err(GeometryError::OutOfRange {
                        qubit: q,
                        qubits: n_qubits,
                    });
                }
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(GeometryError::DuplicateEdge(a, b));
            }
        }
        if let Some(groups) = &colors {
            let mut covered = vec![false; edges.len()];
            for (color, group) in groups.iter().enumerate() {
                let mut used = BTreeSet::new();
                for &e in group {
                    if e >= edges.len() || covered[e] {
                        return Err(GeometryError::PartialColoring);
                    }
                    covered[e] = true;
                    let (a, b) = edges[e];
                    for q in [a, b] {
                        if !used.insert(q) {
                            return Err(GeometryError::ColorConflict { color, qubit: q });
                        }
                    }
                }
            }
            if covered.iter().any(|c| !c) {
                return Err(GeometryError::PartialColoring);
            }
        }
        Ok(Geometry {
            n_qubits,
            edges,
            colors,
        })
    }

    /// Open chain `0 - 1 - ... - (n-1)`, colored by edge parity.
    pub fn chain(n_qubits: usize) -> Self {
        let edges: Vec<_> = (1..n_qubits).map(|i| (i - 1, i)).collect();
        let colors = if edges.is_empty() {
            None
        } else {
            let even = (0..edges.len()).step_by(2).collect();
            let odd: Vec<_> = (1..edges.len()).step_by(2).collect();
            Some(if odd.is_empty() { vec![even] } else { vec![even, odd] })
        };
        Geometry::new(n_qubits, edges, colors).expect("chain is valid")
    }

    /// The bundled 127-qubit heavy-hexagon geometry.
    pub fn heavy_hex_127() -> Self {
        Geometry::parse(HEAVY_HEX_127).expect("bundled geometry is valid")
    }

    /// Parses `i j [color]` lines; `#` starts a comment. A line `qubits N`
    /// fixes the qubit count, otherwise it is one more than the largest index.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut edges = Vec::new();
        let mut labels: Vec<Option<String>> = Vec::new();
        let mut declared = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| GeometryError::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "qubits" {
                let n = fields
                    .get(1)
                    .and_then(|f| f.parse::<usize>().ok())
                    .filter(|_| fields.len() == 2)
                    .ok_or_else(|| err(format!("expected `qubits N`, got {line:?}")))?;
                declared = Some(n);
                continue;
            }
            if !(2..=3).contains(&fields.len()) {
                return Err(err(format!("expected `i j [color]`, got {line:?}")));
            }
            let q = |f: &str| {
                f.parse::<usize>()
                    .map_err(|_| err(format!("bad qubit index {f:?}")))
            };
            edges.push((q(fields[0])?, q(fields[1])?));
            labels.push(fields.get(2).map(|c| c.to_string()));
        }
        let n_qubits = match declared {
            Some(n) => n,
            None => edges
                .iter()
                .map(|&(a, b)| a.max(b) + 1)
                .max()
                .ok_or(GeometryError::Empty)?,
        };
        let colored = labels.iter().filter(|l| l.is_some()).count();
        let colors = if colored == 0 {
            None
        } else if colored != labels.len() {
            return Err(GeometryError::PartialColoring);
        } else {
            let mut order: Vec<String> = Vec::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for (e, label) in labels.iter().enumerate() {
                let label = label.as_ref().unwrap();
                let slot = match order.iter().position(|o| o == label) {
                    Some(p) => p,
                    None => {
                        order.push(label.clone());
                        groups.push(Vec::new());
                        order.len() - 1
                    }
                };
                groups[slot].push(e);
            }
            Some(groups)
        };
        Geometry::new(n_qubits, edges, colors)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn colors(&self) -> Option<&[Vec<usize>]> {
        self.colors.as_deref()
    }

    pub fn color_count(&self) -> usize {
        self.colors.as_ref().map_or(0, Vec::len)
    }

    /// Edges in gate order: by color when colored, file order otherwise.
    pub fn ordered_edges(&self) -> Vec<(usize, usize)> {
        match &self.colors {
            Some(groups) => groups.iter().flatten().map(|&e| self.edges[e]).collect(),
            None => self.edges.clone(),
        }
    }

    pub fn neighbors(&self, q: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match (a == q, b == q) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    /// Graph distance from `source` to every qubit (`None` if unreachable).
    pub fn distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut adjacency = vec![Vec::new(); self.n_qubits];
        for &(a, b) in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut dist = vec![None; self.n_qubits];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &u in &adjacency[v] {
                if dist[u].is_none() {
                    dist[u] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Qubits within graph distance `radius` of `source`.
    pub fn ball(&self, source: usize, radius: usize) -> Vec<usize> {
        self.distances(source)
            .into_iter()
            .enumerate()
            .filter(|(_, d)| d.is_some_and(|d| d <= radius))
            .map(|(q, _)| q)
            .collect()
    }
}

/// One Trotter step `U = U_zz U_x`: all X rotations (ascending qubit), then
/// the ZZ rotations color by color.
pub fn kicked_ising_layer(geometry: &Geometry, theta_x: f64, theta_zz: f64) -> Vec<Gate> {
    let mut gates: Vec<Gate> = (0..geometry.n_qubits())
        .map(|q| Gate::new(MultiIndex::single(q, Pauli::X), theta_x))
        .collect();
    gates.extend(geometry.ordered_edges().into_iter().map(|(a, b)| {
        Gate::new(
            MultiIndex::from_sites([(a, Pauli::Z), (b, Pauli::Z)]),
            theta_zz,
        )
    }));
    gates
}

/// `layers` repetitions of [`kicked_ising_layer`].
pub fn build_kicked_ising(
    geometry: &Geometry,
    theta_x: f64,
    theta_zz: f64,
    layers: usize,
) -> Result<Circuit, CircuitError> {
    if layers == 0 {
        return Err(CircuitError::Empty);
    }
    let layer = kicked_ising_layer(geometry, theta_x, theta_zz);
    let mut circuit = Circuit::from_layers(geometry.n_qubits(), vec![layer; layers])?;
    circuit.label = format!(
        "kicked Ising, theta_x = {theta_x}, theta_zz = {theta_zz}, {layers} layers"
    );
    Ok(circuit)
}

/// The 127-qubit heavy-hexagon kicked Ising benchmark.
pub fn eagle_kicked_ising(theta_x: f64, layers: usize) -> Result<Circuit, CircuitError> {
    build_kicked_ising(&Geometry::heavy_hex_127(), theta_x, DEFAULT_THETA_ZZ, layers)
}

/// `sigma_z` on the observed site of the 127-qubit benchmark.
pub fn eagle_observable() -> MultiIndex {
    MultiIndex::single(EAGLE_OBSERVABLE_SITE, Pauli::Z)
}
