use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PauliError {
    #[error("invalid Pauli character {0:?}")]
    InvalidChar(char),
    #[error("invalid site token {0:?}")]
    InvalidSite(String),
    #[error("site {site} out of range for {qubits} qubits")]
    SiteOutOfRange { site: usize, qubits: usize },
    #[error("site {0} given more than once")]
    DuplicateSite(usize),
    #[error("dense label has {found} characters, expected {expected}")]
    LabelLength { expected: usize, found: usize },
    #[error("empty Pauli label")]
    EmptyLabel,
    #[error("{0} qubits exceeds the supported maximum")]
    TooManyQubits(usize),
    #[error("index has support on site {site}, outside width {qubits}")]
    WidthMismatch { site: usize, qubits: usize },
    #[error("invalid hex index {0:?}")]
    InvalidHex(String),
}

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("term {0} not present")]
    MissingTerm(String),
    #[error("global maximum must be finite and non-negative, got {0}")]
    InvalidGlobalMax(f64),
    #[error("truncation threshold must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("block size must be in 1..=64 bits, got {0}")]
    BlockSize(u32),
    #[error("perturbation strength must be at least 1")]
    Perturbation,
}

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid angle {0:?}")]
    Angle(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("circuit has no gates")]
    Empty,
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("self-loop on qubit {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("qubit {qubit} out of range for {qubits} qubits")]
    OutOfRange { qubit: usize, qubits: usize },
    #[error("color {color} has two edges sharing qubit {qubit}")]
    ColorConflict { color: usize, qubit: usize },
    #[error("either every edge or no edge must carry a color")]
    PartialColoring,
    #[error("geometry has no edges and no qubit count")]
    Empty,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{qubits} qubits exceeds the dense limit of {limit}")]
    TooLarge { qubits: usize, limit: usize },
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("record for {index} sent to worker {worker}, owner is {owner}")]
    Ownership {
        index: String,
        worker: usize,
        owner: usize,
    },
    #[error("non-finite coefficient at layer {layer}, gate {gate} with {terms} terms")]
    NonFinite {
        layer: usize,
        gate: usize,
        terms: usize,
    },
    #[error("term budget exhausted at layer {layer}, gate {gate}: {terms} terms (limit {limit})")]
    ResourceExhausted {
        layer: usize,
        gate: usize,
        terms: usize,
        limit: usize,
    },
    #[error("allocation failed at layer {layer}, gate {gate} with {terms} terms")]
    Allocation {
        layer: usize,
        gate: usize,
        terms: usize,
    },
    #[error("delivery to worker {0} failed")]
    Delivery(usize),
    #[error("operator width {operator} does not match circuit width {circuit}")]
    Width { operator: usize, circuit: usize },
    #[error("circuit has no gates")]
    EmptyCircuit,
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}
