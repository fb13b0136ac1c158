//! Heisenberg-picture Pauli propagation on a partitioned sparse operator.
//!
//! Observables are stored as sparse sums of Pauli strings, each string
//! bit-packed into a [`MultiIndex`]. Rotations `exp(-i theta/2 sigma_J)` are
//! applied by conjugation; strings that anticommute with the generator branch
//! into two, the rest are untouched. The operator is split across logical
//! workers by a block-sum hash of the index so that one gate only ever sends
//! updates to a handful of workers.

pub mod artifacts;
pub mod circuit;
pub mod engine;
pub mod error;
pub mod models;
pub mod operator;
pub mod oracle;
pub mod partition;
pub mod pauli;

pub use circuit::{parse_angle, Circuit, Gate};
pub use engine::{
    run_circuit, Engine, EngineConfig, Execution, GateStats, LayerRecord, Readout, RunLedger,
    Transport, UpdateBatch,
};
pub use error::{
    CircuitError, EngineError, GeometryError, OperatorError, OracleError, PartitionError, PauliError,
};
pub use models::Geometry;
pub use operator::{Cadence, DensityHistogram, SparseOperator, TruncationPolicy};
pub use partition::{uniformity_ratio, PartitionSpec};
pub use pauli::{MultiIndex, Pauli, PhaseExponent, PhaseKernel, MAX_QUBITS};
