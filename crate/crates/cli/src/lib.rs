//! Orchestration behind the `pauliprop` binary.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use pauliprop_core::artifacts::{read_checkpoint, write_checkpoint, write_run_info, LedgerWriter};
use pauliprop_core::models::build_kicked_ising;
use pauliprop_core::oracle::{self, DenseState, DENSE_CONJUGATE_LIMIT};
use pauliprop_core::{
    Circuit, Engine, EngineConfig, EngineError, Execution, Geometry, LayerRecord, MultiIndex,
    OperatorError, PartitionSpec, Readout, SparseOperator, TruncationPolicy,
};
use thiserror::Error;

pub use config::{Cli, ReadoutKind, RunConfig, Source};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("resource exhaustion: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Resource(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            EngineError::ResourceExhausted { .. } | EngineError::Allocation { .. } => {
                CliError::Resource(e.to_string())
            }
            EngineError::Width { .. } | EngineError::Pauli(_) | EngineError::EmptyCircuit => {
                CliError::Config(e.to_string())
            }
            EngineError::Operator(OperatorError::Io(io)) => CliError::Io(io),
            other => CliError::Other(other.to_string()),
        }
    }
}

/// The circuit, the evolved string and the readout a config describes.
pub struct Problem {
    pub circuit: Circuit,
    pub observable: MultiIndex,
    pub readout: Readout,
}

fn circuit_width(text: &str) -> Option<usize> {
    text.lines().find_map(|l| {
        let rest = l.trim().strip_prefix('#')?.trim();
        rest.strip_prefix("qubits")?.trim().parse().ok()
    })
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let circuit = match &cfg.source {
        Source::Eagle => build_kicked_ising(&Geometry::heavy_hex_127(), cfg.theta_x, cfg.theta_zz, cfg.layers),
        Source::KickedIsing(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read geometry {}: {e}", path.display())))?;
            let geometry = Geometry::parse(&text)
                .map_err(|e| CliError::Config(format!("geometry {}: {e}", path.display())))?;
            build_kicked_ising(&geometry, cfg.theta_x, cfg.theta_zz, cfg.layers)
        }
        Source::CircuitFile(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read circuit {}: {e}", path.display())))?;
            let n = cfg.qubits.or_else(|| circuit_width(&text)).ok_or_else(|| {
                CliError::Config("circuit file needs `# qubits N` or the `qubits` setting".into())
            })?;
            let period = Circuit::parse(&text, n)
                .map_err(|e| CliError::Config(format!("circuit {}: {e}", path.display())))?;
            let mut layers = Vec::new();
            for _ in 0..cfg.layers {
                layers.extend(period.layers().iter().cloned());
            }
            Circuit::from_layers(n, layers)
        }
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let observable = cfg.observable_index(circuit.n_qubits())?;
    let readout = match cfg.readout {
        ReadoutKind::ZeroState => Readout::ZeroState,
        ReadoutKind::Coefficient => Readout::Coefficient(observable),
    };
    Ok(Problem {
        circuit,
        observable,
        readout,
    })
}

fn engine_config(cfg: &RunConfig, workers: usize) -> Result<EngineConfig, CliError> {
    let block = cfg
        .block_size
        .unwrap_or_else(|| pauliprop_core::partition::default_block_bits(workers));
    let spec = PartitionSpec::with_params(workers, block, cfg.perturbation)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let policy = TruncationPolicy::new(cfg.epsilon0, cfg.cadence)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut ec = EngineConfig::new(spec, policy);
    ec.max_terms = cfg.max_terms;
    if cfg.sequential {
        ec.execution = Execution::Sequential;
    }
    Ok(ec)
}

fn initial_operator(problem: &Problem) -> SparseOperator {
    let mut op = SparseOperator::new(problem.circuit.n_qubits());
    op.upsert(problem.observable, 1.0);
    op
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<LayerRecord>,
}

/// Executes a run and writes `ledger.csv`, `run_info.txt` and the optional
/// histograms and checkpoints into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let problem = build_problem(cfg)?;
    let config = engine_config(cfg, cfg.workers)?;
    let (mut engine, circuit) = match &cfg.resume {
        None => (Engine::new(&initial_operator(&problem), config.clone()), problem.circuit.clone()),
        Some(dir) => {
            let cp = read_checkpoint(dir)
                .map_err(|e| CliError::Config(format!("checkpoint {}: {e}", dir.display())))?;
            if cp.spec != config.spec || cp.n_qubits != problem.circuit.n_qubits() {
                return Err(CliError::Config("checkpoint does not match the configured partition or width".into()));
            }
            let total = problem.circuit.layers().len();
            if cp.layers_done >= total {
                return Err(CliError::Config(format!(
                    "checkpoint already covers {} of {total} layers",
                    cp.layers_done
                )));
            }
            // Layers are consumed from the back, so the remainder is the front.
            let rest = Circuit::from_layers(
                problem.circuit.n_qubits(),
                problem.circuit.layers()[..total - cp.layers_done].to_vec(),
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            (Engine::from_shards(cp.shards, config.clone(), cp.layers_done)?, rest)
        }
    };

    fs::create_dir_all(&cfg.out)?;
    let source = match &cfg.source {
        Source::Eagle => pauliprop_core::models::EAGLE_PRESET.to_string(),
        Source::KickedIsing(p) | Source::CircuitFile(p) => p.display().to_string(),
    };
    write_run_info(
        &cfg.out.join("run_info.txt"),
        &config.spec,
        &config.policy,
        &[
            ("source", source),
            ("qubits", problem.circuit.n_qubits().to_string()),
            ("layers", problem.circuit.layers().len().to_string()),
            ("theta_x", cfg.theta_x.to_string()),
            ("theta_zz", cfg.theta_zz.to_string()),
            ("observable", problem.observable.to_sparse_label()),
            ("readout", format!("{:?}", cfg.readout)),
        ],
    )?;
    let mut ledger = LedgerWriter::create(&cfg.out.join("ledger.csv"), 1)?;
    let out = cfg.out.clone();
    let bins = cfg.histogram_bins;
    let every = cfg.checkpoint_every;
    let io = |e: std::io::Error| EngineError::Operator(OperatorError::Io(e));
    let result = engine.run_with(&circuit, &[problem.readout], |record, engine| {
        ledger.append(record).map_err(io)?;
        info!(
            "t={} observable={} terms={} removed={}",
            record.t, record.observables[0], record.term_count, record.removed
        );
        if let Some(b) = bins {
            let h = engine.histogram(b)?;
            let file = File::create(out.join(format!("histogram_t{}.tsv", record.t))).map_err(io)?;
            h.write_tsv(BufWriter::new(file)).map_err(io)?;
        }
        if let Some(k) = every {
            if record.t % k == 0 {
                write_checkpoint(&out.join(format!("checkpoint_t{}", record.t)), engine).map_err(io)?;
            }
        }
        Ok(())
    });
    let ledger_out = result?;
    Ok(RunSummary {
        records: ledger_out.records,
    })
}

/// One row of the oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub t: usize,
    pub engine: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    /// Largest coefficient deviation from dense conjugation, when the width allows it.
    pub coefficient_deviation: Option<f64>,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        let rows = self.rows.iter().map(|r| (r.engine - r.reference).abs());
        rows.chain(self.coefficient_deviation).fold(0.0, f64::max)
    }
}

/// Runs the engine and the dense references side by side. After `t` layers
/// the engine holds `V_t^† O V_t` for the last `t` layers `V_t`, so the state
/// reference is evolved through those same layers.
pub fn oracle_check(cfg: &RunConfig) -> Result<OracleReport, CliError> {
    let problem = build_problem(cfg)?;
    let n = problem.circuit.n_qubits();
    if n > oracle::STATE_VECTOR_LIMIT {
        return Err(CliError::Config(format!(
            "oracle check supports at most {} qubits, circuit has {n}",
            oracle::STATE_VECTOR_LIMIT
        )));
    }
    let mut engine = Engine::new(&initial_operator(&problem), engine_config(cfg, cfg.workers)?);
    let ledger = engine.run(&problem.circuit, &[problem.readout])?;
    let layers = problem.circuit.layers();
    let mut rows = Vec::new();
    for record in &ledger.records {
        let tail = &layers[layers.len() - record.t..];
        let mut state = DenseState::zero(n).map_err(|e| CliError::Other(e.to_string()))?;
        for gate in tail.iter().flatten() {
            state.apply_gate(gate).map_err(|e| CliError::Other(e.to_string()))?;
        }
        let reference = match problem.readout {
            Readout::ZeroState => state.expectation(&problem.observable),
            Readout::Coefficient(_) => {
                // Coefficient of O itself in V^† O V: Tr(O V^† O V) / 2^n, which
                // the state reference cannot give; use the operator reference.
                continue;
            }
        }
        .map_err(|e| CliError::Other(e.to_string()))?;
        rows.push(OracleRow {
            t: record.t,
            engine: record.observables[0],
            reference,
        });
    }
    let coefficient_deviation = if n <= DENSE_CONJUGATE_LIMIT {
        let o = oracle::dense_operator(&initial_operator(&problem)).map_err(|e| CliError::Other(e.to_string()))?;
        let evolved = oracle::conjugate_circuit(&o, &problem.circuit).map_err(|e| CliError::Other(e.to_string()))?;
        let merged = engine.merged();
        let reference: std::collections::HashMap<MultiIndex, f64> =
            oracle::pauli_decompose(&evolved, n, 0.0).into_iter().collect();
        let mut worst = 0.0f64;
        for (index, c) in &reference {
            worst = worst.max((merged.coefficient(index) - c).abs());
        }
        for (index, c) in merged.iter() {
            if !reference.contains_key(index) {
                worst = worst.max(c.abs());
            }
        }
        Some(worst)
    } else {
        None
    };
    Ok(OracleReport {
        rows,
        coefficient_deviation,
    })
}

/// One row of the scaling report.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub workers: usize,
    pub t: usize,
    pub term_count: usize,
    pub wall_ms_per_gate: f64,
    pub compute_ms_per_gate: f64,
    pub exchange_ms_per_gate: f64,
}

pub const BENCH_HEADER: &str =
    "workers,t,term_count,wall_ms_per_gate,compute_ms_per_gate,exchange_ms_per_gate";

/// Repeats the run for every worker count and records per-layer timings.
pub fn bench(cfg: &RunConfig, sweep: &[usize]) -> Result<Vec<BenchRow>, CliError> {
    let problem = build_problem(cfg)?;
    let mut rows = Vec::new();
    for &workers in sweep {
        let mut engine = Engine::new(&initial_operator(&problem), engine_config(cfg, workers)?);
        let ledger = engine.run(&problem.circuit, &[problem.readout])?;
        rows.extend(ledger.records.iter().map(|r| BenchRow {
            workers,
            t: r.t,
            term_count: r.term_count,
            wall_ms_per_gate: r.wall_ms_per_gate,
            compute_ms_per_gate: r.compute_ms_per_gate,
            exchange_ms_per_gate: r.exchange_ms_per_gate,
        }));
    }
    Ok(rows)
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.workers, r.t, r.term_count, r.wall_ms_per_gate, r.compute_ms_per_gate, r.exchange_ms_per_gate
        )?;
    }
    out.flush()
}
