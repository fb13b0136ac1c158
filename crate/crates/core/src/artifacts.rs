//! Run artifacts: the ledger CSV, run metadata and worker checkpoints.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::engine::{Engine, LayerRecord};
use crate::error::OperatorError;
use crate::operator::{Cadence, SparseOperator, TruncationPolicy};
use crate::partition::{PartitionSpec, PERTURBATION_HASH};

/// Version tag of the ledger layout. Version 1 reads observables after the
/// truncation pass of the layer's last gate.
pub const LEDGER_SCHEMA: &str = "1-truncate-then-read";

pub const LEDGER_COLUMNS: [&str; 8] = [
    "t",
    "observable",
    "term_count",
    "global_max",
    "removed",
    "wall_ms_per_gate",
    "batches_sent",
    "records_sent",
];

const EXTRA_COLUMNS: [&str; 5] = [
    "compute_ms_per_gate",
    "exchange_ms_per_gate",
    "max_destinations",
    "uniformity_ratio",
    "norm_sq",
];

/// Append-only ledger; each row is flushed as soon as it is written.
pub struct LedgerWriter<W: Write> {
    out: W,
}

impl LedgerWriter<BufWriter<File>> {
    pub fn create(path: &Path, observables: usize) -> io::Result<Self> {
        LedgerWriter::new(BufWriter::new(File::create(path)?), observables)
    }
}

impl<W: Write> LedgerWriter<W> {
    /// Writes the header. Readouts after the first get `observable_<k>` columns.
    pub fn new(mut out: W, observables: usize) -> io::Result<Self> {
        let mut header: Vec<String> = LEDGER_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(EXTRA_COLUMNS.iter().map(|s| s.to_string()));
        header.extend((2..=observables).map(|k| format!("observable_{k}")));
        writeln!(out, "{}", header.join(","))?;
        out.flush()?;
        Ok(LedgerWriter { out })
    }

    pub fn append(&mut self, record: &LayerRecord) -> io::Result<()> {
        let first = record.observables.first().copied().unwrap_or(f64::NAN);
        write!(
            self.out,
            "{},{},{},{},{},{:.6},{},{},{:.6},{:.6},{},{},{}",
            record.t,
            first,
            record.term_count,
            record.global_max,
            record.removed,
            record.wall_ms_per_gate,
            record.batches_sent,
            record.records_sent,
            record.compute_ms_per_gate,
            record.exchange_ms_per_gate,
            record.max_destinations,
            record.uniformity_ratio,
            record.norm_sq,
        )?;
        for v in record.observables.iter().skip(1) {
            write!(self.out, ",{v}")?;
        }
        writeln!(self.out)?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// `key = value` metadata written next to the ledger.
pub fn write_run_info(
    path: &Path,
    spec: &PartitionSpec,
    policy: &TruncationPolicy,
    extra: &[(&str, String)],
) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "ledger_schema = {LEDGER_SCHEMA}")?;
    writeln!(out, "perturbation_hash = {PERTURBATION_HASH}")?;
    writeln!(out, "workers = {}", spec.workers())?;
    writeln!(out, "block_size = {}", spec.block_bits())?;
    writeln!(out, "perturbation = {}", spec.perturbation())?;
    writeln!(out, "epsilon0 = {}", policy.epsilon0)?;
    writeln!(out, "cadence = {}", policy.cadence)?;
    for (k, v) in extra {
        writeln!(out, "{k} = {v}")?;
    }
    out.flush()
}

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| (i + 1, format!("expected `key = value`, got {line:?}")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err((i + 1, "empty key".to_string()));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Per-worker operator dumps plus a manifest describing how to reload them.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub n_qubits: usize,
    pub spec: PartitionSpec,
    pub layers_done: usize,
    pub shards: Vec<SparseOperator>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

fn shard_file(worker: usize) -> String {
    format!("worker_{worker:05}.dump")
}

/// Writes `dir/manifest.txt` and one dump per worker; returns the manifest path.
pub fn write_checkpoint(dir: &Path, engine: &Engine) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let spec = engine.config().spec;
    for (m, shard) in engine.shards().iter().enumerate() {
        let file = BufWriter::new(File::create(dir.join(shard_file(m)))?);
        shard.write_dump(file)?;
    }
    let manifest = dir.join(MANIFEST_NAME);
    let mut out = BufWriter::new(File::create(&manifest)?);
    writeln!(out, "n_qubits = {}", engine.n_qubits())?;
    writeln!(out, "workers = {}", spec.workers())?;
    writeln!(out, "block_size = {}", spec.block_bits())?;
    writeln!(out, "perturbation = {}", spec.perturbation())?;
    writeln!(out, "perturbation_hash = {PERTURBATION_HASH}")?;
    writeln!(out, "layers_done = {}", engine.layers_done())?;
    writeln!(out, "term_count = {}", engine.term_count())?;
    for m in 0..spec.workers() {
        writeln!(out, "shard = {}", shard_file(m))?;
    }
    out.flush()?;
    Ok(manifest)
}

pub fn read_checkpoint(dir: &Path) -> Result<Checkpoint, OperatorError> {
    let bad = |message: String| OperatorError::Parse { line: 0, message };
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let pairs = parse_key_values(&text).map_err(|(line, message)| OperatorError::Parse { line, message })?;
    let get = |key: &str| -> Result<u64, OperatorError> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| bad(format!("manifest lacks `{key}`")))?
            .1
            .parse()
            .map_err(|_| bad(format!("manifest `{key}` is not an integer")))
    };
    let n_qubits = get("n_qubits")? as usize;
    let spec = PartitionSpec::with_params(
        get("workers")? as usize,
        get("block_size")? as u32,
        get("perturbation")?,
    )
    .map_err(|e| bad(e.to_string()))?;
    let layers_done = get("layers_done")? as usize;
    let files: Vec<&String> = pairs.iter().filter(|(k, _)| k == "shard").map(|(_, v)| v).collect();
    if files.len() != spec.workers() {
        return Err(bad(format!(
            "manifest lists {} shards for {} workers",
            files.len(),
            spec.workers()
        )));
    }
    let mut shards = Vec::with_capacity(files.len());
    for f in files {
        let reader = BufReader::new(File::open(dir.join(f))?);
        shards.push(SparseOperator::read_dump(reader, n_qubits)?);
    }
    Ok(Checkpoint {
        n_qubits,
        spec,
        layers_done,
        shards,
    })
}

impl std::fmt::Display for Cadence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cadence::PerGate => "per-gate",
            Cadence::PerLayer => "per-layer",
        })
    }
}
