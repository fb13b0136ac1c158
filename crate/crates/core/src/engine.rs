//! Partitioned gate application.
//!
//! Every logical worker owns one [`SparseOperator`] shard. A gate runs in
//! three phases separated by barriers:
//!
//! 1. each worker scans its shard, scales anticommuting terms by `cos(theta)`
//!    and emits `(I ^ J, ±sin(theta) c_I)` records, bucketed by the owner of
//!    `I ^ J` (its own id included);
//! 2. the [`Transport`] delivers every nonempty batch to its destination,
//!    ordered by sender;
//! 3. each worker merges its inbox, then the global maximum is reduced and
//!    every shard is truncated against it.
//!
//! Circuits are listed in circuit-time order; the operator is evolved in the
//! Heisenberg picture, so gates are applied last-to-first.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::circuit::{Circuit, Gate};
use crate::error::EngineError;
use crate::operator::{Cadence, DensityHistogram, SparseOperator, TruncationPolicy};
use crate::partition::{uniformity_ratio, PartitionSpec};
use crate::pauli::{MultiIndex, PhaseKernel};

/// One update `(target index, increment)`.
pub type Record = (MultiIndex, f64);

/// Records addressed from `source` to `destination`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateBatch {
    pub source: usize,
    pub destination: usize,
    pub records: Vec<Record>,
}

/// Scales the anticommuting terms of `shard` in place and returns the
/// nonempty update batches, in ascending destination order.
///
/// The `sin` increment uses the coefficient as it was before scaling.
pub fn apply_gate_local(
    shard: &mut SparseOperator,
    gate: &Gate,
    spec: &PartitionSpec,
    source: usize,
) -> Vec<UpdateBatch> {
    let kernel = PhaseKernel::new(&gate.generator);
    generate_updates(shard, gate, &kernel, spec, source).0
}

/// What the generation scan learned about one shard.
#[derive(Clone, Debug)]
struct ScanSummary {
    /// Extremes of `|c|` over the terms that commute with the generator.
    commuting_max: f64,
    commuting_min: f64,
    non_finite: bool,
    /// Positions of the anticommuting terms, ascending.
    touched: Vec<usize>,
    /// Shard length before the apply phase; new terms land at and above it.
    len_before: usize,
}

fn generate_updates(
    shard: &mut SparseOperator,
    gate: &Gate,
    kernel: &PhaseKernel,
    spec: &PartitionSpec,
    source: usize,
) -> (Vec<UpdateBatch>, ScanSummary) {
    let (cos, sin) = gate.cos_sin();
    let generator = gate.generator;
    let single = spec.workers() == 1;
    let mut buckets = vec![Vec::new(); spec.workers()];
    let mut summary = ScanSummary {
        commuting_max: 0.0,
        commuting_min: f64::INFINITY,
        non_finite: false,
        touched: Vec::new(),
        len_before: shard.len(),
    };
    let (mut cmax, mut cmin, mut non_finite) = (0.0f64, f64::INFINITY, false);
    for (pos, (index, coeff)) in shard.iter_mut().enumerate() {
        let phase = kernel.phase(index);
        if !phase.is_odd() {
            let a = coeff.abs();
            // NaN fails `a < INFINITY`, so comparisons alone catch it.
            non_finite |= !(a < f64::INFINITY);
            cmax = if a > cmax { a } else { cmax };
            cmin = if a < cmin { a } else { cmin };
            continue;
        }
        summary.touched.push(pos);
        let pre = *coeff;
        *coeff = cos * pre;
        // sigma_J sigma_I = i^B sigma_{I^J} with B = B(I^J, J) = -B(I, J),
        // which fixes the sign of the generated string.
        let delta = if phase.value() == 1 { sin * pre } else { -sin * pre };
        let target = *index ^ generator;
        let owner = if single { 0 } else { spec.owner(&target) };
        buckets[owner].push((target, delta));
    }
    summary.commuting_max = cmax;
    summary.commuting_min = cmin;
    summary.non_finite = non_finite;
    let batches = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, records)| !records.is_empty())
        .map(|(destination, records)| UpdateBatch {
            source,
            destination,
            records,
        })
        .collect();
    (batches, summary)
}

/// Largest `|c|` over the terms a gate changed or created, or `None` if one
/// of them is not finite.
fn touched_max(shard: &SparseOperator, summary: &ScanSummary) -> Option<f64> {
    let mut max = 0.0f64;
    let mut finite = true;
    let fresh = summary.len_before..shard.len();
    for pos in summary.touched.iter().copied().chain(fresh) {
        let c = shard.value_at(pos);
        finite &= c.is_finite();
        max = max.max(c.abs());
    }
    finite.then_some(max)
}

/// Truncates using the scan summary: when every commuting term is above the
/// threshold only the changed and created terms need to be examined.
fn truncate_touched(
    shard: &mut SparseOperator,
    summary: &ScanSummary,
    global_max: f64,
    epsilon0: f64,
) -> Result<usize, EngineError> {
    let threshold = epsilon0 * global_max;
    if summary.commuting_min <= threshold || summary.commuting_min == 0.0 {
        return Ok(shard.truncate(global_max, epsilon0)?);
    }
    let fresh = summary.len_before..shard.len();
    let doomed: Vec<usize> = summary
        .touched
        .iter()
        .copied()
        .chain(fresh)
        .filter(|&pos| {
            let c = shard.value_at(pos);
            c == 0.0 || c.abs() <= threshold
        })
        .collect();
    shard.remove_positions(&doomed);
    Ok(doomed.len())
}

/// Merges an inbox after checking that every record belongs to `worker`.
pub fn apply_updates(
    shard: &mut SparseOperator,
    inbox: &[UpdateBatch],
    spec: &PartitionSpec,
    worker: usize,
) -> Result<(), EngineError> {
    check_ownership(inbox, spec, worker)?;
    merge_inbox(shard, inbox);
    Ok(())
}

fn check_ownership(inbox: &[UpdateBatch], spec: &PartitionSpec, worker: usize) -> Result<(), EngineError> {
    for batch in inbox {
        for (index, _) in &batch.records {
            let owner = spec.owner(index);
            if owner != worker {
                return Err(EngineError::Ownership {
                    index: index.to_sparse_label(),
                    worker,
                    owner,
                });
            }
        }
    }
    Ok(())
}

fn merge_inbox(shard: &mut SparseOperator, inbox: &[UpdateBatch]) {
    for batch in inbox {
        for &(index, delta) in &batch.records {
            shard.upsert(index, delta);
        }
    }
}

/// Merges an inbox, dropping records for absent strings that the following
/// truncation would remove anyway. Returns the number dropped.
fn merge_inbox_above(shard: &mut SparseOperator, inbox: &[UpdateBatch], floor: f64) -> usize {
    let mut skipped = 0;
    for batch in inbox {
        for &(index, delta) in &batch.records {
            skipped += shard.upsert_above(index, delta, floor) as usize;
        }
    }
    skipped
}

/// All-to-all delivery of update batches between logical workers.
pub trait Transport: Send + Sync {
    /// Returns, for every worker, the batches addressed to it sorted by sender.
    /// Empty batches are dropped.
    fn exchange(
        &self,
        outgoing: Vec<UpdateBatch>,
        workers: usize,
    ) -> Result<Vec<Vec<UpdateBatch>>, EngineError>;

    fn name(&self) -> &'static str;
}

/// Hands batches over within the process; the record vectors are moved, not copied.
#[derive(Clone, Copy, Debug, Default)]
pub struct InProcessTransport;

impl Transport for InProcessTransport {
    fn exchange(
        &self,
        outgoing: Vec<UpdateBatch>,
        workers: usize,
    ) -> Result<Vec<Vec<UpdateBatch>>, EngineError> {
        let mut inboxes: Vec<Vec<UpdateBatch>> = (0..workers).map(|_| Vec::new()).collect();
        for batch in outgoing {
            if batch.records.is_empty() {
                continue;
            }
            let slot = inboxes
                .get_mut(batch.destination)
                .ok_or(EngineError::Delivery(batch.destination))?;
            slot.push(batch);
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|b| b.source);
        }
        Ok(inboxes)
    }

    fn name(&self) -> &'static str {
        "in-process"
    }
}

/// How worker phases are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    /// Workers run one after another on the calling thread.
    Sequential,
    /// Workers run on the rayon pool between barriers.
    #[default]
    Threaded,
}

/// What is read out of the evolved operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Readout {
    /// `<0...0| O |0...0>`.
    ZeroState,
    /// Coefficient of one Pauli string.
    Coefficient(MultiIndex),
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub spec: PartitionSpec,
    pub policy: TruncationPolicy,
    pub execution: Execution,
    /// Abort once the operator holds more terms than this.
    pub max_terms: Option<usize>,
    /// Check the owner of every received record.
    pub verify_ownership: bool,
    /// Keep the nonempty destination list of every worker for every gate.
    pub track_destinations: bool,
    /// Evaluate readouts after every gate as well as after every layer.
    pub gate_trace: bool,
}

impl EngineConfig {
    pub fn new(spec: PartitionSpec, policy: TruncationPolicy) -> Self {
        EngineConfig {
            spec,
            policy,
            execution: Execution::default(),
            max_terms: None,
            verify_ownership: cfg!(debug_assertions),
            track_destinations: false,
            gate_trace: false,
        }
    }
}

/// Counters for one gate.
#[derive(Clone, Debug, Default)]
pub struct GateStats {
    pub records_sent: usize,
    pub records_applied: usize,
    pub batches_sent: usize,
    /// Largest number of nonempty destinations of any single worker.
    pub max_destinations: usize,
    /// Per worker, the destinations it sent a nonempty batch to.
    pub destinations: Option<Vec<Vec<usize>>>,
    pub removed: usize,
    /// Global maximum used by this gate's truncation pass, if one ran.
    pub global_max: Option<f64>,
    pub compute: Duration,
    pub exchange: Duration,
}

/// Per-layer summary.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerRecord {
    /// Number of layers processed so far (1-based).
    pub t: usize,
    pub observables: Vec<f64>,
    pub term_count: usize,
    pub global_max: f64,
    pub removed: usize,
    pub wall_ms_per_gate: f64,
    pub compute_ms_per_gate: f64,
    pub exchange_ms_per_gate: f64,
    pub batches_sent: usize,
    pub records_sent: usize,
    pub max_destinations: usize,
    pub uniformity_ratio: f64,
    pub norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateReadout {
    pub t: usize,
    pub gate: usize,
    pub observables: Vec<f64>,
    pub term_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLedger {
    pub records: Vec<LayerRecord>,
    pub gate_trace: Vec<GateReadout>,
}

/// The partitioned operator plus the machinery to evolve it.
pub struct Engine {
    n_qubits: usize,
    config: EngineConfig,
    shards: Vec<SparseOperator>,
    transport: Box<dyn Transport>,
    layers_done: usize,
}

impl Engine {
    /// Distributes `initial` over the workers of `config.spec`.
    pub fn new(initial: &SparseOperator, config: EngineConfig) -> Self {
        let n = initial.n_qubits();
        let mut shards: Vec<SparseOperator> = (0..config.spec.workers())
            .map(|_| SparseOperator::new(n))
            .collect();
        for (index, coeff) in initial.iter() {
            shards[config.spec.owner(index)].upsert(*index, *coeff);
        }
        Engine {
            n_qubits: n,
            config,
            shards,
            transport: Box::new(InProcessTransport),
            layers_done: 0,
        }
    }

    /// Rebuilds an engine from per-worker shards, e.g. a checkpoint.
    pub fn from_shards(
        shards: Vec<SparseOperator>,
        config: EngineConfig,
        layers_done: usize,
    ) -> Result<Self, EngineError> {
        let n = shards.first().map_or(0, SparseOperator::n_qubits);
        if shards.len() != config.spec.workers() {
            return Err(EngineError::Delivery(shards.len()));
        }
        for (worker, shard) in shards.iter().enumerate() {
            if shard.n_qubits() != n {
                return Err(EngineError::Width {
                    operator: shard.n_qubits(),
                    circuit: n,
                });
            }
            for (index, _) in shard.iter() {
                let owner = config.spec.owner(index);
                if owner != worker {
                    return Err(EngineError::Ownership {
                        index: index.to_sparse_label(),
                        worker,
                        owner,
                    });
                }
            }
        }
        Ok(Engine {
            n_qubits: n,
            config,
            shards,
            transport: Box::new(InProcessTransport),
            layers_done,
        })
    }

    pub fn with_transport(mut self, transport: Box<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn shards(&self) -> &[SparseOperator] {
        &self.shards
    }

    pub fn layers_done(&self) -> usize {
        self.layers_done
    }

    pub fn term_count(&self) -> usize {
        self.shards.iter().map(SparseOperator::len).sum()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(SparseOperator::len).collect()
    }

    pub fn global_max(&self) -> f64 {
        self.shards
            .iter()
            .map(SparseOperator::local_max_abs)
            .fold(0.0, f64::max)
    }

    pub fn norm_sq(&self) -> f64 {
        self.shards.iter().map(SparseOperator::norm_sq).sum()
    }

    pub fn expectation_zero_state(&self) -> f64 {
        self.shards
            .iter()
            .map(SparseOperator::expectation_zero_state)
            .sum()
    }

    /// Coefficient of `index`, read from its owner.
    pub fn coefficient(&self, index: &MultiIndex) -> f64 {
        self.shards[self.config.spec.owner(index)].coefficient(index)
    }

    pub fn readout(&self, readout: &Readout) -> f64 {
        match readout {
            Readout::ZeroState => self.expectation_zero_state(),
            Readout::Coefficient(index) => self.coefficient(index),
        }
    }

    /// All shards merged into one operator.
    pub fn merged(&self) -> SparseOperator {
        let mut out = SparseOperator::with_capacity(self.n_qubits, self.term_count());
        for shard in &self.shards {
            for (index, coeff) in shard.iter() {
                out.upsert(*index, *coeff);
            }
        }
        out
    }

    pub fn histogram(&self, bins: usize) -> Result<DensityHistogram, EngineError> {
        Ok(DensityHistogram::build(
            &self.shards,
            self.global_max(),
            self.config.policy.epsilon0,
            bins,
        )?)
    }

    fn for_each_worker<T, F>(&mut self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut SparseOperator) -> T + Sync + Send,
    {
        match self.config.execution {
            Execution::Sequential => self
                .shards
                .iter_mut()
                .enumerate()
                .map(|(m, s)| f(m, s))
                .collect(),
            Execution::Threaded => self
                .shards
                .par_iter_mut()
                .enumerate()
                .map(|(m, s)| f(m, s))
                .collect(),
        }
    }

    fn for_each_worker_with<I, T, F>(&mut self, inputs: Vec<I>, f: F) -> Vec<T>
    where
        I: Send,
        T: Send,
        F: Fn(usize, &mut SparseOperator, I) -> T + Sync + Send,
    {
        debug_assert_eq!(inputs.len(), self.shards.len());
        match self.config.execution {
            Execution::Sequential => self
                .shards
                .iter_mut()
                .zip(inputs)
                .enumerate()
                .map(|(m, (s, i))| f(m, s, i))
                .collect(),
            Execution::Threaded => self
                .shards
                .par_iter_mut()
                .zip(inputs.into_par_iter())
                .enumerate()
                .map(|(m, (s, i))| f(m, s, i))
                .collect(),
        }
    }

    /// Applies one gate (conjugation `U^† O U`, `U = exp(-i theta/2 sigma_J)`)
    /// and, at per-gate cadence, truncates. `gate_pos` only labels errors.
    pub fn apply_gate(&mut self, gate: &Gate, gate_pos: usize) -> Result<GateStats, EngineError> {
        gate.generator.check_width(self.n_qubits)?;
        let spec = self.config.spec;
        let workers = spec.workers();
        let track = self.config.track_destinations;
        let per_gate = self.config.policy.cadence == Cadence::PerGate;
        let epsilon0 = self.config.policy.epsilon0;
        let layer = self.layers_done + 1;
        let kernel = PhaseKernel::new(&gate.generator);
        let mut stats = GateStats::default();

        let start = Instant::now();
        let scanned: Vec<(Vec<UpdateBatch>, ScanSummary)> = self
            .for_each_worker(|m, shard| generate_updates(shard, gate, &kernel, &spec, m));
        let generated = start.elapsed();

        let mut destinations = track.then(|| Vec::with_capacity(workers));
        let mut flat = Vec::new();
        let mut summaries = Vec::with_capacity(workers);
        for (batches, summary) in scanned {
            summaries.push(summary);
            stats.max_destinations = stats.max_destinations.max(batches.len());
            if let Some(d) = destinations.as_mut() {
                d.push(batches.iter().map(|b| b.destination).collect());
            }
            for batch in batches {
                stats.batches_sent += 1;
                stats.records_sent += batch.records.len();
                flat.push(batch);
            }
        }
        stats.destinations = destinations;

        let exchange_start = Instant::now();
        let inboxes = self.transport.exchange(flat, workers)?;
        stats.exchange += exchange_start.elapsed();
        stats.records_applied = inboxes
            .iter()
            .flat_map(|inbox| inbox.iter().map(|b| b.records.len()))
            .sum();

        // Nothing in the gate changes the commuting terms, so their maximum
        // bounds the post-gate global maximum from below. A new string at or
        // under epsilon0 times that bound is certain to be truncated and,
        // with epsilon0 <= 1, cannot be the maximum itself.
        let skip_floor = (per_gate && epsilon0 <= 1.0).then(|| {
            epsilon0
                * summaries
                    .iter()
                    .map(|s| s.commuting_max)
                    .fold(0.0f64, f64::max)
        });

        let apply_start = Instant::now();
        let verify = self.config.verify_ownership;
        let inputs: Vec<_> = inboxes.into_iter().zip(summaries).collect();
        let results = self.for_each_worker_with(inputs, |m, shard, (inbox, summary)| {
            let incoming: usize = inbox.iter().map(|b| b.records.len()).sum();
            if shard.try_reserve(incoming).is_err() {
                return Err(EngineError::Allocation {
                    layer,
                    gate: gate_pos,
                    terms: shard.len(),
                });
            }
            if verify {
                check_ownership(&inbox, &spec, m)?;
            }
            let skipped = match skip_floor {
                Some(floor) => merge_inbox_above(shard, &inbox, floor),
                None => {
                    merge_inbox(shard, &inbox);
                    0
                }
            };
            let local = if per_gate {
                let finite = !summary.non_finite;
                touched_max(shard, &summary)
                    .filter(|_| finite)
                    .map(|t| t.max(summary.commuting_max))
            } else {
                Some(0.0)
            };
            Ok((local, summary, skipped))
        });
        let mut summaries = Vec::with_capacity(workers);
        let mut local_maxima = Vec::with_capacity(workers);
        for r in results {
            let (local, summary, skipped) = r?;
            stats.removed += skipped;
            local_maxima.push(local);
            summaries.push(summary);
        }
        let applied = apply_start.elapsed();

        let terms = self.term_count();
        if let Some(limit) = self.config.max_terms {
            if terms > limit {
                return Err(EngineError::ResourceExhausted {
                    layer,
                    gate: gate_pos,
                    terms,
                    limit,
                });
            }
        }

        let mut truncate_time = Duration::ZERO;
        if per_gate {
            let reduce_start = Instant::now();
            let mut global_max = 0.0f64;
            for local in local_maxima {
                match local {
                    Some(m) => global_max = global_max.max(m),
                    None => {
                        return Err(EngineError::NonFinite {
                            layer,
                            gate: gate_pos,
                            terms,
                        })
                    }
                }
            }
            stats.exchange += reduce_start.elapsed();
            let cut_start = Instant::now();
            let removed = self.for_each_worker_with(summaries, |_, shard, summary| {
                truncate_touched(shard, &summary, global_max, epsilon0)
            });
            for r in removed {
                stats.removed += r?;
            }
            stats.global_max = Some(global_max);
            truncate_time = cut_start.elapsed();
        }
        stats.compute = generated + applied + truncate_time;
        Ok(stats)
    }

    /// Reduces the global maximum and truncates every shard against it.
    /// Returns `(removed, global_max, compute time, reduction time)`.
    fn truncation_pass(
        &mut self,
        gate_pos: usize,
    ) -> Result<(usize, f64, Duration, Duration), EngineError> {
        let scan_start = Instant::now();
        let local: Vec<Option<f64>> = self.for_each_worker(|_, shard| shard.max_abs_checked());
        let scan = scan_start.elapsed();

        let reduce_start = Instant::now();
        let mut global_max = 0.0f64;
        for max in local {
            match max {
                Some(m) => global_max = global_max.max(m),
                None => {
                    return Err(EngineError::NonFinite {
                        layer: self.layers_done + 1,
                        gate: gate_pos,
                        terms: self.term_count(),
                    })
                }
            }
        }
        let reduce = reduce_start.elapsed();

        let cut_start = Instant::now();
        let epsilon0 = self.config.policy.epsilon0;
        let removed: Vec<Result<usize, _>> =
            self.for_each_worker(|_, shard| shard.truncate(global_max, epsilon0));
        let mut total = 0;
        for r in removed {
            total += r?;
        }
        Ok((total, global_max, scan + cut_start.elapsed(), reduce))
    }

    /// Applies one circuit layer in Heisenberg order and records its summary.
    pub fn apply_layer(
        &mut self,
        layer: &[Gate],
        readouts: &[Readout],
        trace: &mut Vec<GateReadout>,
    ) -> Result<LayerRecord, EngineError> {
        let mut removed = 0;
        let mut batches = 0;
        let mut records = 0;
        let mut max_dest = 0;
        let mut compute = Duration::ZERO;
        let mut exchange = Duration::ZERO;
        let wall_start = Instant::now();
        for (pos, gate) in layer.iter().enumerate().rev() {
            let stats = self.apply_gate(gate, pos)?;
            removed += stats.removed;
            batches += stats.batches_sent;
            records += stats.records_sent;
            max_dest = max_dest.max(stats.max_destinations);
            compute += stats.compute;
            exchange += stats.exchange;
            if self.config.gate_trace {
                trace.push(GateReadout {
                    t: self.layers_done + 1,
                    gate: pos,
                    observables: readouts.iter().map(|r| self.readout(r)).collect(),
                    term_count: self.term_count(),
                });
            }
        }
        let global_max = if self.config.policy.cadence == Cadence::PerLayer {
            let (r, gmax, c, x) = self.truncation_pass(layer.len())?;
            removed += r;
            compute += c;
            exchange += x;
            gmax
        } else {
            self.global_max()
        };
        let wall = wall_start.elapsed();
        self.layers_done += 1;
        let gates = layer.len().max(1) as f64;
        let ms = |d: Duration| d.as_secs_f64() * 1e3 / gates;
        Ok(LayerRecord {
            t: self.layers_done,
            observables: readouts.iter().map(|r| self.readout(r)).collect(),
            term_count: self.term_count(),
            global_max,
            removed,
            wall_ms_per_gate: ms(wall),
            compute_ms_per_gate: ms(compute),
            exchange_ms_per_gate: ms(exchange),
            batches_sent: batches,
            records_sent: records,
            max_destinations: max_dest,
            uniformity_ratio: uniformity_ratio(&self.shard_sizes()),
            norm_sq: self.norm_sq(),
        })
    }

    /// Evolves the operator through `circuit`, last layer first, calling
    /// `on_layer` after every layer.
    ///
    /// After `t` layers the operator is `V_t^† O V_t` where `V_t` is the
    /// product of the final `t` layers; for a circuit of identical layers the
    /// zero-state readout is `<0|(U^†)^t O U^t|0>`.
    pub fn run_with<F>(
        &mut self,
        circuit: &Circuit,
        readouts: &[Readout],
        mut on_layer: F,
    ) -> Result<RunLedger, EngineError>
    where
        F: FnMut(&LayerRecord, &Engine) -> Result<(), EngineError>,
    {
        if circuit.n_qubits() != self.n_qubits {
            return Err(EngineError::Width {
                operator: self.n_qubits,
                circuit: circuit.n_qubits(),
            });
        }
        if circuit.gate_count() == 0 {
            return Err(EngineError::EmptyCircuit);
        }
        let mut ledger = RunLedger::default();
        for layer in circuit.layers().iter().rev() {
            let record = self.apply_layer(layer, readouts, &mut ledger.gate_trace)?;
            on_layer(&record, self)?;
            ledger.records.push(record);
        }
        Ok(ledger)
    }

    pub fn run(&mut self, circuit: &Circuit, readouts: &[Readout]) -> Result<RunLedger, EngineError> {
        self.run_with(circuit, readouts, |_, _| Ok(()))
    }
}

/// Convenience wrapper: distribute `initial`, run `circuit`, return the ledger.
pub fn run_circuit(
    initial: &SparseOperator,
    circuit: &Circuit,
    config: EngineConfig,
    readouts: &[Readout],
) -> Result<RunLedger, EngineError> {
    Engine::new(initial, config).run(circuit, readouts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;
    use std::f64::consts::PI;

    fn x0() -> MultiIndex {
        MultiIndex::single(0, Pauli::X)
    }

    #[test]
    fn single_qubit_rotation_signs() {
        let theta = 0.37;
        let mut shard = SparseOperator::from_terms(1, [(x0(), 1.0)]).unwrap();
        let gate = Gate::new(MultiIndex::single(0, Pauli::Z), theta);
        let batches = apply_gate_local(&mut shard, &gate, &PartitionSpec::single(), 0);
        assert_eq!(shard.coefficient(&x0()), theta.cos());
        assert_eq!(batches.len(), 1);
        assert_eq!(
            batches[0].records,
            vec![(MultiIndex::single(0, Pauli::Y), -theta.sin())]
        );
    }

    #[test]
    fn commuting_generator_is_noop() {
        let zz = MultiIndex::from_sites([(0, Pauli::Z), (1, Pauli::Z)]);
        let mut shard = SparseOperator::from_terms(
            2,
            [(zz, 0.5), (MultiIndex::single(1, Pauli::Z), -0.25)],
        )
        .unwrap();
        let before = shard.sorted_terms();
        let gate = Gate::new(MultiIndex::single(0, Pauli::Z), 1.1);
        assert!(apply_gate_local(&mut shard, &gate, &PartitionSpec::single(), 0).is_empty());
        assert_eq!(shard.sorted_terms(), before);
    }

    #[test]
    fn clifford_rotation_is_branch_free() {
        let mut engine = Engine::new(
            &SparseOperator::from_terms(1, [(x0(), 1.0)]).unwrap(),
            EngineConfig::new(PartitionSpec::single(), TruncationPolicy::exact()),
        );
        let gate = Gate::new(MultiIndex::single(0, Pauli::Z), PI / 2.0);
        let stats = engine.apply_gate(&gate, 0).unwrap();
        assert_eq!(stats.removed, 1);
        let merged = engine.merged();
        assert_eq!(merged.sorted_terms(), vec![(MultiIndex::single(0, Pauli::Y), -1.0)]);
    }

    #[test]
    fn exchange_cases() {
        let t = InProcessTransport;
        let self_batch = UpdateBatch {
            source: 0,
            destination: 0,
            records: vec![(x0(), 1.0)],
        };
        let inbox = t.exchange(vec![self_batch.clone()], 1).unwrap();
        assert_eq!(inbox, vec![vec![self_batch]]);

        let empty = t.exchange(Vec::new(), 3).unwrap();
        assert!(empty.iter().all(Vec::is_empty));
        let blank = UpdateBatch {
            source: 1,
            destination: 2,
            records: vec![],
        };
        assert!(t.exchange(vec![blank], 3).unwrap()[2].is_empty());

        let a = UpdateBatch {
            source: 0,
            destination: 1,
            records: vec![(x0(), 0.5)],
        };
        let b = UpdateBatch {
            source: 1,
            destination: 0,
            records: vec![(x0(), -0.5)],
        };
        let inboxes = t.exchange(vec![b, a], 2).unwrap();
        assert_eq!(inboxes[0].len(), 1);
        assert_eq!(inboxes[1].len(), 1);
        assert_eq!(inboxes[0][0].source, 1);

        let stray = UpdateBatch {
            source: 0,
            destination: 5,
            records: vec![(x0(), 1.0)],
        };
        assert!(matches!(t.exchange(vec![stray], 2), Err(EngineError::Delivery(5))));
    }

    #[test]
    fn exchange_orders_by_sender() {
        let mk = |source| UpdateBatch {
            source,
            destination: 0,
            records: vec![(x0(), source as f64)],
        };
        let inbox = InProcessTransport
            .exchange(vec![mk(3), mk(1), mk(2)], 4)
            .unwrap();
        let order: Vec<usize> = inbox[0].iter().map(|b| b.source).collect();
        assert_eq!(order, vec![1, 2, 3]);
    }

    #[test]
    fn apply_updates_cases() {
        let spec = PartitionSpec::single();
        let mut shard = SparseOperator::from_terms(2, [(x0(), 0.7)]).unwrap();
        let inbox = vec![
            UpdateBatch {
                source: 0,
                destination: 0,
                records: vec![(x0(), 0.25)],
            },
            UpdateBatch {
                source: 1,
                destination: 0,
                records: vec![(x0(), -0.25), (MultiIndex::single(1, Pauli::Y), 0.1)],
            },
        ];
        apply_updates(&mut shard, &inbox, &spec, 0).unwrap();
        assert_eq!(shard.coefficient(&x0()), 0.7);
        assert_eq!(shard.coefficient(&MultiIndex::single(1, Pauli::Y)), 0.1);
        let before = shard.sorted_terms();
        apply_updates(&mut shard, &[], &spec, 0).unwrap();
        assert_eq!(shard.sorted_terms(), before);

        let spec4 = PartitionSpec::with_params(4, 2, 1).unwrap();
        let z1 = MultiIndex::single(1, Pauli::Z);
        let wrong = (spec4.owner(&z1) + 1) % 4;
        let bad = vec![UpdateBatch {
            source: 0,
            destination: wrong,
            records: vec![(z1, 1.0)],
        }];
        assert!(matches!(
            apply_updates(&mut shard, &bad, &spec4, wrong),
            Err(EngineError::Ownership { .. })
        ));
    }

    #[test]
    fn non_finite_coefficients_abort() {
        let op = SparseOperator::from_terms(1, [(x0(), f64::INFINITY)]).unwrap();
        let mut engine = Engine::new(
            &op,
            EngineConfig::new(PartitionSpec::single(), TruncationPolicy::exact()),
        );
        let gate = Gate::new(MultiIndex::single(0, Pauli::Z), 0.3);
        assert!(matches!(
            engine.apply_gate(&gate, 7),
            Err(EngineError::NonFinite { gate: 7, .. })
        ));
    }

    #[test]
    fn term_budget_is_enforced() {
        let op = SparseOperator::from_terms(1, [(x0(), 1.0)]).unwrap();
        let mut config = EngineConfig::new(PartitionSpec::single(), TruncationPolicy::exact());
        config.max_terms = Some(1);
        let mut engine = Engine::new(&op, config);
        let gate = Gate::new(MultiIndex::single(0, Pauli::Z), 0.3);
        assert!(matches!(
            engine.apply_gate(&gate, 0),
            Err(EngineError::ResourceExhausted { terms: 2, limit: 1, .. })
        ));
    }

    #[test]
    fn layers_run_last_to_first() {
        // Circuit: X rotation then Z rotation on one qubit. Heisenberg order
        // applies the Z rotation to the observable first, which leaves Z0
        // alone; the X rotation then gives cos(a) Z0 + sin(a) Y0.
        let a = 0.4;
        let circuit = Circuit::from_layers(
            1,
            vec![
                vec![Gate::new(x0(), a)],
                vec![Gate::new(MultiIndex::single(0, Pauli::Z), 0.9)],
            ],
        )
        .unwrap();
        let z0 = MultiIndex::single(0, Pauli::Z);
        let op = SparseOperator::from_terms(1, [(z0, 1.0)]).unwrap();
        let ledger = run_circuit(
            &op,
            &circuit,
            EngineConfig::new(PartitionSpec::single(), TruncationPolicy::exact()),
            &[Readout::ZeroState],
        )
        .unwrap();
        assert_eq!(ledger.records.len(), 2);
        assert_eq!(ledger.records[0].observables, vec![1.0]);
        assert!((ledger.records[1].observables[0] - a.cos()).abs() < 1e-15);
        assert_eq!(ledger.records[1].term_count, 2);
    }

    #[test]
    fn empty_and_mismatched_circuits_are_rejected() {
        let op = SparseOperator::from_terms(2, [(x0(), 1.0)]).unwrap();
        let config = EngineConfig::new(PartitionSpec::single(), TruncationPolicy::exact());
        let mut engine = Engine::new(&op, config);
        assert!(matches!(
            engine.run(&Circuit::new(2), &[]),
            Err(EngineError::EmptyCircuit)
        ));
        let other = Circuit::from_layers(3, vec![vec![Gate::new(x0(), 0.1)]]).unwrap();
        assert!(matches!(engine.run(&other, &[]), Err(EngineError::Width { .. })));
    }
}
