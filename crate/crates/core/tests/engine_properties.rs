mod common;

use std::f64::consts::PI;

use pauliprop_core::artifacts::{read_checkpoint, write_checkpoint};
use pauliprop_core::models::{eagle_kicked_ising, eagle_observable, EAGLE_OBSERVABLE_SITE};
use pauliprop_core::{
    Cadence, Circuit, Engine, EngineConfig, EngineError, Execution, Gate, Geometry, LayerRecord,
    MultiIndex, PartitionSpec, Readout, RunLedger, SparseOperator, TruncationPolicy,
};
use proptest::prelude::*;
use rand::Rng;

fn engine(op: &SparseOperator, workers: usize, policy: TruncationPolicy) -> Engine {
    Engine::new(op, EngineConfig::new(PartitionSpec::new(workers).unwrap(), policy))
}

fn eagle_start() -> SparseOperator {
    SparseOperator::from_terms(127, [(eagle_observable(), 1.0)]).unwrap()
}

fn non_timing(record: &LayerRecord) -> (usize, Vec<u64>, usize, u64, usize, usize, usize) {
    (
        record.t,
        record.observables.iter().map(|v| v.to_bits()).collect(),
        record.term_count,
        record.global_max.to_bits(),
        record.removed,
        record.batches_sent,
        record.records_sent,
    )
}

fn assert_same_operator(a: &SparseOperator, b: &SparseOperator, tol: f64) {
    let (ta, tb) = (a.sorted_terms(), b.sorted_terms());
    assert_eq!(ta.len(), tb.len(), "term sets differ in size");
    for ((ia, ca), (ib, cb)) in ta.iter().zip(&tb) {
        assert_eq!(ia, ib);
        assert!((ca - cb).abs() <= tol, "{ia}: {ca} vs {cb}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn worker_count_does_not_change_results(seed in any::<u64>(), n in 2usize..=40, depth in 1usize..=12, truncated in any::<bool>()) {
        let mut rng = common::rng(seed);
        let circuit = common::random_circuit(&mut rng, n, depth);
        let op = common::random_operator(&mut rng, n, 4);
        let policy = if truncated { TruncationPolicy::relative(1e-3) } else { TruncationPolicy::exact() };
        let mut reference: Option<(SparseOperator, Vec<usize>)> = None;
        for workers in [1usize, 2, 8] {
            let mut e = engine(&op, workers, policy);
            let ledger = e.run(&circuit, &[Readout::ZeroState]).unwrap();
            let counts: Vec<usize> = ledger.records.iter().map(|r| r.term_count).collect();
            let merged = e.merged();
            match &reference {
                None => reference = Some((merged, counts)),
                Some((m, c)) => {
                    prop_assert_eq!(&counts, c);
                    let (ta, tb) = (merged.sorted_terms(), m.sorted_terms());
                    prop_assert_eq!(ta.len(), tb.len());
                    for ((ia, ca), (ib, cb)) in ta.iter().zip(&tb) {
                        prop_assert_eq!(ia, ib);
                        prop_assert!((ca - cb).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn frobenius_norm_is_conserved_without_truncation(seed in any::<u64>(), n in 1usize..=30, depth in 1usize..=12) {
        let mut rng = common::rng(seed);
        let circuit = common::random_circuit(&mut rng, n, depth);
        let op = common::random_operator(&mut rng, n, 3);
        let before = op.norm_sq();
        let mut e = engine(&op, 3, TruncationPolicy::exact());
        let ledger = e.run(&circuit, &[Readout::ZeroState]).unwrap();
        for r in &ledger.records {
            prop_assert!((r.norm_sq - before).abs() <= 1e-10 * before, "layer {}: {} vs {}", r.t, r.norm_sq, before);
        }
    }

    #[test]
    fn records_sent_equal_records_applied(seed in any::<u64>(), n in 1usize..=20) {
        let mut rng = common::rng(seed);
        let op = common::random_operator(&mut rng, n, 50);
        let mut e = engine(&op, 5, TruncationPolicy::relative(1e-2));
        for g in 0..10 {
            let gate = Gate::new(common::random_generator(&mut rng, n, 3), rng.gen_range(-3.0..3.0));
            let stats = e.apply_gate(&gate, g).unwrap();
            prop_assert_eq!(stats.records_sent, stats.records_applied);
        }
    }

    #[test]
    fn batches_stay_inside_destination_sets(seed in any::<u64>(), n in 1usize..=12, workers in 2usize..=32) {
        let mut rng = common::rng(seed);
        let op = common::random_operator(&mut rng, n, 200);
        let spec = PartitionSpec::new(workers).unwrap();
        let mut config = EngineConfig::new(spec, TruncationPolicy::exact());
        config.track_destinations = true;
        let mut e = Engine::new(&op, config);
        for g in 0..8 {
            let generator = common::random_generator(&mut rng, n, 2);
            let stats = e.apply_gate(&Gate::new(generator, 0.4), g).unwrap();
            for (m, dest) in stats.destinations.unwrap().iter().enumerate() {
                let allowed = spec.destination_set(m, &generator, n);
                for d in dest {
                    prop_assert!(allowed.contains(d), "worker {m} sent to {d}, allowed {allowed:?}");
                }
            }
        }
    }

    #[test]
    fn inverse_gate_restores_operator(seed in any::<u64>(), n in 1usize..=30, theta in -3.0f64..3.0) {
        let mut rng = common::rng(seed);
        let op = common::random_operator(&mut rng, n, 20);
        let generator = common::random_generator(&mut rng, n, 4);
        let mut e = engine(&op, 2, TruncationPolicy::exact());
        e.apply_gate(&Gate::new(generator, theta), 0).unwrap();
        e.apply_gate(&Gate::new(generator, -theta), 1).unwrap();
        let merged = e.merged();
        for (index, c) in op.iter() {
            prop_assert!((merged.coefficient(index) - c).abs() <= 1e-12);
        }
        for (index, c) in merged.iter() {
            if !op.contains(index) {
                prop_assert!(c.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn truncation_leaves_nothing_below_threshold(seed in any::<u64>(), n in 2usize..=20, eps in 1e-4f64..0.3) {
        let mut rng = common::rng(seed);
        let circuit = common::random_circuit(&mut rng, n, 12);
        let op = common::random_operator(&mut rng, n, 10);
        let mut e = engine(&op, 4, TruncationPolicy::relative(eps));
        e.run(&circuit, &[Readout::ZeroState]).unwrap();
        let threshold = eps * e.global_max();
        for (index, c) in e.merged().iter() {
            prop_assert!(c.abs() > threshold && *c != 0.0, "{index} = {c} at threshold {threshold}");
        }
    }
}

#[test]
fn sequential_and_threaded_ledgers_agree() {
    let circuit = eagle_kicked_ising(0.3, 4).unwrap();
    let run = |execution| {
        let mut config = EngineConfig::new(PartitionSpec::new(8).unwrap(), TruncationPolicy::relative(1e-5));
        config.execution = execution;
        let mut e = Engine::new(&eagle_start(), config);
        let ledger: RunLedger = e.run(&circuit, &[Readout::ZeroState]).unwrap();
        (ledger.records.iter().map(non_timing).collect::<Vec<_>>(), e.merged())
    };
    let (a, ma) = run(Execution::Sequential);
    let (b, mb) = run(Execution::Threaded);
    assert_eq!(a, b);
    assert_same_operator(&ma, &mb, 0.0);
}

#[test]
fn cadence_is_irrelevant_without_truncation() {
    let circuit = eagle_kicked_ising(0.9 * PI, 3).unwrap();
    let mut gate = engine(&eagle_start(), 2, TruncationPolicy::exact());
    let mut layer = engine(&eagle_start(), 2, TruncationPolicy::new(0.0, Cadence::PerLayer).unwrap());
    gate.run(&circuit, &[Readout::ZeroState]).unwrap();
    layer.run(&circuit, &[Readout::ZeroState]).unwrap();
    assert_same_operator(&gate.merged(), &layer.merged(), 1e-14);
}

#[test]
fn light_cone_grows_one_step_per_layer() {
    let geometry = Geometry::heavy_hex_127();
    let circuit = eagle_kicked_ising(0.3, 4).unwrap();
    let mut e = engine(&eagle_start(), 1, TruncationPolicy::exact());
    e.run_with(&circuit, &[Readout::ZeroState], |record, engine| {
        let support = engine.merged().support_sites();
        assert_eq!(support, geometry.ball(EAGLE_OBSERVABLE_SITE, record.t - 1), "t = {}", record.t);
        Ok(())
    })
    .unwrap();
    assert_eq!(geometry.ball(EAGLE_OBSERVABLE_SITE, 5).len(), 31);
}

#[test]
fn commuting_circuit_leaves_observable_alone() {
    let circuit = eagle_kicked_ising(0.0, 6).unwrap();
    let mut e = engine(&eagle_start(), 4, TruncationPolicy::exact());
    let ledger = e.run(&circuit, &[Readout::ZeroState]).unwrap();
    for r in &ledger.records {
        assert_eq!(r.observables[0], 1.0);
        assert_eq!(r.term_count, 1);
    }
}

#[test]
fn clifford_circuit_never_branches() {
    let circuit = eagle_kicked_ising(PI / 2.0, 8).unwrap();
    for eps in [0.0, 1e-3] {
        let mut e = engine(&eagle_start(), 2, TruncationPolicy::relative(eps));
        let ledger = e.run(&circuit, &[Readout::ZeroState]).unwrap();
        assert!(ledger.records.iter().all(|r| r.term_count == 1));
    }
}

#[test]
fn checkpoint_resume_matches_continuous_run() {
    let circuit = eagle_kicked_ising(0.3, 5).unwrap();
    let policy = TruncationPolicy::relative(1e-4);
    let spec = PartitionSpec::new(3).unwrap();
    let mut direct = Engine::new(&eagle_start(), EngineConfig::new(spec, policy));
    direct.run(&circuit, &[Readout::ZeroState]).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let head = Circuit::from_layers(127, circuit.layers()[2..].to_vec()).unwrap();
    let tail = Circuit::from_layers(127, circuit.layers()[..2].to_vec()).unwrap();
    let mut first = Engine::new(&eagle_start(), EngineConfig::new(spec, policy));
    first.run(&head, &[Readout::ZeroState]).unwrap();
    write_checkpoint(dir.path(), &first).unwrap();
    let cp = read_checkpoint(dir.path()).unwrap();
    assert_eq!(cp.layers_done, 3);
    let mut resumed = Engine::from_shards(cp.shards, EngineConfig::new(spec, policy), cp.layers_done).unwrap();
    let ledger = resumed.run(&tail, &[Readout::ZeroState]).unwrap();
    assert_eq!(ledger.records.last().unwrap().t, 5);
    assert_same_operator(&direct.merged(), &resumed.merged(), 0.0);
}

#[test]
fn misplaced_shard_terms_are_rejected() {
    let spec = PartitionSpec::new(4).unwrap();
    let index = MultiIndex::parse_label("X0 Z3", 8).unwrap();
    let owner = spec.owner(&index);
    let mut shards: Vec<SparseOperator> = (0..4).map(|_| SparseOperator::new(8)).collect();
    shards[(owner + 1) % 4].upsert(index, 1.0);
    let result = Engine::from_shards(shards, EngineConfig::new(spec, TruncationPolicy::exact()), 0);
    assert!(matches!(result, Err(EngineError::Ownership { .. })));
}

#[test]
fn term_budget_aborts_with_position() {
    let circuit = eagle_kicked_ising(0.25 * PI, 6).unwrap();
    let mut config = EngineConfig::new(PartitionSpec::single(), TruncationPolicy::exact());
    config.max_terms = Some(1000);
    let err = Engine::new(&eagle_start(), config)
        .run(&circuit, &[Readout::ZeroState])
        .unwrap_err();
    match err {
        EngineError::ResourceExhausted { layer, terms, limit, .. } => {
            assert_eq!(limit, 1000);
            assert!(terms > 1000);
            assert!(layer >= 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn coefficient_readout_tracks_observable_string() {
    let circuit = eagle_kicked_ising(0.3, 1).unwrap();
    let mut e = engine(&eagle_start(), 1, TruncationPolicy::exact());
    let ledger = e
        .run(&circuit, &[Readout::ZeroState, Readout::Coefficient(eagle_observable())])
        .unwrap();
    // One layer: Z62 -> cos(0.3) Z62 + sin(0.3) Y62.
    let r = &ledger.records[0];
    assert!((r.observables[0] - 0.3f64.cos()).abs() < 1e-15);
    assert!((r.observables[1] - 0.3f64.cos()).abs() < 1e-15);
    assert_eq!(r.term_count, 2);
}
