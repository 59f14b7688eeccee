use hermit_core::trs::{ReorgAction, TrsParams, TrsTree};
use hermit_core::{ColumnDef, ColumnType, IdScheme, Table, TupleId, Value, ValueRange};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: usize = 1;
const N: usize = 2;

fn empty_table() -> Table {
    let schema = vec![
        ColumnDef::new("id", ColumnType::I64),
        ColumnDef::new("m", ColumnType::F64),
        ColumnDef::new("n", ColumnType::F64),
    ];
    Table::create(schema, 0, IdScheme::Physical).unwrap()
}

fn put(t: &mut Table, id: i64, m: f64, n: f64) -> TupleId {
    t.insert(&[Value::Int(id), Value::Float(m), Value::Float(n)]).unwrap()
}

/// `n = 3m + 5` for `m = 0..rows`.
fn linear(rows: usize) -> Table {
    let mut t = empty_table();
    for i in 0..rows {
        put(&mut t, i as i64, i as f64, 3.0 * i as f64 + 5.0);
    }
    t
}

fn noisy(rows: usize, noise: f64, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = empty_table();
    for i in 0..rows {
        let m = i as f64;
        let n = if rng.gen::<f64>() < noise {
            rng.gen_range(0.0..3.0 * rows as f64)
        } else {
            3.0 * m + 5.0
        };
        put(&mut t, i as i64, m, n);
    }
    t
}

fn live_pairs(t: &Table) -> Vec<(f64, f64, TupleId)> {
    t.live_slots()
        .map(|s| (t.value_f64(M, s).unwrap(), t.value_f64(N, s).unwrap(), t.tuple_id(s)))
        .collect()
}

/// Every live pair is reachable from a point lookup on its target value.
fn assert_coverage(tree: &TrsTree, t: &Table) {
    for (m, n, tid) in live_pairs(t) {
        let a = tree.lookup(&ValueRange::point(m).unwrap());
        let in_band = a.host_ranges.iter().any(|r| r.contains(n));
        assert!(
            in_band || a.outlier_ids.binary_search(&tid).is_ok(),
            "pair ({m}, {n}) lost"
        );
    }
}

fn assert_partition(tree: &TrsTree) {
    let leaves = tree.leaves();
    let full = tree.full_range();
    assert_eq!(leaves[0].range.lb(), full.lb());
    let last = leaves.last().unwrap();
    assert_eq!(last.range.ub(), full.ub());
    assert!(last.upper_closed);
    for w in leaves.windows(2) {
        assert_eq!(w[0].range.ub(), w[1].range.lb());
        assert!(!w[0].upper_closed);
    }
    assert!(leaves.iter().all(|l| l.depth <= tree.params().max_height));
}

fn buffer_bytes(tree: &TrsTree) -> usize {
    tree.memory_report().get("outlier_buffers")
}

#[test]
fn clean_line_lookup_is_band_around_image() {
    let t = linear(1000);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    assert_eq!(tree.shape(), (1, 0, 1));
    let a = tree.lookup(&ValueRange::new(10.0, 20.0).unwrap());
    assert!(a.outlier_ids.is_empty());
    assert_eq!(a.host_ranges.len(), 1);
    let r = a.host_ranges[0];
    let eps = tree.leaves()[0].model.epsilon;
    // |beta| * w * eb / (2n) = 3 * 999 * 2 / 2000
    assert!((eps - 2.997).abs() < 1e-9);
    assert!((r.lb() - (35.0 - eps)).abs() < 1e-6);
    assert!((r.ub() - (65.0 + eps)).abs() < 1e-6);
}

#[test]
fn lookup_outside_full_range_is_empty() {
    let t = linear(100);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    let a = tree.lookup(&ValueRange::new(500.0, 600.0).unwrap());
    assert!(a.host_ranges.is_empty() && a.outlier_ids.is_empty());
}

#[test]
fn built_tree_partitions_and_covers() {
    let t = noisy(20_000, 0.05, 3);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    assert_partition(&tree);
    assert_coverage(&tree, &t);
    for l in tree.leaves() {
        if l.depth < tree.params().max_height {
            assert!(l.outliers as f64 <= 0.1 * l.covered as f64, "{l:?}");
        }
    }
}

#[test]
fn split_enqueued_at_first_overfull_insert() {
    let mut t = linear(1000);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    assert_eq!(tree.shape().0, 1);
    // b buffered of 1000 + b covered overflows once b > 0.1 (1000 + b), i.e. b = 112
    for b in 1..=200 {
        let m = (b * 4) as f64 + 0.5;
        let tid = put(&mut t, 10_000 + b as i64, m, -1e6);
        tree.insert(m, -1e6, tid);
        let expect = usize::from(b >= 112);
        assert_eq!(tree.queue_len(), expect, "after {b} outliers");
    }
    let q = tree.queued();
    assert_eq!(q[0].action, ReorgAction::Split);
    assert!(q[0].path.is_empty());
    assert_coverage(&tree, &t);
}

#[test]
fn no_split_at_max_height() {
    let mut t = linear(1000);
    let params = TrsParams {
        max_height: 1,
        ..TrsParams::default()
    };
    let tree = TrsTree::build_over_table(&t, M, N, params).unwrap();
    for b in 0..500 {
        let tid = put(&mut t, 10_000 + b, b as f64, -1.0);
        tree.insert(b as f64, -1.0, tid);
    }
    assert_eq!(tree.queue_len(), 0);
    assert_coverage(&tree, &t);
}

#[test]
fn merge_enqueued_after_delete_threshold() {
    let mut t = linear(1000);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    // k deletes of 1000 rows trigger once k > 0.25 (1000 - k), i.e. k = 201
    for k in 1..=300i64 {
        let tid = t.delete(k).unwrap();
        tree.delete(k as f64, tid);
        assert_eq!(tree.queue_len(), usize::from(k >= 201), "after {k} deletes");
    }
    assert_eq!(tree.queued()[0].action, ReorgAction::Merge);
    let stats = tree.reorganize(&t, usize::MAX).unwrap();
    assert_eq!(stats.tasks, 1);
    assert_eq!(tree.leaves()[0].deleted, 0);
    assert_eq!(tree.leaves()[0].covered, 700);
    assert_coverage(&tree, &t);
}

#[test]
fn inserts_beyond_range_widen_the_tree() {
    let mut t = linear(1000);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    // same threshold shape as splits, against the live count
    for k in 1..=150 {
        let m = 1000.0 + k as f64;
        let tid = put(&mut t, 5000 + k, m, 3.0 * m + 5.0);
        tree.insert(m, 3.0 * m + 5.0, tid);
        assert_eq!(tree.queue_len(), usize::from(k >= 112), "after {k} inserts");
    }
    assert_coverage(&tree, &t);
    assert_eq!(tree.queued()[0].action, ReorgAction::Widen);
    tree.reorganize(&t, usize::MAX).unwrap();
    assert_eq!(tree.full_range(), ValueRange::new(0.0, 1150.0).unwrap());
    assert_eq!(buffer_bytes(&tree), 0);
    assert_partition(&tree);
    assert_coverage(&tree, &t);
}

#[test]
fn reorganization_shrinks_buffers_and_keeps_coverage() {
    let mut t = linear(10_000);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // a second line inside one region makes its leaves overfull
    for k in 0..3000 {
        let m = rng.gen_range(2000.0..3000.0);
        let tid = put(&mut t, 100_000 + k, m, 50_000.0 - m);
        tree.insert(m, 50_000.0 - m, tid);
    }
    assert!(tree.queue_len() > 0);
    let before = buffer_bytes(&tree);
    while tree.queue_len() > 0 {
        tree.reorganize(&t, usize::MAX).unwrap();
    }
    assert!(buffer_bytes(&tree) < before / 2, "{} vs {before}", buffer_bytes(&tree));
    assert_partition(&tree);
    assert_coverage(&tree, &t);
}

#[test]
fn clear_queue_rearms_triggers() {
    let mut t = linear(1000);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    for b in 0..120 {
        let tid = put(&mut t, 10_000 + b, b as f64 + 0.5, -5.0);
        tree.insert(b as f64 + 0.5, -5.0, tid);
    }
    assert_eq!(tree.clear_queue(), 1);
    assert_eq!(tree.queue_len(), 0);
    let tid = put(&mut t, 20_000, 998.5, -5.0);
    tree.insert(998.5, -5.0, tid);
    assert_eq!(tree.queue_len(), 1);
}

#[test]
fn schedule_rebuild_rejects_missing_path() {
    let t = linear(100);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    assert!(tree.schedule_rebuild(&[3]).is_err());
    tree.schedule_rebuild(&[]).unwrap();
    tree.schedule_rebuild(&[]).unwrap();
    assert_eq!(tree.queue_len(), 1);
}

#[test]
fn rebuild_of_unchanged_data_is_identity() {
    let t = noisy(30_000, 0.03, 1);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    let before = tree.snapshot();
    tree.schedule_rebuild(&[]).unwrap();
    tree.reorganize(&t, usize::MAX).unwrap();
    assert_eq!(tree.snapshot(), before);
}

#[test]
fn lookups_stay_exact_while_reorganizing() {
    use std::sync::atomic::{AtomicBool, Ordering};
    let mut t = noisy(50_000, 0.02, 4);
    let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..8000 {
        let m = rng.gen_range(10_000.0..20_000.0);
        let tid = put(&mut t, 1_000_000 + k, m, -m);
        tree.insert(m, -m, tid);
    }
    assert!(tree.queue_len() > 0);
    let pairs = live_pairs(&t);
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        s.spawn(|| {
            while tree.queue_len() > 0 {
                tree.reorganize(&t, 1).unwrap();
            }
            done.store(true, Ordering::Release);
        });
        let mut i = 0;
        while !done.load(Ordering::Acquire) || i < 2000 {
            let (m, n, tid) = pairs[(i * 7919) % pairs.len()];
            let a = tree.lookup(&ValueRange::point(m).unwrap());
            assert!(a.host_ranges.iter().any(|r| r.contains(n)) || a.outlier_ids.contains(&tid));
            i += 1;
        }
    });
    assert_coverage(&tree, &t);
}

#[test]
fn parallel_build_matches_serial() {
    let t = noisy(40_000, 0.05, 8);
    let range = t.column_range(M).unwrap().unwrap();
    let serial = TrsTree::build(&t, M, N, range, TrsParams::default()).unwrap();
    for w in [1, 3, 8] {
        let par = TrsTree::build_parallel(&t, M, N, range, TrsParams::default(), w).unwrap();
        assert_eq!(par.snapshot(), serial.snapshot());
    }
}

#[derive(Debug, Clone)]
enum Op {
    Insert(f64, f64),
    Delete(usize),
    Reorg,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0.0..1200.0f64, -100.0..4000.0f64).prop_map(|(m, n)| Op::Insert(m, n)),
        3 => any::<usize>().prop_map(Op::Delete),
        1 => Just(Op::Reorg),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coverage_survives_any_mutation_sequence(
        rows in 50usize..600,
        noise in 0.0..0.3f64,
        fanout in 2usize..9,
        seed in any::<u64>(),
        ops in prop::collection::vec(op(), 0..300),
    ) {
        let mut t = noisy(rows, noise, seed);
        let params = TrsParams { node_fanout: fanout, max_height: 6, ..TrsParams::default() };
        let tree = TrsTree::build_over_table(&t, M, N, params).unwrap();
        assert_partition(&tree);
        assert_coverage(&tree, &t);
        let mut next = rows as i64;
        for o in ops {
            match o {
                Op::Insert(m, n) => {
                    let tid = put(&mut t, next, m, n);
                    tree.insert(m, n, tid);
                    next += 1;
                }
                Op::Delete(k) => {
                    let live: Vec<usize> = t.live_slots().collect();
                    if live.is_empty() {
                        continue;
                    }
                    let s = live[k % live.len()];
                    let m = t.value_f64(M, s).unwrap();
                    let tid = t.delete(t.primary_key_at(s)).unwrap();
                    tree.delete(m, tid);
                }
                Op::Reorg => {
                    tree.reorganize(&t, usize::MAX).unwrap();
                    assert_partition(&tree);
                }
            }
        }
        assert_coverage(&tree, &t);
        tree.reorganize(&t, usize::MAX).unwrap();
        assert_partition(&tree);
        assert_coverage(&tree, &t);
    }

    #[test]
    fn range_lookup_superset_of_matches(
        rows in 20usize..800,
        noise in 0.0..0.5f64,
        seed in any::<u64>(),
        lo in 0.0..800.0f64,
        width in 0.0..200.0f64,
    ) {
        let t = noisy(rows, noise, seed);
        let tree = TrsTree::build_over_table(&t, M, N, TrsParams::default()).unwrap();
        let q = ValueRange::new(lo, lo + width).unwrap();
        let a = tree.lookup(&q);
        for w in a.host_ranges.windows(2) {
            prop_assert!(w[0].ub() < w[1].lb());
        }
        for w in a.outlier_ids.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for (m, n, tid) in live_pairs(&t) {
            if q.contains(m) {
                prop_assert!(a.host_ranges.iter().any(|r| r.contains(n)) || a.outlier_ids.contains(&tid));
            }
        }
    }
}
