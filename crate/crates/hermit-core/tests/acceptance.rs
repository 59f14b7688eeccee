//! Acceptance gate: one line per criterion, `PASS` or `FAIL`, then a
//! summary. Exits non-zero when any criterion fails.
//!
//! A free argument restricts the run to criteria whose name contains it.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use hermit_core::bench::{self, BenchConfig, MemoryBreakdown, Workload};
use hermit_core::datagen::{self, queries_from_sorted, QueryShape, WorkloadKind, WorkloadSpec};
use hermit_core::engine::{Engine, IndexId, IndexKind};
use hermit_core::trs::{TrsParams, TrsTree};
use hermit_core::{IdScheme, Table, ValueRange};

const ROWS: usize = 200_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn table(kind: WorkloadKind, rows: usize, noise: f64, seed: u64, scheme: IdScheme) -> Table {
    let spec = WorkloadSpec {
        noise_pct: noise,
        seed,
        ..WorkloadSpec::new(kind, rows)
    };
    datagen::generate(&spec, scheme).unwrap()
}

fn cols(t: &Table) -> (usize, usize) {
    (t.column_index("C").unwrap(), t.column_index("B").unwrap())
}

fn keys(engine: &Engine, id: IndexId, q: &ValueRange) -> Vec<i64> {
    let rows = engine.lookup(id, q, None).unwrap();
    let mut k: Vec<i64> = rows.iter().map(|r| r[bench::PK_COLUMN].as_i64().unwrap()).collect();
    k.sort_unstable();
    k
}

fn mean_candidates(engine: &Engine, id: IndexId, queries: &[ValueRange]) -> f64 {
    let total: usize = queries
        .iter()
        .map(|q| engine.lookup_with_metrics(id, q, None).unwrap().1.candidates)
        .sum();
    total as f64 / queries.len() as f64
}

/// 1. Every index kind returns exactly the scan result.
fn exactness() -> Verdict {
    let mut configs = Vec::new();
    for kind in [WorkloadKind::Linear, WorkloadKind::Sigmoid] {
        for noise in [0.0, 0.01, 0.1] {
            for scheme in [IdScheme::Logical, IdScheme::Physical] {
                configs.push((kind, noise, scheme));
            }
        }
    }
    let results: Vec<(String, usize, usize)> = configs
        .par_iter()
        .map(|&(kind, noise, scheme)| {
            let t = table(kind, ROWS, noise, 11, scheme);
            let (c, b) = cols(&t);
            let values = t.sorted_values(c).unwrap();
            let mut queries = Vec::new();
            for (i, s) in [0.0001, 0.0005, 0.001, 0.005, 0.01].into_iter().enumerate() {
                queries.extend(queries_from_sorted(&values, QueryShape::Range(s), 200, 100 + i as u64).unwrap());
            }
            queries.extend(queries_from_sorted(&values, QueryShape::Point, 1000, 200).unwrap());
            let engine = Engine::new(t);
            let ids = [
                engine.create_hermit_index(c, b, TrsParams::default()).unwrap(),
                engine.create_baseline_index(c).unwrap(),
                engine.create_cm_index(c, b, 64.0, 64.0).unwrap(),
            ];
            let mut mismatches = 0;
            for q in &queries {
                let want = bench::oracle_keys(&engine.table(), c, q);
                mismatches += ids.iter().filter(|&&id| keys(&engine, id, q) != want).count();
            }
            (format!("{kind:?}/{noise}/{scheme:?}"), queries.len() * ids.len(), mismatches)
        })
        .collect();
    let checked: usize = results.iter().map(|r| r.1).sum();
    let bad: Vec<String> = results
        .iter()
        .filter(|r| r.2 > 0)
        .map(|r| format!("{}: {}", r.0, r.2))
        .collect();
    verdict(
        bad.is_empty(),
        format!("{} configurations, {checked} lookups, mismatches: [{}]", results.len(), bad.join(", ")),
    )
}

/// 2. Clean linear data fits in one leaf whose size does not grow.
fn single_leaf() -> Verdict {
    let mut details = Vec::new();
    let mut bytes = Vec::new();
    let mut pass = true;
    for rows in [10_000, 100_000, 1_000_000] {
        let t = table(WorkloadKind::Linear, rows, 0.0, 3, IdScheme::Physical);
        let (c, b) = cols(&t);
        let trs = TrsTree::build_over_table(&t, c, b, TrsParams::default()).unwrap();
        let (leaves, _, _) = trs.shape();
        let node_bytes = trs.memory_report().get("trs_nodes");
        pass &= leaves == 1;
        bytes.push(node_bytes);
        details.push(format!("{rows} rows: {leaves} leaf, {node_bytes} B"));
    }
    pass &= bytes.windows(2).all(|w| w[0] == w[1]);
    verdict(pass, details.join("; "))
}

/// 3. Leaves above the height limit respect the outlier ratio.
fn outlier_ratio() -> Verdict {
    let t = table(WorkloadKind::Sigmoid, ROWS, 0.01, 5, IdScheme::Physical);
    let (c, b) = cols(&t);
    let p = TrsParams::default();
    let trs = TrsTree::build_over_table(&t, c, b, p.clone()).unwrap();
    let leaves = trs.leaves();
    let checked: Vec<_> = leaves.iter().filter(|l| l.depth < p.max_height).collect();
    let violations = checked
        .iter()
        .filter(|l| l.outliers as f64 > p.outlier_ratio * l.covered as f64)
        .count();
    verdict(
        violations == 0 && !checked.is_empty(),
        format!("{} leaves, {} below max height, {violations} violations", leaves.len(), checked.len()),
    )
}

/// 4. A point query sees about `error_bound` host values in the band.
fn epsilon_semantics() -> Verdict {
    let t = table(WorkloadKind::Linear, 100_000, 0.0, 9, IdScheme::Physical);
    let (c, b) = cols(&t);
    let points = queries_from_sorted(&t.sorted_values(c).unwrap(), QueryShape::Point, 1000, 4).unwrap();
    let engine = Engine::new(t);
    let mut pass = true;
    let mut details = Vec::new();
    for eb in [2.0, 10.0, 100.0] {
        let p = TrsParams {
            error_bound: eb,
            ..TrsParams::default()
        };
        let id = engine.create_hermit_index(c, b, p).unwrap();
        let leaves = engine.with_trs(id, |t| t.shape().0).unwrap();
        let mean = mean_candidates(&engine, id, &points);
        let ok = leaves == 1 && mean >= eb / 2.0 && mean <= 2.0 * eb;
        pass &= ok;
        details.push(format!("eb={eb}: mean {mean:.2} ({leaves} leaf)"));
    }
    verdict(pass, details.join("; "))
}

/// 5. Ten HERMIT indexes against ten complete indexes.
fn memory_trend() -> Verdict {
    let spec = WorkloadSpec {
        noise_pct: 0.0,
        seed: 13,
        extra_targets: 9,
        ..WorkloadSpec::new(WorkloadKind::Linear, ROWS)
    };
    let t = datagen::generate(&spec, IdScheme::Logical).unwrap();
    let s = bench::memory_scaling(
        &t,
        &[IndexKind::Hermit, IndexKind::Baseline],
        10,
        &TrsParams::default(),
        (bench::DEFAULT_CM_WIDTH, bench::DEFAULT_CM_WIDTH),
    )
    .unwrap();
    let h: &MemoryBreakdown = &s.point(IndexKind::Hermit, 10).unwrap().memory;
    let base = &s.point(IndexKind::Baseline, 10).unwrap().memory;
    let total_ratio = h.total as f64 / base.total as f64;
    let node_ratio = h.trs_nodes as f64 / base.baseline_index as f64;
    verdict(
        total_ratio <= 0.6 && node_ratio <= 0.05,
        format!(
            "total {} vs {} B (ratio {total_ratio:.3}); trs nodes {} vs baseline secondary {} B (ratio {node_ratio:.2e})",
            h.total, base.total, h.trs_nodes, base.baseline_index
        ),
    )
}

/// 6. Candidates per query against correlation maps under heavy noise.
fn noise_vs_cm() -> Verdict {
    let t = table(WorkloadKind::Linear, ROWS, 0.1, 17, IdScheme::Physical);
    let (c, b) = cols(&t);
    let queries = queries_from_sorted(&t.sorted_values(c).unwrap(), QueryShape::Range(0.0001), 100, 6).unwrap();
    let engine = Engine::new(t);
    let hermit = engine.create_hermit_index(c, b, TrsParams::default()).unwrap();
    let h = mean_candidates(&engine, hermit, &queries);
    let mut pass = true;
    let mut details = vec![format!("hermit {h:.1}")];
    for hw in [16.0, 64.0, 256.0, 1024.0, 4096.0] {
        let id = engine.create_cm_index(c, b, 16.0, hw).unwrap();
        let cm = mean_candidates(&engine, id, &queries);
        pass &= h <= cm;
        details.push(format!("cm host {hw}: {cm:.1}"));
    }
    verdict(pass, details.join("; "))
}

/// 7. False positives grow with the error bound.
fn false_positive_trend() -> Verdict {
    let t = table(WorkloadKind::Sigmoid, ROWS, 0.01, 19, IdScheme::Physical);
    let (c, b) = cols(&t);
    let queries = queries_from_sorted(&t.sorted_values(c).unwrap(), QueryShape::Range(0.0001), 1000, 7).unwrap();
    let engine = Engine::new(t);
    let mut ratios = Vec::new();
    for eb in [1.0, 10.0, 100.0, 1000.0, 10000.0] {
        let p = TrsParams {
            error_bound: eb,
            ..TrsParams::default()
        };
        let id = engine.create_hermit_index(c, b, p).unwrap();
        let (mut cand, mut res) = (0usize, 0usize);
        for q in &queries {
            let m = engine.lookup_with_metrics(id, q, None).unwrap().1;
            cand += m.candidates;
            res += m.results;
        }
        ratios.push((eb, (cand - res) as f64 / cand.max(1) as f64));
    }
    let monotone = ratios.windows(2).all(|w| w[1].1 >= w[0].1);
    let last = ratios.last().unwrap().1;
    let shown: Vec<String> = ratios.iter().map(|(e, r)| format!("{e}: {r:.3}")).collect();
    verdict(monotone && last > 0.5, shown.join(", "))
}

/// 8. Mixed mutations, then a forced reorganization, stay exact; the
///    reorganization does not grow memory.
fn maintenance() -> Verdict {
    let full = table(WorkloadKind::Linear, 120_000, 0.01, 23, IdScheme::Logical);
    let (c, b) = cols(&full);
    let mut slots: Vec<(f64, usize)> = full.live_slots().map(|s| (full.value_f64(c, s).unwrap(), s)).collect();
    slots.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Built over the lowest fifth of the target domain; most inserts land
    // outside the initial tree range.
    let split = slots.len() / 5;
    let mut initial = Table::create(full.schema().to_vec(), 0, IdScheme::Logical).unwrap();
    for &(_, s) in &slots[..split] {
        initial.insert(&full.row(s)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut held: Vec<usize> = slots[split..].iter().map(|x| x.1).collect();
    held.shuffle(&mut rng);
    let mut live: Vec<i64> = (0..initial.slot_count()).map(|s| initial.primary_key_at(s)).collect();
    let engine = Engine::new(initial);
    let id = engine.create_hermit_index(c, b, TrsParams::default()).unwrap();
    let domain = full.column_range(c).unwrap().unwrap();

    // (checked, mismatches)
    let mut tally = (0usize, 0usize);
    let check = |engine: &Engine, q: &ValueRange, tally: &mut (usize, usize)| {
        tally.0 += 1;
        if keys(engine, id, q) != bench::oracle_keys(&engine.table(), c, q) {
            tally.1 += 1;
        }
    };
    let mut held = held.into_iter();
    for _ in 0..50_000 {
        let roll: f64 = rng.gen();
        if roll < 0.7 {
            if let Some(s) = held.next() {
                let row = full.row(s);
                live.push(row[0].as_i64().unwrap());
                engine.insert(&row).unwrap();
                continue;
            }
        }
        if roll < 0.85 && !live.is_empty() {
            let k = rng.gen_range(0..live.len());
            engine.delete(live.swap_remove(k)).unwrap();
            continue;
        }
        let lb = rng.gen_range(domain.lb()..domain.ub());
        check(&engine, &ValueRange::new(lb, lb + domain.width() * 0.001).unwrap(), &mut tally);
    }
    let during = tally;
    let pre = engine.memory_report().total();
    let stats = engine.force_reorganize().unwrap();
    let post = engine.memory_report().total();
    let values = engine.table().sorted_values(c).unwrap();
    let mut queries = queries_from_sorted(&values, QueryShape::Range(0.001), 500, 9).unwrap();
    queries.extend(queries_from_sorted(&values, QueryShape::Point, 500, 10).unwrap());
    for q in &queries {
        check(&engine, q, &mut tally);
    }
    let (checked, mismatches) = tally;
    verdict(
        mismatches == 0 && post <= pre,
        format!(
            "{} lookups during trace, {} after reorg ({} tasks), mismatches {mismatches}; memory {pre} -> {post} B",
            during.0,
            checked - during.0,
            stats.tasks
        ),
    )
}

/// 9. Pairs handed to nodes during construction stay within the height bound.
fn construction_cost() -> Verdict {
    let mut sets: Vec<(String, Table, usize, usize)> = Vec::new();
    for kind in [WorkloadKind::Linear, WorkloadKind::Sigmoid] {
        for noise in [0.0, 0.01, 0.1] {
            let t = table(kind, ROWS, noise, 29, IdScheme::Physical);
            let (c, b) = cols(&t);
            sets.push((format!("{kind:?}/{noise}"), t, c, b));
        }
    }
    let stock = WorkloadSpec {
        stocks: 20,
        seed: 29,
        ..WorkloadSpec::new(WorkloadKind::StockLike, 20_000)
    };
    let t = datagen::generate(&stock, IdScheme::Physical).unwrap();
    let (c, b) = bench::default_columns(&t).unwrap();
    sets.push(("stock".into(), t, c, b));
    let t = table(WorkloadKind::SensorLike, ROWS, 0.01, 29, IdScheme::Physical);
    let (c, b) = bench::default_columns(&t).unwrap();
    sets.push(("sensor".into(), t, c, b));

    let p = TrsParams::default();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, t, c, b) in &sets {
        let rows = t.project_pairs(*c, *b, &ValueRange::all()).unwrap().len();
        let trs = TrsTree::build_over_table(t, *c, *b, p.clone()).unwrap();
        let visited = trs.build_stats().pairs_visited;
        pass &= visited <= p.max_height * rows;
        details.push(format!("{name}: {:.2}N", visited as f64 / rows as f64));
    }
    verdict(pass, details.join(", "))
}

/// 10. Worker count does not change the tree.
fn parallel_determinism() -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for (noise, precheck) in [(0.01, false), (0.1, false), (0.01, true)] {
        let t = table(WorkloadKind::Sigmoid, ROWS, noise, 31, IdScheme::Physical);
        let (c, b) = cols(&t);
        let range = t.column_range(c).unwrap().unwrap();
        let p = TrsParams {
            sample_precheck: precheck,
            seed: 5,
            ..TrsParams::default()
        };
        let serial = TrsTree::build(&t, c, b, range, p.clone()).unwrap().snapshot();
        let same = [1, 2, 4].iter().all(|&w| {
            TrsTree::build_parallel(&t, c, b, range, p.clone(), w).unwrap().snapshot() == serial
        });
        pass &= same;
        details.push(format!("noise {noise} precheck {precheck}: {} nodes, identical {same}", serial.len()));
    }
    verdict(pass, details.join("; "))
}

/// 11. Insert throughput with ten indexes.
fn insert_throughput() -> Verdict {
    let spec = WorkloadSpec {
        seed: 37,
        extra_targets: 9,
        ..WorkloadSpec::new(WorkloadKind::Linear, ROWS)
    };
    let t = datagen::generate(&spec, IdScheme::Logical).unwrap();
    let best = |kind: IndexKind| {
        (0..3)
            .map(|_| {
                let cfg = BenchConfig {
                    index: kind,
                    indexes: 10,
                    workload: Workload::Insert,
                    ops: 20_000,
                    ..BenchConfig::default()
                };
                bench::run_bench(t.clone(), &cfg).unwrap().throughput
            })
            .fold(0.0, f64::max)
    };
    let h = best(IndexKind::Hermit);
    let b = best(IndexKind::Baseline);
    verdict(h > b, format!("hermit {h:.0} ops/s, baseline {b:.0} ops/s"))
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 11] = [
        (1, "exactness", exactness),
        (2, "single_leaf", single_leaf),
        (3, "outlier_ratio", outlier_ratio),
        (4, "epsilon_semantics", epsilon_semantics),
        (5, "memory_trend", memory_trend),
        (6, "noise_vs_cm", noise_vs_cm),
        (7, "false_positive_trend", false_positive_trend),
        (8, "maintenance", maintenance),
        (9, "construction_cost", construction_cost),
        (10, "parallel_determinism", parallel_determinism),
        (11, "insert_throughput", insert_throughput),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, f) in criteria {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {name}: {} [{:.1}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
