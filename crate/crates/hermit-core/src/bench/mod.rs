//! Benchmark driver shared by the `hermit` binary and the test suites.
//!
//! A run loads a table, registers one or more indexes of a single kind,
//! executes a seeded operation stream and reports throughput, per-step time
//! fractions, false positives and a memory breakdown. The first
//! [`WARMUP_FRACTION`] of every client's operations is executed but not
//! measured.

mod memory;
mod trace;

pub use memory::{memory_scaling, MemoryBreakdown, MemoryPoint, MemoryScaling};
pub use trace::{reorg_trace, TraceConfig, TraceReport, TraceSample, TraceStage};

use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_queries, QueryShape};
use crate::engine::{Engine, IndexId, IndexKind, LookupMetrics, MutationMetrics};
use crate::error::{Error, Result};
use crate::range::ValueRange;
use crate::table::{ingest, IdScheme, Table, Value};
use crate::trs::TrsParams;

/// Bumped whenever a field of a report changes meaning or disappears.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const WARMUP_FRACTION: f64 = 0.1;
/// Primary key column of every generated dataset.
pub const PK_COLUMN: usize = 0;
pub const DEFAULT_CM_WIDTH: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    Range,
    Point,
    Insert,
    /// Half lookups, a quarter inserts, a quarter deletes.
    Mixed,
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(Workload::Range),
            "point" => Ok(Workload::Point),
            "insert" => Ok(Workload::Insert),
            "mixed" => Ok(Workload::Mixed),
            _ => Err(Error::InvalidParam(format!("unknown workload `{s}`"))),
        }
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hermit" => Ok(IndexKind::Hermit),
            "baseline" => Ok(IndexKind::Baseline),
            "cm" => Ok(IndexKind::Cm),
            _ => Err(Error::InvalidParam(format!("unknown index kind `{s}`"))),
        }
    }
}

pub fn parse_scheme(s: &str) -> Result<IdScheme> {
    match s {
        "logical" => Ok(IdScheme::Logical),
        "physical" => Ok(IdScheme::Physical),
        _ => Err(Error::InvalidParam(format!("unknown identifier scheme `{s}`"))),
    }
}

/// Everything a run depends on; echoed verbatim into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub data: Option<String>,
    pub index: IndexKind,
    /// Target column of the first index; `None` picks the dataset default.
    pub target: Option<String>,
    pub host: Option<String>,
    /// Indexes registered; lookups go to the first one.
    pub indexes: usize,
    pub workload: Workload,
    pub selectivity: f64,
    pub ops: usize,
    pub scheme: IdScheme,
    pub seed: u64,
    pub threads: usize,
    pub verify: bool,
    pub params: TrsParams,
    pub cm_target_width: f64,
    pub cm_host_width: f64,
    pub warmup_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            data: None,
            index: IndexKind::Hermit,
            target: None,
            host: None,
            indexes: 1,
            workload: Workload::Range,
            selectivity: 0.0001,
            ops: 1000,
            scheme: IdScheme::Logical,
            seed: 0,
            threads: 1,
            verify: false,
            params: TrsParams::default(),
            cm_target_width: DEFAULT_CM_WIDTH,
            cm_host_width: DEFAULT_CM_WIDTH,
            warmup_fraction: WARMUP_FRACTION,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.ops == 0 {
            return bad("ops must be >= 1");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.indexes == 0 {
            return bad("at least one index is required");
        }
        if !(self.selectivity > 0.0 && self.selectivity <= 1.0) {
            return bad("selectivity must lie in (0, 1]");
        }
        if !(self.cm_target_width > 0.0 && self.cm_host_width > 0.0) {
            return bad("bucket widths must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup fraction must lie in [0, 1)");
        }
        self.params.validate()
    }
}

/// Share of measured time spent in each step. Lookup steps and mutation
/// steps share one normalisation, so the fields always sum to 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeFractions {
    pub index: f64,
    pub host_scan: f64,
    pub primary: f64,
    pub fetch: f64,
    pub table_write: f64,
    pub host_index_write: f64,
    pub secondary_write: f64,
}

impl TimeFractions {
    pub fn sum(&self) -> f64 {
        self.index
            + self.host_scan
            + self.primary
            + self.fetch
            + self.table_write
            + self.host_index_write
            + self.secondary_write
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct StepTotals {
    lookup: [Duration; 4],
    mutation: [Duration; 3],
    lookups: usize,
    candidates: usize,
    results: usize,
}

impl StepTotals {
    fn add_lookup(&mut self, m: &LookupMetrics) {
        self.lookup[0] += m.index_time;
        self.lookup[1] += m.host_time;
        self.lookup[2] += m.primary_time.unwrap_or_default();
        self.lookup[3] += m.fetch_time;
        self.lookups += 1;
        self.candidates += m.candidates;
        self.results += m.results;
    }

    fn add_mutation(&mut self, m: &MutationMetrics) {
        self.mutation[0] += m.table_time;
        self.mutation[1] += m.host_time;
        self.mutation[2] += m.index_time;
    }

    fn merge(&mut self, o: &StepTotals) {
        for i in 0..4 {
            self.lookup[i] += o.lookup[i];
        }
        for i in 0..3 {
            self.mutation[i] += o.mutation[i];
        }
        self.lookups += o.lookups;
        self.candidates += o.candidates;
        self.results += o.results;
    }

    fn busy(&self) -> Duration {
        self.lookup.iter().chain(&self.mutation).sum()
    }

    fn fractions(&self) -> TimeFractions {
        let all: Vec<f64> = self
            .lookup
            .iter()
            .chain(&self.mutation)
            .map(|d| d.as_secs_f64())
            .collect();
        let total: f64 = all.iter().sum();
        let f = |i: usize| if total > 0.0 { all[i] / total } else { 0.0 };
        let mut out = TimeFractions {
            index: f(0),
            host_scan: f(1),
            primary: f(2),
            fetch: f(3),
            table_write: f(4),
            host_index_write: f(5),
            secondary_write: f(6),
        };
        if total == 0.0 {
            // Below clock resolution: attribute everything to the first step.
            out.index = 1.0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub checked: usize,
    pub mismatches: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub leaves: usize,
    pub internal: usize,
    pub height: usize,
}

/// Output of one `bench` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub seed: u64,
    pub rows: usize,
    pub build_secs: f64,
    pub ops: usize,
    pub warmup_ops: usize,
    pub measured_ops: usize,
    pub measured_secs: f64,
    /// Measured operations per second.
    pub throughput: f64,
    pub time_fractions: TimeFractions,
    /// Failed candidates over all candidates of the measured lookups.
    pub false_positive_ratio: Option<f64>,
    pub mean_candidates: Option<f64>,
    pub verification: Option<Verification>,
    pub tree: Option<TreeShape>,
    pub memory: MemoryBreakdown,
}

pub fn load_table(path: &Path, scheme: IdScheme) -> Result<Table> {
    ingest::load(path, PK_COLUMN, scheme)
}

/// Default `(target, host)` for the datasets the generator writes.
pub fn default_columns(table: &Table) -> Result<(usize, usize)> {
    for (t, h) in [("C", "B"), ("high0", "low0"), ("avg", "r0")] {
        if let (Ok(t), Ok(h)) = (table.column_index(t), table.column_index(h)) {
            return Ok((t, h));
        }
    }
    Err(Error::InvalidParam(
        "no default target/host columns in this dataset; pass --target and --host".into(),
    ))
}

/// `(target, host)` of every index of a run: the requested pair first, then
/// the dataset's further correlated pairs (`Ek -> C`, `highk -> lowk`,
/// `rk -> avg`).
pub fn index_columns(
    table: &Table,
    target: Option<&str>,
    host: Option<&str>,
    count: usize,
) -> Result<Vec<(usize, usize)>> {
    let first = match (target, host) {
        (Some(t), Some(h)) => (table.column_index(t)?, table.column_index(h)?),
        (None, None) => default_columns(table)?,
        (Some(t), None) => (table.column_index(t)?, default_columns(table)?.1),
        (None, Some(h)) => (default_columns(table)?.0, table.column_index(h)?),
    };
    let mut out = vec![first];
    let mut k = 0;
    while out.len() < count {
        let pair = [
            (format!("E{k}"), "C".to_string()),
            (format!("high{}", k + 1), format!("low{}", k + 1)),
            (format!("r{}", k + 1), "avg".to_string()),
        ]
        .into_iter()
        .find_map(|(t, h)| Some((table.column_index(&t).ok()?, table.column_index(&h).ok()?)));
        match pair {
            Some(p) => out.push(p),
            None => {
                return Err(Error::InvalidParam(format!(
                    "dataset has columns for {} indexes, {count} requested",
                    out.len()
                )))
            }
        }
        k += 1;
    }
    Ok(out)
}

/// Registers one index of `kind` per column pair. For baseline indexes the
/// host indexes are still built: they are part of the database either way.
pub fn register_indexes(
    engine: &Engine,
    kind: IndexKind,
    pairs: &[(usize, usize)],
    params: &TrsParams,
    cm_widths: (f64, f64),
) -> Result<Vec<IndexId>> {
    pairs
        .iter()
        .map(|&(t, h)| match kind {
            IndexKind::Hermit => engine.create_hermit_index(t, h, params.clone()),
            IndexKind::Baseline => {
                engine.ensure_host_index(h)?;
                engine.create_baseline_index(t)
            }
            IndexKind::Cm => engine.create_cm_index(t, h, cm_widths.0, cm_widths.1),
        })
        .collect()
}

fn sorted_keys(rows: impl IntoIterator<Item = Vec<Value>>) -> Vec<i64> {
    let mut v: Vec<i64> = rows
        .into_iter()
        .filter_map(|r| r[PK_COLUMN].as_i64())
        .collect();
    v.sort_unstable();
    v
}

/// Primary keys of live rows whose `column` lies in `range`, by full scan.
pub fn oracle_keys(table: &Table, column: usize, range: &ValueRange) -> Vec<i64> {
    let mut v: Vec<i64> = table
        .scan(column, range)
        .into_iter()
        .map(|s| table.primary_key_at(s))
        .collect();
    v.sort_unstable();
    v
}

enum Op {
    Lookup(ValueRange),
    Insert(Vec<Value>),
    Delete,
}

struct Client {
    ops: Vec<Op>,
    keys: Vec<i64>,
    rng: ChaCha8Rng,
}

/// Splits `table` into the rows present at start and the rows inserted by
/// the workload.
fn hold_out(table: Table, count: usize) -> Result<(Table, Vec<Vec<Value>>)> {
    let live: Vec<usize> = table.live_slots().collect();
    if count >= live.len() {
        return Err(Error::InvalidParam(format!(
            "workload inserts {count} rows but the dataset only has {}",
            live.len()
        )));
    }
    if count == 0 {
        return Ok((table, Vec::new()));
    }
    let keep = live.len() - count;
    let mut base = Table::create(table.schema().to_vec(), table.primary_key_column(), table.id_scheme())?;
    for &s in &live[..keep] {
        base.insert(&table.row(s))?;
    }
    let held = live[keep..].iter().map(|&s| table.row(s)).collect();
    Ok((base, held))
}

/// Runs the workload described by `cfg` over `table`.
pub fn run_bench(table: Table, cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if table.id_scheme() != cfg.scheme {
        return Err(Error::SchemeMismatch);
    }
    if table.live_count() == 0 {
        return Err(Error::EmptyTable);
    }
    let threads = if cfg.verify { 1 } else { cfg.threads };
    let inserts = match cfg.workload {
        Workload::Insert => cfg.ops,
        Workload::Mixed => (0..cfg.ops).filter(|i| i % 4 == 2).count(),
        _ => 0,
    };
    let pairs = index_columns(&table, cfg.target.as_deref(), cfg.host.as_deref(), cfg.indexes)?;
    let target = pairs[0].0;
    let shape = match cfg.workload {
        Workload::Point => QueryShape::Point,
        _ => QueryShape::Range(cfg.selectivity),
    };
    let queries = generate_queries(&table, target, shape, cfg.ops, cfg.seed)?;
    let (base, held) = hold_out(table, inserts)?;
    let rows = base.live_count();
    let keys: Vec<i64> = base.live_slots().map(|s| base.primary_key_at(s)).collect();

    let engine = Engine::new(base);
    let t = Instant::now();
    let ids = register_indexes(&engine, cfg.index, &pairs, &cfg.params, (cfg.cm_target_width, cfg.cm_host_width))?;
    let build_secs = t.elapsed().as_secs_f64();
    let id = ids[0];

    // Operation stream, dealt round-robin to the clients.
    let mut held = held.into_iter();
    let mut clients: Vec<Client> = (0..threads)
        .map(|c| Client {
            ops: Vec::new(),
            keys: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9e37_79b9 * (c as u64 + 1))),
        })
        .collect();
    for (i, k) in keys.iter().enumerate() {
        clients[i % threads].keys.push(*k);
    }
    for (i, q) in queries.into_iter().enumerate() {
        let op = match cfg.workload {
            Workload::Range | Workload::Point => Op::Lookup(q),
            Workload::Insert => Op::Insert(held.next().expect("held-out row per insert")),
            Workload::Mixed => match i % 4 {
                2 => Op::Insert(held.next().expect("held-out row per insert")),
                3 => Op::Delete,
                _ => Op::Lookup(q),
            },
        };
        clients[i % threads].ops.push(op);
    }

    let warm: Vec<usize> = clients
        .iter()
        .map(|c| (c.ops.len() as f64 * cfg.warmup_fraction).floor() as usize)
        .collect();
    let barrier = Barrier::new(threads + 1);
    let engine = Arc::new(engine);
    let verify = cfg.verify;
    let (outcomes, measured_wall) = std::thread::scope(|s| -> Result<_> {
        let handles: Vec<_> = clients
            .into_iter()
            .zip(&warm)
            .map(|(client, &warm)| {
                let engine = engine.clone();
                let barrier = &barrier;
                s.spawn(move || run_client(&engine, id, target, client, warm, barrier, verify))
            })
            .collect();
        barrier.wait();
        let start = Instant::now();
        let outcomes: Vec<Result<(StepTotals, Verification)>> = handles
            .into_iter()
            .map(|h| h.join().expect("benchmark client panicked"))
            .collect();
        Ok((outcomes, start.elapsed()))
    })?;
    let mut totals = StepTotals::default();
    let mut verification = Verification::default();
    for o in outcomes {
        let (t, v) = o?;
        totals.merge(&t);
        verification.checked += v.checked;
        verification.mismatches += v.mismatches;
    }

    let warmup_ops: usize = warm.iter().sum();
    let measured_ops = cfg.ops - warmup_ops;
    // With verification the oracle runs between operations, so only the
    // operations themselves are timed.
    let measured = if verify { totals.busy() } else { measured_wall };
    let measured_secs = measured.as_secs_f64();
    let lookups = totals.lookups > 0;
    let tree = engine
        .with_trs(id, |t| {
            let (leaves, internal, height) = t.shape();
            TreeShape { leaves, internal, height }
        })
        .ok();
    Ok(BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        seed: cfg.seed,
        rows,
        build_secs,
        ops: cfg.ops,
        warmup_ops,
        measured_ops,
        measured_secs,
        throughput: if measured_secs > 0.0 { measured_ops as f64 / measured_secs } else { 0.0 },
        time_fractions: totals.fractions(),
        false_positive_ratio: lookups.then(|| {
            if totals.candidates == 0 {
                0.0
            } else {
                (totals.candidates - totals.results) as f64 / totals.candidates as f64
            }
        }),
        mean_candidates: lookups.then(|| totals.candidates as f64 / totals.lookups as f64),
        verification: verify.then_some(verification),
        tree,
        memory: MemoryBreakdown::from_report(&engine.memory_report()),
    })
}

fn run_client(
    engine: &Engine,
    id: IndexId,
    target: usize,
    mut client: Client,
    warm: usize,
    barrier: &Barrier,
    verify: bool,
) -> Result<(StepTotals, Verification)> {
    let mut totals = StepTotals::default();
    let mut v = Verification::default();
    let ops = std::mem::take(&mut client.ops);
    let mut waited = false;
    let mut outcome = Ok(());
    for (i, op) in ops.into_iter().enumerate() {
        if i == warm {
            barrier.wait();
            waited = true;
        }
        outcome = run_op(engine, id, target, &mut client, op, verify, &mut totals, &mut v, i >= warm);
        if outcome.is_err() {
            break;
        }
    }
    // Every client meets the barrier exactly once, even on failure.
    if !waited {
        barrier.wait();
    }
    outcome.map(|_| (totals, v))
}

#[allow(clippy::too_many_arguments)]
fn run_op(
    engine: &Engine,
    id: IndexId,
    target: usize,
    client: &mut Client,
    op: Op,
    verify: bool,
    totals: &mut StepTotals,
    v: &mut Verification,
    measured: bool,
) -> Result<()> {
    match op {
        Op::Lookup(q) => {
            let (rows, m) = engine.lookup_with_metrics(id, &q, None)?;
            if measured {
                totals.add_lookup(&m);
            }
            if verify {
                v.checked += 1;
                if sorted_keys(rows) != oracle_keys(&engine.table(), target, &q) {
                    v.mismatches += 1;
                }
            }
        }
        Op::Insert(row) => {
            let key = row[PK_COLUMN].as_i64();
            let (_, m) = engine.insert_with_metrics(&row)?;
            if measured {
                totals.add_mutation(&m);
            }
            client.keys.extend(key);
        }
        Op::Delete => {
            if client.keys.is_empty() {
                return Ok(());
            }
            let k = client.rng.gen_range(0..client.keys.len());
            let key = client.keys.swap_remove(k);
            let (_, m) = engine.delete_with_metrics(key)?;
            if measured {
                totals.add_mutation(&m);
            }
        }
    }
    Ok(())
}
