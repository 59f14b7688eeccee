use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{index_columns, MemoryBreakdown, REPORT_SCHEMA_VERSION};
use crate::datagen::{generate_queries, QueryShape};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::table::Table;
use crate::trs::{ReorgStats, TrsParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub data: Option<String>,
    pub target: Option<String>,
    pub host: Option<String>,
    /// Rows (smallest target values first) present when the tree is built;
    /// the rest are inserted before the trace starts.
    pub initial_rows: usize,
    /// Seconds between staged reorganizations.
    pub interval_secs: f64,
    /// Share of the root's subtrees rebuilt per stage.
    pub fraction: f64,
    pub duration_secs: f64,
    pub sample_secs: f64,
    pub selectivity: f64,
    pub threads: usize,
    pub seed: u64,
    pub params: TrsParams,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            data: None,
            target: None,
            host: None,
            initial_rows: 10_000,
            interval_secs: 5.0,
            fraction: 0.25,
            duration_secs: 30.0,
            sample_secs: 1.0,
            selectivity: 0.0001,
            threads: 1,
            seed: 0,
            params: TrsParams::default(),
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if !(self.interval_secs > 0.0 && self.sample_secs > 0.0 && self.duration_secs > 0.0) {
            return bad("interval, sample period and duration must be positive");
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return bad("fraction must lie in (0, 1]");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.initial_rows == 0 {
            return bad("initial rows must be >= 1");
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    /// Seconds since the trace started, at the end of the window.
    pub t: f64,
    pub lookups_per_sec: f64,
    pub memory_total: usize,
    pub trs_nodes: usize,
    pub outlier_buffers: usize,
    pub reorganizing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStage {
    /// Child indices under the root; empty when the whole tree was rebuilt.
    pub subtrees: Vec<u32>,
    pub start: f64,
    pub end: f64,
    pub stats: ReorgStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub schema_version: u32,
    pub config: TraceConfig,
    pub rows: usize,
    pub inserted_rows: usize,
    pub insert_secs: f64,
    pub memory_before: MemoryBreakdown,
    pub memory_after: MemoryBreakdown,
    pub samples: Vec<TraceSample>,
    pub stages: Vec<TraceStage>,
}

/// Builds a TRS-Tree over the `initial_rows` smallest target values with
/// its root spanning the whole target range, inserts the remaining rows,
/// then keeps lookup clients busy while subtrees under the root are rebuilt
/// every `interval_secs`, `fraction` of them at a time.
pub fn reorg_trace(table: &Table, cfg: &TraceConfig) -> Result<TraceReport> {
    cfg.validate()?;
    let (target, host) = index_columns(table, cfg.target.as_deref(), cfg.host.as_deref(), 1)?[0];
    let full = table.column_range(target)?.ok_or(Error::EmptyTable)?;
    let queries = generate_queries(table, target, QueryShape::Range(cfg.selectivity), 4096, cfg.seed)?;

    let mut slots: Vec<(f64, usize)> = table
        .live_slots()
        .filter_map(|s| Some((table.value_f64(target, s)?, s)))
        .collect();
    slots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let split = cfg.initial_rows.min(slots.len());
    let mut initial = Table::create(table.schema().to_vec(), table.primary_key_column(), table.id_scheme())?;
    for &(_, s) in &slots[..split] {
        initial.insert(&table.row(s))?;
    }
    let engine = Engine::new(initial);
    let id = engine.create_hermit_index_over(target, host, Some(full), cfg.params.clone(), 1)?;
    let t = Instant::now();
    for &(_, s) in &slots[split..] {
        engine.insert(&table.row(s))?;
    }
    let insert_secs = t.elapsed().as_secs_f64();
    // Only the staged rebuilds below reorganize the tree.
    engine.with_trs(id, |t| t.clear_queue())?;
    let memory_before = MemoryBreakdown::from_report(&engine.memory_report());

    let fanout = cfg.params.node_fanout;
    let root_is_leaf = engine.with_trs(id, |t| t.shape().1 == 0)?;
    let per_stage = ((cfg.fraction * fanout as f64).ceil() as usize).clamp(1, fanout);
    let stage_plan: Vec<Vec<u32>> = if root_is_leaf {
        vec![Vec::new()]
    } else {
        (0..fanout as u32).collect::<Vec<_>>().chunks(per_stage).map(|c| c.to_vec()).collect()
    };

    let stop = AtomicBool::new(false);
    let reorganizing = AtomicBool::new(false);
    let done = AtomicU64::new(0);
    let start = Instant::now();
    let duration = Duration::from_secs_f64(cfg.duration_secs);
    let (samples, stages) = std::thread::scope(|s| -> Result<_> {
        let clients: Vec<_> = (0..cfg.threads)
            .map(|c| {
                let (engine, queries, stop, done) = (&engine, &queries, &stop, &done);
                s.spawn(move || -> Result<()> {
                    let mut i = c;
                    while !stop.load(Ordering::Relaxed) {
                        engine.lookup(id, &queries[i % queries.len()], None)?;
                        done.fetch_add(1, Ordering::Relaxed);
                        i += cfg.threads;
                    }
                    Ok(())
                })
            })
            .collect();

        let reorg = {
            let (engine, stop, reorganizing) = (&engine, &stop, &reorganizing);
            let plan = &stage_plan;
            s.spawn(move || -> Result<Vec<TraceStage>> {
                let mut stages = Vec::new();
                for (k, subtrees) in plan.iter().enumerate() {
                    let at = Duration::from_secs_f64(cfg.interval_secs * (k + 1) as f64);
                    while start.elapsed() < at {
                        if stop.load(Ordering::Relaxed) {
                            return Ok(stages);
                        }
                        std::thread::sleep(Duration::from_millis(5));
                    }
                    let t0 = start.elapsed().as_secs_f64();
                    reorganizing.store(true, Ordering::Relaxed);
                    engine.with_trs(id, |t| -> Result<()> {
                        if subtrees.is_empty() {
                            return t.schedule_rebuild(&[]);
                        }
                        subtrees.iter().try_for_each(|&c| t.schedule_rebuild(&[c]))
                    })??;
                    let stats = engine.reorganize(usize::MAX);
                    reorganizing.store(false, Ordering::Relaxed);
                    stages.push(TraceStage {
                        subtrees: subtrees.clone(),
                        start: t0,
                        end: start.elapsed().as_secs_f64(),
                        stats: stats?,
                    });
                }
                Ok(stages)
            })
        };

        let mut samples = Vec::new();
        let mut last = (Duration::ZERO, 0u64);
        let period = Duration::from_secs_f64(cfg.sample_secs);
        let mut next = period;
        while last.0 < duration {
            let now = start.elapsed();
            if now < next {
                std::thread::sleep((next - now).min(Duration::from_millis(20)));
                continue;
            }
            let count = done.load(Ordering::Relaxed);
            let mem = MemoryBreakdown::from_report(&engine.memory_report());
            let window = (now - last.0).as_secs_f64();
            samples.push(TraceSample {
                t: now.as_secs_f64(),
                lookups_per_sec: (count - last.1) as f64 / window,
                memory_total: mem.total,
                trs_nodes: mem.trs_nodes,
                outlier_buffers: mem.outlier_buffers,
                reorganizing: reorganizing.load(Ordering::Relaxed),
            });
            last = (now, count);
            next += period;
        }
        stop.store(true, Ordering::Relaxed);
        for c in clients {
            c.join().expect("lookup client panicked")?;
        }
        let stages = reorg.join().expect("reorganizer panicked")?;
        Ok((samples, stages))
    })?;

    Ok(TraceReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        rows: slots.len(),
        inserted_rows: slots.len() - split,
        insert_secs,
        memory_before,
        memory_after: MemoryBreakdown::from_report(&engine.memory_report()),
        samples,
        stages,
    })
}
