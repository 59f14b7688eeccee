//! `hermit`: generate datasets, build indexes, run benchmarks.
//!
//! Exit status: 0 ok, 2 usage error, 3 data error (missing or malformed
//! file, unknown column), 4 verification failure, 5 unknown index kind.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hermit_core::bench::{self, BenchConfig, MemoryBreakdown, TraceConfig, Workload};
use hermit_core::datagen::{self, NoiseModel, WorkloadKind, WorkloadSpec};
use hermit_core::engine::{Engine, IndexKind};
use hermit_core::table::{ingest, IdScheme};
use hermit_core::trs::TrsParams;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const EXIT_UNKNOWN_INDEX: u8 = 5;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Verify(String),
    UnknownIndex(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Verify(_) => EXIT_VERIFY,
            Failure::UnknownIndex(_) => EXIT_UNKNOWN_INDEX,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Verify(m) | Failure::UnknownIndex(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

type Outcome<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "hermit", version, about = "Correlation-based secondary indexing benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Generate(GenerateArgs),
    /// Build indexes over a dataset and print their statistics.
    Build(BuildArgs),
    /// Run a lookup or mutation workload.
    Bench(BenchArgs),
    /// Trace lookup throughput and memory across staged reorganizations.
    ReorgTrace(TraceArgs),
    /// Memory breakdown as the number of indexes grows.
    Memory(MemoryArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "linear")]
    kind: String,
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    /// Fraction of rows replaced by noise.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Redraw noise within this fraction of the host span around the clean
    /// value instead of over the whole span.
    #[arg(long)]
    noise_spread: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra target columns `E0..` (linear and sigmoid only).
    #[arg(long, default_value_t = 0)]
    extra_targets: usize,
    #[arg(long, default_value_t = 100)]
    stocks: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct IndexArgs {
    #[arg(long)]
    data: PathBuf,
    /// hermit, baseline or cm.
    #[arg(long, default_value = "hermit")]
    index: String,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    host: Option<String>,
    /// TRS-Tree parameter overrides, `key=value` (repeatable or comma separated).
    #[arg(long = "params", value_delimiter = ',')]
    params: Vec<String>,
    #[arg(long, default_value = "logical")]
    scheme: String,
    #[arg(long, default_value_t = bench::DEFAULT_CM_WIDTH)]
    cm_target_width: f64,
    #[arg(long, default_value_t = bench::DEFAULT_CM_WIDTH)]
    cm_host_width: f64,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    index: IndexArgs,
    /// Dump every TRS-Tree node.
    #[arg(long)]
    stats: bool,
    /// Construction workers.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, default_value_t = 1)]
    indexes: usize,
    /// range, point, insert or mixed.
    #[arg(long, default_value = "range")]
    workload: String,
    #[arg(long, default_value_t = 0.0001)]
    selectivity: f64,
    #[arg(long, default_value_t = 1000)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Cross-check every lookup against a full scan (forces one client).
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Dataset; generated from `--kind`/`--rows` when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "sigmoid")]
    kind: String,
    #[arg(long, default_value_t = 200_000)]
    rows: usize,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    initial: usize,
    #[arg(long, default_value_t = 5.0)]
    interval: f64,
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 1.0)]
    sample: f64,
    #[arg(long, default_value_t = 0.0001)]
    selectivity: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "params", value_delimiter = ',')]
    params: Vec<String>,
    #[arg(long, default_value = "logical")]
    scheme: String,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct MemoryArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    indexes: usize,
    /// Index kinds to compare.
    #[arg(long, value_delimiter = ',', default_value = "hermit,baseline")]
    kinds: Vec<String>,
    #[arg(long = "params", value_delimiter = ',')]
    params: Vec<String>,
    #[arg(long, default_value = "logical")]
    scheme: String,
    #[arg(long, default_value_t = bench::DEFAULT_CM_WIDTH)]
    cm_target_width: f64,
    #[arg(long, default_value_t = bench::DEFAULT_CM_WIDTH)]
    cm_host_width: f64,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Build(a) => build(a),
        Command::Bench(a) => run_bench(a),
        Command::ReorgTrace(a) => reorg_trace(a),
        Command::Memory(a) => memory(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hermit: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// `HERMIT_SEED` wins over `--seed`.
fn effective_seed(flag: u64) -> Outcome<u64> {
    match std::env::var("HERMIT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("HERMIT_SEED `{v}` is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn index_kind(s: &str) -> Outcome<IndexKind> {
    s.parse()
        .map_err(|_| Failure::UnknownIndex(format!("unknown index kind `{s}` (expected hermit, baseline or cm)")))
}

fn scheme(s: &str) -> Outcome<IdScheme> {
    bench::parse_scheme(s).map_err(usage)
}

fn params(overrides: &[String], seed: u64) -> Outcome<TrsParams> {
    let mut p = TrsParams {
        seed,
        ..TrsParams::default()
    };
    for kv in overrides.iter().filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("parameter `{kv}` is not key=value")))?;
        p.set(k.trim(), v.trim()).map_err(usage)?;
    }
    p.validate().map_err(usage)?;
    Ok(p)
}

fn load(path: &Path, scheme: IdScheme) -> Outcome<hermit_core::Table> {
    bench::load_table(path, scheme).map_err(data)
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Outcome {
    let Some(path) = path else { return Ok(()) };
    let file = File::create(path).map_err(|e| data(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(data)?;
    writeln!(w).and_then(|_| w.flush()).map_err(data)
}

fn print_memory(m: &MemoryBreakdown) {
    println!(
        "memory: total={} base_table={} primary_index={} host_index={} trs_nodes={} outlier_buffers={} baseline_index={} correlation_map={}",
        m.total, m.base_table, m.primary_index, m.host_index, m.trs_nodes, m.outlier_buffers, m.baseline_index, m.correlation_map
    );
}

fn generate(a: GenerateArgs) -> Outcome {
    let kind: WorkloadKind = a.kind.parse().map_err(usage)?;
    let spec = WorkloadSpec {
        kind,
        row_count: a.rows,
        noise_pct: a.noise,
        noise: a.noise_spread.map_or(NoiseModel::Uniform, NoiseModel::Local),
        seed: effective_seed(a.seed)?,
        extra_targets: a.extra_targets,
        stocks: a.stocks,
    };
    spec.validate().map_err(usage)?;
    let t = Instant::now();
    let table = datagen::generate(&spec, IdScheme::Logical).map_err(data)?;
    ingest::save(&table, &a.out).map_err(data)?;
    println!(
        "generated {} rows ({} noise) kind={} seed={} -> {} in {:.3}s",
        table.live_count(),
        spec.noise_rows(),
        a.kind,
        spec.seed,
        a.out.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

fn build(a: BuildArgs) -> Outcome {
    let kind = index_kind(&a.index.index)?;
    let scheme = scheme(&a.index.scheme)?;
    let p = params(&a.index.params, effective_seed(0)?)?;
    if a.threads == 0 {
        return Err(usage("threads must be >= 1"));
    }
    let table = load(&a.index.data, scheme)?;
    let (target, host) = bench::index_columns(&table, a.index.target.as_deref(), a.index.host.as_deref(), 1).map_err(data)?[0];
    let names = (table.schema()[target].name.clone(), table.schema()[host].name.clone());
    let rows = table.live_count();
    let engine = Engine::new(table);
    let t = Instant::now();
    let id = match kind {
        IndexKind::Hermit => engine.create_hermit_index_with(target, host, p, a.threads),
        IndexKind::Baseline => engine.create_baseline_index(target),
        IndexKind::Cm => engine.create_cm_index(target, host, a.index.cm_target_width, a.index.cm_host_width),
    }
    .map_err(data)?;
    let secs = t.elapsed().as_secs_f64();
    println!(
        "built {} index on {} (host {}) over {rows} rows in {secs:.3}s",
        kind.name(),
        names.0,
        names.1
    );
    if kind == IndexKind::Hermit {
        engine
            .with_trs(id, |trs| {
                let (leaves, internal, height) = trs.shape();
                let s = trs.build_stats();
                println!(
                    "tree: leaves={leaves} internal={internal} height={height} pairs_visited={} regressions={} prechecked_splits={}",
                    s.pairs_visited, s.regressions, s.prechecked_splits
                );
                if a.stats {
                    print!("{}", trs.stats_dump());
                }
            })
            .map_err(data)?;
    }
    print_memory(&MemoryBreakdown::from_report(&engine.memory_report()));
    Ok(())
}

fn run_bench(a: BenchArgs) -> Outcome {
    let kind = index_kind(&a.index.index)?;
    let scheme = scheme(&a.index.scheme)?;
    let seed = effective_seed(a.seed)?;
    let workload: Workload = a.workload.parse().map_err(usage)?;
    let cfg = BenchConfig {
        data: Some(a.index.data.display().to_string()),
        index: kind,
        target: a.index.target.clone(),
        host: a.index.host.clone(),
        indexes: a.indexes,
        workload,
        selectivity: a.selectivity,
        ops: a.ops,
        scheme,
        seed,
        threads: a.threads,
        verify: a.verify,
        params: params(&a.index.params, seed)?,
        cm_target_width: a.index.cm_target_width,
        cm_host_width: a.index.cm_host_width,
        warmup_fraction: bench::WARMUP_FRACTION,
    };
    cfg.validate().map_err(usage)?;
    let table = load(&a.index.data, scheme)?;
    let report = bench::run_bench(table, &cfg).map_err(data)?;
    println!(
        "{} {:?} ops={} measured={} throughput={:.1} ops/s build={:.3}s",
        kind.name(),
        workload,
        report.ops,
        report.measured_ops,
        report.throughput,
        report.build_secs
    );
    let f = &report.time_fractions;
    println!(
        "fractions: index={:.3} host_scan={:.3} primary={:.3} fetch={:.3} table_write={:.3} host_index_write={:.3} secondary_write={:.3}",
        f.index, f.host_scan, f.primary, f.fetch, f.table_write, f.host_index_write, f.secondary_write
    );
    if let (Some(fp), Some(c)) = (report.false_positive_ratio, report.mean_candidates) {
        println!("false_positive_ratio={fp:.4} mean_candidates={c:.1}");
    }
    print_memory(&report.memory);
    write_json(a.json.as_deref(), &report)?;
    if let Some(v) = report.verification {
        println!("verification: checked={} mismatches={}", v.checked, v.mismatches);
        if v.mismatches > 0 {
            return Err(Failure::Verify(format!("{} of {} lookups differ from the scan oracle", v.mismatches, v.checked)));
        }
    }
    Ok(())
}

fn reorg_trace(a: TraceArgs) -> Outcome {
    let scheme = scheme(&a.scheme)?;
    let seed = effective_seed(a.seed)?;
    let cfg = TraceConfig {
        data: a.data.as_ref().map(|p| p.display().to_string()),
        target: a.target,
        host: a.host,
        initial_rows: a.initial,
        interval_secs: a.interval,
        fraction: a.fraction,
        duration_secs: a.duration,
        sample_secs: a.sample,
        selectivity: a.selectivity,
        threads: a.threads,
        seed,
        params: params(&a.params, seed)?,
    };
    cfg.validate().map_err(usage)?;
    let table = match &a.data {
        Some(p) => load(p, scheme)?,
        None => {
            let kind: WorkloadKind = a.kind.parse().map_err(usage)?;
            let spec = WorkloadSpec {
                seed,
                ..WorkloadSpec::new(kind, a.rows)
            };
            datagen::generate(&spec, scheme).map_err(data)?
        }
    };
    let report = bench::reorg_trace(&table, &cfg).map_err(data)?;
    println!(
        "rows={} inserted={} insert={:.3}s stages={}",
        report.rows,
        report.inserted_rows,
        report.insert_secs,
        report.stages.len()
    );
    for s in &report.samples {
        println!(
            "t={:.2} lookups/s={:.1} memory={} trs_nodes={} outlier_buffers={}{}",
            s.t,
            s.lookups_per_sec,
            s.memory_total,
            s.trs_nodes,
            s.outlier_buffers,
            if s.reorganizing { " reorganizing" } else { "" }
        );
    }
    for s in &report.stages {
        println!(
            "stage subtrees={:?} start={:.2} end={:.2} leaves_created={} pairs_scanned={}",
            s.subtrees, s.start, s.end, s.stats.leaves_created, s.stats.pairs_scanned
        );
    }
    println!("memory before={} after={}", report.memory_before.total, report.memory_after.total);
    write_json(a.json.as_deref(), &report)
}

fn memory(a: MemoryArgs) -> Outcome {
    let kinds = a.kinds.iter().map(|k| index_kind(k)).collect::<Outcome<Vec<_>>>()?;
    let scheme = scheme(&a.scheme)?;
    let p = params(&a.params, effective_seed(0)?)?;
    if a.indexes == 0 {
        return Err(usage("indexes must be >= 1"));
    }
    let table = load(&a.data, scheme)?;
    let scaling = bench::memory_scaling(&table, &kinds, a.indexes, &p, (a.cm_target_width, a.cm_host_width)).map_err(data)?;
    println!("{:<9} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12}", "kind", "indexes", "total", "host_index", "trs_nodes", "outliers", "secondary");
    for pt in &scaling.points {
        let m = &pt.memory;
        println!(
            "{:<9} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12}",
            pt.kind.name(),
            pt.indexes,
            m.total,
            m.host_index,
            m.trs_nodes,
            m.outlier_buffers,
            m.secondary()
        );
    }
    write_json(a.json.as_deref(), &scaling)
}
