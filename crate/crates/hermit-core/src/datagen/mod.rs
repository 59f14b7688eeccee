//! Seeded synthetic tables and query sets.

use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::range::ValueRange;
use crate::table::{ColumnDef, ColumnType, IdScheme, Table, Value};

/// Linear host column: `B = LINEAR_SLOPE * C + LINEAR_INTERCEPT`.
pub const LINEAR_SLOPE: i64 = 2;
pub const LINEAR_INTERCEPT: i64 = 1000;
/// Smallest domain `C` is drawn from; larger tables widen it to `row_count`.
pub const DEFAULT_TARGET_DOMAIN: u64 = 1_000_000;
/// Sigmoid midpoint sits at half the domain; the curve spans `±SIGMOID_SPREAD`
/// standard units over the domain.
pub const SIGMOID_SPREAD: f64 = 5.0;
pub const SENSOR_READINGS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Linear,
    Sigmoid,
    StockLike,
    SensorLike,
}

impl FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(WorkloadKind::Linear),
            "sigmoid" => Ok(WorkloadKind::Sigmoid),
            "stock" | "stocklike" | "stock-like" => Ok(WorkloadKind::StockLike),
            "sensor" | "sensorlike" | "sensor-like" => Ok(WorkloadKind::SensorLike),
            _ => Err(Error::InvalidParam(format!("unknown workload kind `{s}`"))),
        }
    }
}

/// How a noise row's host value is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "model", content = "spread")]
pub enum NoiseModel {
    /// Uniform over the whole host range of the clean data.
    Uniform,
    /// Uniform within `±spread × host span` of the clean value.
    Local(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub row_count: usize,
    /// Fraction of rows whose host value is replaced by noise.
    pub noise_pct: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Extra target columns `E0..` correlated with the host (synthetic kinds).
    pub extra_targets: usize,
    /// Stock count for the stock-like table.
    pub stocks: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Linear,
            row_count: 10_000,
            noise_pct: 0.01,
            noise: NoiseModel::Uniform,
            seed: 0,
            extra_targets: 0,
            stocks: 100,
        }
    }
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, row_count: usize) -> Self {
        WorkloadSpec {
            kind,
            row_count,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_pct) {
            return Err(Error::InvalidParam("noise_pct must lie in [0, 1]".into()));
        }
        if let NoiseModel::Local(s) = self.noise {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParam("noise spread must be positive".into()));
            }
        }
        if self.kind == WorkloadKind::StockLike && self.stocks == 0 {
            return Err(Error::InvalidParam("stock-like tables need at least one stock".into()));
        }
        Ok(())
    }

    /// `⌈noise_pct × row_count⌉`, ignoring float dust below the integer.
    pub fn noise_rows(&self) -> usize {
        let x = self.noise_pct * self.row_count as f64;
        let r = x.round();
        let n = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
        (n as usize).min(self.row_count)
    }

    /// Domain `[0, D)` that target values of the synthetic kinds come from.
    pub fn target_domain(&self) -> u64 {
        DEFAULT_TARGET_DOMAIN.max(self.row_count as u64)
    }
}

/// Column layout of the generated table.
pub fn schema(spec: &WorkloadSpec) -> Vec<ColumnDef> {
    let mut cols = Vec::new();
    match spec.kind {
        WorkloadKind::Linear | WorkloadKind::Sigmoid => {
            let b = if spec.kind == WorkloadKind::Linear { ColumnType::I64 } else { ColumnType::F64 };
            cols.push(ColumnDef::new("A", ColumnType::I64));
            cols.push(ColumnDef::new("B", b));
            cols.push(ColumnDef::new("C", ColumnType::I64));
            cols.push(ColumnDef::new("D", ColumnType::I64));
            for k in 0..spec.extra_targets {
                cols.push(ColumnDef::new(format!("E{k}"), ColumnType::I64));
            }
        }
        WorkloadKind::StockLike => {
            cols.push(ColumnDef::new("day", ColumnType::I64));
            for s in 0..spec.stocks {
                cols.push(ColumnDef::new(format!("low{s}"), ColumnType::F64));
                cols.push(ColumnDef::new(format!("high{s}"), ColumnType::F64));
            }
        }
        WorkloadKind::SensorLike => {
            cols.push(ColumnDef::new("ts", ColumnType::I64));
            for s in 0..SENSOR_READINGS {
                cols.push(ColumnDef::new(format!("r{s}"), ColumnType::F64));
            }
            cols.push(ColumnDef::new("avg", ColumnType::F64));
        }
    }
    cols
}

/// Sigmoid host value for target `c` over `[0, domain)`.
pub fn sigmoid_host(c: f64, domain: f64) -> f64 {
    let x = (c - domain / 2.0) / (domain / (2.0 * SIGMOID_SPREAD));
    2.0 * domain / (1.0 + (-x).exp())
}

/// Extra target `E{k}` as a function of `C`.
pub fn extra_target(c: i64, k: usize) -> i64 {
    (k as i64 + 2) * c + 7 * k as i64
}

/// Reading `i` as a function of the latent concentration `x ∈ (0, 1]`.
pub fn sensor_reading(i: usize, x: f64) -> f64 {
    let p = 0.5 + 1.5 * i as f64 / (SENSOR_READINGS - 1) as f64;
    100.0 * (1.0 + i as f64 / 4.0) * x.powf(p) + i as f64
}

/// Generates the table described by `spec`, deterministically per seed.
pub fn generate(spec: &WorkloadSpec, scheme: IdScheme) -> Result<Table> {
    spec.validate()?;
    let mut table = Table::create(schema(spec), 0, scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows = spec.row_count;
    let mut noisy = vec![false; rows];
    for i in sample(&mut rng, rows, spec.noise_rows()) {
        noisy[i] = true;
    }
    match spec.kind {
        WorkloadKind::Linear | WorkloadKind::Sigmoid => synthetic(spec, &mut table, &mut rng, &noisy)?,
        WorkloadKind::StockLike => stock(spec, &mut table, &mut rng, &noisy)?,
        WorkloadKind::SensorLike => sensor(&mut table, &mut rng, &noisy)?,
    }
    Ok(table)
}

fn redraw(rng: &mut ChaCha8Rng, clean: f64, lo: f64, hi: f64, model: NoiseModel, integral: bool) -> f64 {
    let (a, b) = match model {
        NoiseModel::Uniform => (lo, hi),
        NoiseModel::Local(s) => (clean - s * (hi - lo), clean + s * (hi - lo)),
    };
    loop {
        let mut v = rng.gen_range(a..=b);
        if integral {
            v = v.round();
        }
        if v != clean {
            return v;
        }
    }
}

fn synthetic(spec: &WorkloadSpec, table: &mut Table, rng: &mut ChaCha8Rng, noisy: &[bool]) -> Result<()> {
    let domain = spec.target_domain();
    let linear = spec.kind == WorkloadKind::Linear;
    // distinct target values, in random order
    let cs: Vec<i64> = sample(rng, domain as usize, spec.row_count)
        .into_iter()
        .map(|c| c as i64)
        .collect();
    let host = |c: i64| {
        if linear {
            (LINEAR_SLOPE * c + LINEAR_INTERCEPT) as f64
        } else {
            sigmoid_host(c as f64, domain as f64)
        }
    };
    let (lo, hi) = if linear {
        (host(0), host(domain as i64 - 1))
    } else {
        (0.0, 2.0 * domain as f64)
    };
    let mut row = Vec::with_capacity(4 + spec.extra_targets);
    for (i, &c) in cs.iter().enumerate() {
        let mut b = host(c);
        if noisy[i] {
            b = redraw(rng, b, lo, hi, spec.noise, linear);
        }
        row.clear();
        row.push(Value::Int(i as i64 + 1));
        row.push(if linear { Value::Int(b as i64) } else { Value::Float(b) });
        row.push(Value::Int(c));
        row.push(Value::Int(rng.gen_range(0..1_000_000)));
        row.extend((0..spec.extra_targets).map(|k| Value::Int(extra_target(c, k))));
        table.insert(&row)?;
    }
    Ok(())
}

fn cents(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn stock(spec: &WorkloadSpec, table: &mut Table, rng: &mut ChaCha8Rng, noisy: &[bool]) -> Result<()> {
    let days = spec.row_count;
    let listing: Vec<usize> = (0..spec.stocks).map(|_| rng.gen_range(0..=days / 2)).collect();
    let mut price: Vec<f64> = (0..spec.stocks).map(|_| rng.gen_range(5.0..200.0)).collect();
    let mut row = Vec::with_capacity(1 + 2 * spec.stocks);
    for (day, &spike_day) in noisy.iter().enumerate() {
        row.clear();
        row.push(Value::Int(day as i64));
        for s in 0..spec.stocks {
            if day < listing[s] {
                row.push(Value::Null);
                row.push(Value::Null);
                continue;
            }
            price[s] = (price[s] * rng.gen_range(-0.02f64..0.02).exp()).clamp(1.0, 5_000.0);
            let low = cents(price[s] * (1.0 - rng.gen_range(0.0..0.01)));
            let mut high = cents(price[s] * (1.0 + rng.gen_range(0.0..0.01)));
            // single-day crashes: the low collapses while the high holds
            if spike_day && rng.gen_bool(0.5) {
                high = cents(low * rng.gen_range(1.3..2.5));
            }
            row.push(Value::Float(low));
            row.push(Value::Float(high.max(low)));
        }
        table.insert(&row)?;
    }
    Ok(())
}

fn sensor(table: &mut Table, rng: &mut ChaCha8Rng, noisy: &[bool]) -> Result<()> {
    let mut row = Vec::with_capacity(SENSOR_READINGS + 2);
    for (t, &glitch) in noisy.iter().enumerate() {
        let x: f64 = rng.gen_range(0.001..=1.0);
        let mut readings: Vec<f64> = (0..SENSOR_READINGS).map(|i| sensor_reading(i, x)).collect();
        if glitch {
            let i = rng.gen_range(0..SENSOR_READINGS);
            let max = sensor_reading(i, 1.0);
            readings[i] = redraw(rng, readings[i], 0.0, max, NoiseModel::Uniform, false);
        }
        let avg = readings.iter().sum::<f64>() / SENSOR_READINGS as f64;
        row.clear();
        row.push(Value::Int(t as i64));
        row.extend(readings.iter().map(|&r| Value::Float(r)));
        row.push(Value::Float(avg));
        table.insert(&row)?;
    }
    Ok(())
}

/// Shape of generated query predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QueryShape {
    /// Ranges matching about this fraction of the rows.
    Range(f64),
    /// `lb == ub`, drawn from existing values.
    Point,
}

impl FromStr for QueryShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("point") {
            return Ok(QueryShape::Point);
        }
        s.parse::<f64>()
            .map(QueryShape::Range)
            .map_err(|_| Error::InvalidParam(format!("bad selectivity `{s}`")))
    }
}

/// Seeded predicates on `column`, calibrated against its sorted values so a
/// range of selectivity `s` spans `max(1, round(s × N))` values.
pub fn generate_queries(table: &Table, column: usize, shape: QueryShape, count: usize, seed: u64) -> Result<Vec<ValueRange>> {
    let values = table.sorted_values(column)?;
    queries_from_sorted(&values, shape, count, seed)
}

pub fn queries_from_sorted(values: &[f64], shape: QueryShape, count: usize, seed: u64) -> Result<Vec<ValueRange>> {
    if values.is_empty() {
        return Err(Error::EmptyTable);
    }
    if count == 0 {
        return Err(Error::InvalidParam("query count must be >= 1".into()));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = match shape {
        QueryShape::Point => 1,
        QueryShape::Range(s) => {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidParam("selectivity must lie in (0, 1]".into()));
            }
            ((s * n as f64).round() as usize).clamp(1, n)
        }
    };
    (0..count)
        .map(|_| {
            let i = rng.gen_range(0..=n - k);
            ValueRange::new(values[i], values[i + k - 1])
        })
        .collect()
}
