//! Reports, cross-engine verification and the benchmark sweep.
//!
//! The CLI is a thin shell over this module so the same code paths are
//! exercised by the test suites.

use std::fmt::Write as _;
use std::io;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{
    apply_spacing, central_moments, normalize_scale, shape_features, CentralMoments3, RealTensor3,
    ShapeFeatures,
};
use crate::moments3d::{op_counters, Divergence, DpmOptions, Engine, MomentTensor3};
use crate::order::Order;
use crate::volume::{synth, BitDepth, Dims, Spacing, SynthKind, Volume};

const MB: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntMoment {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub value: i128,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealMoment {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub value: f64,
}

fn int_list(m: &MomentTensor3) -> Vec<IntMoment> {
    m.iter()
        .map(|((p, q, r), value)| IntMoment { p, q, r, value })
        .collect()
}

fn real_list(m: &RealTensor3) -> Vec<RealMoment> {
    m.iter()
        .map(|((p, q, r), value)| RealMoment { p, q, r, value })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralBlock {
    pub centroid: [f64; 3],
    pub moments: Vec<RealMoment>,
}

impl From<&CentralMoments3> for CentralBlock {
    fn from(mu: &CentralMoments3) -> Self {
        CentralBlock {
            centroid: mu.centroid,
            moments: real_list(&mu.moments),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalBlock {
    pub spacing: Spacing,
    #[serde(flatten)]
    pub central: CentralBlock,
}

/// Moment and feature report. Lists are in lexicographic `(p, q, r)` order;
/// the serialized form is deterministic for a given input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComputeReport {
    pub source: String,
    pub dims: Dims,
    pub bit_depth: u32,
    pub order: Order,
    pub engine: Engine,
    pub moments: Vec<IntMoment>,
    pub centroid: [f64; 3],
    pub central: Vec<RealMoment>,
    pub normalized: Vec<RealMoment>,
    pub physical: PhysicalBlock,
    pub shape: ShapeFeatures,
}

impl ComputeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Raw moments plus every derived quantity. `spacing` overrides the volume's
/// own spacing for the physical block.
pub fn compute_report(
    volume: &Volume,
    source: &str,
    order: Order,
    engine: Engine,
    spacing: Option<Spacing>,
    opts: &DpmOptions,
) -> Result<ComputeReport> {
    let m = engine.run_with(volume, order, opts)?;
    let mu = central_moments(&m)?;
    let eta = normalize_scale(&mu)?;
    let spacing = spacing.unwrap_or(volume.spacing());
    let physical = apply_spacing(&mu, spacing)?;
    Ok(ComputeReport {
        source: source.to_string(),
        dims: volume.dims(),
        bit_depth: volume.bit_depth().bits(),
        order,
        engine,
        moments: int_list(&m),
        centroid: mu.centroid,
        central: real_list(&mu.moments),
        normalized: real_list(&eta),
        physical: PhysicalBlock {
            spacing,
            central: CentralBlock::from(&physical),
        },
        shape: shape_features(&mu)?,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Debug, Clone, Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

/// `{"error": {"kind": ..., "message": ...}}`.
pub fn error_json(err: &Error) -> String {
    serde_json::to_string(&ErrorReport {
        error: ErrorBody {
            kind: err.kind(),
            message: err.to_string(),
        },
    })
    .expect("error serializes")
}

/// Boxed engine entry point.
pub type EngineFn<'a> = Box<dyn Fn(&Volume, Order) -> Result<MomentTensor3> + 'a>;

/// A moment engine under verification.
pub struct NamedEngine<'a> {
    pub name: String,
    pub run: EngineFn<'a>,
}

impl<'a> NamedEngine<'a> {
    pub fn new(
        name: impl Into<String>,
        run: impl Fn(&Volume, Order) -> Result<MomentTensor3> + 'a,
    ) -> Self {
        NamedEngine {
            name: name.into(),
            run: Box::new(run),
        }
    }
}

/// naive, factored and dpm, in that order; the first is the reference.
pub fn standard_engines<'a>(opts: DpmOptions) -> Vec<NamedEngine<'a>> {
    Engine::ALL
        .into_iter()
        .map(|e| NamedEngine::new(e.name(), move |v: &Volume, k| e.run_with(v, k, &opts)))
        .collect()
}

/// Default exactness bound on verified volumes, in voxels.
pub const DEFAULT_VERIFY_LIMIT: usize = 128 * 128 * 128;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub dims: Dims,
    pub depth: BitDepth,
    pub seeds: Vec<u64>,
    pub orders: Vec<Order>,
    pub max_voxels: usize,
}

impl VerifyConfig {
    pub fn new(dims: Dims, seeds: Vec<u64>) -> Self {
        VerifyConfig {
            dims,
            depth: BitDepth::U8,
            seeds,
            orders: Order::BOTH.to_vec(),
            max_voxels: DEFAULT_VERIFY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyFailure {
    pub seed: u64,
    pub order: Order,
    pub engine: String,
    pub reference: String,
    pub divergence: Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub cases: usize,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for f in &self.failures {
            let _ = writeln!(
                s,
                "FAIL seed {} K={} {} vs {}: {}",
                f.seed, f.order, f.engine, f.reference, f.divergence
            );
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = write!(
            s,
            "{verdict}: {} case(s), {} divergence(s)",
            self.cases,
            self.failures.len()
        );
        s
    }
}

/// Runs every engine on seeded random volumes and compares each against the
/// first. Records the first divergent moment per engine and case.
pub fn verify(config: &VerifyConfig, engines: &[NamedEngine<'_>]) -> Result<VerifyOutcome> {
    let voxels = config
        .dims
        .checked_len()
        .ok_or_else(|| Error::InvalidVolume(format!("dims {} overflow", config.dims)))?;
    if voxels > config.max_voxels {
        return Err(Error::InvalidVolume(format!(
            "dims {} exceed the verification bound of {} voxels",
            config.dims, config.max_voxels
        )));
    }
    let (reference, others) = engines
        .split_first()
        .ok_or_else(|| Error::InvalidVolume("no engines to verify".into()))?;
    let mut outcome = VerifyOutcome {
        cases: 0,
        failures: Vec::new(),
    };
    for &seed in &config.seeds {
        let volume = synth(
            &SynthKind::Random {
                depth: config.depth,
            },
            config.dims,
            seed,
        )?;
        for &order in &config.orders {
            outcome.cases += 1;
            let expected = (reference.run)(&volume, order)?;
            for engine in others {
                let got = (engine.run)(&volume, order)?;
                if let Some(divergence) = expected.first_difference(&got) {
                    outcome.failures.push(VerifyFailure {
                        seed,
                        order,
                        engine: engine.name.clone(),
                        reference: reference.name.clone(),
                        divergence,
                    });
                }
            }
        }
    }
    Ok(outcome)
}

/// Near-cubic shapes from `min_bytes` doubling to `max_bytes`, starting at
/// 128×128×64 for 1 MB and doubling the smallest axis each step (x first on
/// ties). Cubes occur at every third step (2, 16, 128 MB, 1 GB).
pub fn sweep_dims(min_bytes: usize, max_bytes: usize) -> Vec<Dims> {
    let mut out = Vec::new();
    let mut d = [128usize, 128, 64];
    let mut bytes = MB;
    while bytes <= max_bytes {
        if bytes >= min_bytes {
            out.push(Dims::new(d[0], d[1], d[2]));
        }
        let axis = (0..3).fold(0, |best, i| if d[i] < d[best] { i } else { best });
        d[axis] *= 2;
        bytes *= 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub min_bytes: usize,
    pub max_bytes: usize,
    pub orders: Vec<Order>,
    pub engines: Vec<Engine>,
    pub repetitions: usize,
    pub seed: u64,
    pub threads: usize,
    /// Run the untimed instrumented pass for operation counts.
    pub count_ops: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            min_bytes: MB,
            max_bytes: 128 * MB,
            orders: Order::BOTH.to_vec(),
            engines: Engine::ALL.to_vec(),
            repetitions: 9,
            seed: 0,
            threads: 1,
            count_ops: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size_bytes: usize,
    pub dims: String,
    pub engine: Engine,
    pub order: Order,
    pub best_ms: f64,
    pub median_ms: f64,
    pub multiplications: Option<u64>,
    pub additions: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSize {
    pub size_bytes: usize,
    pub dims: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub cpu: String,
    pub logical_cpus: usize,
    pub threads: usize,
    pub repetitions: usize,
    pub unix_time: u64,
}

impl Environment {
    fn detect(config: &SweepConfig) -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|m| m.trim().to_string())
            })
            .unwrap_or_else(|| std::env::consts::ARCH.to_string());
        Environment {
            cpu,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads: config.threads,
            repetitions: config.repetitions,
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub environment: Environment,
    pub rows: Vec<BenchRow>,
    pub skipped: Vec<SkippedSize>,
}

/// Fixed CSV column set, in order.
pub const CSV_COLUMNS: [&str; 8] = [
    "size_bytes",
    "dims",
    "engine",
    "order",
    "best_ms",
    "median_ms",
    "multiplications",
    "additions",
];

impl BenchReport {
    pub fn row(&self, size_bytes: usize, engine: Engine, order: Order) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.size_bytes == size_bytes && r.engine == engine && r.order == order)
    }

    /// Distinct measured sizes, ascending.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.rows.iter().map(|r| r.size_bytes).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    fn columns(&self) -> Vec<(Engine, Order)> {
        let mut cols = Vec::new();
        for r in &self.rows {
            if !cols.contains(&(r.engine, r.order)) {
                cols.push((r.engine, r.order));
            }
        }
        cols.sort_by_key(|&(e, k)| (k.get(), Engine::ALL.iter().position(|&x| x == e)));
        cols
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS).map_err(csv_err)?;
        let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.size_bytes.to_string(),
                r.dims.clone(),
                r.engine.to_string(),
                r.order.to_string(),
                format!("{:.4}", r.best_ms),
                format!("{:.4}", r.median_ms),
                opt(r.multiplications),
                opt(r.additions),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Size against best time, one column per engine and order.
    pub fn write_plot_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let cols = self.columns();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["size_mb".to_string()];
        header.extend(cols.iter().map(|(e, k)| format!("{e}_k{k}_ms")));
        out.write_record(&header).map_err(csv_err)?;
        for size in self.sizes() {
            let mut rec = vec![format!("{}", size as f64 / MB as f64)];
            for &(e, k) in &cols {
                rec.push(
                    self.row(size, e, k)
                        .map_or(String::new(), |r| format!("{:.4}", r.best_ms)),
                );
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Times by size, one column per engine and order, plus the dpm speedup
    /// over naive for each order.
    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let orders: Vec<Order> = Order::BOTH
            .into_iter()
            .filter(|k| cols.iter().any(|c| c.1 == *k))
            .collect();
        let speedup_orders: Vec<Order> = orders
            .iter()
            .copied()
            .filter(|&k| cols.contains(&(Engine::Naive, k)) && cols.contains(&(Engine::Dpm, k)))
            .collect();

        let env = &self.environment;
        let mut s = format!(
            "Best of {} wall time in ms ({}; {} thread(s)).\n\n| Size (MB) | Dims |",
            env.repetitions, env.cpu, env.threads
        );
        for (e, k) in &cols {
            let _ = write!(s, " {e} K={k} |");
        }
        for k in &speedup_orders {
            let _ = write!(s, " naive/dpm K={k} |");
        }
        s.push_str("\n|---|---|");
        for _ in 0..cols.len() + speedup_orders.len() {
            s.push_str("---:|");
        }
        s.push('\n');

        let mut sizes: Vec<(usize, String, Option<&str>)> = self
            .sizes()
            .into_iter()
            .map(|b| {
                let dims = self
                    .rows
                    .iter()
                    .find(|r| r.size_bytes == b)
                    .unwrap()
                    .dims
                    .clone();
                (b, dims, None)
            })
            .collect();
        sizes.extend(
            self.skipped
                .iter()
                .map(|k| (k.size_bytes, k.dims.clone(), Some(k.reason.as_str()))),
        );
        sizes.sort_by_key(|s| s.0);

        for (bytes, dims, skipped) in sizes {
            let _ = write!(s, "| {} | {} |", bytes / MB, dims);
            if let Some(reason) = skipped {
                for _ in 0..cols.len() + speedup_orders.len() {
                    let _ = write!(s, " skipped ({reason}) |");
                }
            } else {
                for &(e, k) in &cols {
                    match self.row(bytes, e, k) {
                        Some(r) => {
                            let _ = write!(s, " {:.2} |", r.best_ms);
                        }
                        None => s.push_str(" - |"),
                    }
                }
                for &k in &speedup_orders {
                    let n = self.row(bytes, Engine::Naive, k);
                    let d = self.row(bytes, Engine::Dpm, k);
                    match (n, d) {
                        (Some(n), Some(d)) => {
                            let _ = write!(s, " {:.1}x |", n.best_ms / d.best_ms);
                        }
                        _ => s.push_str(" - |"),
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

/// Best and median of a set of samples.
fn best_and_median(mut times: Vec<f64>) -> (f64, f64) {
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    };
    (times[0].max(1e-6), median)
}

fn timed(f: impl FnOnce() -> Result<MomentTensor3>) -> Result<f64> {
    let t = Instant::now();
    std::hint::black_box(f()?);
    Ok(t.elapsed().as_secs_f64() * 1e3)
}

/// Refuses sizes whose volume plus working set cannot be allocated.
fn memory_available(bytes: usize) -> bool {
    let mut probe: Vec<u8> = Vec::new();
    probe.try_reserve_exact(bytes.saturating_mul(2)).is_ok()
}

/// Best-of-R timing for every (size, engine, order) cell on 8-bit random
/// volumes, after one warm-up run per cell; `progress` sees each row once
/// its size is finished.
pub fn run_sweep(config: &SweepConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchReport> {
    let opts = DpmOptions {
        threads: config.threads.max(1),
        ..DpmOptions::default()
    };
    let mut report = BenchReport {
        environment: Environment::detect(config),
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for dims in sweep_dims(config.min_bytes, config.max_bytes) {
        let size_bytes = dims.len();
        if !memory_available(size_bytes) {
            report.skipped.push(SkippedSize {
                size_bytes,
                dims: dims.to_string(),
                reason: "insufficient memory".into(),
            });
            continue;
        }
        let volume = synth(
            &SynthKind::Random {
                depth: BitDepth::U8,
            },
            dims,
            config.seed,
        )?;
        let cells: Vec<(Order, Engine)> = config
            .orders
            .iter()
            .flat_map(|&k| config.engines.iter().map(move |&e| (k, e)))
            .collect();
        // Repetitions run round-robin over the cells so that a transient
        // slowdown of the machine costs every cell a round rather than
        // spoiling all samples of one cell.
        for &(order, engine) in &cells {
            std::hint::black_box(engine.run_with(&volume, order, &opts)?);
        }
        let mut samples = vec![Vec::with_capacity(config.repetitions); cells.len()];
        for _ in 0..config.repetitions.max(1) {
            for (i, &(order, engine)) in cells.iter().enumerate() {
                samples[i].push(timed(|| engine.run_with(&volume, order, &opts))?);
            }
        }
        for (&(order, engine), times) in cells.iter().zip(samples) {
            let (best_ms, median_ms) = best_and_median(times);
            let counts = if config.count_ops {
                Some(op_counters(engine, &volume, order)?)
            } else {
                None
            };
            let row = BenchRow {
                size_bytes,
                dims: dims.to_string(),
                engine,
                order,
                best_ms,
                median_ms,
                multiplications: counts.map(|c| c.multiplications),
                additions: counts.map(|c| c.additions),
            };
            progress(&row);
            report.rows.push(row);
        }
    }
    Ok(report)
}
