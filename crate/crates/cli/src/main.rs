use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use volmoments::harness::{
    compute_report, error_json, run_sweep, standard_engines, verify, NamedEngine, SweepConfig,
    VerifyConfig, DEFAULT_VERIFY_LIMIT,
};
use volmoments::{
    integrals, load_nrrd, load_raw, project_all, BitDepth, ByteOrder, Dims, DpmOptions, Engine,
    Error, Order, Result, Spacing, SynthKind, Volume, VolumeMeta,
};

#[derive(Parser)]
#[command(
    name = "volmoments",
    version,
    about = "Exact 3D geometric moments of volumetric images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raw moments and derived features of one volume.
    Compute(ComputeArgs),
    /// Cross-check all engines on seeded random volumes.
    Verify(VerifyArgs),
    /// Timing sweep over doubling volume sizes.
    Bench(BenchArgs),
    /// Write the projection images (and optionally their integrals).
    Project(ProjectArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Raw voxel file (x fastest).
    #[arg(long, value_name = "PATH", group = "source")]
    raw: Option<PathBuf>,
    /// NRRD file (attached or detached payload).
    #[arg(long, value_name = "PATH", group = "source")]
    nrrd: Option<PathBuf>,
    /// Synthetic volume: uniform:V, delta:X,Y,Z,V, random:BITS or
    /// ellipsoid:CX,CY,CZ,A,B,C,V[,ROT].
    #[arg(long, value_name = "DESC", group = "source")]
    synth: Option<String>,
    /// Sidecar header for --raw (dims=, bit_depth=, spacing=, byte_order=).
    #[arg(long, value_name = "PATH")]
    meta: Option<PathBuf>,
    /// Dimensions L,M,N (raw and synthetic volumes).
    #[arg(long, value_name = "L,M,N")]
    dims: Option<Dims>,
    /// Bits per voxel for --raw.
    #[arg(long, value_name = "8|16")]
    depth: Option<u32>,
    #[arg(long, value_name = "little|big")]
    byte_order: Option<ByteOrder>,
    /// Seed for random synthetic volumes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SourceArgs {
    fn load(&self) -> Result<(Volume, String)> {
        if let Some(path) = &self.raw {
            let mut meta = match &self.meta {
                Some(m) => VolumeMeta::parse_header(&fs::read_to_string(m)?)?,
                None => {
                    let dims = self
                        .dims
                        .ok_or_else(|| missing("--dims (or --meta) for --raw"))?;
                    let depth = self
                        .depth
                        .ok_or_else(|| missing("--depth (or --meta) for --raw"))?;
                    VolumeMeta::new(dims, BitDepth::from_bits(depth)?)
                }
            };
            if let Some(order) = self.byte_order {
                meta.byte_order = order;
            }
            return Ok((load_raw(path, &meta)?, path.display().to_string()));
        }
        if let Some(path) = &self.nrrd {
            return Ok((load_nrrd(path)?, path.display().to_string()));
        }
        if let Some(desc) = &self.synth {
            let kind = SynthKind::from_str(desc)?;
            let dims = self.dims.ok_or_else(|| missing("--dims for --synth"))?;
            return Ok((
                volmoments::synth(&kind, dims, self.seed)?,
                format!("{kind}"),
            ));
        }
        Err(missing("a volume source (--raw, --nrrd or --synth)"))
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidVolume(format!("missing {what}"))
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Md,
}

/// Worker count: a number or `auto`.
#[derive(Clone, Copy)]
struct Threads(usize);

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Threads(
                std::thread::available_parallelism().map_or(1, |n| n.get()),
            ));
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads(n)),
            _ => Err(format!("expected a positive count or `auto`, got `{s}`")),
        }
    }
}

/// `3`, `4` or `both`.
#[derive(Clone)]
struct Orders(Vec<Order>);

impl FromStr for Orders {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "both" {
            return Ok(Orders(Order::BOTH.to_vec()));
        }
        Order::from_str(s)
            .map(|k| Orders(vec![k]))
            .map_err(|_| format!("expected 3, 4 or both, got `{s}`"))
    }
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "4")]
    order: Order,
    #[arg(long, default_value = "dpm")]
    engine: Engine,
    /// Physical voxel size α,β,δ; defaults to the volume's own spacing.
    #[arg(long, value_name = "A,B,D")]
    spacing: Option<Spacing>,
    #[arg(long, default_value = "1")]
    threads: Threads,
    /// json: full report; csv: raw moments only.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "64,64,64", value_name = "L,M,N")]
    dims: Dims,
    /// Seed count N (seeds 0..N) or a range A..B.
    #[arg(long, default_value = "10")]
    seeds: String,
    #[arg(long, default_value = "both")]
    order: Orders,
    #[arg(long, default_value_t = 8, value_name = "8|16")]
    depth: u32,
    /// Largest volume accepted, in voxels.
    #[arg(long, default_value_t = DEFAULT_VERIFY_LIMIT)]
    max_voxels: usize,
    #[arg(long, default_value = "1")]
    threads: Threads,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    /// Adds a dpm variant whose moment (p,q,r) is off by one.
    #[arg(long, hide = true, value_name = "P,Q,R")]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    min_size_mb: usize,
    /// Largest size; 1024 reproduces the full 1 MB to 1 GB range.
    #[arg(long, default_value_t = 128)]
    max_size_mb: usize,
    #[arg(long, default_value = "both")]
    order: Orders,
    /// Engines to time (repeatable); all by default.
    #[arg(long = "engine")]
    engines: Vec<Engine>,
    /// Timed runs per cell after one warm-up; the best is reported.
    #[arg(long, default_value_t = 9)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "1")]
    threads: Threads,
    /// Skip the instrumented operation-count pass.
    #[arg(long)]
    no_counts: bool,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    /// Also write bench.csv, bench.md and plot.csv here.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Also write each image's 1D integrals as CSV.
    #[arg(long)]
    integrals: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compute(a) => compute(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Project(a) => project(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(2)
        }
    }
}

fn compute(a: ComputeArgs) -> Result<ExitCode> {
    let (volume, source) = a.source.load()?;
    let opts = DpmOptions {
        threads: a.threads.0,
        ..DpmOptions::default()
    };
    let report = compute_report(&volume, &source, a.order, a.engine, a.spacing, &opts)?;
    let mut out = io::stdout().lock();
    match a.format {
        Format::Csv => {
            writeln!(out, "p,q,r,value")?;
            for m in &report.moments {
                writeln!(out, "{},{},{},{}", m.p, m.q, m.r, m.value)?;
            }
        }
        Format::Json | Format::Md => writeln!(out, "{}", report.to_json())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidVolume(format!("seeds `{s}`: expected N or A..B"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            Ok((a..b).collect())
        }
        None => Ok((0..s.trim().parse::<u64>().map_err(|_| bad())?).collect()),
    }
}

fn parse_index(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidVolume(format!("moment index `{s}`")))?;
    match parts[..] {
        [p, q, r] => Ok((p, q, r)),
        _ => Err(Error::InvalidVolume(format!(
            "moment index `{s}`: expected P,Q,R"
        ))),
    }
}

fn verify_cmd(a: VerifyArgs) -> Result<ExitCode> {
    let opts = DpmOptions {
        threads: a.threads.0,
        ..DpmOptions::default()
    };
    let mut engines = standard_engines(opts);
    if let Some(spec) = &a.inject_fault {
        let (p, q, r) = parse_index(spec)?;
        engines.push(NamedEngine::new(
            "dpm+fault",
            move |v: &Volume, k: Order| {
                let mut m = volmoments::dpm_moments_with(v, k, &opts)?;
                if p + q + r <= k.get() {
                    m.set(p, q, r, m.get(p, q, r) + 1);
                }
                Ok(m)
            },
        ));
    }
    let config = VerifyConfig {
        dims: a.dims,
        depth: BitDepth::from_bits(a.depth)?,
        seeds: parse_seeds(&a.seeds)?,
        orders: a.order.0,
        max_voxels: a.max_voxels,
    };
    let outcome = verify(&config, &engines)?;
    match a.format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&outcome).expect("serializes")
        ),
        Format::Csv | Format::Md => println!("{}", outcome.summary()),
    }
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    const MB: usize = 1 << 20;
    let config = SweepConfig {
        min_bytes: a.min_size_mb * MB,
        max_bytes: a.max_size_mb * MB,
        orders: a.order.0,
        engines: if a.engines.is_empty() {
            Engine::ALL.to_vec()
        } else {
            a.engines
        },
        repetitions: a.repetitions,
        seed: a.seed,
        threads: a.threads.0,
        count_ops: !a.no_counts,
    };
    let report = run_sweep(&config, |row| {
        eprintln!(
            "{:>5} MB {:>14} {:>8} K={} best {:>10.3} ms",
            row.size_bytes / MB,
            row.dims,
            row.engine,
            row.order,
            row.best_ms
        );
    })?;
    for s in &report.skipped {
        eprintln!("skipped {} ({}): {}", s.dims, s.size_bytes / MB, s.reason);
    }
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        report.write_csv(fs::File::create(dir.join("bench.csv"))?)?;
        report.write_plot_csv(fs::File::create(dir.join("plot.csv"))?)?;
        fs::write(dir.join("bench.md"), report.to_markdown())?;
    }
    let mut out = io::stdout().lock();
    match a.format {
        Format::Csv => report.write_csv(&mut out)?,
        Format::Md => write!(out, "{}", report.to_markdown())?,
        Format::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&report).expect("serializes")
        )?,
    }
    Ok(ExitCode::SUCCESS)
}

fn project(a: ProjectArgs) -> Result<ExitCode> {
    let (volume, _) = a.source.load()?;
    fs::create_dir_all(&a.out_dir)?;
    let mut out = io::stdout().lock();
    for image in project_all(&volume).images() {
        let name = image.orientation.name();
        let path = a.out_dir.join(format!("{name}.pgm"));
        let scale = image.write_pgm(&path)?;
        writeln!(
            out,
            "{} {}x{} offset {} scale {} -> {}",
            name,
            image.width,
            image.height,
            image.origin_offset,
            scale,
            display(&path)
        )?;
        if a.integrals {
            let path = a.out_dir.join(format!("{name}_integrals.csv"));
            integrals(image).write_csv(fs::File::create(&path)?)?;
            writeln!(out, "{name} integrals -> {}", display(&path))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
