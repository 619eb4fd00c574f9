use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nls_core::feature::{generate_phantom, DEFAULT_CLAMP_FLOOR};
use nls_core::io::{
    read_edges_pgm, read_labels_pgm, read_stack, write_edges_pgm, write_labels_pgm,
    write_overlay_ppm, write_stack, write_trace_csv,
};
use nls_core::loss::{edge_loss, region_loss};
use nls_core::pipeline::{segment, SegmentConfig};
use nls_core::{DiceReport, Levels, PhantomSpec, Smoothing, SolverParams};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] nls_core::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid NLS_THREADS value {0:?}")]
    Threads(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(nls_core::Error::NumericInstability { .. }) => 4,
            _ => 3,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "nls",
    version,
    about = "Nested level set multi-region segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cardiac phantom: labels, edges, and a probability stack.
    Synth(SynthArgs),
    /// Segment a probability stack into nested regions.
    Segment(SegmentArgs),
    /// Dice overlap between two label maps, as CSV.
    Dice(DiceArgs),
    /// Region, edge, and combined loss of a stack against ground truth.
    Loss(LossArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 160)]
    size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Label-flip probability per pixel.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Gaussian blur sigma in pixels; 0 disables.
    #[arg(long, default_value_t = 2.0)]
    blur: f64,
    /// Myocardial wall thickness in pixels [default: scales with size].
    #[arg(long)]
    thickness: Option<f64>,
    /// Directory receiving labels.pgm, edges.pgm, and stack.nlsf.
    #[arg(long, short, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Probability stack (.nlsf).
    stack: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.5)]
    eps: f64,
    /// Comma-separated increasing levels; there must be one fewer than region channels.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,8",
        allow_negative_numbers = true
    )]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Probability threshold for the initial mask.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Region channel (1-based, after reordering) thresholded for initialization.
    #[arg(long, default_value_t = 1)]
    init_channel: usize,
    /// Output channel k is file channel ORDER[k] (1-based), e.g. `3,1,2`.
    #[arg(long, value_delimiter = ',')]
    channel_order: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Re-initialize phi as a signed distance every N iterations.
    #[arg(long)]
    redistance_every: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CLAMP_FLOOR)]
    clamp_floor: f64,
    #[arg(long, short, default_value = "labels.pgm")]
    out: PathBuf,
    /// Energy trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Contour overlay PPM drawn over the init channel.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

#[derive(Args)]
struct DiceArgs {
    pred: PathBuf,
    truth: PathBuf,
    #[arg(long, default_value_t = 3)]
    regions: u32,
}

#[derive(Args)]
struct LossArgs {
    stack: PathBuf,
    region_truth: PathBuf,
    edge_truth: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_CLAMP_FLOOR)]
    clamp_floor: f64,
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::File {
            path: path.to_owned(),
            source,
        })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::File {
            path: path.to_owned(),
            source,
        })
}

fn flush(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|source| CliError::File {
        path: path.to_owned(),
        source,
    })
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let mut spec = PhantomSpec::with_size(args.size)?;
    spec.seed = args.seed;
    spec.noise_rate = args.noise;
    spec.blur_sigma = args.blur;
    if let Some(t) = args.thickness {
        spec.thickness = t;
    }
    let ph = generate_phantom(&spec)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| CliError::File {
        path: args.out_dir.clone(),
        source,
    })?;

    let path = args.out_dir.join("labels.pgm");
    let mut w = create(&path)?;
    write_labels_pgm(&mut w, &ph.labels)?;
    flush(w, &path)?;
    let path = args.out_dir.join("edges.pgm");
    let mut w = create(&path)?;
    write_edges_pgm(&mut w, &ph.edges)?;
    flush(w, &path)?;
    let path = args.out_dir.join("stack.nlsf");
    let mut w = create(&path)?;
    write_stack(&mut w, &ph.stack)?;
    flush(w, &path)?;

    let counts: Vec<String> = (1..=ph.labels.regions())
        .map(|k| format!("region{k}={}", ph.labels.count(k)))
        .collect();
    println!(
        "{} {} edges={}",
        ph.labels.shape(),
        counts.join(" "),
        ph.edges.edge_count()
    );
    Ok(())
}

fn run_segment(args: SegmentArgs) -> CliResult<()> {
    let mut stack = read_stack(open(&args.stack)?)?;
    if let Some(order) = &args.channel_order {
        stack = stack.permuted(order)?;
    }
    let solver = SolverParams {
        lambda: args.lambda,
        smoothing: Smoothing::new(args.eps)?,
        levels: Levels::new(args.levels)?,
        time_step: args.dt,
        iterations: args.iters,
        trace_every: args.trace_every,
        redistance_every: args.redistance_every,
        ..SolverParams::default()
    };
    let config = SegmentConfig {
        solver,
        init_channel: args.init_channel,
        threshold: args.threshold,
        clamp_floor: args.clamp_floor,
    };
    let seg = segment(&stack, &config)?;

    let mut w = create(&args.out)?;
    write_labels_pgm(&mut w, &seg.labels)?;
    flush(w, &args.out)?;
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        write_trace_csv(&mut w, &seg.report)?;
        flush(w, path)?;
    }
    if let Some(path) = &args.overlay {
        let mut w = create(path)?;
        write_overlay_ppm(&mut w, stack.region(config.init_channel)?, &seg.labels)?;
        flush(w, path)?;
    }
    let first = seg.report.energy_trace.first().map_or(f64::NAN, |e| e.1);
    let last = seg.report.energy_trace.last().map_or(f64::NAN, |e| e.1);
    println!(
        "iterations={} energy {first:.6} -> {last:.6}",
        seg.report.iterations_run
    );
    Ok(())
}

fn dice(args: DiceArgs) -> CliResult<()> {
    let pred = read_labels_pgm(open(&args.pred)?, args.regions)?;
    let truth = read_labels_pgm(open(&args.truth)?, args.regions)?;
    print!("{}", DiceReport::compute(&pred, &truth)?.to_csv());
    Ok(())
}

fn loss(args: LossArgs) -> CliResult<()> {
    let stack = read_stack(open(&args.stack)?)?;
    let regions = read_labels_pgm(open(&args.region_truth)?, stack.region_count() as u32)?;
    let edges = read_edges_pgm(open(&args.edge_truth)?)?;
    let params = nls_core::LossParams::with_floor(args.alpha, args.clamp_floor)?;
    let lr = region_loss(&stack, &regions, params.clamp_floor())?;
    let le = edge_loss(stack.edge(), &edges, params.clamp_floor())?;
    println!("region_loss={lr:.12}");
    println!("edge_loss={le:.12}");
    println!("combined={:.12}", lr + params.alpha() * le);
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("NLS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Threads(raw.clone()))?;
    // 0 leaves rayon's automatic choice in place
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|_| CliError::Threads(raw))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Synth(a) => synth(a),
        Command::Segment(a) => run_segment(a),
        Command::Dice(a) => dice(a),
        Command::Loss(a) => loss(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nls: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
