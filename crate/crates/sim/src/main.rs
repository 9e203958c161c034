//! `bottleneck` — turn-based bottleneck traffic simulator with cooperative
//! V2V yielding.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use bottleneck_core::metrics::{self, AggregateMode};
use bottleneck_core::oracle;
use bottleneck_core::types::{ScenarioParams, Variant, DEFAULT_COMM_RANGE, DEFAULT_TURNS};
use bottleneck_sim::config::GridSpec;
use bottleneck_sim::{csvio, eventlog, sweep, DEFAULT_BASE_SEED};

#[derive(Parser)]
#[command(
    name = "bottleneck",
    version,
    about = "Turn-based bottleneck traffic simulation with cooperative CAV yielding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one parameter point and print the result as JSON.
    Run(RunArgs),
    /// Run a parameter grid and write one CSV row per entry.
    Sweep(SweepArgs),
    /// Average sweep results per (variant, dmaxmax, kappa).
    Aggregate(AggregateArgs),
    /// Print analytic flow-balance predictions for the grid corners.
    Oracle(OracleArgs),
    /// Re-execute a logged run and verify the log byte-for-byte.
    Replay(ReplayArgs),
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: bottleneck_core::types::ParamError| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// CAV penetration in [0, 1].
    #[arg(long)]
    kappa: f64,
    /// Probability that a front free-lane human yields.
    #[arg(long)]
    pf: f64,
    /// Probability that a front blocked-lane human stops.
    #[arg(long)]
    pb: f64,
    /// Upper bound of the per-CAV patience draw (even, 4..=20).
    #[arg(long)]
    dmaxmax: u8,
    #[arg(long, value_parser = parse_variant, default_value = "counting")]
    variant: Variant,
    /// Vehicles per lane reachable over V2V.
    #[arg(long, default_value_t = DEFAULT_COMM_RANGE)]
    range: u32,
    #[arg(long, default_value_t = DEFAULT_TURNS)]
    turns: u64,
    #[arg(long, env = "BOTTLENECK_SEED", default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
    /// Also write the full event log to this path.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML grid specification; defaults to the full evaluation grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write one event log per run into this directory (large).
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long, env = "BOTTLENECK_SEED")]
    seed: Option<u64>,
    /// Override the config's turns per run.
    #[arg(long)]
    turns: Option<u64>,
    /// Override the config's communication range.
    #[arg(long)]
    range: Option<u32>,
    /// Override the config's runs per grid entry.
    #[arg(long)]
    repeats: Option<u32>,
    /// Restrict to a single variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Restrict to a single dmaxmax.
    #[arg(long)]
    dmaxmax: Option<u8>,
    /// Restrict to a single kappa.
    #[arg(long)]
    kappa: Option<f64>,
    /// Restrict to a single p_f.
    #[arg(long)]
    pf: Option<f64>,
    /// Restrict to a single p_b.
    #[arg(long)]
    pb: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    All,
    Likely,
}

#[derive(Args)]
struct AggregateArgs {
    /// Sweep CSV to aggregate; must carry the completion trailer.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Likely)]
    mode: Mode,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// TOML grid specification; defaults to the full evaluation grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Event log produced by `run --log` or `sweep --log-dir`.
    #[arg(long)]
    log: PathBuf,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let params = ScenarioParams {
        kappa: args.kappa,
        p_f: args.pf,
        p_b: args.pb,
        dmaxmax: args.dmaxmax,
        variant: args.variant,
        comm_range: args.range,
        turns_target: args.turns,
        seed: args.seed,
    }
    .validated()
    .map_err(|e| anyhow::anyhow!("invalid parameters: {e}"))?;

    let result = match &args.log {
        None => bottleneck_core::engine::run(params),
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            let (result, writer) = eventlog::write_log(BufWriter::new(file), params)?;
            writer.into_inner().map_err(|e| e.into_error())?;
            result
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn load_spec(config: Option<&PathBuf>) -> anyhow::Result<GridSpec> {
    match config {
        Some(path) => GridSpec::load(path),
        None => Ok(GridSpec::default()),
    }
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut spec = load_spec(args.config.as_ref())?;
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if let Some(turns) = args.turns {
        spec.turns_target = turns;
    }
    if let Some(range) = args.range {
        spec.comm_range = range;
    }
    if let Some(repeats) = args.repeats {
        spec.repeats = repeats;
    }
    if let Some(variant) = args.variant {
        spec.variants = vec![variant];
    }
    if let Some(dmaxmax) = args.dmaxmax {
        spec.dmaxmax_values = vec![dmaxmax];
    }
    if let Some(kappa) = args.kappa {
        spec.kappa_values = vec![kappa];
    }
    if let Some(pf) = args.pf {
        spec.p_f_values = vec![pf];
    }
    if let Some(pb) = args.pb {
        spec.p_b_values = vec![pb];
    }

    let report = sweep::run_sweep_to_path(
        &spec,
        args.workers,
        &args.out,
        args.log_dir.as_deref(),
    )?;
    eprintln!(
        "swept {} runs in {:.1} s -> {}",
        report.rows,
        report.wall.as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let file = csvio::parse_sweep_csv(&text)?;
    anyhow::ensure!(
        file.complete,
        "{} has no completion trailer; refusing to aggregate a partial sweep",
        args.input.display()
    );
    let mode = match args.mode {
        Mode::All => AggregateMode::All,
        Mode::Likely => AggregateMode::Likely,
    };
    let rows = metrics::aggregate(&file.samples, mode)
        .map_err(|e| anyhow::anyhow!("incomplete coverage: {e}"))?;
    emit(args.out.as_ref(), &csvio::aggregate_csv(&rows))
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let spec = load_spec(args.config.as_ref())?;
    let mut out = String::from("variant,kappa,p_f,p_b,dmaxmax,phi\n");
    for &variant in &spec.variants {
        for &dmaxmax in &spec.dmaxmax_values {
            for &p_f in &spec.p_f_values {
                for &p_b in &spec.p_b_values {
                    let baseline = oracle::phi_baseline(p_f, p_b)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    out.push_str(&format!("{variant},0,{p_f},{p_b},{dmaxmax},{baseline}\n"));
                    let full = oracle::phi_full_cav(variant, dmaxmax).unwrap_or(baseline);
                    out.push_str(&format!("{variant},1,{p_f},{p_b},{dmaxmax},{full}\n"));
                }
            }
        }
    }
    emit(args.out.as_ref(), &out)
}

fn cmd_replay(args: ReplayArgs) -> anyhow::Result<()> {
    let result = eventlog::replay(&args.log)?;
    eprintln!(
        "log verified: {} turns, phi = {}",
        result.params.turns_target, result.phi
    );
    Ok(())
}

fn emit(path: Option<&PathBuf>, content: &str) -> anyhow::Result<()> {
    match path {
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))
        }
    }
}
