use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use teleport_lab::harness::{
    aggregate, device_path_noise, generate_device, read_results, render_decay_svg, render_svg,
    run_decay, run_experiment, summarize_decay, write_decay_csv, write_results, DecaySpec,
    Delays, DeviceGenSpec, ExperimentSpec, HopRange, QremSetting,
};
use teleport_lab::pathfinder::{best_device_paths, ingest_device, DeviceModel, WeightProtocol};
use teleport_lab::protocols::{CorrectionStyle, PathSpec, TransportMode};

const THREADS_VAR: &str = "TELEPORT_LAB_THREADS";

#[derive(Parser)]
#[command(name = "teleport-lab", version, about = "Entanglement teleportation along qubit paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the best paths of a calibrated device.
    FindPaths(FindPathsArgs),
    /// Sweep hops, modes and mitigation; write a results CSV.
    Run(RunArgs),
    /// Idle-decay experiment on one pair; write a CSV.
    Decay(DecayArgs),
    /// Render a results CSV as an SVG chart.
    Plot(PlotArgs),
    /// Synthesize a 127-qubit heavy-hex calibration file.
    GenDevice(GenDeviceArgs),
}

fn parse_protocol(s: &str) -> Result<WeightProtocol, String> {
    s.parse().map_err(|e: teleport_lab::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<TransportMode, String> {
    s.parse().map_err(|e: teleport_lab::Error| e.to_string())
}

fn parse_hops(s: &str) -> Result<HopRange, String> {
    s.parse().map_err(|e: teleport_lab::Error| e.to_string())
}

fn parse_qrem(s: &str) -> Result<QremSetting, String> {
    s.parse().map_err(|e: teleport_lab::Error| e.to_string())
}

fn parse_delays(s: &str) -> Result<Delays, String> {
    s.parse().map_err(|e: teleport_lab::Error| e.to_string())
}

fn parse_pair(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("pair {s:?} is not of the form A-B"))?;
    let num = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("pair {s:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

#[derive(Args)]
struct FindPathsArgs {
    #[arg(long)]
    device: PathBuf,
    /// Weight protocols, comma separated; all three by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_protocol)]
    protocol: Vec<WeightProtocol>,
    /// Hop counts; a path with h hops has h + 2 qubits.
    #[arg(long, value_parser = parse_hops, default_value = "1..19")]
    hops: HopRange,
    #[arg(long, default_value_t = 4)]
    paths: usize,
    /// JSON listing of every path found.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    device: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_protocol)]
    protocol: Vec<WeightProtocol>,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    mode: Vec<TransportMode>,
    #[arg(long, value_parser = parse_hops)]
    hops: Option<HopRange>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Shots per tomography setting.
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long, value_parser = parse_qrem)]
    qrem: Option<QremSetting>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exact noiseless distributions with readout error instead of sampling.
    #[arg(long)]
    analytic: bool,
    /// Apply the dynamic correction as one Z and one X layer.
    #[arg(long)]
    simplified_correction: bool,
    /// Results CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecayArgs {
    /// Calibration file; the pair's T1, T2 and readout come from it.
    #[arg(long)]
    device: Option<PathBuf>,
    /// Coupler to use, as `A-B`; defaults to the lowest gate error.
    #[arg(long, value_parser = parse_pair)]
    pair: Option<(u32, u32)>,
    /// Delay grid in µs.
    #[arg(long, value_parser = parse_delays, default_value = "0..10:0.1")]
    delays: Delays,
    /// Shots per tomography setting; 0 computes exact density matrices.
    #[arg(long, default_value_t = 0)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Levels whose crossing times are reported.
    #[arg(long, default_value_t = 0.474)]
    from_level: f64,
    #[arg(long, default_value_t = 0.376)]
    to_level: f64,
    /// Decay CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV written by `run`.
    input: PathBuf,
    #[arg(long, default_value = "results.svg")]
    out: PathBuf,
    #[arg(long, default_value = "Negativity versus hops")]
    title: String,
}

#[derive(Args)]
struct GenDeviceArgs {
    /// JSON generator settings; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shots per tomography setting for the pair negativities.
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_device(path: &Path) -> Result<DeviceModel> {
    ingest_device(path).with_context(|| format!("reading device {}", path.display()))
}

fn find_paths(args: FindPathsArgs) -> Result<()> {
    let device = load_device(&args.device)?;
    let protocols = if args.protocol.is_empty() {
        WeightProtocol::ALL.to_vec()
    } else {
        args.protocol
    };
    let mut listing = Vec::new();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for protocol in protocols {
        for hops in args.hops.iter() {
            let found = best_device_paths(&device, protocol, hops + 2, args.paths)?;
            if found.fewer_than_requested {
                log::warn!(
                    "{protocol}: fewer than {} paths with {hops} hops ({} found)",
                    args.paths,
                    found.paths.len()
                );
            }
            for (rank, p) in found.paths.iter().enumerate() {
                let spec = p.spec()?;
                writeln!(out, "{protocol}\t{hops}\t{rank}\t{:.6}\t{spec}", p.weight_product)?;
                listing.push(json!({
                    "protocol": protocol,
                    "hops": hops,
                    "rank": rank,
                    "qubits": p.qubits,
                    "weight_product": p.weight_product,
                }));
            }
        }
    }
    if let Some(path) = args.out {
        let mut w = output(Some(&path))?;
        serde_json::to_writer_pretty(&mut w, &listing)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut spec: ExperimentSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            if let (Some(dev), Some(dir)) = (&spec.device, p.parent()) {
                if dev.is_relative() {
                    spec.device = Some(dir.join(dev));
                }
            }
            spec
        }
        None => ExperimentSpec::default(),
    };
    if args.device.is_some() {
        spec.device = args.device;
    }
    if !args.protocol.is_empty() {
        spec.protocols = args.protocol;
    }
    if !args.mode.is_empty() {
        spec.modes = args.mode;
    }
    spec.hops = args.hops.unwrap_or(spec.hops);
    spec.paths = args.paths.unwrap_or(spec.paths);
    spec.trials = args.trials.unwrap_or(spec.trials);
    spec.shots = args.shots.unwrap_or(spec.shots);
    spec.qrem = args.qrem.unwrap_or(spec.qrem);
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.analytic |= args.analytic;
    if args.simplified_correction {
        spec.correction = CorrectionStyle::Simplified;
    }
    let device = spec.device.as_deref().map(load_device).transpose()?;
    let rows = run_experiment(&spec, device.as_ref())?;
    let failed = rows.iter().filter(|r| r.status == "error").count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed", rows.len());
    }
    let mut out = output(args.out.as_deref())?;
    write_results(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn decay(args: DecayArgs) -> Result<()> {
    let mut spec = DecaySpec {
        delays: args.delays,
        shots: args.shots,
        seed: args.seed,
        ..Default::default()
    };
    if let Some(path) = &args.device {
        let device = load_device(path)?;
        let (a, b) = match args.pair {
            Some(p) => p,
            None => {
                let best = best_device_paths(&device, WeightProtocol::GateFid, 2, 1)?;
                let q = &best.paths.first().context("device has no usable coupler")?.qubits;
                (q[0], q[1])
            }
        };
        let path = PathSpec::new(vec![a, b])?;
        spec.pair_noise = Some(device_path_noise(&spec.noise, &device, &path)?);
        log::info!("decay on pair {path}");
    } else if args.pair.is_some() {
        bail!("--pair needs --device");
    }
    let rows = run_decay(&spec)?;
    let summary = summarize_decay(&rows, args.from_level, args.to_level);
    let show = |t: Option<f64>| t.map_or("not reached".to_string(), |t| format!("{t:.3} us"));
    eprintln!(
        "negativity {:.3} at {}, {:.3} at {}, window {}, monotone: {}",
        summary.start_level,
        show(summary.start_time_us),
        summary.end_level,
        show(summary.end_time_us),
        show(summary.window_us),
        if summary.monotone { "yes" } else { "no" }
    );
    let mut out = output(args.out.as_deref())?;
    write_decay_csv(&rows, &mut out)?;
    out.flush()?;
    if let Some(svg) = args.svg {
        let text = render_decay_svg(&rows, &[args.from_level, args.to_level], "Negativity versus delay");
        std::fs::write(&svg, text).with_context(|| format!("writing {}", svg.display()))?;
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let (rows, skipped) = read_results(BufReader::new(file))?;
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed rows");
    }
    let svg = render_svg(&aggregate(&rows), &args.title);
    std::fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn gen_device(args: GenDeviceArgs) -> Result<()> {
    let mut spec: DeviceGenSpec = match &args.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => DeviceGenSpec::default(),
    };
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.pair_shots = args.shots.unwrap_or(spec.pair_shots);
    let device = generate_device(&spec)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", device.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::FindPaths(a) => find_paths(a),
        Command::Run(a) => run(a),
        Command::Decay(a) => decay(a),
        Command::Plot(a) => plot(a),
        Command::GenDevice(a) => gen_device(a),
    });
    if let Err(err) = result {
        let broken_pipe = err
            .chain()
            .filter_map(|e| e.downcast_ref::<io::Error>())
            .any(|e| e.kind() == io::ErrorKind::BrokenPipe);
        if broken_pipe {
            return;
        }
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
