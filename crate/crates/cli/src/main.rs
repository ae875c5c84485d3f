mod plot;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use flowscope::capture::{parse_headers, read_pcap_file, ParsedHeaders};
use flowscope::embedding::{build_delay_vectors, default_delay, estimate_dimension, fnn_curve, EmbeddingConfig};
use flowscope::multiwindow::{apply_cascade, build_baseline, run_plan, write_reports_jsonl, RunMode, WindowSpec};
use flowscope::parameters::{sample, Aggregator, ParameterId, ParameterSeries};
use flowscope::signatures::{
    builtin_catalog, frequency_table, scan_stream, write_alerts_csv, write_alerts_jsonl, ScanConfig,
};
use flowscope::synthgen::{generate_file, write_manifest, AttackEpisode, ProtocolMix, TrafficProfile};
use flowscope::trajectory::{occupancy, project, OccupancyHistogram};

#[derive(Parser)]
#[command(
    name = "flowscope",
    version,
    about = "Header time series, delay embedding and signature scanning over pcap captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one header parameter into an equal-interval series.
    Extract(ExtractArgs),
    /// False-nearest-neighbor curve of a series.
    Fnn(FnnArgs),
    /// Delay-embedded trajectory projection and its occupancy histogram.
    Trajectory(TrajectoryArgs),
    /// Run the signature catalog over a capture.
    Scan(ScanArgs),
    /// Multi-scale deviation monitoring driven by a plan file.
    Monitor(MonitorArgs),
    /// Build reference occupancy histograms for a plan entry from benign captures.
    Baseline(BaselineArgs),
    /// Generate a synthetic capture with optional attack episodes.
    Gen(GenArgs),
    /// Parameter frequency table of the signature catalog.
    Freq(FreqArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    pcap: PathBuf,
    #[arg(long)]
    param: ParameterId,
    /// Bin width in seconds.
    #[arg(long, default_value_t = 5.0)]
    tau: f64,
    #[arg(long, default_value = "last")]
    agg: Aggregator,
    /// Value of bins no packet contributes to.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    fill: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot script for the series (requires --out).
    #[arg(long)]
    emit_plot: Option<PathBuf>,
}

#[derive(Args)]
struct FnnArgs {
    /// Series CSV as written by `extract`.
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = 12)]
    max_dim: usize,
    /// Delay in samples (default: first 1/e autocorrelation crossing).
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long, default_value_t = 15.0)]
    rtol: f64,
    #[arg(long, default_value_t = 2.0)]
    atol: f64,
    #[arg(long, default_value_t = 1)]
    theiler: usize,
    /// FNN fraction at or below which a dimension is accepted.
    #[arg(long, default_value_t = 0.02)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit_plot: Option<PathBuf>,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    delay: usize,
    /// Two or three embedding components, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    axes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Projection CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Occupancy histogram CSV; the grid description goes to the same path with a `.json` extension.
    #[arg(long)]
    hist: Option<PathBuf>,
    #[arg(long)]
    emit_plot: Option<PathBuf>,
}

#[derive(Args)]
struct ScanOpts {
    /// Prefix length for broadcast detection.
    #[arg(long, default_value_t = 24)]
    netmask: u8,
    /// Half-open connection threshold.
    #[arg(long, default_value_t = 100)]
    syn_k: usize,
    /// SYN-flood window in seconds.
    #[arg(long, default_value_t = 5.0)]
    syn_w: f64,
    /// Distinct destination ports from one source that count as a sweep.
    #[arg(long, default_value_t = 20)]
    scan_k: usize,
    #[arg(long, default_value_t = 5.0)]
    scan_w: f64,
    #[arg(long, default_value_t = 4096)]
    frag_cache: usize,
}

impl ScanOpts {
    fn config(&self) -> ScanConfig {
        ScanConfig {
            netmask_prefix: self.netmask,
            syn_threshold: self.syn_k,
            syn_window_s: self.syn_w,
            scan_threshold: self.scan_k,
            scan_window_s: self.scan_w,
            fragment_capacity: self.frag_cache,
            ..ScanConfig::default()
        }
    }
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    pcap: PathBuf,
    #[command(flatten)]
    opts: ScanOpts,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    pcap: PathBuf,
    /// JSON array of window specs.
    #[arg(long)]
    plan: PathBuf,
    /// Window reports as JSON Lines (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alerts: Option<PathBuf>,
    /// Keep going when a spec fails; failures are reported on stderr.
    #[arg(long)]
    partial: bool,
    /// Attach cascade hints from windows above this percentile of their scale.
    #[arg(long)]
    cascade: Option<f64>,
    #[command(flatten)]
    opts: ScanOpts,
}

#[derive(Args)]
struct BaselineArgs {
    /// Benign capture; repeat to pool several.
    #[arg(long, required = true)]
    pcap: Vec<PathBuf>,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    window_len: usize,
    #[arg(long = "param", required = true)]
    params: Vec<ParameterId>,
    #[arg(long, default_value = "last")]
    agg: Aggregator,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    delay: usize,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds of traffic.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Mean benign packets per second.
    #[arg(long, default_value_t = 50.0)]
    rate: f64,
    /// TCP,UDP,ICMP weights.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.2, 0.1])]
    mix: Vec<f64>,
    /// `kind:start:end[:key=value,...]`; repeatable.
    #[arg(long = "episode")]
    episodes: Vec<AttackEpisode>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit_plot: Option<PathBuf>,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn plot_target<'a>(emit: &Option<PathBuf>, out: &'a Option<PathBuf>) -> Result<Option<&'a Path>> {
    match (emit, out) {
        (Some(_), None) => bail!("--emit-plot needs --out so the script has a data file to read"),
        (Some(_), Some(o)) => Ok(Some(o)),
        _ => Ok(None),
    }
}

/// Decoded packets in capture order. Frames that fail to decode are skipped
/// with a count on stderr; file-level errors abort.
fn load_packets(path: &Path) -> Result<Vec<(u64, ParsedHeaders)>> {
    let (_, records) = read_pcap_file(path).with_context(|| format!("reading {}", path.display()))?;
    let mut packets = Vec::with_capacity(records.len());
    let mut skipped = 0usize;
    for r in &records {
        match parse_headers(r) {
            Ok(h) => packets.push((r.timestamp_us, h)),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!(
            "warning: {skipped} of {} frames in {} could not be decoded and were skipped",
            records.len(),
            path.display()
        );
    }
    Ok(packets)
}

fn read_series(path: &Path) -> Result<ParameterSeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ParameterSeries::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn extract(a: ExtractArgs) -> Result<()> {
    let plot_data = plot_target(&a.emit_plot, &a.out)?;
    let packets = load_packets(&a.pcap)?;
    let series = sample(&packets, a.param, a.tau, a.agg, a.fill)?;
    let mut out = sink(a.out.as_deref())?;
    match a.format {
        Format::Csv => series.write_csv(&mut out)?,
        Format::Jsonl => series.write_jsonl(&mut out)?,
    }
    out.flush()?;
    if let (Some(script), Some(data)) = (&a.emit_plot, plot_data) {
        plot::series(script, data, a.param.name(), a.tau, series.t0_us)?;
    }
    Ok(())
}

fn fnn(a: FnnArgs) -> Result<()> {
    let plot_data = plot_target(&a.emit_plot, &a.out)?;
    let series = read_series(&a.series)?;
    let config = EmbeddingConfig {
        delay: a.delay.unwrap_or_else(|| default_delay(&series.values)),
        max_dim: a.max_dim,
        r_tol: a.rtol,
        a_tol: a.atol,
        theiler_window: a.theiler,
    };
    let curve = fnn_curve(&series.values, &config)?;
    let mut out = sink(a.out.as_deref())?;
    curve.write_csv(&mut out)?;
    out.flush()?;
    match estimate_dimension(&curve, a.threshold) {
        Some(d) => eprintln!("estimated dimension: {d} (delay {}, threshold {})", config.delay, a.threshold),
        None => eprintln!("estimated dimension: none (delay {}, threshold {})", config.delay, a.threshold),
    }
    if let (Some(script), Some(data)) = (&a.emit_plot, plot_data) {
        plot::fnn(script, data)?;
    }
    Ok(())
}

fn trajectory(a: TrajectoryArgs) -> Result<()> {
    let plot_data = plot_target(&a.emit_plot, &a.out)?;
    let series = read_series(&a.series)?;
    let vectors = build_delay_vectors(&series.values, a.dim, a.delay)?;
    let projection = project(&vectors, &a.axes)?;
    let mut out = sink(a.out.as_deref())?;
    projection.write_csv(&mut out)?;
    out.flush()?;
    if let Some(hist_path) = &a.hist {
        let hist = occupancy(&projection, a.bins, None)?;
        hist.write_csv(sink(Some(hist_path))?)?;
        let sidecar = hist_path.with_extension("json");
        fs::write(&sidecar, serde_json::to_string_pretty(&hist.shape())? + "\n")
            .with_context(|| format!("writing {}", sidecar.display()))?;
    }
    if let (Some(script), Some(data)) = (&a.emit_plot, plot_data) {
        plot::trajectory(script, data, &a.axes)?;
    }
    Ok(())
}

fn scan(a: ScanArgs) -> Result<()> {
    let packets = load_packets(&a.pcap)?;
    let alerts = scan_stream(&builtin_catalog(), &a.opts.config(), packets.iter().map(|(t, h)| (*t, h)))?;
    let mut out = sink(a.out.as_deref())?;
    match a.format {
        Format::Jsonl => write_alerts_jsonl(&mut out, &alerts)?,
        Format::Csv => write_alerts_csv(&mut out, &alerts)?,
    }
    out.flush()?;
    eprintln!("{} alerts from {} packets", alerts.len(), packets.len());
    Ok(())
}

/// One plan-file entry. `baseline` names a JSON file written by `baseline`,
/// resolved relative to the plan file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanEntry {
    label: String,
    tau: f64,
    window_len: usize,
    parameters: Vec<ParameterId>,
    #[serde(default)]
    aggregator: Aggregator,
    dim: Option<usize>,
    delay: Option<usize>,
    bins: Option<usize>,
    baseline: Option<PathBuf>,
}

fn load_plan(path: &Path) -> Result<Vec<WindowSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let entries: Vec<PlanEntry> =
        serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let mut spec = WindowSpec::new(&e.label, e.tau, e.window_len, e.parameters);
            spec.aggregator = e.aggregator;
            spec.dim = e.dim.unwrap_or(spec.dim);
            spec.delay = e.delay.unwrap_or(spec.delay);
            spec.bins = e.bins.unwrap_or(spec.bins);
            if let Some(b) = e.baseline {
                let b = dir.join(b);
                let text = fs::read_to_string(&b).with_context(|| format!("reading baseline {}", b.display()))?;
                spec.baseline = serde_json::from_str::<BTreeMap<ParameterId, OccupancyHistogram>>(&text)
                    .with_context(|| format!("parsing baseline {}", b.display()))?;
            }
            Ok(spec)
        })
        .collect()
}

fn monitor(a: MonitorArgs) -> Result<()> {
    let specs = load_plan(&a.plan)?;
    let packets = load_packets(&a.pcap)?;
    let mode = if a.partial { RunMode::Partial } else { RunMode::Strict };
    let mut output = run_plan(&packets, &specs, &builtin_catalog(), &a.opts.config(), mode)?;
    if let Some(pct) = a.cascade {
        if !(0.0..=100.0).contains(&pct) {
            bail!("--cascade percentile must lie in [0, 100], got {pct}");
        }
        apply_cascade(&mut output.reports, pct);
    }
    for f in &output.failures {
        eprintln!("spec {:?} failed: {}", f.label, f.error);
    }
    let mut out = sink(a.out.as_deref())?;
    write_reports_jsonl(&mut out, &output.reports)?;
    if let Some(p) = &a.alerts {
        write_alerts_jsonl(sink(Some(p))?, &output.alerts)?;
    }
    eprintln!("{} reports, {} alerts", output.reports.len(), output.alerts.len());
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let streams = a.pcap.iter().map(|p| load_packets(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[(u64, ParsedHeaders)]> = streams.iter().map(Vec::as_slice).collect();
    let mut spec = WindowSpec::new("baseline", a.tau, a.window_len, a.params);
    spec.aggregator = a.agg;
    spec.dim = a.dim;
    spec.delay = a.delay;
    spec.bins = a.bins;
    let hist = build_baseline(&refs, &spec)?;
    fs::write(&a.out, serde_json::to_string_pretty(&hist)? + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let profile = TrafficProfile {
        seed: a.seed,
        duration_s: a.duration,
        rate: a.rate,
        protocol_mix: ProtocolMix { tcp: a.mix[0], udp: a.mix[1], icmp: a.mix[2] },
        ..TrafficProfile::default()
    };
    let manifest = generate_file(&profile, &a.episodes, &a.out)?;
    if let Some(p) = &a.manifest {
        write_manifest(sink(Some(p))?, &manifest)?;
    }
    eprintln!("{} attack packets injected", manifest.len());
    Ok(())
}

fn freq(a: FreqArgs) -> Result<()> {
    let plot_data = plot_target(&a.emit_plot, &a.out)?;
    let table = frequency_table(&builtin_catalog());
    let mut out = sink(a.out.as_deref())?;
    table.write_csv(&mut out)?;
    out.flush()?;
    if let (Some(script), Some(data)) = (&a.emit_plot, plot_data) {
        plot::frequency(script, data)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => extract(a),
        Command::Fnn(a) => fnn(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Scan(a) => scan(a),
        Command::Monitor(a) => monitor(a),
        Command::Baseline(a) => baseline(a),
        Command::Gen(a) => gen(a),
        Command::Freq(a) => freq(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
