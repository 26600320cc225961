use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use iwprobe::flow::{sweep_grid, write_grid_csv, NetworkConfig, DEFAULT_FLOW_BYTES};
use iwprobe::pacing::{detect_pacing, Arrival, TimingSample};
use iwprobe::pipeline::{
    classify_cdn, filter_small_objects, group_and_sample, read_results_jsonl, read_targets_csv,
    read_targets_jsonl, run_campaign, select_targets, write_report, CampaignConfig, CdnPatternSet,
    JsonlSink, MockFleet, ScanResult, Shaper, Target, TransportFactory, UrlRecord,
    DEFAULT_MIN_BYTES,
};
use iwprobe::probe::DEFAULT_MSS_SWEEP;

#[derive(Parser)]
#[command(
    name = "iwprobe",
    version,
    about = "Measure and analyse TCP initial congestion windows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label each URL record with the CDN its CNAME chain points to.
    Classify(ClassifyArgs),
    /// Pick one large object per CDN-served domain, optionally sampling by
    /// measured window.
    Select(SelectArgs),
    /// Probe targets across the MSS sweep and append results as JSONL.
    Campaign(CampaignArgs),
    /// Build the CDN, MIME and vantage tables from campaign results.
    Report(ReportArgs),
    /// Classify first-flight arrival timings as paced or bursty.
    Pace(PaceArgs),
    /// Evaluate the slow-start and queue models over a network grid.
    Model(ModelArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    /// URL records, `.csv` or `.jsonl`.
    #[arg(long)]
    targets: PathBuf,
    /// JSON object mapping CDN names to hostname suffixes.
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_BYTES)]
    min_bytes: u64,
    /// Campaign results; when given, sample per (CDN, basis, window) group.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Selected targets as JSONL.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    /// Targets as JSONL, as written by `select`.
    #[arg(long)]
    targets: PathBuf,
    /// Results file; appended to.
    #[arg(long, short)]
    out: PathBuf,
    /// Probe an in-process origin fleet (JSON) instead of the network.
    #[arg(long)]
    mock_fleet: Option<PathBuf>,
    #[arg(long, default_value = "local")]
    vantage: String,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MSS_SWEEP)]
    mss: Vec<u16>,
    #[arg(long, default_value_t = 10)]
    repetitions: u32,
    #[arg(long, default_value_t = 100)]
    pps: u32,
    #[arg(long, default_value_t = 5)]
    parallel: usize,
    #[arg(long, default_value_t = 0.5)]
    vote_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Delay the handshake ACK by this many milliseconds.
    #[arg(long, default_value_t = 0)]
    ack_delay_ms: u64,
    /// Also classify pacing from the largest-MSS trials.
    #[arg(long)]
    pacing: bool,
    #[arg(long, default_value = "campaign")]
    campaign_id: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = "report")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PaceArgs {
    /// JSONL: `{"rtt_ns": ..., "host": ...}` headers, each followed by
    /// `{"ts_ns": ..., "len": ...}` arrivals.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [4, 10, 16, 20, 32, 50])]
    iws: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [4.0, 7.0, 26.0, 100.0])]
    bandwidths: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 100.0, 250.0])]
    rtts: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [16])]
    queues: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_FLOW_BYTES])]
    flow: Vec<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_records(path: &Path) -> Result<Vec<UrlRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let records = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_targets_csv(file)?,
        _ => read_targets_jsonl(BufReader::new(file))?,
    };
    Ok(records)
}

fn load_patterns(path: &Path) -> Result<CdnPatternSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CdnPatternSet::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(
                serde_json::from_str(&line)
                    .with_context(|| format!("{}:{}", path.display(), i + 1))?,
            );
        }
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(items: &[T], mut out: impl Write) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let records = load_records(&args.targets)?;
    let patterns = load_patterns(&args.patterns)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["domain", "url", "cdn"])?;
    for r in &records {
        let cdn = classify_cdn(&r.domain, &r.cname_chain, &patterns).unwrap_or_default();
        w.write_record([r.domain.as_str(), r.url.as_str(), cdn.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let records = load_records(&args.targets)?;
    let patterns = load_patterns(&args.patterns)?;
    if args.min_bytes == 0 {
        bail!("--min-bytes must be positive");
    }
    let selected = select_targets(&records, &patterns);
    let filtered = filter_small_objects(selected, args.min_bytes);
    eprintln!(
        "{} targets kept, {} removed below {} B, CDNs lost: {}",
        filtered.kept.len(),
        filtered.removed,
        args.min_bytes,
        if filtered.cdns_lost.is_empty() {
            "none".to_string()
        } else {
            filtered.cdns_lost.join(", ")
        }
    );
    let targets = match &args.results {
        None => filtered.kept,
        Some(path) => {
            if args.sample == 0 {
                bail!("--sample must be at least 1");
            }
            let results = read_results_jsonl(BufReader::new(File::open(path)?))?;
            let profiles: Vec<(Target, _)> = filtered
                .kept
                .into_iter()
                .filter_map(|t| {
                    let r = results
                        .iter()
                        .find(|r| r.url == t.url && r.error.is_none())?;
                    Some((t, r.profile.clone()))
                })
                .collect();
            group_and_sample(&profiles, args.sample, args.seed)
        }
    };
    write_jsonl(&targets, output(args.out.as_deref())?)
}

fn campaign(args: CampaignArgs) -> Result<()> {
    let targets: Vec<Target> = read_jsonl(&args.targets)?;
    let mut config = CampaignConfig {
        campaign_id: args.campaign_id,
        mss_sweep: args.mss,
        repetitions: args.repetitions,
        pps_limit: args.pps,
        max_parallel: args.parallel,
        vote_threshold: args.vote_threshold,
        seed: args.seed,
        detect_pacing: args.pacing,
        ..CampaignConfig::default()
    };
    config.probe.handshake_ack_delay_ms = args.ack_delay_ms;

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.out)
        .with_context(|| format!("opening {}", args.out.display()))?;
    let mut sink = JsonlSink::new(BufWriter::new(file));

    let summary = match &args.mock_fleet {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let mut fleet: MockFleet = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            fleet.vantage.get_or_insert(args.vantage);
            run(&config, &targets, &fleet, None, &mut sink)?
        }
        None => live(&config, &targets, args.vantage, &mut sink)?,
    };
    eprintln!(
        "{} targets, {} probes, {} failed targets, peak {} in flight",
        summary.targets, summary.probes, summary.failed_targets, summary.peak_in_flight
    );
    Ok(())
}

fn run<F: TransportFactory, W: Write>(
    config: &CampaignConfig,
    targets: &[Target],
    factory: &F,
    shaper: Option<Arc<Shaper>>,
    sink: &mut JsonlSink<W>,
) -> Result<iwprobe::pipeline::CampaignSummary> {
    Ok(run_campaign(
        config,
        targets,
        factory,
        shaper,
        |r: &ScanResult| sink.write(r),
    )?)
}

#[cfg(target_os = "linux")]
fn live<W: Write>(
    config: &CampaignConfig,
    targets: &[Target],
    vantage: String,
    sink: &mut JsonlSink<W>,
) -> Result<iwprobe::pipeline::CampaignSummary> {
    let factory = iwprobe::pipeline::LiveFactory { vantage, port: 80 };
    let shaper = Arc::new(Shaper::new(config.pps_limit));
    run(config, targets, &factory, Some(shaper), sink)
}

#[cfg(not(target_os = "linux"))]
fn live<W: Write>(
    _: &CampaignConfig,
    _: &[Target],
    _: String,
    _: &mut JsonlSink<W>,
) -> Result<iwprobe::pipeline::CampaignSummary> {
    bail!("live probing needs raw sockets on Linux; use --mock-fleet")
}

fn report(args: ReportArgs) -> Result<()> {
    let results = read_results_jsonl(BufReader::new(
        File::open(&args.results).with_context(|| format!("opening {}", args.results.display()))?,
    ))?;
    for path in write_report(&results, &args.out_dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PaceLine {
    Header { rtt_ns: u64, host: Option<String> },
    Arrival(Arrival),
}

#[derive(Serialize)]
struct PaceRow {
    host: String,
    classification: &'static str,
    initial_burst: usize,
    median_train: usize,
    spread_ratio: f64,
}

fn pace(args: PaceArgs) -> Result<()> {
    let lines: Vec<PaceLine> = read_jsonl(&args.input)?;
    let default_host = args.input.file_stem().map_or_else(
        || "sample".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    let mut samples: Vec<(String, TimingSample)> = Vec::new();
    for line in lines {
        match line {
            PaceLine::Header { rtt_ns, host } => {
                let host = host.unwrap_or_else(|| default_host.clone());
                samples.push((host, TimingSample::new(Vec::new(), rtt_ns)));
            }
            PaceLine::Arrival(a) => match samples.last_mut() {
                Some((_, s)) => s.arrivals.push(a),
                None => bail!("arrival before any rtt_ns header"),
            },
        }
    }
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    for (host, mut sample) in samples {
        sample.arrivals.sort_by_key(|a| a.ts_ns);
        let v = detect_pacing(&sample);
        w.serialize(PaceRow {
            host,
            classification: v.classification.as_str(),
            initial_burst: v.initial_burst,
            median_train: v.median_train,
            spread_ratio: v.spread_ratio,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn model(args: ModelArgs) -> Result<()> {
    let mut nets = Vec::new();
    for &bw in &args.bandwidths {
        for &rtt in &args.rtts {
            for &q in &args.queues {
                nets.push(NetworkConfig::new(bw, rtt, q));
            }
        }
    }
    let rows = sweep_grid(&args.iws, &args.flow, &nets)?;
    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_grid_csv(&rows, BufWriter::new(file))?;
    eprintln!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Classify(a) => classify(a),
        Command::Select(a) => select(a),
        Command::Campaign(a) => campaign(a),
        Command::Report(a) => report(a),
        Command::Pace(a) => pace(a),
        Command::Model(a) => model(a),
    }
}
