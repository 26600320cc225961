use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::shaper::Shaper;
use super::targets::{url_path, Target};
use crate::estimation::{
    classify_basis, estimate_trial, flag_tail_loss, vote_with_threshold, IwProfile, TrialEstimate,
    TrialOutcome, DEFAULT_VOTE_THRESHOLD,
};
use crate::origin::{MockOrigin, OriginConfig};
use crate::pacing::{detect_pacing, PacingVerdict, TimingSample};
use crate::probe::{probe_once, ProbeOutcome, ProbeSpec, DEFAULT_MSS_SWEEP};
use crate::transport::{EmulatedTransport, ShapedTransport, Transport, TransportError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("no targets")]
    NoTargets,
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("persisting results: {0}")]
    Persist(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub mss_sweep: Vec<u16>,
    pub repetitions: u32,
    pub sample_per_group: usize,
    pub pps_limit: u32,
    pub max_parallel: usize,
    pub vote_threshold: f64,
    pub seed: u64,
    pub detect_pacing: bool,
    /// Window, delays and timeouts for every probe; target and MSS are
    /// filled in per job.
    pub probe: ProbeSpec,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            campaign_id: "campaign".into(),
            mss_sweep: DEFAULT_MSS_SWEEP.to_vec(),
            repetitions: 10,
            sample_per_group: 5,
            pps_limit: 100,
            max_parallel: 5,
            vote_threshold: DEFAULT_VOTE_THRESHOLD,
            seed: 0,
            detect_pacing: false,
            probe: ProbeSpec::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::Config(m.into()));
        if self.repetitions < 3 {
            return bad("repetitions must be at least 3");
        }
        if self.pps_limit < 1 {
            return bad("pps_limit must be at least 1");
        }
        if self.max_parallel < 1 {
            return bad("max_parallel must be at least 1");
        }
        if self.mss_sweep.is_empty() {
            return bad("empty MSS sweep");
        }
        if !(0.0..1.0).contains(&self.vote_threshold) {
            return bad("vote threshold must be in [0, 1)");
        }
        for &mss in &self.mss_sweep {
            self.probe
                .clone()
                .with_mss(mss)
                .validate()
                .map_err(|e| CampaignError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One probe attempt handed to a [`TransportFactory`].
#[derive(Debug, Clone)]
pub struct ProbeJob {
    pub target_index: usize,
    pub domain: String,
    pub mss: u16,
    pub repetition: u32,
    pub seed: u64,
    pub spec: ProbeSpec,
}

/// A labelled vantage point: resolves targets and opens one transport per
/// probe. `connect` and `finish` bracket each probe.
pub trait TransportFactory: Sync {
    type Transport: Transport;

    fn vantage(&self) -> String {
        "default".into()
    }

    fn resolve(&self, target: &Target) -> Result<SocketAddr, String>;

    fn connect(&self, job: &ProbeJob) -> Result<Self::Transport, TransportError>;

    fn finish(&self, _job: &ProbeJob, _transport: Self::Transport) {}

    fn timestamp_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub repetition: u32,
    pub probe_outcome: ProbeOutcome,
    #[serde(flatten)]
    pub estimate: TrialEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub campaign: String,
    pub target_index: usize,
    pub url: String,
    pub domain: String,
    pub cdn: String,
    #[serde(default)]
    pub mime_type: Option<String>,
    pub vantage: String,
    pub profile: IwProfile,
    pub trials: Vec<TrialRecord>,
    #[serde(default)]
    pub pacing: Option<PacingVerdict>,
    pub started_ms: u64,
    pub finished_ms: u64,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CampaignSummary {
    pub targets: usize,
    pub probes: usize,
    pub failed_targets: usize,
    pub peak_in_flight: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn job_seed(seed: u64, target: usize, mss: u16, rep: u32) -> u64 {
    splitmix(splitmix(splitmix(seed ^ target as u64) ^ u64::from(mss)) ^ u64::from(rep))
}

struct Done {
    job: usize,
    record: TrialRecord,
    timing: Option<TimingSample>,
}

fn inconclusive(job: &ProbeJob, outcome: ProbeOutcome, note: String) -> TrialRecord {
    TrialRecord {
        repetition: job.repetition,
        probe_outcome: outcome,
        estimate: TrialEstimate {
            mss: job.mss,
            iw_bytes: 0,
            iw_segments: 0,
            received_bytes: 0,
            segment_size: 0,
            verified_full: false,
            outcome: TrialOutcome::Inconclusive,
        },
        note: Some(note),
    }
}

fn run_job<F: TransportFactory>(
    factory: &F,
    job: &ProbeJob,
    shaper: Option<&Arc<Shaper>>,
    want_timing: bool,
) -> (TrialRecord, Option<TimingSample>) {
    let transport = match factory.connect(job) {
        Ok(t) => t,
        Err(e) => {
            return (
                inconclusive(job, ProbeOutcome::Aborted, e.to_string()),
                None,
            )
        }
    };
    let (trace, transport) = match shaper {
        Some(s) => {
            let mut shaped = ShapedTransport::new(transport, Arc::clone(s));
            (probe_once(&job.spec, &mut shaped), shaped.into_inner())
        }
        None => {
            let mut t = transport;
            (probe_once(&job.spec, &mut t), t)
        }
    };
    factory.finish(job, transport);
    match trace {
        Ok(trace) => {
            let timing = want_timing.then(|| TimingSample::from_trace(&trace));
            let record = TrialRecord {
                repetition: job.repetition,
                probe_outcome: trace.outcome,
                estimate: estimate_trial(&trace),
                note: trace.note,
            };
            (record, timing)
        }
        Err(e) => (
            inconclusive(job, ProbeOutcome::Aborted, e.to_string()),
            None,
        ),
    }
}

struct Pending {
    remaining: usize,
    trials: Vec<(usize, TrialRecord)>,
    timings: Vec<(usize, TimingSample)>,
    started_ms: Option<u64>,
    error: Option<String>,
}

fn assemble(
    config: &CampaignConfig,
    vantage: &str,
    index: usize,
    target: &Target,
    mut pending: Pending,
    finished_ms: u64,
) -> ScanResult {
    pending.trials.sort_by_key(|(job, _)| *job);
    // first fully verified repetition at the largest MSS
    pending.timings.sort_by_key(|(job, _)| *job);
    let pacing = pending
        .timings
        .iter()
        .find(|(job, _)| {
            pending
                .trials
                .iter()
                .any(|(j, t)| j == job && t.estimate.outcome == TrialOutcome::IwLimited)
        })
        .map(|(_, sample)| detect_pacing(sample));

    let mut by_mss: BTreeMap<u16, Vec<TrialRecord>> = BTreeMap::new();
    for (_, rec) in pending.trials {
        by_mss.entry(rec.estimate.mss).or_default().push(rec);
    }
    let mut per_mss = BTreeMap::new();
    let mut trials = Vec::new();
    for (mss, mut recs) in by_mss {
        let mut estimates: Vec<TrialEstimate> = recs.iter().map(|r| r.estimate.clone()).collect();
        flag_tail_loss(&mut estimates);
        for (r, e) in recs.iter_mut().zip(estimates.iter()) {
            r.estimate.outcome = e.outcome;
        }
        let mut voted = vote_with_threshold(&estimates, config.vote_threshold);
        voted.mss = mss;
        per_mss.insert(mss, voted);
        trials.extend(recs);
    }
    let profile = classify_basis(&per_mss);

    let error = pending.error.or_else(|| {
        trials
            .iter()
            .all(|t| t.estimate.outcome == TrialOutcome::Inconclusive)
            .then(|| "no conclusive trials".to_string())
    });
    ScanResult {
        campaign: config.campaign_id.clone(),
        target_index: index,
        url: target.url.clone(),
        domain: target.domain.clone(),
        cdn: target.cdn.clone(),
        mime_type: target.mime_type.clone(),
        vantage: vantage.to_string(),
        profile,
        trials,
        pacing,
        started_ms: pending.started_ms.unwrap_or(finished_ms),
        finished_ms,
        error,
    }
}

/// Probes every target at every MSS of the sweep, `repetitions` times each,
/// with at most `max_parallel` probes in flight. Results reach `sink` in
/// target order as soon as each target completes. Per-target failures are
/// recorded in the result; only a failing sink aborts the campaign.
pub fn run_campaign<F, S>(
    config: &CampaignConfig,
    targets: &[Target],
    factory: &F,
    shaper: Option<Arc<Shaper>>,
    mut sink: S,
) -> Result<CampaignSummary, CampaignError>
where
    F: TransportFactory,
    S: FnMut(&ScanResult) -> io::Result<()>,
{
    config.validate()?;
    if targets.is_empty() {
        return Err(CampaignError::NoTargets);
    }
    let vantage = factory.vantage();
    let max_mss = *config.mss_sweep.iter().max().expect("validated");

    let mut pending: Vec<Option<Pending>> = Vec::with_capacity(targets.len());
    let mut jobs = Vec::new();
    for (index, target) in targets.iter().enumerate() {
        let mut p = Pending {
            remaining: 0,
            trials: Vec::new(),
            timings: Vec::new(),
            started_ms: None,
            error: None,
        };
        match factory.resolve(target) {
            Ok(addr) => {
                let base = ProbeSpec {
                    target: addr,
                    host_name: target.domain.clone(),
                    resource_path: url_path(&target.url),
                    ..config.probe.clone()
                };
                for &mss in &config.mss_sweep {
                    for rep in 0..config.repetitions {
                        jobs.push(ProbeJob {
                            target_index: index,
                            domain: target.domain.clone(),
                            mss,
                            repetition: rep,
                            seed: job_seed(config.seed, index, mss, rep),
                            spec: base.clone().with_mss(mss),
                        });
                        p.remaining += 1;
                    }
                }
            }
            Err(e) => p.error = Some(format!("resolve: {e}")),
        }
        pending.push(Some(p));
    }

    let next_job = AtomicUsize::new(0);
    let in_flight = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut summary = CampaignSummary {
        targets: targets.len(),
        probes: 0,
        failed_targets: 0,
        peak_in_flight: 0,
    };

    let result: Result<(), CampaignError> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Done>();
        for _ in 0..config.max_parallel.min(jobs.len()) {
            let tx = tx.clone();
            let (jobs, next_job, in_flight, peak, stop, shaper) =
                (&jobs, &next_job, &in_flight, &peak, &stop, shaper.as_ref());
            let want_pacing = config.detect_pacing;
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next_job.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                let (record, timing) =
                    run_job(factory, job, shaper, want_pacing && job.mss == max_mss);
                in_flight.fetch_sub(1, Ordering::SeqCst);
                if tx
                    .send(Done {
                        job: i,
                        record,
                        timing,
                    })
                    .is_err()
                {
                    break;
                }
            });
        }
        drop(tx);

        let mut emit_next = 0;
        let mut flush =
            |pending: &mut Vec<Option<Pending>>, summary: &mut CampaignSummary| -> io::Result<()> {
                while emit_next < targets.len() {
                    let ready = pending[emit_next]
                        .as_ref()
                        .is_some_and(|p| p.remaining == 0);
                    if !ready {
                        break;
                    }
                    let p = pending[emit_next].take().expect("present");
                    let result = assemble(
                        config,
                        &vantage,
                        emit_next,
                        &targets[emit_next],
                        p,
                        factory.timestamp_ms(),
                    );
                    if result.error.is_some() {
                        summary.failed_targets += 1;
                    }
                    sink(&result)?;
                    emit_next += 1;
                }
                Ok(())
            };

        flush(&mut pending, &mut summary)?;
        for done in rx {
            summary.probes += 1;
            let job = &jobs[done.job];
            let p = pending[job.target_index]
                .as_mut()
                .expect("target still pending");
            p.started_ms.get_or_insert_with(|| factory.timestamp_ms());
            p.remaining -= 1;
            p.trials.push((done.job, done.record));
            if let Some(t) = done.timing {
                p.timings.push((done.job, t));
            }
            if let Err(e) = flush(&mut pending, &mut summary) {
                stop.store(true, Ordering::Relaxed);
                return Err(e.into());
            }
        }
        Ok(())
    });
    result?;
    summary.peak_in_flight = peak.load(Ordering::SeqCst);
    Ok(summary)
}

/// Appends one JSON line per result and flushes after each.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out }
    }

    pub fn write(&mut self, result: &ScanResult) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, result)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_results_jsonl<R: BufRead>(input: R) -> io::Result<Vec<ScanResult>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// In-process origins keyed by domain, each probe on a fresh emulated path
/// with a virtual clock.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockFleet {
    #[serde(default)]
    pub vantage: Option<String>,
    pub origins: BTreeMap<String, OriginConfig>,
}

impl MockFleet {
    pub fn new() -> Self {
        MockFleet::default()
    }

    pub fn with_origin(mut self, domain: impl Into<String>, config: OriginConfig) -> Self {
        self.origins.insert(domain.into(), config);
        self
    }
}

impl TransportFactory for MockFleet {
    type Transport = EmulatedTransport;

    fn vantage(&self) -> String {
        self.vantage.clone().unwrap_or_else(|| "mock".into())
    }

    fn resolve(&self, target: &Target) -> Result<SocketAddr, String> {
        let index = self
            .origins
            .keys()
            .position(|d| *d == target.domain)
            .ok_or_else(|| format!("unknown host {}", target.domain))?;
        Ok(SocketAddr::from(([192, 0, 2, (index % 254 + 1) as u8], 80)))
    }

    fn connect(&self, job: &ProbeJob) -> Result<EmulatedTransport, TransportError> {
        let config = self
            .origins
            .get(&job.domain)
            .ok_or_else(|| TransportError::Unsupported(format!("unknown host {}", job.domain)))?
            .clone()
            .with_seed(job.seed);
        let origin =
            MockOrigin::new(config).map_err(|e| TransportError::Unsupported(e.to_string()))?;
        Ok(EmulatedTransport::new(origin))
    }

    fn finish(&self, _job: &ProbeJob, mut transport: EmulatedTransport) {
        let now = transport.now_ns();
        transport.settle(now + 1_000_000_000);
    }

    fn timestamp_ms(&self) -> u64 {
        0
    }
}

/// Raw-socket probes from this host.
#[cfg(target_os = "linux")]
#[derive(Debug, Clone)]
pub struct LiveFactory {
    pub vantage: String,
    pub port: u16,
}

#[cfg(target_os = "linux")]
impl TransportFactory for LiveFactory {
    type Transport = crate::transport::RawSocketTransport;

    fn vantage(&self) -> String {
        self.vantage.clone()
    }

    fn resolve(&self, target: &Target) -> Result<SocketAddr, String> {
        use std::net::ToSocketAddrs;
        (target.domain.as_str(), self.port)
            .to_socket_addrs()
            .map_err(|e| e.to_string())?
            .find(SocketAddr::is_ipv4)
            .ok_or_else(|| "no IPv4 address".to_string())
    }

    fn connect(&self, job: &ProbeJob) -> Result<Self::Transport, TransportError> {
        crate::transport::RawSocketTransport::connect(job.spec.target, None)
    }
}
