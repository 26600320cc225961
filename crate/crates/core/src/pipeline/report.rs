use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::campaign::ScanResult;
use crate::estimation::{Basis, TrialOutcome, VotedEstimate};
use crate::{div_round_half_up, NORMALIZATION_MSS};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no results to report")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const CDN_CONFIGS_FILE: &str = "cdn_iw.csv";
pub const MIME_SHARES_FILE: &str = "mime_share.csv";
pub const VANTAGE_MATRIX_FILE: &str = "vantage_matrix.csv";
pub const PROFILES_FILE: &str = "profiles.jsonl";

/// The three report tables as CSV text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    /// Distinct window configurations per CDN.
    pub cdn_configs: String,
    /// Window shares per CDN and MIME type.
    pub mime_shares: String,
    /// CDN by vantage, a range where repetitions disagreed.
    pub vantage_matrix: String,
}

fn usable(r: &ScanResult) -> bool {
    r.error.is_none() && r.profile.basis != Basis::Indeterminate
}

#[derive(Serialize)]
struct ConfigRow<'a> {
    cdn: &'a str,
    basis: &'static str,
    iw_segments: u64,
    iw_bytes: u64,
    hosts: usize,
}

#[derive(Serialize)]
struct ShareRow<'a> {
    cdn: &'a str,
    mime_type: &'a str,
    basis: &'static str,
    iw_segments: u64,
    iw_bytes: u64,
    hosts: usize,
    share_percent: String,
}

fn csv_text<T: Serialize>(
    rows: impl IntoIterator<Item = T>,
    header: &[&str],
) -> Result<String, ReportError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

type ConfigKey<'a> = (&'a str, Basis, u64, u64);
type ConfigValue = (Basis, u64, u64);

fn config_key(r: &ScanResult) -> ConfigKey<'_> {
    (
        &r.cdn,
        r.profile.basis,
        r.profile.iw_segments_normalized,
        r.profile.iw_bytes,
    )
}

/// A trial's window in full-sized segments.
fn trial_segments(r: &ScanResult, bytes: u64, segment_size: u64) -> u64 {
    match r.profile.basis {
        Basis::SegmentBased if segment_size > 0 => div_round_half_up(bytes, segment_size),
        _ => div_round_half_up(bytes, NORMALIZATION_MSS),
    }
}

fn disagrees(r: &ScanResult) -> bool {
    r.profile
        .per_mss
        .values()
        .any(|v| v.votes_for < v.votes_total)
        || r.trials
            .iter()
            .any(|t| t.estimate.outcome == TrialOutcome::TailLossSuspected)
}

/// Segment values a result contributes to its matrix cell: the profile's
/// value, plus every conclusive trial when repetitions disagreed.
fn cell_values(r: &ScanResult) -> Vec<u64> {
    let mut v = vec![r.profile.iw_segments_normalized];
    if disagrees(r) {
        v.extend(
            r.trials
                .iter()
                .filter(|t| t.estimate.outcome != TrialOutcome::Inconclusive)
                .map(|t| trial_segments(r, t.estimate.iw_bytes, t.estimate.segment_size)),
        );
    }
    v
}

fn render_cell(values: &BTreeSet<u64>) -> String {
    match (values.first(), values.last()) {
        (Some(lo), Some(hi)) if lo == hi => lo.to_string(),
        (Some(lo), Some(hi)) => format!("{lo}\u{2013}{hi}"),
        _ => "-".to_string(),
    }
}

pub fn emit_report(results: &[ScanResult]) -> Result<Report, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let ok: Vec<&ScanResult> = results.iter().filter(|r| usable(r)).collect();

    let mut configs: BTreeMap<ConfigKey, usize> = BTreeMap::new();
    for r in &ok {
        *configs.entry(config_key(r)).or_default() += 1;
    }
    let cdn_configs = csv_text(
        configs
            .iter()
            .map(|(&(cdn, basis, seg, bytes), &hosts)| ConfigRow {
                cdn,
                basis: basis.as_str(),
                iw_segments: seg,
                iw_bytes: bytes,
                hosts,
            }),
        &["cdn", "basis", "iw_segments", "iw_bytes", "hosts"],
    )?;

    let mut shares: BTreeMap<(&str, &str), BTreeMap<ConfigValue, usize>> = BTreeMap::new();
    for r in &ok {
        let (_, basis, seg, bytes) = config_key(r);
        let mime = r.mime_type.as_deref().unwrap_or("unknown");
        *shares
            .entry((&r.cdn, mime))
            .or_default()
            .entry((basis, seg, bytes))
            .or_default() += 1;
    }
    let mut share_rows = Vec::new();
    for ((cdn, mime), groups) in &shares {
        let total: usize = groups.values().sum();
        for (&(basis, seg, bytes), &hosts) in groups {
            share_rows.push(ShareRow {
                cdn,
                mime_type: mime,
                basis: basis.as_str(),
                iw_segments: seg,
                iw_bytes: bytes,
                hosts,
                share_percent: format!("{:.2}", 100.0 * hosts as f64 / total as f64),
            });
        }
    }
    let mime_shares = csv_text(
        share_rows,
        &[
            "cdn",
            "mime_type",
            "basis",
            "iw_segments",
            "iw_bytes",
            "hosts",
            "share_percent",
        ],
    )?;

    let vantages: BTreeSet<&str> = results.iter().map(|r| r.vantage.as_str()).collect();
    let cdns: BTreeSet<&str> = results.iter().map(|r| r.cdn.as_str()).collect();
    let mut cells: BTreeMap<(&str, &str), BTreeSet<u64>> = BTreeMap::new();
    for r in &ok {
        cells
            .entry((&r.cdn, &r.vantage))
            .or_default()
            .extend(cell_values(r));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("cdn").chain(vantages.iter().copied()))?;
    let empty = BTreeSet::new();
    for cdn in &cdns {
        let row: Vec<String> = vantages
            .iter()
            .map(|v| render_cell(cells.get(&(*cdn, *v)).unwrap_or(&empty)))
            .collect();
        w.write_record(std::iter::once(cdn.to_string()).chain(row))?;
    }
    let vantage_matrix =
        String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");

    Ok(Report {
        cdn_configs,
        mime_shares,
        vantage_matrix,
    })
}

/// Per-host summary exported alongside the tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRecord {
    pub host: String,
    pub url: String,
    pub cdn: String,
    pub vantage: String,
    pub basis: Basis,
    pub iw_segments: u64,
    pub iw_bytes: u64,
    pub per_mss: BTreeMap<u16, VotedEstimate>,
    pub flags: Vec<&'static str>,
}

impl From<&ScanResult> for ProfileRecord {
    fn from(r: &ScanResult) -> Self {
        let mut flags = Vec::new();
        let has = |o: TrialOutcome| r.trials.iter().any(|t| t.estimate.outcome == o);
        if has(TrialOutcome::TailLossSuspected) {
            flags.push("tail_loss_suspected");
        }
        if has(TrialOutcome::DataLimited) {
            flags.push("data_limited");
        }
        if r.profile.per_mss.values().any(|v| !v.valid) {
            flags.push("invalid_vote");
        }
        if r.error.is_some() {
            flags.push("error");
        }
        ProfileRecord {
            host: r.domain.clone(),
            url: r.url.clone(),
            cdn: r.cdn.clone(),
            vantage: r.vantage.clone(),
            basis: r.profile.basis,
            iw_segments: r.profile.iw_segments_normalized,
            iw_bytes: r.profile.iw_bytes,
            per_mss: r.profile.per_mss.clone(),
            flags,
        }
    }
}

pub fn write_profiles_jsonl<W: Write>(results: &[ScanResult], mut out: W) -> io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, &ProfileRecord::from(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes the three tables and the profile export into `dir`.
pub fn write_report(results: &[ScanResult], dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let report = emit_report(results)?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in [
        (CDN_CONFIGS_FILE, &report.cdn_configs),
        (MIME_SHARES_FILE, &report.mime_shares),
        (VANTAGE_MATRIX_FILE, &report.vantage_matrix),
    ] {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    let path = dir.join(PROFILES_FILE);
    write_profiles_jsonl(results, io::BufWriter::new(fs::File::create(&path)?))?;
    written.push(path);
    Ok(written)
}
