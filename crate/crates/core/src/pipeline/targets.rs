use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{Basis, IwProfile};
use crate::NORMALIZATION_MSS;

/// One more byte than the largest window observed in practice, 100 full
/// segments.
pub const DEFAULT_MIN_BYTES: u64 = 101 * NORMALIZATION_MSS;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub url: String,
    #[serde(default)]
    pub domain: String,
    #[serde(alias = "size")]
    pub object_size: u64,
    #[serde(default, alias = "mime")]
    pub mime_type: Option<String>,
    #[serde(default)]
    pub cname_chain: Vec<String>,
}

/// Host part of an absolute or scheme-less URL, lowercased.
pub fn url_host(url: &str) -> String {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let authority = rest.split(['/', '?', '#']).next().unwrap_or_default();
    let authority = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = if let Some(v6) = authority.strip_prefix('[') {
        v6.split(']').next().unwrap_or_default()
    } else {
        authority.split(':').next().unwrap_or_default()
    };
    normalize_host(host)
}

fn normalize_host(host: &str) -> String {
    host.trim().trim_end_matches('.').to_ascii_lowercase()
}

/// Path and query of a URL, `/` when absent.
pub fn url_path(url: &str) -> String {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    match rest.find('/') {
        Some(i) => rest[i..].split('#').next().unwrap_or("/").to_string(),
        None => "/".to_string(),
    }
}

impl UrlRecord {
    fn normalized(mut self) -> Self {
        self.domain = if self.domain.is_empty() {
            url_host(&self.url)
        } else {
            normalize_host(&self.domain)
        };
        self.cname_chain = self.cname_chain.iter().map(|h| normalize_host(h)).collect();
        self
    }
}

#[derive(Deserialize)]
struct CsvRow {
    url: String,
    #[serde(default)]
    domain: Option<String>,
    #[serde(alias = "object_size")]
    size: u64,
    #[serde(default, alias = "mime_type")]
    mime: Option<String>,
    /// Hostnames separated by `;` or whitespace.
    #[serde(default)]
    cname_chain: Option<String>,
}

/// Reads `url,domain,size,mime,cname_chain` rows; only `url` and `size`
/// are required.
pub fn read_targets_csv<R: Read>(input: R) -> Result<Vec<UrlRecord>, TargetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row?;
        let chain = row
            .cname_chain
            .unwrap_or_default()
            .split(|c: char| c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        out.push(
            UrlRecord {
                url: row.url,
                domain: row.domain.unwrap_or_default(),
                object_size: row.size,
                mime_type: row.mime.filter(|m| !m.is_empty()),
                cname_chain: chain,
            }
            .normalized(),
        );
    }
    Ok(out)
}

pub fn read_targets_jsonl<R: BufRead>(input: R) -> Result<Vec<UrlRecord>, TargetError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UrlRecord = serde_json::from_str(&line).map_err(|e| TargetError::Invalid {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec.normalized());
    }
    Ok(out)
}

/// CDN name to hostname suffixes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CdnPatternSet {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl CdnPatternSet {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        Ok(Self::new(raw))
    }

    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Self {
        let entries = entries
            .into_iter()
            .map(|(cdn, suffixes)| {
                let suffixes = suffixes
                    .iter()
                    .map(|s| normalize_host(s.trim_start_matches('.')))
                    .filter(|s| !s.is_empty())
                    .collect();
                (cdn, suffixes)
            })
            .collect();
        CdnPatternSet { entries }
    }

    /// CDN owning `host`, preferring the longest matching suffix.
    fn lookup(&self, host: &str) -> Option<&str> {
        self.entries
            .iter()
            .flat_map(|(cdn, sfx)| sfx.iter().map(move |s| (cdn, s)))
            .filter(|(_, s)| suffix_matches(host, s))
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
            .map(|(cdn, _)| cdn.as_str())
    }
}

/// Label-aligned suffix match: `a.edgesuite.net` and `edgesuite.net` match
/// `edgesuite.net`, `fooedgesuite.net` does not.
pub fn suffix_matches(host: &str, suffix: &str) -> bool {
    host == suffix
        || (host.len() > suffix.len()
            && host.ends_with(suffix)
            && host.as_bytes()[host.len() - suffix.len() - 1] == b'.')
}

/// Walks the domain and then its CNAME chain; the first hop that matches
/// any pattern decides.
pub fn classify_cdn(
    domain: &str,
    cname_chain: &[String],
    patterns: &CdnPatternSet,
) -> Option<String> {
    std::iter::once(domain)
        .chain(cname_chain.iter().map(String::as_str))
        .map(normalize_host)
        .find_map(|h| patterns.lookup(&h).map(str::to_string))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub domain: String,
    pub url: String,
    pub cdn: String,
    pub object_size: u64,
    #[serde(default)]
    pub mime_type: Option<String>,
}

/// One URL per CDN-served domain: the largest object, ties broken by the
/// lexicographically smallest URL. Output is ordered by domain.
pub fn select_targets(records: &[UrlRecord], patterns: &CdnPatternSet) -> Vec<Target> {
    let mut best: BTreeMap<&str, (&UrlRecord, String)> = BTreeMap::new();
    for rec in records {
        let Some(cdn) = classify_cdn(&rec.domain, &rec.cname_chain, patterns) else {
            continue;
        };
        let better = match best.get(rec.domain.as_str()) {
            None => true,
            Some((cur, _)) => {
                rec.object_size > cur.object_size
                    || (rec.object_size == cur.object_size && rec.url < cur.url)
            }
        };
        if better {
            best.insert(&rec.domain, (rec, cdn));
        }
    }
    best.into_values()
        .map(|(rec, cdn)| Target {
            domain: rec.domain.clone(),
            url: rec.url.clone(),
            cdn,
            object_size: rec.object_size,
            mime_type: rec.mime_type.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<Target>,
    pub removed: usize,
    /// CDNs left without any target.
    pub cdns_lost: Vec<String>,
}

pub fn filter_small_objects(targets: Vec<Target>, min_bytes: u64) -> FilterOutcome {
    let before: BTreeSet<String> = targets.iter().map(|t| t.cdn.clone()).collect();
    let total = targets.len();
    let kept: Vec<Target> = targets
        .into_iter()
        .filter(|t| t.object_size >= min_bytes)
        .collect();
    let after: BTreeSet<&String> = kept.iter().map(|t| &t.cdn).collect();
    let cdns_lost = before
        .iter()
        .filter(|c| !after.contains(c))
        .cloned()
        .collect();
    FilterOutcome {
        removed: total - kept.len(),
        kept,
        cdns_lost,
    }
}

fn group_seed(seed: u64, key: &str) -> u64 {
    // FNV-1a over the key, folded into the campaign seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

/// Samples up to `k` targets per (CDN, basis, window) group. Each group
/// draws from its own seeded generator, so adding a group leaves the others
/// unchanged.
pub fn group_and_sample(profiles: &[(Target, IwProfile)], k: usize, seed: u64) -> Vec<Target> {
    let mut groups: BTreeMap<(String, Basis, u64), Vec<&Target>> = BTreeMap::new();
    for (target, profile) in profiles {
        groups
            .entry((target.cdn.clone(), profile.basis, profile.key_value()))
            .or_default()
            .push(target);
    }
    let mut out = Vec::new();
    for ((cdn, basis, value), mut members) in groups {
        members.sort_by(|a, b| a.domain.cmp(&b.domain).then(a.url.cmp(&b.url)));
        let key = format!("{cdn}\u{0}{}\u{0}{value}", basis.as_str());
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(seed, &key));
        let mut chosen: Vec<&Target> = members.choose_multiple(&mut rng, k).copied().collect();
        chosen.sort_by(|a, b| a.domain.cmp(&b.domain).then(a.url.cmp(&b.url)));
        out.extend(chosen.into_iter().cloned());
    }
    out
}
