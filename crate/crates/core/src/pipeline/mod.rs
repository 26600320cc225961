//! From URL lists to reports: CDN classification, target selection,
//! shaped probe campaigns and the summary tables.

mod campaign;
mod report;
pub mod shaper;
mod targets;

#[cfg(target_os = "linux")]
pub use campaign::LiveFactory;
pub use campaign::{
    read_results_jsonl, run_campaign, CampaignConfig, CampaignError, CampaignSummary, JsonlSink,
    MockFleet, ProbeJob, ScanResult, TransportFactory, TrialRecord,
};
pub use report::{
    emit_report, write_profiles_jsonl, write_report, ProfileRecord, Report, ReportError,
    CDN_CONFIGS_FILE, MIME_SHARES_FILE, PROFILES_FILE, VANTAGE_MATRIX_FILE,
};
pub use shaper::{Shaper, ShaperClosed, TokenBucket};
pub use targets::{
    classify_cdn, filter_small_objects, group_and_sample, read_targets_csv, read_targets_jsonl,
    select_targets, suffix_matches, url_host, url_path, CdnPatternSet, FilterOutcome, Target,
    TargetError, UrlRecord, DEFAULT_MIN_BYTES,
};
