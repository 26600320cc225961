use serde::{Deserialize, Serialize};

use super::trial::{TrialEstimate, TrialOutcome};

/// Default share of votes the largest estimate must strictly exceed.
pub const DEFAULT_VOTE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotedEstimate {
    pub mss: u16,
    pub iw_bytes: u64,
    /// Largest payload among the agreeing trials.
    pub segment_size: u64,
    pub votes_for: u32,
    pub votes_total: u32,
    pub valid: bool,
}

pub fn vote(trials: &[TrialEstimate]) -> VotedEstimate {
    vote_with_threshold(trials, DEFAULT_VOTE_THRESHOLD)
}

/// The candidate is the largest estimate among conclusive trials; it wins
/// when its share of conclusive trials is strictly above `threshold`.
pub fn vote_with_threshold(trials: &[TrialEstimate], threshold: f64) -> VotedEstimate {
    let mss = trials.first().map_or(0, |t| t.mss);
    let conclusive: Vec<_> = trials
        .iter()
        .filter(|t| t.outcome != TrialOutcome::Inconclusive)
        .collect();
    let candidate = conclusive.iter().map(|t| t.iw_bytes).max().unwrap_or(0);
    let agreeing: Vec<_> = conclusive
        .iter()
        .filter(|t| t.iw_bytes == candidate)
        .collect();
    let votes_for = agreeing.len() as u32;
    let votes_total = conclusive.len() as u32;
    VotedEstimate {
        mss,
        iw_bytes: candidate,
        segment_size: agreeing.iter().map(|t| t.segment_size).max().unwrap_or(0),
        votes_for,
        votes_total,
        valid: votes_total > 0 && f64::from(votes_for) > threshold * f64::from(votes_total),
    }
}
