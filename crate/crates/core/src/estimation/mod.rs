//! From traces to window estimates: the overlap rule, per-trial estimates,
//! majority voting, basis classification and client-window capping.

mod basis;
mod client_window;
mod intervals;
mod trial;
mod vote;

use std::collections::BTreeMap;

pub use basis::{classify_basis, Basis, IwProfile};
pub use client_window::{client_window, client_windows, effective_first_flight, ClientWindowEntry};
pub use intervals::{find_first_retransmission, IntervalSet, RetransmissionDetector};
pub use trial::{estimate_trial, flag_tail_loss, TrialEstimate, TrialOutcome};
pub use vote::{vote, vote_with_threshold, VotedEstimate, DEFAULT_VOTE_THRESHOLD};

/// Most frequent value; ties go to the larger value.
pub(crate) fn modal(values: impl Iterator<Item = u64>) -> Option<u64> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(v, c)| (c, v))
        .map(|(v, _)| v)
}
