use serde::{Deserialize, Serialize};

use super::intervals::{IntervalSet, RetransmissionDetector};
use crate::probe::{ProbeOutcome, ProbeTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    IwLimited,
    DataLimited,
    TailLossSuspected,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialEstimate {
    pub mss: u16,
    /// Sequence extent of the first flight: the end of the highest byte
    /// received before the terminal retransmission.
    pub iw_bytes: u64,
    pub iw_segments: u64,
    /// Distinct bytes actually received before the terminal retransmission.
    pub received_bytes: u64,
    /// Largest payload seen in the first flight.
    pub segment_size: u64,
    pub verified_full: bool,
    pub outcome: TrialOutcome,
}

/// Estimates the window from the inbound payload that precedes the first
/// overlapping retransmission.
pub fn estimate_trial(trace: &ProbeTrace) -> TrialEstimate {
    let mut detector = RetransmissionDetector::new();
    let mut union = IntervalSet::new();
    let mut segment_size = 0;
    for ev in trace.inbound_payload() {
        if detector.observe(ev.seq_offset, ev.payload_len) {
            break;
        }
        union.insert(ev.seq_offset, ev.end());
        segment_size = segment_size.max(ev.payload_len);
    }
    let iw_bytes = union.max_end().unwrap_or(0);
    let iw_segments = if segment_size == 0 {
        0
    } else {
        iw_bytes.div_ceil(segment_size)
    };
    let verified_full = trace.verified_full.unwrap_or(false);
    let outcome = match trace.outcome {
        _ if iw_bytes == 0 => TrialOutcome::Inconclusive,
        ProbeOutcome::Completed if verified_full => TrialOutcome::IwLimited,
        ProbeOutcome::Completed => TrialOutcome::DataLimited,
        _ => TrialOutcome::Inconclusive,
    };
    TrialEstimate {
        mss: trace.spec.announced_mss,
        iw_bytes,
        iw_segments,
        received_bytes: union.covered(),
        segment_size,
        verified_full,
        outcome,
    }
}

/// Marks verified trials that fall short of the modal estimate of their
/// repetitions as suspected tail loss. Values are never corrected.
pub fn flag_tail_loss(trials: &mut [TrialEstimate]) {
    let Some(modal) = super::modal(
        trials
            .iter()
            .filter(|t| t.outcome != TrialOutcome::Inconclusive)
            .map(|t| t.iw_bytes),
    ) else {
        return;
    };
    for t in trials.iter_mut() {
        if t.outcome == TrialOutcome::IwLimited && t.iw_bytes < modal {
            t.outcome = TrialOutcome::TailLossSuspected;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{Direction, ProbeSpec, SegmentEvent};
    use crate::segment::TcpFlags;
    use proptest::prelude::*;

    fn trace_of(segs: &[(u64, u64)], outcome: ProbeOutcome, verified: Option<bool>) -> ProbeTrace {
        ProbeTrace {
            spec: ProbeSpec::default(),
            events: segs
                .iter()
                .enumerate()
                .map(|(i, &(o, l))| SegmentEvent {
                    direction: Direction::Inbound,
                    seq_offset: o,
                    payload_len: l,
                    flags: TcpFlags::ACK,
                    timestamp_ns: i as u64,
                    ack: None,
                    window: None,
                })
                .collect(),
            server_mss: Some(1200),
            handshake_rtt_ns: 1,
            outcome,
            verified_full: verified,
            note: None,
        }
    }

    #[test]
    fn ten_segments_then_overlap() {
        let mut segs: Vec<_> = (0..10).map(|i| (i * 1200, 1200)).collect();
        segs.push((0, 1200));
        let est = estimate_trial(&trace_of(&segs, ProbeOutcome::Completed, Some(true)));
        assert_eq!(est.iw_bytes, 12000);
        assert_eq!(est.iw_segments, 10);
        assert_eq!(est.outcome, TrialOutcome::IwLimited);
    }

    #[test]
    fn byte_cap_counts_short_last_segment() {
        let mut segs: Vec<_> = (0..87).map(|i| (i * 1200, 1200)).collect();
        segs.push((87 * 1200, 600));
        segs.push((0, 1200));
        let est = estimate_trial(&trace_of(&segs, ProbeOutcome::Completed, Some(true)));
        assert_eq!(est.iw_bytes, 105000);
        assert_eq!(est.iw_segments, 88);
    }

    #[test]
    fn within_drop_keeps_extent() {
        // segment 5 lost, then the server retransmits segment 1
        let mut segs: Vec<_> = (0..10)
            .filter(|&i| i != 4)
            .map(|i| (i * 1200, 1200))
            .collect();
        segs.push((0, 1200));
        let est = estimate_trial(&trace_of(&segs, ProbeOutcome::Completed, Some(false)));
        assert_eq!(est.iw_bytes, 12000);
        assert_eq!(est.received_bytes, 10800);
        assert_eq!(est.outcome, TrialOutcome::DataLimited);
    }

    #[test]
    fn no_payload_is_inconclusive() {
        let est = estimate_trial(&trace_of(&[], ProbeOutcome::NoData, None));
        assert_eq!((est.iw_bytes, est.outcome), (0, TrialOutcome::Inconclusive));
        let est = estimate_trial(&trace_of(&[(0, 100)], ProbeOutcome::NoRetransmission, None));
        assert_eq!(est.outcome, TrialOutcome::Inconclusive);
    }

    #[test]
    fn short_verified_trial_flagged() {
        let mk = |b, out| TrialEstimate {
            mss: 1200,
            iw_bytes: b,
            iw_segments: b / 1200,
            received_bytes: b,
            segment_size: 1200,
            verified_full: true,
            outcome: out,
        };
        let mut trials = vec![
            mk(12000, TrialOutcome::IwLimited),
            mk(12000, TrialOutcome::IwLimited),
            mk(10800, TrialOutcome::IwLimited),
            mk(0, TrialOutcome::Inconclusive),
        ];
        flag_tail_loss(&mut trials);
        assert_eq!(trials[2].outcome, TrialOutcome::TailLossSuspected);
        assert_eq!(trials[0].outcome, TrialOutcome::IwLimited);
        assert_eq!(trials[3].outcome, TrialOutcome::Inconclusive);
    }

    /// Byte-by-byte oracle for both the union size and its extent.
    fn oracle(segs: &[(u64, u64)]) -> (u64, u64) {
        let mut seen = std::collections::BTreeSet::new();
        for &(o, l) in segs {
            if (o..o + l).any(|b| seen.contains(&b)) {
                break;
            }
            seen.extend(o..o + l);
        }
        (
            seen.len() as u64,
            seen.iter().next_back().map_or(0, |m| m + 1),
        )
    }

    proptest! {
        #[test]
        fn matches_interval_union_oracle(segs in proptest::collection::vec((0u64..3000, 0u64..300), 0..40)) {
            let est = estimate_trial(&trace_of(&segs, ProbeOutcome::Completed, Some(true)));
            let (union, extent) = oracle(&segs);
            prop_assert_eq!(est.received_bytes, union);
            prop_assert_eq!(est.iw_bytes, extent);
            prop_assert!(est.iw_bytes >= est.iw_segments);
            prop_assert!(est.iw_bytes <= est.iw_segments * est.segment_size.max(1));
        }

        #[test]
        fn removing_tail_never_increases(n in 1u64..60, size in 1u64..1460, keep in 0usize..60) {
            let flight: Vec<_> = (0..n).map(|i| (i * size, size)).collect();
            let keep = keep.min(flight.len());
            let mut full = flight.clone();
            full.push((0, size));
            let mut cut = flight[..keep].to_vec();
            cut.push((0, size));
            let a = estimate_trial(&trace_of(&full, ProbeOutcome::Completed, Some(true)));
            let b = estimate_trial(&trace_of(&cut, ProbeOutcome::Completed, Some(true)));
            prop_assert!(b.iw_bytes <= a.iw_bytes);
        }
    }
}
