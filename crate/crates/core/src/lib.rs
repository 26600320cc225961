//! Active measurement of TCP initial congestion windows.
//!
//! The crate is organised around the life of a measurement:
//!
//! * [`probe`] drives a minimal TCP state machine that withholds
//!   acknowledgments until the server retransmits, recording every segment.
//! * [`estimation`] turns those traces into per-trial window estimates,
//!   votes over repetitions and classifies windows as segment- or byte-based.
//! * [`pacing`] inspects first-flight arrival times for pacer fingerprints.
//! * [`origin`] is an in-process origin server with drop injection and
//!   pacing emulation, reachable through [`transport::EmulatedTransport`].
//! * [`pipeline`] covers target selection, CDN classification, rate shaping,
//!   campaign orchestration and reporting.
//! * [`flow`] models the effect of the initial window on completion time and
//!   loss at a drop-tail bottleneck.

pub mod estimation;
pub mod flow;
pub mod origin;
pub mod pacing;
pub mod pipeline;
pub mod probe;
pub mod segment;
pub mod transport;
pub mod wire;

pub use estimation::{
    classify_basis, effective_first_flight, estimate_trial, find_first_retransmission, vote, Basis,
    ClientWindowEntry, IwProfile, TrialEstimate, TrialOutcome, VotedEstimate,
};
pub use origin::{DropPlan, IwConfig, MockOrigin, MssPolicy, OriginConfig, PacingMode};
pub use pacing::{detect_pacing, segment_trains, PacingClass, PacingVerdict, TimingSample};
pub use probe::{
    abort, open_handshake, probe_once, verify_iw_full, Connection, Direction, ProbeOutcome,
    ProbeSpec, ProbeTrace, SegmentEvent,
};
pub use segment::{TcpFlags, TcpOptions, TcpSegment};
pub use transport::{EmulatedTransport, Inbound, Transport, TransportError};

/// Full-sized Ethernet payload used to normalise windows to segments.
pub const NORMALIZATION_MSS: u64 = 1460;

/// Rounds `num / den` to the nearest integer, halves rounding up.
pub fn div_round_half_up(num: u64, den: u64) -> u64 {
    assert!(den > 0, "division by zero");
    (2 * num + den) / (2 * den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_half_up() {
        assert_eq!(div_round_half_up(105000, 1460), 72);
        assert_eq!(div_round_half_up(3, 2), 2);
        assert_eq!(div_round_half_up(5, 2), 3);
        assert_eq!(div_round_half_up(4, 3), 1);
        assert_eq!(div_round_half_up(0, 7), 0);
    }
}
