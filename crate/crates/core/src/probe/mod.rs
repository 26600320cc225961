//! The four-phase initial-window probe: handshake with a large receive
//! window, a request that is never acknowledged until the server
//! retransmits, a verification ACK with a two-segment window, and a reset.

mod engine;
mod spec;
mod trace;

pub use engine::{abort, open_handshake, probe_once, verify_iw_full, Connection, ProbeError};
pub use spec::{ProbeSpec, SpecError, DEFAULT_MSS_SWEEP};
pub use trace::{Direction, ProbeOutcome, ProbeTrace, SegmentEvent};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::origin::{DropPlan, IwConfig, MockOrigin, OriginConfig, SessionEventKind};
    use crate::segment::TcpFlags;
    use crate::transport::{EmulatedTransport, Transport};

    fn spec(mss: u16) -> ProbeSpec {
        ProbeSpec::default().with_mss(mss)
    }

    fn transport(cfg: OriginConfig) -> EmulatedTransport {
        EmulatedTransport::new(MockOrigin::new(cfg).unwrap())
    }

    fn payload(trace: &ProbeTrace) -> Vec<(u64, u64)> {
        trace
            .inbound_payload()
            .map(|e| (e.seq_offset, e.payload_len))
            .collect()
    }

    #[test]
    fn iw10_trace_has_ten_segments_then_overlap() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(10), 100_000));
        let trace = probe_once(&spec(1200), &mut t).unwrap();
        assert_eq!(trace.outcome, ProbeOutcome::Completed);
        let segs = payload(&trace);
        let expected: Vec<_> = (0..10)
            .map(|i| (i * 1200, 1200))
            .chain([(0, 1200)])
            .collect();
        assert_eq!(segs[..11], expected[..]);
        assert_eq!(trace.verified_full, Some(true));
        assert_eq!(trace.server_mss, Some(1200));
        assert!(trace.handshake_rtt_ns > 0);
    }

    #[test]
    fn no_ack_for_data_before_retransmission() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(4), 100_000));
        let trace = probe_once(&spec(536), &mut t).unwrap();
        let get = trace
            .events
            .iter()
            .position(|e| e.direction == Direction::Outbound && e.payload_len > 0)
            .unwrap();
        let mut detector = crate::estimation::RetransmissionDetector::new();
        let acks_between = trace.events[get + 1..]
            .iter()
            .take_while(|e| {
                !(e.is_inbound_payload() && detector.observe(e.seq_offset, e.payload_len))
            })
            .filter(|e| e.direction == Direction::Outbound)
            .count();
        assert_eq!(acks_between, 0);
    }

    #[test]
    fn syn_carries_only_mss_and_window_scale() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(2), 10_000));
        let conn = open_handshake(&spec(1200), &mut t).unwrap();
        let syn = &conn.events()[0];
        assert_eq!(syn.flags, TcpFlags::SYN);
        assert_eq!(syn.window, Some(65535));
        assert_eq!(conn.server_mss(), Some(1200));
    }

    #[test]
    fn delayed_handshake_ack() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(10), 100_000));
        let conn = open_handshake(&spec(1200).with_ack_delay_ms(50), &mut t).unwrap();
        let synack = conn
            .events()
            .iter()
            .find(|e| e.direction == Direction::Inbound)
            .unwrap();
        let ack = conn.events().last().unwrap();
        assert_eq!(ack.direction, Direction::Outbound);
        assert!(ack.timestamp_ns - synack.timestamp_ns >= 50_000_000);
    }

    #[test]
    fn unreachable_target_fails_after_timeout() {
        let mut t = EmulatedTransport::unreachable();
        let trace = probe_once(&spec(1200), &mut t).unwrap();
        assert_eq!(trace.outcome, ProbeOutcome::HandshakeFailed);
        assert!(t.now_ns() >= 30_000_000_000);
        // SYN retries but no reset
        assert!(trace.events.iter().all(|e| e.flags == TcpFlags::SYN));
    }

    #[test]
    fn small_object_is_data_limited() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(10), 3000));
        let trace = probe_once(&spec(1200), &mut t).unwrap();
        assert_eq!(trace.outcome, ProbeOutcome::Completed);
        assert_eq!(trace.verified_full, Some(false));
        assert_eq!(
            payload(&trace)[..4],
            [(0, 1200), (1200, 1200), (2400, 600), (0, 1200)]
        );
    }

    #[test]
    fn verification_ack_advertises_two_segments() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(10), 100_000));
        let trace = probe_once(&spec(1200), &mut t).unwrap();
        let verify = trace
            .events
            .iter()
            .filter(|e| e.direction == Direction::Outbound && e.flags == TcpFlags::ACK)
            .nth(1)
            .unwrap();
        assert_eq!(verify.window, Some(2400));
        assert_eq!(verify.ack, Some(12000));
    }

    #[test]
    fn tail_drop_shows_nine_segments() {
        let cfg = OriginConfig::new(IwConfig::Segments(10), 100_000).with_drop_plan(DropPlan::Tail);
        let mut t = transport(cfg);
        let trace = probe_once(&spec(1200), &mut t).unwrap();
        let segs = payload(&trace);
        let terminal = crate::estimation::find_first_retransmission(&segs).unwrap();
        assert_eq!(terminal, 9);
    }

    #[test]
    fn abort_frees_server_session_and_is_idempotent() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(10), 100_000));
        let mut conn = open_handshake(&spec(1200), &mut t).unwrap();
        abort(&mut conn, &mut t);
        let sent = conn.events().len();
        abort(&mut conn, &mut t);
        assert_eq!(conn.events().len(), sent);
        assert!(conn.is_closed());
        let now = t.now_ns();
        t.settle(now + 1_000_000);
        assert_eq!(t.origin().unwrap().active_sessions(), 0);
        assert_eq!(t.session_log().unwrap().count(SessionEventKind::Reset), 1);
    }

    #[test]
    fn completed_probe_resets_server() {
        let mut t = transport(OriginConfig::new(IwConfig::Segments(10), 100_000));
        let trace = probe_once(&spec(1200), &mut t).unwrap();
        assert!(trace.events.last().unwrap().flags.contains(TcpFlags::RST));
        let now = t.now_ns();
        t.settle(now + 1_000_000);
        assert_eq!(t.origin().unwrap().active_sessions(), 0);
    }

    #[test]
    fn timestamps_never_decrease() {
        let cfg = OriginConfig::new(IwConfig::Segments(16), 100_000).with_drop_plan(DropPlan::Head);
        let mut t = transport(cfg);
        let trace = probe_once(&spec(128), &mut t).unwrap();
        assert!(trace
            .events
            .windows(2)
            .all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
    }
}
