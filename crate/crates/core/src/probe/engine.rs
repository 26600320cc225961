use rand::Rng;
use thiserror::Error;

use super::spec::{ProbeSpec, SpecError};
use super::trace::{Direction, ProbeOutcome, ProbeTrace, SegmentEvent};
use crate::estimation::RetransmissionDetector;
use crate::segment::{TcpFlags, TcpOptions, TcpSegment};
use crate::transport::{Inbound, Transport, TransportError};

const NS_PER_MS: u64 = 1_000_000;
const SYN_RETRY_NS: u64 = 1_000 * NS_PER_MS;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("no SYN/ACK before the probe timeout")]
    HandshakeTimeout,
    #[error("connection reset during handshake")]
    HandshakeReset,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Prober-side state of one connection.
#[derive(Debug)]
pub struct Connection {
    spec: ProbeSpec,
    local_port: u16,
    remote_port: u16,
    client_isn: u32,
    server_isn: u32,
    snd_nxt: u32,
    server_mss: Option<u16>,
    server_window_scale: Option<u8>,
    handshake_rtt_ns: u64,
    deadline_ns: u64,
    events: Vec<SegmentEvent>,
    detector: RetransmissionDetector,
    max_end: u64,
    established: bool,
    peer_reset: bool,
    closed: bool,
}

impl Connection {
    fn new<T: Transport>(spec: &ProbeSpec, transport: &T) -> Self {
        let client_isn: u32 = rand::rng().random();
        Connection {
            spec: spec.clone(),
            local_port: transport.local_port(),
            remote_port: transport.remote_port(),
            client_isn,
            server_isn: 0,
            snd_nxt: client_isn,
            server_mss: None,
            server_window_scale: None,
            handshake_rtt_ns: 0,
            deadline_ns: transport
                .now_ns()
                .saturating_add(spec.probe_timeout_ms * NS_PER_MS),
            events: Vec::new(),
            detector: RetransmissionDetector::new(),
            max_end: 0,
            established: false,
            peer_reset: false,
            closed: false,
        }
    }

    pub fn spec(&self) -> &ProbeSpec {
        &self.spec
    }

    pub fn server_mss(&self) -> Option<u16> {
        self.server_mss
    }

    pub fn handshake_rtt_ns(&self) -> u64 {
        self.handshake_rtt_ns
    }

    pub fn events(&self) -> &[SegmentEvent] {
        &self.events
    }

    /// End offset of the highest payload byte received before the terminal
    /// retransmission.
    pub fn max_end(&self) -> u64 {
        self.max_end
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn scaled(&self) -> bool {
        self.server_window_scale.is_some()
    }

    fn send<T: Transport>(
        &mut self,
        transport: &mut T,
        flags: TcpFlags,
        window_bytes: u64,
        payload: Vec<u8>,
    ) -> Result<(), TransportError> {
        let syn = flags.contains(TcpFlags::SYN);
        let shift = if syn || !self.scaled() {
            0
        } else {
            self.spec.window_scale
        };
        let field = window_bytes.div_ceil(1 << shift).min(u64::from(u16::MAX)) as u16;
        let acking = flags.contains(TcpFlags::ACK);
        let ack = if acking {
            self.server_isn
                .wrapping_add(1)
                .wrapping_add(self.max_end as u32)
        } else {
            0
        };
        let mut segment =
            TcpSegment::new(self.local_port, self.remote_port, self.snd_nxt, ack, flags)
                .with_window(field)
                .with_payload(payload);
        if syn {
            segment = segment.with_options(TcpOptions {
                mss: Some(self.spec.announced_mss),
                window_scale: Some(self.spec.window_scale),
                sack_permitted: false,
            });
        }
        self.events.push(SegmentEvent {
            direction: Direction::Outbound,
            seq_offset: if syn {
                0
            } else {
                u64::from(self.snd_nxt.wrapping_sub(self.client_isn.wrapping_add(1)))
            },
            payload_len: segment.payload.len() as u64,
            flags,
            timestamp_ns: transport.now_ns(),
            ack: acking.then_some(self.max_end),
            window: (!flags.contains(TcpFlags::RST)).then_some(u64::from(field) << shift),
        });
        let advance = segment.seq_len();
        transport.send(segment)?;
        self.snd_nxt = self.snd_nxt.wrapping_add(advance);
        Ok(())
    }

    fn send_syn<T: Transport>(&mut self, transport: &mut T) -> Result<u64, TransportError> {
        self.snd_nxt = self.client_isn;
        let at = transport.now_ns();
        let window = u64::from(self.spec.announced_window);
        self.send(transport, TcpFlags::SYN, window, Vec::new())?;
        Ok(at)
    }

    fn record_inbound(&mut self, inbound: &Inbound) -> SegmentEvent {
        let seg = &inbound.segment;
        let seq_offset = if seg.has(TcpFlags::SYN) || !self.established {
            0
        } else {
            u64::from(seg.seq.wrapping_sub(self.server_isn.wrapping_add(1)))
        };
        let ev = SegmentEvent {
            direction: Direction::Inbound,
            seq_offset,
            payload_len: seg.payload.len() as u64,
            flags: seg.flags,
            timestamp_ns: inbound.timestamp_ns,
            ack: None,
            window: None,
        };
        self.events.push(ev.clone());
        ev
    }

    fn handshake<T: Transport>(&mut self, transport: &mut T) -> Result<(), ProbeError> {
        let mut syn_at = self.send_syn(transport)?;
        let mut backoff = SYN_RETRY_NS;
        let synack_at = loop {
            let wait = syn_at.saturating_add(backoff).min(self.deadline_ns);
            let Some(inbound) = transport.recv_until(wait)? else {
                if transport.now_ns() >= self.deadline_ns {
                    return Err(ProbeError::HandshakeTimeout);
                }
                backoff *= 2;
                syn_at = self.send_syn(transport)?;
                continue;
            };
            self.record_inbound(&inbound);
            let seg = &inbound.segment;
            if seg.has(TcpFlags::RST) {
                self.peer_reset = true;
                return Err(ProbeError::HandshakeReset);
            }
            if seg.has(TcpFlags::SYN | TcpFlags::ACK) && seg.ack == self.client_isn.wrapping_add(1)
            {
                self.server_isn = seg.seq;
                self.server_mss = seg.options.mss;
                self.server_window_scale = seg.options.window_scale;
                self.handshake_rtt_ns = (inbound.timestamp_ns - syn_at).max(1);
                break inbound.timestamp_ns;
            }
        };
        self.established = true;

        let delay = self.spec.handshake_ack_delay_ms * NS_PER_MS;
        if delay > 0 {
            let until = synack_at + delay;
            while let Some(inbound) = transport.recv_until(until)? {
                self.record_inbound(&inbound);
            }
        }
        let window = self.spec.window_bytes();
        self.send(transport, TcpFlags::ACK, window, Vec::new())?;
        Ok(())
    }
}

/// Performs the handshake: a SYN carrying only MSS and window scale, then
/// the final ACK after the configured delay.
pub fn open_handshake<T: Transport>(
    spec: &ProbeSpec,
    transport: &mut T,
) -> Result<Connection, ProbeError> {
    spec.validate()?;
    let mut conn = Connection::new(spec, transport);
    conn.handshake(transport)?;
    Ok(conn)
}

/// Acknowledges everything up to the highest byte seen with a window of two
/// segments and reports whether the server continues with new data.
pub fn verify_iw_full<T: Transport>(
    conn: &mut Connection,
    transport: &mut T,
) -> Result<bool, TransportError> {
    let window = 2 * u64::from(conn.spec.announced_mss);
    conn.send(transport, TcpFlags::ACK, window, Vec::new())?;
    let until = transport
        .now_ns()
        .saturating_add(conn.spec.retransmission_wait_ms * NS_PER_MS)
        .min(conn.deadline_ns);
    while let Some(inbound) = transport.recv_until(until)? {
        let ev = conn.record_inbound(&inbound);
        if inbound.segment.has(TcpFlags::RST) {
            conn.peer_reset = true;
            return Ok(false);
        }
        if ev.payload_len > 0 && ev.end() > conn.max_end {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Resets the connection. Does nothing when already closed, when the
/// handshake never completed or when the peer reset first.
pub fn abort<T: Transport>(conn: &mut Connection, transport: &mut T) {
    if conn.closed {
        return;
    }
    conn.closed = true;
    if conn.established && !conn.peer_reset {
        let _ = conn.send(transport, TcpFlags::RST, 0, Vec::new());
    }
}

fn finish(
    conn: Connection,
    outcome: ProbeOutcome,
    verified: Option<bool>,
    note: Option<String>,
) -> ProbeTrace {
    ProbeTrace {
        spec: conn.spec,
        events: conn.events,
        server_mss: conn.server_mss,
        handshake_rtt_ns: conn.handshake_rtt_ns,
        outcome,
        verified_full: verified,
        note,
    }
}

enum Collected {
    Terminal,
    Exhausted,
    Reset,
}

fn collect<T: Transport>(
    conn: &mut Connection,
    transport: &mut T,
) -> Result<Collected, TransportError> {
    let request = conn.spec.http_request();
    let window = conn.spec.window_bytes();
    conn.send(transport, TcpFlags::ACK | TcpFlags::PSH, window, request)?;
    let until = transport
        .now_ns()
        .saturating_add(conn.spec.retransmission_wait_ms * NS_PER_MS)
        .min(conn.deadline_ns);
    while let Some(inbound) = transport.recv_until(until)? {
        let ev = conn.record_inbound(&inbound);
        if inbound.segment.has(TcpFlags::RST) {
            conn.peer_reset = true;
            return Ok(Collected::Reset);
        }
        if ev.payload_len == 0 {
            continue;
        }
        if conn.detector.observe(ev.seq_offset, ev.payload_len) {
            return Ok(Collected::Terminal);
        }
        conn.max_end = conn.max_end.max(ev.end());
    }
    Ok(Collected::Exhausted)
}

/// Runs the full probe: handshake, request without acknowledgments until
/// the server retransmits, verification, reset.
pub fn probe_once<T: Transport>(
    spec: &ProbeSpec,
    transport: &mut T,
) -> Result<ProbeTrace, SpecError> {
    spec.validate()?;
    let mut conn = Connection::new(spec, transport);
    if let Err(e) = conn.handshake(transport) {
        let outcome = match e {
            ProbeError::Transport(_) => ProbeOutcome::Aborted,
            _ => ProbeOutcome::HandshakeFailed,
        };
        abort(&mut conn, transport);
        return Ok(finish(conn, outcome, None, Some(e.to_string())));
    }

    let (outcome, verified, note) = match collect(&mut conn, transport) {
        Err(e) => (ProbeOutcome::Aborted, None, Some(e.to_string())),
        Ok(Collected::Reset) => (
            ProbeOutcome::Aborted,
            None,
            Some("reset by server".to_string()),
        ),
        Ok(Collected::Exhausted) if conn.detector.seen().covered() == 0 => {
            (ProbeOutcome::NoData, None, None)
        }
        Ok(Collected::Exhausted) => (ProbeOutcome::NoRetransmission, None, None),
        Ok(Collected::Terminal) => match verify_iw_full(&mut conn, transport) {
            Ok(flag) => {
                let note = conn
                    .peer_reset
                    .then(|| "reset during verification".to_string());
                (ProbeOutcome::Completed, Some(flag), note)
            }
            Err(e) => (ProbeOutcome::Aborted, None, Some(e.to_string())),
        },
    };
    abort(&mut conn, transport);
    Ok(finish(conn, outcome, verified, note))
}
