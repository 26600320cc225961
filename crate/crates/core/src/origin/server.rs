//! Sans-IO origin server. The caller feeds inbound segments and expired
//! timers; the origin answers with segments to emit and timers to arm.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConfigError, DropPlan, MssPolicy, OriginConfig};
use super::log::{SessionEvent, SessionEventKind, SessionLog};
use super::schedule::pacing_offsets;
use crate::segment::{TcpFlags, TcpOptions, TcpSegment};

const SERVER_WINDOW: u16 = 65535;
const SERVER_WINDOW_SCALE: u8 = 7;
const DEFAULT_PEER_MSS: u16 = 536;
const NS_PER_MS: u64 = 1_000_000;

/// Identifies an armed retransmission timer; stale tokens are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerToken {
    pub client_port: u16,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OriginOutput {
    Transmit { at_ns: u64, segment: TcpSegment },
    Timer { at_ns: u64, token: TimerToken },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    SynReceived,
    Established,
}

#[derive(Debug)]
struct Session {
    state: State,
    client_isn: u32,
    server_isn: u32,
    rcv_nxt: u32,
    mss: u64,
    /// Client window shift, present when both sides negotiated scaling.
    peer_ws: Option<u8>,
    peer_window: u64,
    synack_at: u64,
    rtt_ns: Option<u64>,
    request: Vec<u8>,
    response: Option<Vec<u8>>,
    snd_una: u64,
    snd_nxt: u64,
    cwnd: u64,
    /// Start offset -> length of every data segment sent so far.
    segments: BTreeMap<u64, u64>,
    rto_ns: u64,
    retransmissions: u32,
    timer_generation: u64,
    timer_armed: bool,
}

impl Session {
    fn data_seq(&self, offset: u64) -> u32 {
        self.server_isn.wrapping_add(1).wrapping_add(offset as u32)
    }
}

/// The origin's reaction to a parsed request.
enum Request {
    Get,
    Malformed,
}

fn parse_request(buf: &[u8]) -> Option<Request> {
    let end = buf.windows(4).position(|w| w == b"\r\n\r\n")?;
    let head = String::from_utf8_lossy(&buf[..end]);
    let line = head.lines().next().unwrap_or_default();
    let mut parts = line.split_whitespace();
    let ok = matches!(
        (parts.next(), parts.next(), parts.next(), parts.next()),
        (Some("GET"), Some(path), Some("HTTP/1.1" | "HTTP/1.0"), None) if path.starts_with('/')
    );
    Some(if ok { Request::Get } else { Request::Malformed })
}

/// Builds a `200 OK` response whose total length is exactly `total` bytes.
/// When `total` is shorter than the smallest header the header is truncated.
pub fn build_response(total: u64) -> Vec<u8> {
    let header = |body: u64| {
        format!("HTTP/1.1 200 OK\r\nContent-Length: {body}\r\nConnection: close\r\n\r\n")
    };
    let mut body = 0u64;
    // Content-Length digits feed back into the header size; settle in a few rounds.
    for _ in 0..4 {
        body = total.saturating_sub(header(body).len() as u64);
    }
    let mut out = header(body).into_bytes();
    if out.len() as u64 + body != total {
        out.truncate(total.min(out.len() as u64) as usize);
        out.resize(total as usize, b'x');
        return out;
    }
    out.extend((0..body).map(|i| b'a' + (i % 26) as u8));
    out
}

const BAD_REQUEST: &[u8] =
    b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";

pub struct MockOrigin {
    config: OriginConfig,
    server_port: u16,
    rng: ChaCha8Rng,
    sessions: BTreeMap<u16, Session>,
    log: SessionLog,
}

impl MockOrigin {
    pub fn new(config: OriginConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(MockOrigin {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            server_port: 80,
            sessions: BTreeMap::new(),
            log: SessionLog::default(),
        })
    }

    pub fn with_port(mut self, port: u16) -> Self {
        self.server_port = port;
        self
    }

    pub fn config(&self) -> &OriginConfig {
        &self.config
    }

    pub fn port(&self) -> u16 {
        self.server_port
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    /// Connections currently holding state.
    pub fn active_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// One-way delay the emulated network applies to emitted segments.
    pub fn emit_delay_ns(&self) -> u64 {
        self.config.artificial_rtt_ms * NS_PER_MS
    }

    fn record(
        &mut self,
        ts_ns: u64,
        client_port: u16,
        kind: SessionEventKind,
        seq_offset: u64,
        len: u64,
    ) -> &mut SessionEvent {
        self.log.push(SessionEvent {
            ts_ns,
            client_port,
            kind,
            seq_offset,
            len,
            at_ns: None,
            detail: None,
        });
        self.log.events.last_mut().expect("just pushed")
    }

    pub fn on_segment(&mut self, now: u64, seg: &TcpSegment) -> Vec<OriginOutput> {
        let mut out = Vec::new();
        if seg.dst_port != self.server_port {
            return out;
        }
        let port = seg.src_port;

        if seg.has(TcpFlags::RST) {
            if self.sessions.remove(&port).is_some() {
                self.record(now, port, SessionEventKind::Reset, 0, 0);
            }
            return out;
        }

        if seg.has(TcpFlags::SYN) && !seg.has(TcpFlags::ACK) {
            self.accept(now, seg, &mut out);
            return out;
        }

        let Some(mut session) = self.sessions.remove(&port) else {
            return out;
        };
        let keep = self.handle_established(now, seg, &mut session, &mut out);
        if keep {
            self.sessions.insert(port, session);
        }
        out
    }

    fn accept(&mut self, now: u64, seg: &TcpSegment, out: &mut Vec<OriginOutput>) {
        let port = seg.src_port;
        if let Some(existing) = self.sessions.get(&port) {
            // Duplicate SYN: repeat the SYN/ACK while the handshake is pending.
            if existing.state == State::SynReceived && existing.client_isn == seg.seq {
                let synack = self.synack(port, existing);
                out.push(OriginOutput::Transmit {
                    at_ns: now,
                    segment: synack,
                });
            }
            return;
        }

        let client_mss = seg.options.mss.unwrap_or(DEFAULT_PEER_MSS);
        let advertised = match self.config.mss_policy {
            MssPolicy::HonorClient => client_mss,
            MssPolicy::Fixed(m) => m,
        };
        let mss = u64::from(advertised.min(client_mss)).max(1);
        let peer_ws = seg.options.window_scale.map(|ws| ws.min(14));
        let server_isn = self.config.isn.unwrap_or_else(|| self.rng.random());
        let session = Session {
            state: State::SynReceived,
            client_isn: seg.seq,
            server_isn,
            rcv_nxt: seg.seq.wrapping_add(1),
            mss,
            peer_ws,
            peer_window: u64::from(seg.window),
            synack_at: now,
            rtt_ns: None,
            request: Vec::new(),
            response: None,
            snd_una: 0,
            snd_nxt: 0,
            cwnd: 0,
            segments: BTreeMap::new(),
            rto_ns: self.config.rto_ms * NS_PER_MS,
            retransmissions: 0,
            timer_generation: 0,
            timer_armed: false,
        };
        let synack = self.synack(port, &session);
        self.record(now, port, SessionEventKind::Accept, 0, 0);
        self.record(now, port, SessionEventKind::SynAck, 0, 0);
        self.sessions.insert(port, session);
        out.push(OriginOutput::Transmit {
            at_ns: now,
            segment: synack,
        });
    }

    fn synack(&self, port: u16, s: &Session) -> TcpSegment {
        let advertised = match self.config.mss_policy {
            MssPolicy::HonorClient => s.mss as u16,
            MssPolicy::Fixed(m) => m,
        };
        TcpSegment::new(
            self.server_port,
            port,
            s.server_isn,
            s.rcv_nxt,
            TcpFlags::SYN | TcpFlags::ACK,
        )
        .with_window(SERVER_WINDOW)
        .with_options(TcpOptions {
            mss: Some(advertised),
            window_scale: s.peer_ws.map(|_| SERVER_WINDOW_SCALE),
            sack_permitted: false,
        })
    }

    /// Returns whether the session survives.
    fn handle_established(
        &mut self,
        now: u64,
        seg: &TcpSegment,
        s: &mut Session,
        out: &mut Vec<OriginOutput>,
    ) -> bool {
        let port = seg.src_port;
        if !seg.has(TcpFlags::ACK) {
            return true;
        }
        if s.state == State::SynReceived {
            if seg.ack != s.server_isn.wrapping_add(1) {
                return true;
            }
            s.state = State::Established;
            s.rtt_ns = Some(now - s.synack_at);
            self.record(now, port, SessionEventKind::Established, 0, 0);
        }

        s.peer_window = u64::from(seg.window) << s.peer_ws.unwrap_or(0);

        let ack_off = u64::from(seg.ack.wrapping_sub(s.server_isn.wrapping_add(1)));
        let mut advanced = false;
        if ack_off > s.snd_una && ack_off <= s.snd_nxt {
            s.cwnd += ack_off - s.snd_una;
            s.snd_una = ack_off;
            s.rto_ns = self.config.rto_ms * NS_PER_MS;
            s.retransmissions = 0;
            s.timer_armed = false;
            s.timer_generation += 1;
            advanced = true;
            self.record(now, port, SessionEventKind::AckAdvance, ack_off, 0);
        }

        if !seg.payload.is_empty() && seg.seq == s.rcv_nxt && s.response.is_none() {
            s.request.extend_from_slice(&seg.payload);
            s.rcv_nxt = s.rcv_nxt.wrapping_add(seg.payload.len() as u32);
            match parse_request(&s.request) {
                None => {}
                Some(Request::Malformed) => {
                    self.record(
                        now,
                        port,
                        SessionEventKind::BadRequest,
                        0,
                        BAD_REQUEST.len() as u64,
                    );
                    let reply = TcpSegment::new(
                        self.server_port,
                        port,
                        s.data_seq(0),
                        s.rcv_nxt,
                        TcpFlags::ACK | TcpFlags::PSH | TcpFlags::FIN,
                    )
                    .with_window(SERVER_WINDOW)
                    .with_payload(BAD_REQUEST.to_vec());
                    out.push(OriginOutput::Transmit {
                        at_ns: now,
                        segment: reply,
                    });
                    self.record(now, port, SessionEventKind::Close, 0, 0).detail =
                        Some("bad request".into());
                    return false;
                }
                Some(Request::Get) => {
                    s.response = Some(build_response(self.config.object_size));
                    self.send_initial_flight(now, port, s, out);
                }
            }
        } else if advanced {
            self.send_more(now, port, s, out);
        }

        self.arm_timer(now, port, s, out);
        true
    }

    fn send_initial_flight(
        &mut self,
        now: u64,
        port: u16,
        s: &mut Session,
        out: &mut Vec<OriginOutput>,
    ) {
        let iw_bytes = self.config.iw.bytes(s.mss);
        s.cwnd = iw_bytes;
        self.record(now, port, SessionEventKind::Request, 0, iw_bytes);
        let response_len = s.response.as_ref().map_or(0, |r| r.len() as u64);
        let flight = iw_bytes.min(s.peer_window).min(response_len);
        let count = flight.div_ceil(s.mss) as usize;
        let rtt = s.rtt_ns.unwrap_or(self.emit_delay_ns()).max(1);
        let offsets = pacing_offsets(&self.config.pacing, count, s.mss, iw_bytes, rtt);
        for (i, offset) in offsets {
            let len = s.mss.min(flight - s.snd_nxt);
            let dropped = match self.config.drop_plan {
                DropPlan::None => false,
                DropPlan::Head => i == 0,
                DropPlan::Within(k) => i + 1 == k as usize,
                DropPlan::Tail => i + 1 == count,
                DropPlan::Random(p) => self.rng.random::<f64>() < p,
            };
            self.transmit(
                now,
                now + offset,
                port,
                s,
                s.snd_nxt,
                len,
                dropped,
                false,
                out,
            );
            s.segments.insert(s.snd_nxt, len);
            s.snd_nxt += len;
        }
    }

    /// Sends new data permitted by the congestion and peer windows.
    fn send_more(&mut self, now: u64, port: u16, s: &mut Session, out: &mut Vec<OriginOutput>) {
        let response_len = s.response.as_ref().map_or(0, |r| r.len() as u64);
        let limit = s.cwnd.min(s.peer_window);
        while s.snd_nxt < response_len {
            let in_flight = s.snd_nxt - s.snd_una;
            if in_flight >= limit {
                break;
            }
            let len = s.mss.min(response_len - s.snd_nxt).min(limit - in_flight);
            let dropped = self.random_drop();
            self.transmit(now, now, port, s, s.snd_nxt, len, dropped, false, out);
            s.segments.insert(s.snd_nxt, len);
            s.snd_nxt += len;
        }
    }

    fn random_drop(&mut self) -> bool {
        match self.config.drop_plan {
            DropPlan::Random(p) => self.rng.random::<f64>() < p,
            _ => false,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn transmit(
        &mut self,
        now: u64,
        at: u64,
        port: u16,
        s: &Session,
        offset: u64,
        len: u64,
        dropped: bool,
        retransmission: bool,
        out: &mut Vec<OriginOutput>,
    ) {
        let kind = match (retransmission, dropped) {
            (false, false) => SessionEventKind::Emit,
            (false, true) => SessionEventKind::Drop,
            (true, false) => SessionEventKind::Retransmit,
            (true, true) => SessionEventKind::RetransmitDrop,
        };
        let ev = self.record(now, port, kind, offset, len);
        if at != now {
            ev.at_ns = Some(at);
        }
        if dropped {
            return;
        }
        let response = s.response.as_deref().unwrap_or_default();
        let payload = response[offset as usize..(offset + len) as usize].to_vec();
        let mut flags = TcpFlags::ACK;
        if offset + len == response.len() as u64 {
            flags = flags | TcpFlags::PSH;
        }
        let segment = TcpSegment::new(self.server_port, port, s.data_seq(offset), s.rcv_nxt, flags)
            .with_window(SERVER_WINDOW)
            .with_payload(payload);
        out.push(OriginOutput::Transmit { at_ns: at, segment });
    }

    fn arm_timer(&mut self, now: u64, port: u16, s: &mut Session, out: &mut Vec<OriginOutput>) {
        if s.snd_una < s.snd_nxt && !s.timer_armed {
            s.timer_generation += 1;
            s.timer_armed = true;
            out.push(OriginOutput::Timer {
                at_ns: now + s.rto_ns,
                token: TimerToken {
                    client_port: port,
                    generation: s.timer_generation,
                },
            });
        }
    }

    pub fn on_timer(&mut self, now: u64, token: TimerToken) -> Vec<OriginOutput> {
        let mut out = Vec::new();
        let port = token.client_port;
        let Some(mut s) = self.sessions.remove(&port) else {
            return out;
        };
        if !s.timer_armed || s.timer_generation != token.generation || s.snd_una >= s.snd_nxt {
            self.sessions.insert(port, s);
            return out;
        }
        s.timer_armed = false;
        if s.retransmissions >= self.config.max_retransmissions {
            self.record(now, port, SessionEventKind::Close, s.snd_una, 0)
                .detail = Some("retransmission limit".into());
            return out;
        }
        let (&start, &len) = s
            .segments
            .range(..=s.snd_una)
            .next_back()
            .expect("unacked data has a segment");
        let rlen = (start + len).min(s.snd_nxt) - s.snd_una;
        let dropped = self.random_drop();
        let offset = s.snd_una;
        self.transmit(now, now, port, &s, offset, rlen, dropped, true, &mut out);
        s.retransmissions += 1;
        s.rto_ns *= 2;
        self.arm_timer(now, port, &mut s, &mut out);
        self.sessions.insert(port, s);
        out
    }
}
