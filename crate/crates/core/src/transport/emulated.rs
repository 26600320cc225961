use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{Inbound, Transport, TransportError};
use crate::origin::{MockOrigin, OriginOutput, SessionLog, TimerToken};
use crate::segment::TcpSegment;

const DEFAULT_CLIENT_PORT: u16 = 40000;
const DEFAULT_UPLINK_NS: u64 = 1_000;

#[derive(Debug)]
enum Pending {
    ToServer(TcpSegment),
    ToClient(TcpSegment),
    Timer(TimerToken),
}

#[derive(Debug)]
struct Scheduled {
    at: u64,
    order: u64,
    what: Pending,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

/// In-process network between the prober and a [`MockOrigin`], driven by a
/// virtual clock. Time only moves inside [`Transport::recv_until`], so a
/// ten-second retransmission wait costs nothing.
pub struct EmulatedTransport {
    origin: Option<MockOrigin>,
    now: u64,
    order: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    local_port: u16,
    uplink_ns: u64,
}

impl EmulatedTransport {
    pub fn new(origin: MockOrigin) -> Self {
        EmulatedTransport {
            origin: Some(origin),
            ..EmulatedTransport::unreachable()
        }
    }

    /// A peer that never answers.
    pub fn unreachable() -> Self {
        EmulatedTransport {
            origin: None,
            now: 0,
            order: 0,
            queue: BinaryHeap::new(),
            local_port: DEFAULT_CLIENT_PORT,
            uplink_ns: DEFAULT_UPLINK_NS,
        }
    }

    pub fn with_local_port(mut self, port: u16) -> Self {
        self.local_port = port;
        self
    }

    /// Client-to-server propagation delay.
    pub fn with_uplink_ns(mut self, ns: u64) -> Self {
        self.uplink_ns = ns;
        self
    }

    pub fn origin(&self) -> Option<&MockOrigin> {
        self.origin.as_ref()
    }

    /// Lets the origin run until `until_ns` without a client reading, so
    /// trailing events (e.g. an RST) reach it.
    pub fn settle(&mut self, until_ns: u64) {
        while let Some(Reverse(next)) = self.queue.peek() {
            if next.at > until_ns {
                break;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            self.now = self.now.max(ev.at);
            if !matches!(ev.what, Pending::ToClient(_)) {
                self.dispatch(ev.what);
            }
        }
        self.now = self.now.max(until_ns);
    }

    pub fn session_log(&self) -> Option<&SessionLog> {
        self.origin.as_ref().map(|o| o.log())
    }

    pub fn into_session_log(self) -> Option<SessionLog> {
        self.origin.map(MockOrigin::into_log)
    }

    fn schedule(&mut self, at: u64, what: Pending) {
        self.order += 1;
        self.queue.push(Reverse(Scheduled {
            at,
            order: self.order,
            what,
        }));
    }

    fn dispatch(&mut self, what: Pending) -> Option<TcpSegment> {
        let now = self.now;
        let outputs = match what {
            Pending::ToClient(seg) => return Some(seg),
            Pending::ToServer(seg) => match self.origin.as_mut() {
                Some(o) => o.on_segment(now, &seg),
                None => Vec::new(),
            },
            Pending::Timer(token) => match self.origin.as_mut() {
                Some(o) => o.on_timer(now, token),
                None => Vec::new(),
            },
        };
        let delay = self.origin.as_ref().map_or(0, |o| o.emit_delay_ns());
        for out in outputs {
            match out {
                OriginOutput::Transmit { at_ns, segment } => {
                    self.schedule(at_ns + delay, Pending::ToClient(segment))
                }
                OriginOutput::Timer { at_ns, token } => self.schedule(at_ns, Pending::Timer(token)),
            }
        }
        None
    }
}

impl Transport for EmulatedTransport {
    fn local_port(&self) -> u16 {
        self.local_port
    }

    fn remote_port(&self) -> u16 {
        self.origin.as_ref().map_or(80, |o| o.port())
    }

    fn now_ns(&self) -> u64 {
        self.now
    }

    fn send(&mut self, segment: TcpSegment) -> Result<(), TransportError> {
        let at = self.now + self.uplink_ns;
        self.schedule(at, Pending::ToServer(segment));
        Ok(())
    }

    fn recv_until(&mut self, deadline_ns: u64) -> Result<Option<Inbound>, TransportError> {
        loop {
            match self.queue.peek() {
                Some(Reverse(next)) if next.at <= deadline_ns => {}
                _ => {
                    self.now = self.now.max(deadline_ns);
                    return Ok(None);
                }
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            self.now = self.now.max(ev.at);
            if let Some(segment) = self.dispatch(ev.what) {
                return Ok(Some(Inbound {
                    segment,
                    timestamp_ns: self.now,
                }));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::origin::{IwConfig, OriginConfig};
    use crate::segment::{TcpFlags, TcpOptions};

    #[test]
    fn virtual_clock_jumps_to_deadline() {
        let mut t = EmulatedTransport::unreachable();
        assert_eq!(t.recv_until(5_000).unwrap(), None);
        assert_eq!(t.now_ns(), 5_000);
        // never moves backwards
        assert_eq!(t.recv_until(10).unwrap(), None);
        assert_eq!(t.now_ns(), 5_000);
    }

    #[test]
    fn synack_arrives_after_emit_delay() {
        let origin =
            MockOrigin::new(OriginConfig::new(IwConfig::Segments(10), 1000).with_rtt_ms(30))
                .unwrap();
        let mut t = EmulatedTransport::new(origin);
        let syn = TcpSegment::new(t.local_port(), 80, 7, 0, TcpFlags::SYN)
            .with_window(65535)
            .with_options(TcpOptions {
                mss: Some(1200),
                ..Default::default()
            });
        t.send(syn).unwrap();
        let got = t.recv_until(u64::MAX).unwrap().unwrap();
        assert!(got.segment.has(TcpFlags::SYN | TcpFlags::ACK));
        assert_eq!(got.segment.dst_port, t.local_port());
        assert_eq!(got.timestamp_ns, DEFAULT_UPLINK_NS + 30_000_000);
    }
}
