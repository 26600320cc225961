use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::spec::ProbeSpec;
use crate::segment::TcpFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Inbound,
    Outbound,
}

/// One segment seen on the wire.
///
/// Inbound offsets are relative to the server's ISN + 1, outbound offsets to
/// the prober's. Outbound events also carry the acknowledged offset (server
/// sequence space) and the effective advertised window in bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEvent {
    #[serde(rename = "dir")]
    pub direction: Direction,
    pub seq_offset: u64,
    #[serde(rename = "len")]
    pub payload_len: u64,
    pub flags: TcpFlags,
    #[serde(rename = "ts_ns")]
    pub timestamp_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack: Option<u64>,
    #[serde(default, rename = "win", skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
}

impl SegmentEvent {
    pub fn is_inbound_payload(&self) -> bool {
        self.direction == Direction::Inbound && self.payload_len > 0
    }

    pub fn end(&self) -> u64 {
        self.seq_offset + self.payload_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Completed,
    HandshakeFailed,
    NoData,
    NoRetransmission,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub spec: ProbeSpec,
    pub events: Vec<SegmentEvent>,
    pub server_mss: Option<u16>,
    pub handshake_rtt_ns: u64,
    pub outcome: ProbeOutcome,
    /// Result of the verification step, when it ran.
    #[serde(default)]
    pub verified_full: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ProbeTrace {
    pub fn inbound_payload(&self) -> impl Iterator<Item = &SegmentEvent> {
        self.events.iter().filter(|e| e.is_inbound_payload())
    }

    /// Writes the events as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut out, ev)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_jsonl_field_names() {
        let trace = ProbeTrace {
            spec: ProbeSpec::default(),
            events: vec![SegmentEvent {
                direction: Direction::Inbound,
                seq_offset: 1200,
                payload_len: 1200,
                flags: TcpFlags::ACK,
                timestamp_ns: 42,
                ack: None,
                window: None,
            }],
            server_mss: Some(1200),
            handshake_rtt_ns: 1,
            outcome: ProbeOutcome::Completed,
            verified_full: Some(true),
            note: None,
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"dir\":\"inbound\",\"seq_offset\":1200,\"len\":1200,\"flags\":[\"ACK\"],\"ts_ns\":42}\n"
        );
    }
}
