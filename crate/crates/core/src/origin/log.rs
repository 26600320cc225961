use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEventKind {
    Accept,
    SynAck,
    Established,
    /// A complete request was parsed; `len` holds the initial-window budget.
    Request,
    BadRequest,
    /// First transmission handed to the network.
    Emit,
    /// First transmission suppressed by the drop plan.
    Drop,
    Retransmit,
    RetransmitDrop,
    /// Cumulative acknowledgment advanced to `seq_offset`.
    AckAdvance,
    Reset,
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Time the origin made the decision.
    pub ts_ns: u64,
    pub client_port: u16,
    pub kind: SessionEventKind,
    pub seq_offset: u64,
    pub len: u64,
    /// Scheduled emission time for paced segments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Append-only record of everything the origin intended and did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub events: Vec<SessionEvent>,
}

impl SessionLog {
    pub(crate) fn push(&mut self, ev: SessionEvent) {
        debug_assert!(self.events.last().is_none_or(|l| l.ts_ns <= ev.ts_ns));
        self.events.push(ev);
    }

    pub fn iter(&self) -> impl Iterator<Item = &SessionEvent> {
        self.events.iter()
    }

    pub fn count(&self, kind: SessionEventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Bytes of first transmissions (emitted or dropped) handed out before
    /// the first acknowledgment of data, per client port.
    pub fn unacked_before_first_ack(&self, client_port: u16) -> u64 {
        self.events
            .iter()
            .filter(|e| e.client_port == client_port)
            .take_while(|e| e.kind != SessionEventKind::AckAdvance)
            .filter(|e| matches!(e.kind, SessionEventKind::Emit | SessionEventKind::Drop))
            .map(|e| e.len)
            .sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
