//! The packet path between the prober and a server.
//!
//! A [`Transport`] sends fully specified TCP segments for one connection and
//! hands back inbound segments with arrival timestamps. The host TCP stack
//! must not interfere with the connection's 4-tuple.

mod emulated;
#[cfg(target_os = "linux")]
mod raw;
mod shaped;

use std::io;

use thiserror::Error;

pub use emulated::EmulatedTransport;
#[cfg(target_os = "linux")]
pub use raw::RawSocketTransport;
pub use shaped::ShapedTransport;

use crate::segment::TcpSegment;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport I/O: {0}")]
    Io(#[from] io::Error),
    #[error("send permit denied: shaper shut down")]
    ShaperClosed,
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// A segment received on the connection, stamped at arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inbound {
    pub segment: TcpSegment,
    pub timestamp_ns: u64,
}

pub trait Transport {
    fn local_port(&self) -> u16;

    fn remote_port(&self) -> u16;

    /// Monotonic clock of this transport, in nanoseconds.
    fn now_ns(&self) -> u64;

    fn send(&mut self, segment: TcpSegment) -> Result<(), TransportError>;

    /// Waits for the next inbound segment until `deadline_ns` on this
    /// transport's clock. `Ok(None)` means the deadline passed.
    fn recv_until(&mut self, deadline_ns: u64) -> Result<Option<Inbound>, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn local_port(&self) -> u16 {
        (**self).local_port()
    }

    fn remote_port(&self) -> u16 {
        (**self).remote_port()
    }

    fn now_ns(&self) -> u64 {
        (**self).now_ns()
    }

    fn send(&mut self, segment: TcpSegment) -> Result<(), TransportError> {
        (**self).send(segment)
    }

    fn recv_until(&mut self, deadline_ns: u64) -> Result<Option<Inbound>, TransportError> {
        (**self).recv_until(deadline_ns)
    }
}
