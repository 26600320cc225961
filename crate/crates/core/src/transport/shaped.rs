use std::sync::Arc;

use super::{Inbound, Transport, TransportError};
use crate::pipeline::shaper::Shaper;
use crate::segment::TcpSegment;

/// Consults a shared [`Shaper`] before every outbound segment.
pub struct ShapedTransport<T> {
    inner: T,
    shaper: Arc<Shaper>,
}

impl<T: Transport> ShapedTransport<T> {
    pub fn new(inner: T, shaper: Arc<Shaper>) -> Self {
        ShapedTransport { inner, shaper }
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for ShapedTransport<T> {
    fn local_port(&self) -> u16 {
        self.inner.local_port()
    }

    fn remote_port(&self) -> u16 {
        self.inner.remote_port()
    }

    fn now_ns(&self) -> u64 {
        self.inner.now_ns()
    }

    fn send(&mut self, segment: TcpSegment) -> Result<(), TransportError> {
        self.shaper
            .acquire()
            .map_err(|_| TransportError::ShaperClosed)?;
        self.inner.send(segment)
    }

    fn recv_until(&mut self, deadline_ns: u64) -> Result<Option<Inbound>, TransportError> {
        self.inner.recv_until(deadline_ns)
    }
}
