//! Live backend on a Linux raw `IPPROTO_TCP` socket (IPv4 only).
//!
//! Requires `CAP_NET_RAW`. The kernel does not know about the probed
//! connection and will answer the server's SYN/ACK with an RST unless told
//! otherwise, e.g.:
//!
//! ```text
//! iptables -A OUTPUT -p tcp --tcp-flags RST RST --sport <local port> -j DROP
//! ```

use std::io;
use std::mem;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
use std::time::Instant;

use rand::Rng;

use super::{Inbound, Transport, TransportError};
use crate::segment::TcpSegment;
use crate::wire::{decode_ipv4, encode_tcp};

pub struct RawSocketTransport {
    fd: OwnedFd,
    local: SocketAddrV4,
    remote: SocketAddrV4,
    epoch: Instant,
    buf: Vec<u8>,
}

fn last_os_error() -> TransportError {
    TransportError::Io(io::Error::last_os_error())
}

impl RawSocketTransport {
    /// Opens a raw socket for a connection to `remote`. A random ephemeral
    /// local port is used when `local_port` is `None`.
    pub fn connect(remote: SocketAddr, local_port: Option<u16>) -> Result<Self, TransportError> {
        let SocketAddr::V4(remote) = remote else {
            return Err(TransportError::Unsupported(
                "raw backend handles IPv4 only".into(),
            ));
        };
        // Let the routing table pick the source address.
        let probe = UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0))?;
        probe.connect(remote)?;
        let local_ip = match probe.local_addr()? {
            SocketAddr::V4(a) => *a.ip(),
            SocketAddr::V6(_) => unreachable!("connected an IPv4 socket"),
        };
        let port = local_port.unwrap_or_else(|| rand::rng().random_range(32768..61000));

        // SAFETY: plain socket(2) call; the result is checked before use.
        let raw = unsafe { libc::socket(libc::AF_INET, libc::SOCK_RAW, libc::IPPROTO_TCP) };
        if raw < 0 {
            return Err(last_os_error());
        }
        // SAFETY: `raw` is a freshly created descriptor owned by nobody else.
        let fd = unsafe { OwnedFd::from_raw_fd(raw) };
        Ok(RawSocketTransport {
            fd,
            local: SocketAddrV4::new(local_ip, port),
            remote,
            epoch: Instant::now(),
            buf: vec![0; 65536],
        })
    }

    pub fn local_addr(&self) -> SocketAddrV4 {
        self.local
    }
}

impl Transport for RawSocketTransport {
    fn local_port(&self) -> u16 {
        self.local.port()
    }

    fn remote_port(&self) -> u16 {
        self.remote.port()
    }

    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn send(&mut self, segment: TcpSegment) -> Result<(), TransportError> {
        let bytes = encode_tcp(&segment, *self.local.ip(), *self.remote.ip());
        // SAFETY: zeroed sockaddr_in is a valid value; fields set below.
        let mut dst: libc::sockaddr_in = unsafe { mem::zeroed() };
        dst.sin_family = libc::AF_INET as libc::sa_family_t;
        dst.sin_addr.s_addr = u32::from_ne_bytes(self.remote.ip().octets());
        // SAFETY: buffer and address pointers are valid for the given lengths.
        let n = unsafe {
            libc::sendto(
                self.fd.as_raw_fd(),
                bytes.as_ptr().cast(),
                bytes.len(),
                0,
                (&dst as *const libc::sockaddr_in).cast(),
                mem::size_of::<libc::sockaddr_in>() as libc::socklen_t,
            )
        };
        if n < 0 {
            return Err(last_os_error());
        }
        Ok(())
    }

    fn recv_until(&mut self, deadline_ns: u64) -> Result<Option<Inbound>, TransportError> {
        loop {
            let now = self.now_ns();
            if now >= deadline_ns {
                return Ok(None);
            }
            let wait_ms = (deadline_ns - now).div_ceil(1_000_000).min(i32::MAX as u64) as i32;
            let mut pfd = libc::pollfd {
                fd: self.fd.as_raw_fd(),
                events: libc::POLLIN,
                revents: 0,
            };
            // SAFETY: one valid pollfd.
            let ready = unsafe { libc::poll(&mut pfd, 1, wait_ms) };
            if ready < 0 {
                let err = io::Error::last_os_error();
                if err.kind() == io::ErrorKind::Interrupted {
                    continue;
                }
                return Err(err.into());
            }
            if ready == 0 {
                continue;
            }
            // SAFETY: buffer pointer and capacity describe owned memory.
            let n = unsafe {
                libc::recv(
                    self.fd.as_raw_fd(),
                    self.buf.as_mut_ptr().cast(),
                    self.buf.len(),
                    0,
                )
            };
            if n < 0 {
                return Err(last_os_error());
            }
            let timestamp_ns = self.now_ns();
            let Ok(pkt) = decode_ipv4(&self.buf[..n as usize]) else {
                continue;
            };
            let seg = &pkt.segment;
            if pkt.src == *self.remote.ip()
                && pkt.dst == *self.local.ip()
                && seg.src_port == self.remote.port()
                && seg.dst_port == self.local.port()
            {
                return Ok(Some(Inbound {
                    segment: pkt.segment,
                    timestamp_ns,
                }));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ipv6_is_rejected() {
        let err = RawSocketTransport::connect("[::1]:80".parse().unwrap(), None);
        assert!(matches!(err, Err(TransportError::Unsupported(_))));
    }
}
