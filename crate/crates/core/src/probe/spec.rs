use std::net::SocketAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// MSS values probed by default.
pub const DEFAULT_MSS_SWEEP: [u16; 4] = [64, 128, 536, 1200];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("announced MSS {0} outside 64..=1460")]
    Mss(u16),
    #[error("receive window {0} bytes is too small to observe any plausible IW")]
    Window(u64),
    #[error("retransmission wait must be shorter than the probe timeout")]
    Timing,
}

/// Configuration of one probe attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    pub target: SocketAddr,
    pub host_name: String,
    pub resource_path: String,
    pub announced_mss: u16,
    pub announced_window: u16,
    pub window_scale: u8,
    pub handshake_ack_delay_ms: u64,
    pub retransmission_wait_ms: u64,
    pub probe_timeout_ms: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            target: SocketAddr::from(([127, 0, 0, 1], 80)),
            host_name: "localhost".into(),
            resource_path: "/".into(),
            announced_mss: 1200,
            announced_window: 65535,
            window_scale: 4,
            handshake_ack_delay_ms: 0,
            retransmission_wait_ms: 10_000,
            probe_timeout_ms: 30_000,
        }
    }
}

impl ProbeSpec {
    pub fn new(target: SocketAddr, host_name: impl Into<String>, path: impl Into<String>) -> Self {
        ProbeSpec {
            target,
            host_name: host_name.into(),
            resource_path: path.into(),
            ..ProbeSpec::default()
        }
    }

    pub fn with_mss(mut self, mss: u16) -> Self {
        self.announced_mss = mss;
        self
    }

    pub fn with_ack_delay_ms(mut self, ms: u64) -> Self {
        self.handshake_ack_delay_ms = ms;
        self
    }

    /// Receive window in bytes after scaling.
    pub fn window_bytes(&self) -> u64 {
        u64::from(self.announced_window) << self.window_scale
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if !(64..=1460).contains(&self.announced_mss) {
            return Err(SpecError::Mss(self.announced_mss));
        }
        if self.window_scale > 14 || self.window_bytes() < 1_000_000 {
            return Err(SpecError::Window(self.window_bytes()));
        }
        if self.retransmission_wait_ms >= self.probe_timeout_ms {
            return Err(SpecError::Timing);
        }
        Ok(())
    }

    /// The fixed request template.
    pub fn http_request(&self) -> Vec<u8> {
        format!(
            "GET {} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\n\r\n",
            self.resource_path, self.host_name
        )
        .into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let spec = ProbeSpec::default();
        spec.validate().unwrap();
        // 65535 << 4
        assert_eq!(spec.window_bytes(), 1_048_560);
    }

    #[test]
    fn rejects_bad_values() {
        assert_eq!(
            ProbeSpec::default().with_mss(63).validate(),
            Err(SpecError::Mss(63))
        );
        assert_eq!(
            ProbeSpec::default().with_mss(1461).validate(),
            Err(SpecError::Mss(1461))
        );
        let small = ProbeSpec {
            window_scale: 2,
            ..ProbeSpec::default()
        };
        assert!(matches!(small.validate(), Err(SpecError::Window(_))));
        let timing = ProbeSpec {
            retransmission_wait_ms: 30_000,
            ..ProbeSpec::default()
        };
        assert_eq!(timing.validate(), Err(SpecError::Timing));
    }

    #[test]
    fn request_template() {
        let spec = ProbeSpec::new("10.0.0.1:80".parse().unwrap(), "cdn.example", "/big.bin");
        assert_eq!(
            spec.http_request(),
            b"GET /big.bin HTTP/1.1\r\nHost: cdn.example\r\nConnection: close\r\n\r\n"
        );
    }

    #[test]
    fn json_defaults_fill_in() {
        let spec: ProbeSpec =
            serde_json::from_str(r#"{"target":"192.0.2.7:8080","announced_mss":536}"#).unwrap();
        assert_eq!(spec.announced_mss, 536);
        assert_eq!(spec.retransmission_wait_ms, 10_000);
        assert_eq!(spec.target.port(), 8080);
    }
}
