//! Effect of the initial window on completion time and bottleneck loss:
//! a closed-form slow-start model and a drop-tail queue simulation.

mod analytic;
mod grid;
mod sim;

use serde::{Deserialize, Serialize};

pub use analytic::{afct_analytic, slow_start_roundtrips};
pub use grid::{grid_networks, sweep_grid, write_grid_csv, FlowError, GridRow};
pub use sim::{queue_sim, FlowResult, DEFAULT_INGRESS_MBPS};

pub const DEFAULT_FLOW_BYTES: u64 = 71_000;
pub const GRID_BANDWIDTHS_MBPS: [f64; 4] = [4.0, 7.0, 26.0, 100.0];
pub const GRID_RTTS_MS: [f64; 3] = [30.0, 100.0, 250.0];
pub const GRID_IWS: [u64; 6] = [4, 10, 16, 20, 32, 50];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub bandwidth_mbps: f64,
    pub rtt_ms: f64,
    pub queue_limit: u32,
    pub mss: u64,
    /// TCP and IP header bytes per frame.
    pub frame_overhead: u64,
}

impl NetworkConfig {
    pub fn new(bandwidth_mbps: f64, rtt_ms: f64, queue_limit: u32) -> Self {
        NetworkConfig {
            bandwidth_mbps,
            rtt_ms,
            queue_limit,
            mss: 1460,
            frame_overhead: 40,
        }
    }

    /// Time to clock `bytes` onto the bottleneck.
    pub fn serialization_ms(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 / (self.bandwidth_mbps * 1e3)
    }

    /// Delay a packet sees behind a full queue of full-sized frames.
    pub fn full_queue_delay_ms(&self) -> f64 {
        f64::from(self.queue_limit) * self.serialization_ms(self.mss + self.frame_overhead)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_packets_at_seven_mbit() {
        let net = NetworkConfig::new(7.0, 100.0, 16);
        assert!((net.full_queue_delay_ms() - 27.428_571).abs() < 1e-4);
    }
}
