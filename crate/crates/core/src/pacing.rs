//! Burst versus paced first flights, from arrival times alone.

use serde::{Deserialize, Serialize};

use crate::estimation::RetransmissionDetector;
use crate::probe::ProbeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub ts_ns: u64,
    pub len: u64,
}

/// First-flight arrivals with the RTT the server's pacer saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingSample {
    pub arrivals: Vec<Arrival>,
    pub rtt_ns: u64,
}

impl TimingSample {
    pub fn new(arrivals: Vec<Arrival>, rtt_ns: u64) -> Self {
        TimingSample { arrivals, rtt_ns }
    }

    /// Payload arrivals before the terminal retransmission; the RTT includes
    /// the induced handshake ACK delay.
    pub fn from_trace(trace: &ProbeTrace) -> Self {
        let mut detector = RetransmissionDetector::new();
        let arrivals = trace
            .inbound_payload()
            .take_while(|e| !detector.observe(e.seq_offset, e.payload_len))
            .map(|e| Arrival {
                ts_ns: e.timestamp_ns,
                len: e.payload_len,
            })
            .collect();
        let delay = trace.spec.handshake_ack_delay_ms * 1_000_000;
        TimingSample {
            arrivals,
            rtt_ns: trace.handshake_rtt_ns + delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacingClass {
    Paced,
    Bursty,
    Indeterminate,
}

impl PacingClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PacingClass::Paced => "paced",
            PacingClass::Bursty => "bursty",
            PacingClass::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacingVerdict {
    pub classification: PacingClass,
    pub initial_burst: usize,
    pub median_train: usize,
    pub spread_ratio: f64,
    pub train_count: usize,
}

/// Decision knobs of [`detect_pacing_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacingThresholds {
    /// Trains split where the gap exceeds `max(gap_floor_ns, gap_rtt_fraction * rtt)`.
    pub gap_floor_ns: u64,
    pub gap_rtt_fraction: f64,
    /// Spread ratios below this are bursty.
    pub bursty_below: f64,
    /// Spread ratios at or above this, with enough trains, are paced.
    pub paced_from: f64,
    pub min_trains: usize,
    pub min_segments: usize,
}

impl Default for PacingThresholds {
    fn default() -> Self {
        PacingThresholds {
            gap_floor_ns: 250_000,
            gap_rtt_fraction: 0.01,
            bursty_below: 0.1,
            paced_from: 0.2,
            min_trains: 3,
            min_segments: 6,
        }
    }
}

impl PacingThresholds {
    pub fn gap_threshold_ns(&self, rtt_ns: u64) -> u64 {
        let relative = (self.gap_rtt_fraction * rtt_ns as f64) as u64;
        self.gap_floor_ns.max(relative)
    }
}

/// Splits arrivals wherever the inter-arrival gap exceeds `gap_threshold_ns`.
pub fn segment_trains(sample: &TimingSample, gap_threshold_ns: u64) -> Vec<Vec<Arrival>> {
    let mut trains: Vec<Vec<Arrival>> = Vec::new();
    let mut prev: Option<u64> = None;
    for &a in &sample.arrivals {
        match (prev, trains.last_mut()) {
            (Some(p), Some(train)) if a.ts_ns.saturating_sub(p) <= gap_threshold_ns => {
                train.push(a)
            }
            _ => trains.push(vec![a]),
        }
        prev = Some(a.ts_ns);
    }
    trains
}

pub fn detect_pacing(sample: &TimingSample) -> PacingVerdict {
    detect_pacing_with(sample, &PacingThresholds::default())
}

pub fn detect_pacing_with(sample: &TimingSample, th: &PacingThresholds) -> PacingVerdict {
    let rtt = sample.rtt_ns.max(1);
    let trains = segment_trains(sample, th.gap_threshold_ns(rtt));
    let spread_ratio = match (sample.arrivals.first(), sample.arrivals.last()) {
        (Some(first), Some(last)) => (last.ts_ns - first.ts_ns) as f64 / rtt as f64,
        _ => 0.0,
    };
    let mut later: Vec<usize> = trains.iter().skip(1).map(Vec::len).collect();
    later.sort_unstable();
    let median_train = if later.is_empty() {
        0
    } else {
        later[(later.len() - 1) / 2]
    };
    let train_count = trains.len();

    let classification = if sample.arrivals.len() < th.min_segments {
        PacingClass::Indeterminate
    } else if spread_ratio < th.bursty_below || train_count == 1 {
        PacingClass::Bursty
    } else if spread_ratio >= th.paced_from && train_count >= th.min_trains {
        PacingClass::Paced
    } else {
        PacingClass::Indeterminate
    };
    PacingVerdict {
        classification,
        initial_burst: trains.first().map_or(0, Vec::len),
        median_train,
        spread_ratio,
        train_count,
    }
}
