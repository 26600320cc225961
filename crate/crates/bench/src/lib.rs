//! Fixtures shared by the benchmarks.

use iwprobe::pacing::Arrival;
use iwprobe::{
    probe_once, EmulatedTransport, IwConfig, MockOrigin, OriginConfig, ProbeSpec, ProbeTrace,
    TimingSample,
};

/// A completed probe of an `iw`-segment origin at `mss`.
pub fn iw_trace(iw: u32, mss: u16) -> ProbeTrace {
    let origin =
        MockOrigin::new(OriginConfig::new(IwConfig::Segments(iw), 1 << 22)).expect("valid origin");
    let mut transport = EmulatedTransport::new(origin);
    probe_once(&ProbeSpec::default().with_mss(mss), &mut transport).expect("valid spec")
}

/// Ten-segment burst followed by pairs spread over one RTT.
pub fn paced_sample(iw: u64, rtt_ns: u64) -> TimingSample {
    let gap = 2 * rtt_ns / iw;
    let arrivals = (0..iw)
        .map(|k| Arrival {
            ts_ns: if k < 10 {
                k * 1_000
            } else {
                ((k - 10) / 2 + 1) * gap + (k % 2) * 1_000
            },
            len: 1448,
        })
        .collect();
    TimingSample::new(arrivals, rtt_ns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_usable() {
        assert!(iw_trace(10, 1200).inbound_payload().count() > 10);
        assert_eq!(paced_sample(32, 65_000_000).arrivals.len(), 32);
    }
}
