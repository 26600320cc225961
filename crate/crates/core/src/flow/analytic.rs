use super::NetworkConfig;

/// Smallest number of loss-free slow-start rounds that deliver `flow` bytes:
/// the first `r` with `iw * (2^r - 1) * mss >= flow`.
pub fn slow_start_roundtrips(iw: u64, flow: u64, mss: u64) -> u32 {
    assert!(iw >= 1 && mss >= 1, "iw and mss must be positive");
    let segments = flow.div_ceil(mss);
    let mut sent = 0u64;
    let mut round_size = iw;
    let mut rounds = 0;
    while sent < segments {
        sent = sent.saturating_add(round_size);
        round_size = round_size.saturating_mul(2);
        rounds += 1;
    }
    rounds
}

/// Segment indices `[start, end)` sent in each slow-start round.
pub(crate) fn rounds(iw: u64, segments: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut size = iw;
    while start < segments {
        let end = start.saturating_add(size).min(segments);
        out.push((start, end));
        start = end;
        size = size.saturating_mul(2);
    }
    out
}

/// Closed-form completion time in milliseconds, measured from the client's
/// SYN to the last byte.
///
/// One RTT for the handshake and one for request plus first data, then
/// `afct = 2 rtt + max_k ((k - 1) rtt + ser(rounds k..))`: round `k` cannot
/// leave before its ACK clock, and everything from round `k` on must cross
/// the bottleneck back to back. `ser` counts wire bytes including headers.
pub fn afct_analytic(iw: u64, flow: u64, net: &NetworkConfig) -> f64 {
    let segments = flow.div_ceil(net.mss);
    let wire_bytes = |from: u64| -> u64 {
        if from >= segments {
            return 0;
        }
        let payload = flow - from * net.mss;
        payload + (segments - from) * net.frame_overhead
    };
    let send = rounds(iw, segments)
        .iter()
        .enumerate()
        .map(|(k, &(start, _))| k as f64 * net.rtt_ms + net.serialization_ms(wire_bytes(start)))
        .fold(0.0, f64::max);
    2.0 * net.rtt_ms + send
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cumulative-sum oracle: add rounds of iw, 2iw, 4iw, ... segments.
    fn oracle_rounds(iw: u64, flow_segments: u64) -> u32 {
        let (mut total, mut round, mut r) = (0, iw, 0);
        while total < flow_segments {
            total += round;
            round *= 2;
            r += 1;
        }
        r
    }

    #[test]
    fn seventy_one_kilobytes() {
        for (iw, expected) in [(4, 4), (10, 3), (16, 3), (32, 2), (50, 1)] {
            assert_eq!(oracle_rounds(iw, 50), expected);
            assert_eq!(slow_start_roundtrips(iw, 71_000, 1460), expected, "iw {iw}");
        }
    }

    #[test]
    fn single_round_at_high_rtt() {
        let net = NetworkConfig::new(100.0, 250.0, 16);
        let afct = afct_analytic(50, 71_000, &net);
        // 50 frames of up to 1500 bytes at 100 Mbit/s
        let ser = (71_000.0 + 49.0 * 40.0) * 8.0 / 100e6 * 1e3;
        assert!((afct - (500.0 + ser)).abs() < 1e-9);
    }

    #[test]
    fn bandwidth_bound() {
        let net = NetworkConfig::new(4.0, 30.0, 16);
        for iw in [4, 10, 16, 20, 32, 50] {
            assert!(afct_analytic(iw, 71_000, &net) >= 142.0);
        }
    }

    proptest! {
        #[test]
        fn roundtrips_monotone(iw in 1u64..100, flow in 1u64..500_000, more in 0u64..100_000) {
            let r = slow_start_roundtrips(iw, flow, 1460);
            prop_assert!(slow_start_roundtrips(iw + 1, flow, 1460) <= r);
            prop_assert!(slow_start_roundtrips(iw, flow + more, 1460) >= r);
            prop_assert_eq!(r, oracle_rounds(iw, flow.div_ceil(1460)));
        }

        #[test]
        fn afct_lower_bounds(iw in 1u64..100, flow in 1u64..500_000, bw in 1.0f64..1000.0, rtt in 1.0f64..500.0) {
            let net = NetworkConfig::new(bw, rtt, 16);
            let afct = afct_analytic(iw, flow, &net);
            prop_assert!(afct >= 2.0 * rtt);
            prop_assert!(afct >= flow as f64 * 8.0 / (bw * 1e3));
        }

        #[test]
        fn afct_non_increasing_in_iw(iw in 1u64..100, flow in 1u64..500_000, bw in 1.0f64..1000.0, rtt in 1.0f64..500.0) {
            let net = NetworkConfig::new(bw, rtt, 16);
            prop_assert!(afct_analytic(iw + 1, flow, &net) <= afct_analytic(iw, flow, &net) + 1e-9);
        }
    }
}
