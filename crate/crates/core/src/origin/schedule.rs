use super::config::PacingMode;

/// Emission offsets for the first `segments` segments of a flight.
///
/// With Linux-like pacing the first `initial_burst` segments leave at once
/// and the rest follow in trains; train `i` (1-based) leaves at
/// `i * train * mss / (iw_bytes * rate_multiplier) * rtt`.
pub fn pacing_offsets(
    pacing: &PacingMode,
    segments: usize,
    mss: u64,
    iw_bytes: u64,
    rtt_ns: u64,
) -> Vec<(usize, u64)> {
    match *pacing {
        PacingMode::Off => (0..segments).map(|i| (i, 0)).collect(),
        PacingMode::LinuxLike {
            initial_burst,
            train,
            rate_multiplier,
        } => {
            let burst = initial_burst as usize;
            let train = train.max(1) as usize;
            let gap = train as f64 * mss as f64 / (iw_bytes.max(1) as f64 * rate_multiplier)
                * rtt_ns as f64;
            (0..segments)
                .map(|i| {
                    if i < burst {
                        (i, 0)
                    } else {
                        let train_no = (i - burst) / train + 1;
                        (i, (train_no as f64 * gap).round() as u64)
                    }
                })
                .collect()
        }
    }
}

/// Pacing schedule for a whole initial window of `iw_bytes` at segment size
/// `mss`: one `(segment index, emit offset)` pair per segment.
pub fn pacing_schedule(
    pacing: &PacingMode,
    iw_bytes: u64,
    mss: u64,
    rtt_ns: u64,
) -> Vec<(usize, u64)> {
    let segments = iw_bytes.div_ceil(mss.max(1)) as usize;
    pacing_offsets(pacing, segments, mss, iw_bytes, rtt_ns)
}
