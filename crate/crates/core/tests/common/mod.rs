#![allow(dead_code)]

use std::collections::BTreeMap;

use iwprobe::estimation::vote;
use iwprobe::{
    classify_basis, estimate_trial, probe_once, DropPlan, EmulatedTransport, IwConfig, IwProfile,
    MockOrigin, OriginConfig, ProbeSpec, ProbeTrace, Transport, TrialEstimate,
};

pub const SEGMENT_IWS: [u32; 10] = [1, 2, 4, 10, 16, 20, 30, 32, 50, 100];
pub const BYTE_IWS: [u64; 3] = [14600, 65536, 105000];
pub const SWEEP: [u16; 4] = [64, 128, 536, 1200];

pub fn all_iws() -> Vec<IwConfig> {
    SEGMENT_IWS
        .iter()
        .map(|&n| IwConfig::Segments(n))
        .chain(BYTE_IWS.iter().map(|&b| IwConfig::Bytes(b)))
        .collect()
}

/// Runs one probe against a fresh origin and returns the trace with the
/// origin still attached.
pub fn probe(config: OriginConfig, mss: u16) -> (ProbeTrace, EmulatedTransport) {
    let mut t = EmulatedTransport::new(MockOrigin::new(config).unwrap());
    let trace = probe_once(&ProbeSpec::default().with_mss(mss), &mut t).unwrap();
    let now = t.now_ns();
    t.settle(now + 1_000_000_000);
    (trace, t)
}

pub fn trial(config: OriginConfig, mss: u16) -> TrialEstimate {
    estimate_trial(&probe(config, mss).0)
}

/// Flight size in bytes for `iw` when segments carry `mss` bytes.
pub fn flight_bytes(iw: IwConfig, mss: u16) -> u64 {
    iw.bytes(u64::from(mss))
}

/// Segment count of the configured window at `mss`.
pub fn flight_segments(iw: IwConfig, mss: u16) -> u64 {
    flight_bytes(iw, mss).div_ceil(u64::from(mss))
}

/// Single-trial profile over the sweep; `object` maps the flight size at an
/// MSS to the object size served there.
pub fn profile(
    iw: IwConfig,
    plan: impl Fn(u16) -> DropPlan,
    object: impl Fn(u64) -> u64,
) -> (IwProfile, Vec<TrialEstimate>) {
    let mut per_mss = BTreeMap::new();
    let mut trials = Vec::new();
    for mss in SWEEP {
        let cfg = OriginConfig::new(iw, object(flight_bytes(iw, mss))).with_drop_plan(plan(mss));
        let t = trial(cfg, mss);
        per_mss.insert(mss, vote(std::slice::from_ref(&t)));
        trials.push(t);
    }
    (classify_basis(&per_mss), trials)
}
