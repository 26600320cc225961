//! The probe engine and estimator checked against the mock origin's own
//! session log.

mod common;

use common::*;
use iwprobe::origin::SessionEventKind;
use iwprobe::pipeline::{run_campaign, CampaignConfig, MockFleet, Target};
use iwprobe::*;
use proptest::prelude::*;

fn logged_flight(config: OriginConfig, mss: u16) -> (TrialEstimate, u64) {
    let (trace, t) = probe(config, mss);
    let port = t.local_port();
    let logged = t.session_log().unwrap().unacked_before_first_ack(port);
    (estimate_trial(&trace), logged)
}

#[test]
fn estimates_equal_logged_first_flight() {
    for iw in all_iws() {
        for mss in SWEEP {
            let n = flight_segments(iw, mss) as u32;
            for plan in [DropPlan::None, DropPlan::Head, DropPlan::within_mid(n)] {
                let cfg = OriginConfig::new(iw, 4 * flight_bytes(iw, mss)).with_drop_plan(plan);
                let (est, logged) = logged_flight(cfg, mss);
                assert_eq!(est.iw_bytes, logged, "{iw:?} mss {mss} {plan:?}");
                assert_eq!(logged, flight_bytes(iw, mss), "origin overran its window");
                assert_eq!(est.outcome, TrialOutcome::IwLimited);
            }
        }
    }
}

#[test]
fn one_reset_per_probe() {
    let cfg = OriginConfig::new(IwConfig::Segments(10), 1 << 20);
    let (_, t) = probe(cfg, 536);
    let log = t.session_log().unwrap();
    assert_eq!(log.count(SessionEventKind::Reset), 1);
    assert_eq!(log.count(SessionEventKind::Request), 1);
    assert_eq!(t.origin().unwrap().active_sessions(), 0);
}

#[test]
fn fleet_campaign_matches_configs() {
    let configs = [
        (IwConfig::Segments(4), DropPlan::None),
        (IwConfig::Segments(10), DropPlan::Head),
        (IwConfig::Segments(16), DropPlan::Within(3)),
        (IwConfig::Segments(32), DropPlan::None),
        (IwConfig::Segments(50), DropPlan::Head),
        (IwConfig::Bytes(14_600), DropPlan::None),
        (IwConfig::Bytes(65_536), DropPlan::Within(2)),
        (IwConfig::Bytes(105_000), DropPlan::Head),
    ];
    let mut fleet = MockFleet::new();
    let mut targets = Vec::new();
    for (i, (iw, plan)) in configs.iter().enumerate() {
        let domain = format!("o{i}.example");
        fleet = fleet.with_origin(
            domain.clone(),
            OriginConfig::new(*iw, 1 << 20).with_drop_plan(*plan),
        );
        targets.push(Target {
            url: format!("http://{domain}/x"),
            domain,
            cdn: "Fleet".into(),
            object_size: 1 << 20,
            mime_type: None,
        });
    }
    let cfg = CampaignConfig {
        repetitions: 3,
        seed: 11,
        ..CampaignConfig::default()
    };
    let mut results = Vec::new();
    run_campaign(&cfg, &targets, &fleet, None, |r| {
        results.push(r.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(results.len(), configs.len());
    for (r, (iw, _)) in results.iter().zip(configs) {
        let (basis, value) = match iw {
            IwConfig::Segments(n) => (Basis::SegmentBased, u64::from(n)),
            IwConfig::Bytes(b) => (Basis::ByteBased, b),
        };
        assert_eq!(
            (r.profile.basis, r.profile.key_value()),
            (basis, value),
            "{}",
            r.domain
        );
        assert_eq!(r.trials.len(), 12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_single_non_tail_drop_is_recovered(
        n in 2u32..=120,
        mss_i in 0usize..4,
        drop in 1u32..=120,
    ) {
        let mss = SWEEP[mss_i];
        let k = 1 + (drop - 1) % (n - 1);
        let iw = IwConfig::Segments(n);
        let cfg = OriginConfig::new(iw, 4 * flight_bytes(iw, mss)).with_drop_plan(DropPlan::Within(k));
        let (est, logged) = logged_flight(cfg, mss);
        prop_assert_eq!(est.iw_bytes, logged);
        prop_assert_eq!(est.iw_segments, u64::from(n));
    }

    #[test]
    fn tail_drop_reads_one_short(n in 2u32..=100, mss_i in 0usize..4) {
        let mss = SWEEP[mss_i];
        let iw = IwConfig::Segments(n);
        let cfg = OriginConfig::new(iw, 4 * flight_bytes(iw, mss)).with_drop_plan(DropPlan::Tail);
        let (est, logged) = logged_flight(cfg, mss);
        prop_assert_eq!(logged, flight_bytes(iw, mss));
        prop_assert_eq!(est.iw_segments, u64::from(n) - 1);
    }
}
