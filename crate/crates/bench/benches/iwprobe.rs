use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iwprobe::flow::{queue_sim, NetworkConfig, DEFAULT_FLOW_BYTES, DEFAULT_INGRESS_MBPS};
use iwprobe::{
    detect_pacing, estimate_trial, find_first_retransmission, DropPlan, EmulatedTransport,
    IwConfig, MockOrigin, OriginConfig, ProbeSpec,
};
use iwprobe_bench::{iw_trace, paced_sample};

fn estimation(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_trial");
    for iw in [10u32, 100] {
        let trace = iw_trace(iw, 64);
        g.bench_with_input(BenchmarkId::from_parameter(iw), &trace, |b, t| {
            b.iter(|| estimate_trial(black_box(t)))
        });
    }
    g.finish();

    let segments: Vec<(u64, u64)> = (0..2000).map(|i| (i * 64, 64)).chain([(0, 64)]).collect();
    c.bench_function("find_first_retransmission/2000", |b| {
        b.iter(|| find_first_retransmission(black_box(&segments)))
    });
}

fn probing(c: &mut Criterion) {
    c.bench_function("probe_once/iw32_head_drop", |b| {
        b.iter(|| {
            let cfg =
                OriginConfig::new(IwConfig::Segments(32), 1 << 20).with_drop_plan(DropPlan::Head);
            let mut t = EmulatedTransport::new(MockOrigin::new(cfg).unwrap());
            iwprobe::probe_once(&ProbeSpec::default().with_mss(536), &mut t).unwrap()
        })
    });
}

fn pacing(c: &mut Criterion) {
    let sample = paced_sample(100, 65_000_000);
    c.bench_function("detect_pacing/iw100", |b| {
        b.iter(|| detect_pacing(black_box(&sample)))
    });
}

fn flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("queue_sim");
    for iw in [4u64, 50] {
        let net = NetworkConfig::new(7.0, 100.0, 16);
        g.bench_with_input(BenchmarkId::from_parameter(iw), &iw, |b, &iw| {
            b.iter(|| queue_sim(iw, DEFAULT_FLOW_BYTES, &net, DEFAULT_INGRESS_MBPS))
        });
    }
    g.finish();
}

criterion_group!(benches, estimation, probing, pacing, flow);
criterion_main!(benches);
