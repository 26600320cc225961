use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::NetworkConfig;

/// Default sender access rate in Mbit/s.
pub const DEFAULT_INGRESS_MBPS: f64 = 1000.0;

const MIN_RTO_NS: u64 = 200_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub afct_ms: f64,
    pub roundtrips: u32,
    pub retransmissions: u32,
    /// Packets of the initial window lost at the bottleneck.
    pub first_flight_drops: u32,
    /// Longest time a packet spent at the bottleneck, own transmission included.
    pub max_queue_delay_ms: f64,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    idx: u64,
    tag: u32,
}

#[derive(Debug)]
enum Event {
    AtRouter(Packet),
    AtReceiver(Packet),
    Ack { cum: u64, tag: u32 },
    Rto { generation: u64 },
}

struct Scheduler {
    heap: BinaryHeap<Reverse<(u64, u64)>>,
    events: Vec<Option<Event>>,
}

impl Scheduler {
    fn push(&mut self, at: u64, ev: Event) {
        let id = self.events.len() as u64;
        self.events.push(Some(ev));
        self.heap.push(Reverse((at, id)));
    }

    fn pop(&mut self) -> Option<(u64, Event)> {
        let Reverse((at, id)) = self.heap.pop()?;
        let ev = self.events[id as usize].take().expect("event popped once");
        Some((at, ev))
    }
}

struct Sender {
    segments: u64,
    cwnd: f64,
    ssthresh: f64,
    snd_una: u64,
    snd_nxt: u64,
    dupacks: u32,
    recover: Option<u64>,
    sent: Vec<u32>,
    max_tag: u32,
    link_free: u64,
    rto_ns: u64,
    backoff: u64,
    generation: u64,
}

struct Router {
    departures: VecDeque<u64>,
    limit: usize,
    max_delay: u64,
    first_flight_drops: u32,
}

struct Receiver {
    got: Vec<bool>,
    cum: u64,
    done_at: Option<u64>,
}

fn ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

/// Single slow-start flow through a drop-tail bottleneck.
///
/// The sender's access link runs at `ingress_mbps`; the router holds at most
/// `queue_limit` packets including the one in transmission and drains at the
/// bottleneck rate; each direction adds half the RTT. The receiver ACKs
/// every packet cumulatively. Losses are repaired by fast retransmit on three
/// duplicate ACKs (with partial-ACK retransmits) or by a retransmission
/// timeout followed by go-back-N. Entirely deterministic.
pub fn queue_sim(iw: u64, flow: u64, net: &NetworkConfig, ingress_mbps: f64) -> FlowResult {
    assert!(iw >= 1 && flow >= 1, "iw and flow must be positive");
    let segments = flow.div_ceil(net.mss);
    let frame = |idx: u64| -> u64 {
        let payload = if idx + 1 == segments {
            flow - idx * net.mss
        } else {
            net.mss
        };
        payload + net.frame_overhead
    };
    let ser_in = |idx: u64| ns(frame(idx) as f64 * 8.0 / (ingress_mbps * 1e3));
    let ser_bn = |idx: u64| ns(net.serialization_ms(frame(idx)));
    let half_rtt = ns(net.rtt_ms / 2.0);
    let full_queue =
        ns(net.serialization_ms(net.mss + net.frame_overhead)) * u64::from(net.queue_limit);

    let mut sched = Scheduler {
        heap: BinaryHeap::new(),
        events: Vec::new(),
    };
    let mut tx = Sender {
        segments,
        cwnd: iw as f64,
        ssthresh: f64::INFINITY,
        snd_una: 0,
        snd_nxt: 0,
        dupacks: 0,
        recover: None,
        sent: vec![0; segments as usize],
        max_tag: 0,
        link_free: 0,
        rto_ns: MIN_RTO_NS.max(2 * ns(net.rtt_ms) + 2 * full_queue),
        backoff: 1,
        generation: 0,
    };
    let mut router = Router {
        departures: VecDeque::new(),
        limit: net.queue_limit.max(1) as usize,
        max_delay: 0,
        first_flight_drops: 0,
    };
    let mut rx = Receiver {
        got: vec![false; segments as usize],
        cum: 0,
        done_at: None,
    };

    let transmit = |tx: &mut Sender, sched: &mut Scheduler, now: u64, idx: u64, tag: u32| {
        let start = tx.link_free.max(now);
        tx.link_free = start + ser_in(idx);
        tx.sent[idx as usize] += 1;
        tx.max_tag = tx.max_tag.max(tag);
        sched.push(tx.link_free, Event::AtRouter(Packet { idx, tag }));
    };
    let arm = |tx: &mut Sender, sched: &mut Scheduler, now: u64| {
        tx.generation += 1;
        if tx.snd_una < tx.segments {
            sched.push(
                now + tx.rto_ns * tx.backoff,
                Event::Rto {
                    generation: tx.generation,
                },
            );
        }
    };
    let send_new = |tx: &mut Sender, sched: &mut Scheduler, now: u64, tag: u32| {
        while tx.snd_nxt < tx.segments && ((tx.snd_nxt - tx.snd_una) as f64) < tx.cwnd {
            let idx = tx.snd_nxt;
            transmit(tx, sched, now, idx, tag);
            tx.snd_nxt += 1;
        }
    };

    send_new(&mut tx, &mut sched, 0, 1);
    arm(&mut tx, &mut sched, 0);

    while let Some((now, ev)) = sched.pop() {
        match ev {
            Event::AtRouter(p) => {
                while router.departures.front().is_some_and(|&d| d <= now) {
                    router.departures.pop_front();
                }
                if router.departures.len() >= router.limit {
                    if p.tag == 1 && tx.sent[p.idx as usize] == 1 {
                        router.first_flight_drops += 1;
                    }
                    continue;
                }
                let start = router.departures.back().copied().unwrap_or(now).max(now);
                let depart = start + ser_bn(p.idx);
                router.departures.push_back(depart);
                router.max_delay = router.max_delay.max(depart - now);
                sched.push(depart + half_rtt, Event::AtReceiver(p));
            }
            Event::AtReceiver(p) => {
                rx.got[p.idx as usize] = true;
                while rx.cum < segments && rx.got[rx.cum as usize] {
                    rx.cum += 1;
                }
                if rx.cum == segments && rx.done_at.is_none() {
                    rx.done_at = Some(now);
                }
                sched.push(
                    now + half_rtt,
                    Event::Ack {
                        cum: rx.cum,
                        tag: p.tag,
                    },
                );
            }
            Event::Ack { cum, tag } => {
                if cum > tx.snd_una {
                    let acked = cum - tx.snd_una;
                    tx.snd_una = cum;
                    tx.snd_nxt = tx.snd_nxt.max(cum);
                    tx.dupacks = 0;
                    tx.backoff = 1;
                    match tx.recover {
                        Some(recover) if cum < recover => {
                            // partial ACK: the next hole is lost too
                            transmit(&mut tx, &mut sched, now, cum, tag + 1);
                        }
                        Some(_) => {
                            tx.recover = None;
                            tx.cwnd = tx.ssthresh;
                        }
                        None if tx.cwnd < tx.ssthresh => tx.cwnd += acked as f64,
                        None => tx.cwnd += acked as f64 / tx.cwnd,
                    }
                    arm(&mut tx, &mut sched, now);
                } else if cum == tx.snd_una && tx.snd_una < tx.snd_nxt {
                    tx.dupacks += 1;
                    if tx.dupacks == 3 && tx.recover.is_none() {
                        let flight = (tx.snd_nxt - tx.snd_una) as f64;
                        tx.ssthresh = (flight / 2.0).max(2.0);
                        tx.cwnd = tx.ssthresh;
                        tx.recover = Some(tx.snd_nxt);
                        let idx = tx.snd_una;
                        transmit(&mut tx, &mut sched, now, idx, tag + 1);
                    }
                }
                if tx.recover.is_none() {
                    send_new(&mut tx, &mut sched, now, tag + 1);
                }
            }
            Event::Rto { generation } => {
                if generation != tx.generation || tx.snd_una >= segments {
                    continue;
                }
                let flight = (tx.snd_nxt - tx.snd_una) as f64;
                tx.ssthresh = (flight / 2.0).max(2.0);
                tx.cwnd = 1.0;
                tx.recover = None;
                tx.dupacks = 0;
                tx.snd_nxt = tx.snd_una;
                tx.backoff *= 2;
                let tag = tx.max_tag + 1;
                send_new(&mut tx, &mut sched, now, tag);
                arm(&mut tx, &mut sched, now);
            }
        }
    }

    let done = rx
        .done_at
        .expect("simulation runs until the flow completes");
    let transmissions: u32 = tx.sent.iter().sum();
    FlowResult {
        afct_ms: 1.5 * net.rtt_ms + done as f64 / 1e6,
        roundtrips: tx.max_tag,
        retransmissions: transmissions - segments as u32,
        first_flight_drops: router.first_flight_drops,
        max_queue_delay_ms: router.max_delay as f64 / 1e6,
    }
}
