use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use super::{
    afct_analytic, queue_sim, NetworkConfig, DEFAULT_INGRESS_MBPS, GRID_BANDWIDTHS_MBPS,
    GRID_RTTS_MS,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("empty {0} list")]
    EmptyGrid(&'static str),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub bandwidth_mbps: f64,
    pub rtt_ms: f64,
    pub iw: u64,
    pub queue_limit: u32,
    pub flow_bytes: u64,
    pub roundtrips: u32,
    #[serde(serialize_with = "micros")]
    pub afct_analytic_ms: f64,
    #[serde(serialize_with = "micros")]
    pub afct_sim_ms: f64,
    pub retransmissions: u32,
    pub first_flight_drops: u32,
    #[serde(serialize_with = "micros")]
    pub max_queue_delay_ms: f64,
}

fn micros<S: serde::Serializer>(ms: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((ms * 1000.0).round() / 1000.0)
}

/// The bandwidth × delay grid with each of the given queue limits.
pub fn grid_networks(queue_limits: &[u32]) -> Vec<NetworkConfig> {
    let mut nets = Vec::new();
    for bw in GRID_BANDWIDTHS_MBPS {
        for rtt in GRID_RTTS_MS {
            for &q in queue_limits {
                nets.push(NetworkConfig::new(bw, rtt, q));
            }
        }
    }
    nets
}

/// Evaluates both models on the cross product, sorted by bandwidth, RTT,
/// IW, queue limit and flow size.
pub fn sweep_grid(
    iws: &[u64],
    flows: &[u64],
    nets: &[NetworkConfig],
) -> Result<Vec<GridRow>, FlowError> {
    if iws.is_empty() {
        return Err(FlowError::EmptyGrid("IW"));
    }
    if flows.is_empty() {
        return Err(FlowError::EmptyGrid("flow"));
    }
    if nets.is_empty() {
        return Err(FlowError::EmptyGrid("network"));
    }
    for n in nets {
        let ok = n.bandwidth_mbps > 0.0 && n.rtt_ms > 0.0 && n.queue_limit >= 1 && n.mss >= 1;
        if !ok || n.bandwidth_mbps >= DEFAULT_INGRESS_MBPS {
            return Err(FlowError::InvalidNetwork(format!("{n:?}")));
        }
    }
    if iws.contains(&0) || flows.contains(&0) {
        return Err(FlowError::InvalidNetwork(
            "IW and flow size must be positive".into(),
        ));
    }

    let mut rows = Vec::with_capacity(iws.len() * flows.len() * nets.len());
    for net in nets {
        for &iw in iws {
            for &flow in flows {
                let sim = queue_sim(iw, flow, net, DEFAULT_INGRESS_MBPS);
                rows.push(GridRow {
                    bandwidth_mbps: net.bandwidth_mbps,
                    rtt_ms: net.rtt_ms,
                    iw,
                    queue_limit: net.queue_limit,
                    flow_bytes: flow,
                    roundtrips: super::slow_start_roundtrips(iw, flow, net.mss),
                    afct_analytic_ms: afct_analytic(iw, flow, net),
                    afct_sim_ms: sim.afct_ms,
                    retransmissions: sim.retransmissions,
                    first_flight_drops: sim.first_flight_drops,
                    max_queue_delay_ms: sim.max_queue_delay_ms,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.bandwidth_mbps
            .total_cmp(&b.bandwidth_mbps)
            .then(a.rtt_ms.total_cmp(&b.rtt_ms))
            .then(a.iw.cmp(&b.iw))
            .then(a.queue_limit.cmp(&b.queue_limit))
            .then(a.flow_bytes.cmp(&b.flow_bytes))
    });
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<(), FlowError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{DEFAULT_FLOW_BYTES, GRID_IWS};

    #[test]
    fn standard_grid_has_72_rows_in_order() {
        let rows = sweep_grid(&GRID_IWS, &[DEFAULT_FLOW_BYTES], &grid_networks(&[16])).unwrap();
        assert_eq!(rows.len(), 72);
        let keys: Vec<_> = rows
            .iter()
            .map(|r| (r.bandwidth_mbps, r.rtt_ms, r.iw))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        assert_eq!(keys, sorted);
    }

    #[test]
    fn empty_iw_list_is_an_error() {
        assert!(matches!(
            sweep_grid(&[], &[DEFAULT_FLOW_BYTES], &grid_networks(&[16])),
            Err(FlowError::EmptyGrid("IW"))
        ));
    }

    #[test]
    fn csv_header() {
        let rows = sweep_grid(
            &[10],
            &[DEFAULT_FLOW_BYTES],
            &[NetworkConfig::new(7.0, 30.0, 16)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bandwidth_mbps,rtt_ms,iw,queue_limit,flow_bytes,roundtrips,"));
        assert_eq!(text.lines().count(), 2);
    }
}
