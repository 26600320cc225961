use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::vote::VotedEstimate;
use crate::{div_round_half_up, NORMALIZATION_MSS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    SegmentBased,
    ByteBased,
    Indeterminate,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::SegmentBased => "segment_based",
            Basis::ByteBased => "byte_based",
            Basis::Indeterminate => "indeterminate",
        }
    }
}

/// Per-host window characterisation across the MSS sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwProfile {
    pub basis: Basis,
    pub iw_segments_normalized: u64,
    pub iw_bytes: u64,
    pub per_mss: BTreeMap<u16, VotedEstimate>,
}

impl IwProfile {
    /// The value used to group hosts: segments for segment-based windows,
    /// bytes otherwise.
    pub fn key_value(&self) -> u64 {
        match self.basis {
            Basis::SegmentBased => self.iw_segments_normalized,
            _ => self.iw_bytes,
        }
    }
}

/// Segment count that a voted byte total corresponds to at its MSS.
fn segments_at(v: &VotedEstimate) -> u64 {
    let size = if v.segment_size > 0 {
        v.segment_size
    } else {
        u64::from(v.mss)
    };
    div_round_half_up(v.iw_bytes, size.max(1))
}

pub fn classify_basis(per_mss: &BTreeMap<u16, VotedEstimate>) -> IwProfile {
    let valid: Vec<&VotedEstimate> = per_mss.values().filter(|v| v.valid).collect();
    let mut profile = IwProfile {
        basis: Basis::Indeterminate,
        iw_segments_normalized: 0,
        iw_bytes: 0,
        per_mss: per_mss.clone(),
    };
    if valid.len() < 2 {
        return profile;
    }

    let counts: Vec<u64> = valid.iter().map(|v| segments_at(v)).collect();
    let (lo, hi) = min_max(&counts);
    if hi - lo <= 1 {
        let s = super::modal(counts.iter().copied()).expect("non-empty");
        profile.basis = Basis::SegmentBased;
        profile.iw_segments_normalized = s;
        profile.iw_bytes = s * NORMALIZATION_MSS;
        return profile;
    }

    let bytes: Vec<u64> = valid.iter().map(|v| v.iw_bytes).collect();
    let (lo, hi) = min_max(&bytes);
    let largest_mss = valid
        .iter()
        .map(|v| u64::from(v.mss))
        .max()
        .expect("non-empty");
    if hi - lo <= largest_mss {
        let b = super::modal(bytes.iter().copied()).expect("non-empty");
        profile.basis = Basis::ByteBased;
        profile.iw_bytes = b;
        profile.iw_segments_normalized = div_round_half_up(b, NORMALIZATION_MSS);
    }
    profile
}

fn min_max(values: &[u64]) -> (u64, u64) {
    let lo = *values.iter().min().expect("non-empty");
    let hi = *values.iter().max().expect("non-empty");
    (lo, hi)
}
