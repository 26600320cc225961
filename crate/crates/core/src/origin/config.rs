use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("initial window must be at least one segment or byte")]
    EmptyWindow,
    #[error("random drop probability {0} outside [0, 1)")]
    DropProbability(f64),
    #[error("within-drop index must be 1-based, got 0")]
    WithinIndex,
    #[error("pacing parameters must be positive")]
    Pacing,
    #[error("retransmission timeout must be positive")]
    Rto,
    #[error("fixed MSS must be positive")]
    FixedMss,
}

/// Server-side initial window, either a segment count or a byte budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IwConfig {
    Segments(u32),
    Bytes(u64),
}

impl IwConfig {
    /// Window in bytes once the segment size is known.
    pub fn bytes(self, mss: u64) -> u64 {
        match self {
            IwConfig::Segments(n) => u64::from(n) * mss,
            IwConfig::Bytes(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MssPolicy {
    /// Use the MSS the client announced.
    HonorClient,
    /// Announce this MSS; segments are sized `min(fixed, client MSS)`.
    Fixed(u16),
}

/// Which first-transmission segments never reach the client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPlan {
    None,
    Head,
    /// 1-based index into the initial flight.
    Within(u32),
    Tail,
    /// Independent loss with this probability for every data transmission,
    /// retransmissions included.
    Random(f64),
}

impl DropPlan {
    /// The middle segment of an `n`-segment flight.
    pub fn within_mid(n: u32) -> DropPlan {
        DropPlan::Within(n.div_ceil(2).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacingMode {
    Off,
    LinuxLike {
        initial_burst: u32,
        train: u32,
        rate_multiplier: f64,
    },
}

impl PacingMode {
    /// Linux defaults: ten-segment burst, two-segment trains.
    pub fn linux(rate_multiplier: f64) -> Self {
        PacingMode::LinuxLike {
            initial_burst: 10,
            train: 2,
            rate_multiplier,
        }
    }
}

fn default_rto_ms() -> u64 {
    1000
}

fn default_max_retransmissions() -> u32 {
    3
}

fn default_rtt_ms() -> u64 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginConfig {
    pub iw: IwConfig,
    /// Size of the whole HTTP response on the wire, headers included.
    pub object_size: u64,
    #[serde(default = "OriginConfig::default_mss_policy")]
    pub mss_policy: MssPolicy,
    #[serde(default = "OriginConfig::default_drop_plan")]
    pub drop_plan: DropPlan,
    #[serde(default = "OriginConfig::default_pacing")]
    pub pacing: PacingMode,
    #[serde(default = "default_rto_ms")]
    pub rto_ms: u64,
    #[serde(default = "default_max_retransmissions")]
    pub max_retransmissions: u32,
    /// Delay added to every segment the origin emits.
    #[serde(default = "default_rtt_ms")]
    pub artificial_rtt_ms: u64,
    #[serde(default)]
    pub seed: u64,
    /// Pins the server's initial sequence number; random otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isn: Option<u32>,
}

impl OriginConfig {
    fn default_mss_policy() -> MssPolicy {
        MssPolicy::HonorClient
    }

    fn default_drop_plan() -> DropPlan {
        DropPlan::None
    }

    fn default_pacing() -> PacingMode {
        PacingMode::Off
    }

    pub fn new(iw: IwConfig, object_size: u64) -> Self {
        OriginConfig {
            iw,
            object_size,
            mss_policy: MssPolicy::HonorClient,
            drop_plan: DropPlan::None,
            pacing: PacingMode::Off,
            rto_ms: default_rto_ms(),
            max_retransmissions: default_max_retransmissions(),
            artificial_rtt_ms: default_rtt_ms(),
            seed: 0,
            isn: None,
        }
    }

    pub fn with_drop_plan(mut self, plan: DropPlan) -> Self {
        self.drop_plan = plan;
        self
    }

    pub fn with_pacing(mut self, pacing: PacingMode) -> Self {
        self.pacing = pacing;
        self
    }

    pub fn with_rtt_ms(mut self, rtt: u64) -> Self {
        self.artificial_rtt_ms = rtt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mss_policy(mut self, policy: MssPolicy) -> Self {
        self.mss_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.iw {
            IwConfig::Segments(0) | IwConfig::Bytes(0) => return Err(ConfigError::EmptyWindow),
            _ => {}
        }
        match self.drop_plan {
            DropPlan::Random(p) if !(0.0..1.0).contains(&p) => {
                return Err(ConfigError::DropProbability(p))
            }
            DropPlan::Within(0) => return Err(ConfigError::WithinIndex),
            _ => {}
        }
        if let PacingMode::LinuxLike {
            initial_burst,
            train,
            rate_multiplier,
        } = self.pacing
        {
            if initial_burst == 0
                || train == 0
                || rate_multiplier.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            {
                return Err(ConfigError::Pacing);
            }
        }
        if self.rto_ms == 0 {
            return Err(ConfigError::Rto);
        }
        if self.mss_policy == MssPolicy::Fixed(0) {
            return Err(ConfigError::FixedMss);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let cfg: OriginConfig = serde_json::from_str(
            r#"{"iw":{"bytes":105000},"object_size":200000,
                "drop_plan":{"random":0.15},
                "pacing":{"linux_like":{"initial_burst":10,"train":2,"rate_multiplier":1.0}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.iw, IwConfig::Bytes(105000));
        assert_eq!(cfg.drop_plan, DropPlan::Random(0.15));
        assert_eq!(cfg.pacing, PacingMode::linux(1.0));
        assert_eq!(cfg.rto_ms, 1000);
        assert_eq!(cfg.mss_policy, MssPolicy::HonorClient);
        cfg.validate().unwrap();

        let plain: OriginConfig =
            serde_json::from_str(r#"{"iw":{"segments":10},"object_size":1,"drop_plan":"tail"}"#)
                .unwrap();
        assert_eq!(plain.drop_plan, DropPlan::Tail);
    }

    #[test]
    fn validation() {
        let base = OriginConfig::new(IwConfig::Segments(10), 1000);
        assert!(base.validate().is_ok());
        let bad = OriginConfig::new(IwConfig::Segments(0), 1000);
        assert_eq!(bad.validate(), Err(ConfigError::EmptyWindow));
        let bad = base.clone().with_drop_plan(DropPlan::Random(1.0));
        assert_eq!(bad.validate(), Err(ConfigError::DropProbability(1.0)));
        let bad = base.clone().with_drop_plan(DropPlan::Within(0));
        assert_eq!(bad.validate(), Err(ConfigError::WithinIndex));
        let bad = base.with_pacing(PacingMode::linux(0.0));
        assert_eq!(bad.validate(), Err(ConfigError::Pacing));
    }

    #[test]
    fn within_mid() {
        assert_eq!(DropPlan::within_mid(1), DropPlan::Within(1));
        assert_eq!(DropPlan::within_mid(2), DropPlan::Within(1));
        assert_eq!(DropPlan::within_mid(10), DropPlan::Within(5));
        assert_eq!(DropPlan::within_mid(11), DropPlan::Within(6));
    }
}
