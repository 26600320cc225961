//! Configurable in-process origin used to validate the prober: IW-limited
//! sending, RTO retransmission with backoff, drop injection and pacing
//! emulation.

mod config;
mod log;
mod schedule;
mod server;

pub use config::{ConfigError, DropPlan, IwConfig, MssPolicy, OriginConfig, PacingMode};
pub use log::{SessionEvent, SessionEventKind, SessionLog};
pub use schedule::{pacing_offsets, pacing_schedule};
pub use server::{build_response, MockOrigin, OriginOutput, TimerToken};
