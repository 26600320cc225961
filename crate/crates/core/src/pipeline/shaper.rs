//! Packet-rate shaping shared by every probe of one vantage point.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("rate shaper shut down")]
pub struct ShaperClosed;

const NS: u128 = 1_000_000_000;

/// Token bucket on an explicit nanosecond clock. Credit is kept in
/// token-nanoseconds so refills are exact integers.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: u128,
    capacity: u128,
    credit: u128,
    last_ns: u64,
}

impl TokenBucket {
    /// Starts full: `depth` permits are available immediately.
    pub fn new(pps: u32, depth: u32) -> Self {
        assert!(pps >= 1, "pps_limit must be at least 1");
        let capacity = u128::from(depth.max(1)) * NS;
        TokenBucket {
            rate: u128::from(pps),
            capacity,
            credit: capacity,
            last_ns: 0,
        }
    }

    fn refill(&mut self, now_ns: u64) {
        if now_ns > self.last_ns {
            let earned = u128::from(now_ns - self.last_ns) * self.rate;
            self.credit = (self.credit + earned).min(self.capacity);
            self.last_ns = now_ns;
        }
    }

    /// Takes one permit at `now_ns`, or returns how long to wait for one.
    pub fn try_take(&mut self, now_ns: u64) -> Result<(), u64> {
        self.refill(now_ns);
        if self.credit >= NS {
            self.credit -= NS;
            Ok(())
        } else {
            let missing = NS - self.credit;
            Err(missing.div_ceil(self.rate) as u64)
        }
    }

    /// Earliest time at or after `now_ns` when a permit is granted; takes it.
    pub fn take_at_or_after(&mut self, now_ns: u64) -> u64 {
        let mut t = now_ns;
        loop {
            match self.try_take(t) {
                Ok(()) => return t,
                Err(wait) => t += wait,
            }
        }
    }
}

#[derive(Debug)]
struct ShaperState {
    bucket: TokenBucket,
    shutdown: bool,
}

/// Blocking, thread-safe token-bucket shaper on the wall clock.
#[derive(Debug)]
pub struct Shaper {
    state: Mutex<ShaperState>,
    wake: Condvar,
    epoch: Instant,
    pps: u32,
}

impl Shaper {
    /// Shaper with a bucket depth of one second of traffic.
    pub fn new(pps: u32) -> Self {
        Self::with_depth(pps, pps)
    }

    pub fn with_depth(pps: u32, depth: u32) -> Self {
        Shaper {
            state: Mutex::new(ShaperState {
                bucket: TokenBucket::new(pps, depth),
                shutdown: false,
            }),
            wake: Condvar::new(),
            epoch: Instant::now(),
            pps,
        }
    }

    pub fn pps(&self) -> u32 {
        self.pps
    }

    fn elapsed_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    /// Blocks until a send permit is available.
    pub fn acquire(&self) -> Result<(), ShaperClosed> {
        let mut state = self.state.lock().expect("shaper lock poisoned");
        loop {
            if state.shutdown {
                return Err(ShaperClosed);
            }
            let now = self.elapsed_ns();
            match state.bucket.try_take(now) {
                Ok(()) => return Ok(()),
                Err(wait) => {
                    state = self
                        .wake
                        .wait_timeout(state, Duration::from_nanos(wait))
                        .expect("shaper lock poisoned")
                        .0;
                }
            }
        }
    }

    /// Denies all current and future permits.
    pub fn shutdown(&self) {
        self.state.lock().expect("shaper lock poisoned").shutdown = true;
        self.wake.notify_all();
    }
}
